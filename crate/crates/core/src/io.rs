//! Plain-text trajectory files.
//!
//! One trajectory per line, points written as `x,y` and separated by single
//! spaces. Blank lines and lines starting with `#` are ignored, except that a
//! leading `# bbox x0 y0 x1 y1` comment pins the dataset's bounding box.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BBox, Point, Trajectory, TrajectoryDataset};

pub fn parse_trajectories(text: &str, source: &Path) -> Result<TrajectoryDataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    let mut bbox = None;
    let mut trajectories = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("bbox") {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad bbox header: {e}")))?;
                if v.len() != 4 {
                    return Err(parse_err(lineno, "bbox header needs 4 numbers".into()));
                }
                bbox = Some(
                    BBox::new(v[0], v[1], v[2], v[3])
                        .map_err(|e| parse_err(lineno, e.to_string()))?,
                );
            }
            continue;
        }
        let mut points = Vec::new();
        for tok in line.split(' ').filter(|t| !t.is_empty()) {
            let (xs, ys) = tok
                .split_once(',')
                .ok_or_else(|| parse_err(lineno, format!("expected `x,y`, found `{tok}`")))?;
            let x: f64 = xs
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad x coordinate `{xs}`")))?;
            let y: f64 = ys
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad y coordinate `{ys}`")))?;
            points.push(Point::new(x, y));
        }
        let t = Trajectory::new(points).map_err(|e| parse_err(lineno, e.to_string()))?;
        trajectories.push(t);
    }

    if trajectories.is_empty() {
        return Err(parse_err(0, "file contains no trajectories".into()));
    }
    match bbox {
        Some(b) => TrajectoryDataset::with_bbox(trajectories, b),
        None => TrajectoryDataset::new(trajectories),
    }
}

pub fn read_trajectories(path: &Path) -> Result<TrajectoryDataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_trajectories(&text, path)
}

pub fn format_trajectories(dataset: &TrajectoryDataset) -> String {
    let b = dataset.bbox();
    let mut out = String::new();
    let _ = writeln!(out, "# bbox {} {} {} {}", b.x0, b.y0, b.x1, b.y1);
    for t in dataset.trajectories() {
        for (i, p) in t.points().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{},{}", p.x, p.y);
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectories(path: &Path, dataset: &TrajectoryDataset) -> Result<()> {
    write_atomic(path, format_trajectories(dataset).as_bytes())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}
