//! Seeded toy worlds: small ground-truth Markov chains over a `g × g` grid
//! that emit trajectories with uniform points inside each visited cell.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BBox, Point, Trajectory, TrajectoryDataset};
use crate::rng::{Categorical, Rng};

pub const MAX_WALK_STATES: usize = 50;
pub const BUILTIN_WORLDS: [&str; 4] = ["corridor", "two_cluster", "ring", "crossing"];

/// Overrides the next-cell distribution when the walk arrives at `cur`
/// directly from `prev`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderRule {
    pub prev: usize,
    pub cur: usize,
    pub row: Vec<f64>,
}

/// Ground truth of a toy world. Cells are numbered row-major from the
/// `(x0, y0)` corner; transition rows have `g² + 1` entries, the last one
/// being the probability of ending the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyWorldSpec {
    pub name: String,
    pub bbox: BBox,
    pub g: usize,
    pub start: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub second_order: Vec<SecondOrderRule>,
    pub points_per_visit: usize,
    pub n_trajectories: usize,
    /// `c` giving `K = g` for `n_trajectories`.
    pub suggested_c: f64,
    pub suggested_pop: f64,
}

fn check_distribution(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::invalid(format!("{what}: expected {len} entries, got {}", row.len())));
    }
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("{what}: probabilities must be nonnegative")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what}: probabilities sum to {s}, not 1")));
    }
    Ok(())
}

impl ToyWorldSpec {
    pub fn num_cells(&self) -> usize {
        self.g * self.g
    }

    pub fn validate(&self) -> Result<()> {
        if self.g < 2 {
            return Err(Error::invalid("toy world needs g >= 2"));
        }
        if self.points_per_visit == 0 {
            return Err(Error::invalid("points_per_visit must be at least 1"));
        }
        let n = self.num_cells();
        check_distribution(&self.start, n, "start distribution")?;
        if self.transitions.len() != n {
            return Err(Error::invalid(format!("expected {n} transition rows")));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            check_distribution(row, n + 1, &format!("transition row {i}"))?;
            if row[i] != 0.0 {
                return Err(Error::invalid(format!("transition row {i} has a self-loop")));
            }
        }
        for rule in &self.second_order {
            if rule.prev >= n || rule.cur >= n || rule.prev == rule.cur {
                return Err(Error::invalid("second-order rule refers to invalid cells"));
            }
            check_distribution(&rule.row, n + 1, "second-order rule")?;
            if rule.row[rule.cur] != 0.0 {
                return Err(Error::invalid("second-order rule has a self-loop"));
            }
        }
        Ok(())
    }

    pub fn cell_rect(&self, cell: usize) -> BBox {
        let w = self.bbox.width() / self.g as f64;
        let h = self.bbox.height() / self.g as f64;
        let (c, r) = ((cell % self.g) as f64, (cell / self.g) as f64);
        BBox {
            x0: self.bbox.x0 + c * w,
            y0: self.bbox.y0 + r * h,
            x1: if cell % self.g == self.g - 1 { self.bbox.x1 } else { self.bbox.x0 + (c + 1.0) * w },
            y1: if cell / self.g == self.g - 1 { self.bbox.y1 } else { self.bbox.y0 + (r + 1.0) * h },
        }
    }

    pub fn with_size(mut self, n: usize) -> Self {
        self.suggested_c = n as f64 / (self.g * self.g) as f64;
        self.n_trajectories = n;
        self
    }
}

struct Samplers {
    start: Categorical,
    rows: Vec<Categorical>,
    rules: Vec<(usize, usize, Categorical)>,
}

impl Samplers {
    fn new(spec: &ToyWorldSpec) -> Result<Self> {
        let cat = |r: &[f64]| Categorical::new(r).ok_or_else(|| Error::invalid("empty distribution"));
        Ok(Self {
            start: cat(&spec.start)?,
            rows: spec.transitions.iter().map(|r| cat(r)).collect::<Result<_>>()?,
            rules: spec
                .second_order
                .iter()
                .map(|r| Ok((r.prev, r.cur, cat(&r.row)?)))
                .collect::<Result<_>>()?,
        })
    }

    fn walk(&self, n_cells: usize, rng: &mut Rng) -> Vec<usize> {
        let mut cells = vec![self.start.sample(rng)];
        let mut prev: Option<usize> = None;
        while cells.len() < MAX_WALK_STATES {
            let cur = *cells.last().unwrap();
            let rule = self
                .rules
                .iter()
                .find(|(p, c, _)| Some(*p) == prev && *c == cur)
                .map(|r| &r.2);
            let next = rule.unwrap_or(&self.rows[cur]).sample(rng);
            if next == n_cells {
                break;
            }
            prev = Some(cur);
            cells.push(next);
        }
        cells
    }
}

/// Ground-truth cell walks, one substream per walk.
pub fn sample_cell_walks(spec: &ToyWorldSpec, n: usize, rng: &Rng) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    let s = Samplers::new(spec)?;
    let cells = spec.num_cells();
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| s.walk(cells, &mut rng.derive_index(i)))
        .collect())
}

pub fn generate_toy_dataset(spec: &ToyWorldSpec, rng: &Rng) -> Result<TrajectoryDataset> {
    let walks = sample_cell_walks(spec, spec.n_trajectories, &rng.derive("walks"))?;
    let points_rng = rng.derive("points");
    let trajectories: Vec<Trajectory> = walks
        .par_iter()
        .enumerate()
        .map(|(i, walk)| {
            let mut r = points_rng.derive_index(i as u64);
            let mut pts = Vec::with_capacity(walk.len() * spec.points_per_visit);
            for &cell in walk {
                let b = spec.cell_rect(cell);
                for _ in 0..spec.points_per_visit {
                    pts.push(Point::new(r.uniform_in(b.x0, b.x1), r.uniform_in(b.y0, b.y1)));
                }
            }
            Trajectory::new(pts)
        })
        .collect::<Result<_>>()?;
    TrajectoryDataset::with_bbox(trajectories, spec.bbox)
}

struct Builder {
    g: usize,
    start: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl Builder {
    fn new(g: usize) -> Self {
        let n = g * g;
        let mut rows = vec![vec![0.0; n + 1]; n];
        for r in rows.iter_mut() {
            r[n] = 1.0;
        }
        Self {
            g,
            start: vec![0.0; n],
            rows,
        }
    }

    fn cell(&self, c: usize, r: usize) -> usize {
        r * self.g + c
    }

    fn end(&self) -> usize {
        self.g * self.g
    }

    /// Sets a row from `(target, weight)` pairs, normalizing the weights.
    fn set(&mut self, from: usize, targets: &[(usize, f64)]) {
        let total: f64 = targets.iter().map(|t| t.1).sum();
        let row = &mut self.rows[from];
        row.iter_mut().for_each(|v| *v = 0.0);
        for &(t, w) in targets {
            row[t] += w / total;
        }
    }

    fn in_grid(&self, c: i64, r: i64) -> Option<usize> {
        let g = self.g as i64;
        (c >= 0 && r >= 0 && c < g && r < g).then(|| (r * g + c) as usize)
    }

    fn normalize_start(&mut self) {
        let s: f64 = self.start.iter().sum();
        self.start.iter_mut().for_each(|v| *v /= s);
    }

    fn finish(mut self, name: &str, n: usize, pop: f64, second_order: Vec<SecondOrderRule>) -> ToyWorldSpec {
        self.normalize_start();
        let g = self.g;
        ToyWorldSpec {
            name: name.to_string(),
            bbox: BBox::new(0.0, 0.0, g as f64, g as f64).expect("valid box"),
            g,
            start: self.start,
            transitions: self.rows,
            second_order,
            points_per_visit: 1,
            n_trajectories: n,
            suggested_c: n as f64 / (g * g) as f64,
            suggested_pop: pop,
        }
    }
}

/// 6×6 grid with a dominant west-to-east flow along the two middle rows,
/// with occasional drift to a neighboring row.
fn corridor() -> ToyWorldSpec {
    let mut b = Builder::new(6);
    for (r, w) in [(2, 0.5), (3, 0.5)] {
        let cell = b.cell(0, r);
        b.start[cell] = w;
    }
    for r in 0..6 {
        for c in 0..5 {
            let from = b.cell(c, r);
            let mut t = vec![(b.cell(c + 1, r), 0.94), (b.end(), 0.02)];
            for dr in [-1i64, 1] {
                if let Some(n) = b.in_grid(c as i64 + 1, r as i64 + dr) {
                    t.push((n, 0.02));
                }
            }
            b.set(from, &t);
        }
    }
    b.finish("corridor", 5000, 50_000.0, Vec::new())
}

/// 8×8 grid with two dense 3×3 clusters in opposite corners joined by a
/// diagonal bridge.
fn two_cluster() -> ToyWorldSpec {
    let mut b = Builder::new(8);
    let clusters = [(0usize..3, 0usize..3), (5..8, 5..8)];
    let in_cluster = |c: usize, r: usize| clusters.iter().any(|(xs, ys)| xs.contains(&c) && ys.contains(&r));
    for (xs, ys) in clusters.clone() {
        for r in ys.clone() {
            for c in xs.clone() {
                let from = b.cell(c, r);
                b.start[from] = 1.0;
                let mut t = vec![(b.end(), 0.15)];
                let mut nbrs = Vec::new();
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                        if (dc, dr) != (0, 0) && nc >= 0 && nr >= 0 && in_cluster(nc as usize, nr as usize) {
                            nbrs.push(b.in_grid(nc, nr).unwrap());
                        }
                    }
                }
                let share = 0.8 / nbrs.len() as f64;
                t.extend(nbrs.into_iter().map(|n| (n, share)));
                if (c, r) == (2, 2) {
                    t.push((b.cell(3, 3), 0.05));
                } else if (c, r) == (5, 5) {
                    t.push((b.cell(4, 4), 0.05));
                } else {
                    t[0].1 += 0.05;
                }
                b.set(from, &t);
            }
        }
    }
    let (b33, b44, b22, b55) = (b.cell(3, 3), b.cell(4, 4), b.cell(2, 2), b.cell(5, 5));
    b.set(b33, &[(b44, 0.45), (b22, 0.45), (b.end(), 0.1)]);
    b.set(b44, &[(b55, 0.45), (b33, 0.45), (b.end(), 0.1)]);
    b.finish("two_cluster", 5000, 50_000.0, Vec::new())
}

/// 6×6 grid whose perimeter cells form a clockwise cycle.
fn ring() -> ToyWorldSpec {
    let mut b = Builder::new(6);
    let mut cycle = Vec::new();
    for c in 0..6 {
        cycle.push(b.cell(c, 5));
    }
    for r in (0..5).rev() {
        cycle.push(b.cell(5, r));
    }
    for c in (0..5).rev() {
        cycle.push(b.cell(c, 0));
    }
    for r in 1..5 {
        cycle.push(b.cell(0, r));
    }
    for (i, &cell) in cycle.iter().enumerate() {
        b.start[cell] = 1.0;
        let next = cycle[(i + 1) % cycle.len()];
        b.set(cell, &[(next, 0.98), (b.end(), 0.02)]);
    }
    b.finish("ring", 5000, 50_000.0, Vec::new())
}

/// Band of rows (or columns) used by the two flows of the crossing world.
const BAND: std::ops::RangeInclusive<i64> = 2..=4;

/// Forward step weights: straight ahead, each diagonal, and stopping.
const STRAIGHT: f64 = 0.8;
const DIAGONAL: f64 = 0.08;
const STOP: f64 = 0.04;

/// Next-cell weights of a walker at `(c, r)` heading east (`east = true`)
/// or north, drifting diagonally but staying inside the band.
fn band_moves(b: &Builder, c: i64, r: i64, east: bool) -> Vec<(usize, f64)> {
    let mut t = vec![(b.end(), STOP)];
    for side in [-1i64, 0, 1] {
        let (nc, nr) = if east { (c + 1, r + side) } else { (c + side, r + 1) };
        let lateral = if east { nr } else { nc };
        if !BAND.contains(&lateral) {
            continue;
        }
        if let Some(n) = b.in_grid(nc, nr) {
            t.push((n, if side == 0 { STRAIGHT } else { DIAGONAL }));
        }
    }
    if t.len() == 1 {
        t[0].1 = 1.0;
    }
    t
}

fn dense_row(n: usize, moves: &[(usize, f64)]) -> Vec<f64> {
    let total: f64 = moves.iter().map(|m| m.1).sum();
    let mut row = vec![0.0; n + 1];
    for &(t, w) in moves {
        row[t] += w / total;
    }
    row
}

/// 7×7 grid crossed by an eastbound band (rows 2–4) and a northbound band
/// (columns 2–4), each three cells wide with diagonal drift. Inside the
/// 3×3 intersection the next cell depends on the direction of travel, which
/// a first-order chain cannot express: it only sees an even mix of both
/// flows. Outside the intersection every cell has one dominant successor
/// but up to three predecessors.
fn crossing() -> ToyWorldSpec {
    let mut b = Builder::new(7);
    let n = 49;
    let inside = |c: i64, r: i64| BAND.contains(&c) && BAND.contains(&r);
    for (i, w) in [0.25, 0.5, 0.25].into_iter().enumerate() {
        let r = 2 + i;
        let west = b.cell(0, r);
        let south = b.cell(r, 0);
        b.start[west] = w;
        b.start[south] = w;
    }
    let mut rules = Vec::new();
    for r in 0..7i64 {
        for c in 0..7i64 {
            let from = b.in_grid(c, r).unwrap();
            let east_band = BAND.contains(&r);
            let north_band = BAND.contains(&c);
            if inside(c, r) {
                let east = band_moves(&b, c, r, true);
                let north = band_moves(&b, c, r, false);
                let mixed: Vec<(usize, f64)> = east
                    .iter()
                    .map(|&(t, w)| (t, 0.5 * w))
                    .chain(north.iter().map(|&(t, w)| (t, 0.5 * w)))
                    .collect();
                b.set(from, &mixed);
                // Arrivals from the west or north-west continue east, from
                // the south or south-east continue north; a south-west
                // arrival is ambiguous and keeps the mixed row.
                for (dc, dr, moves) in [
                    (-1, 0, &east),
                    (-1, 1, &east),
                    (0, -1, &north),
                    (1, -1, &north),
                ] {
                    if let Some(prev) = b.in_grid(c + dc, r + dr) {
                        rules.push(SecondOrderRule {
                            prev,
                            cur: from,
                            row: dense_row(n, moves),
                        });
                    }
                }
            } else if east_band {
                let moves = band_moves(&b, c, r, true);
                b.set(from, &moves);
            } else if north_band {
                let moves = band_moves(&b, c, r, false);
                b.set(from, &moves);
            }
        }
    }
    b.finish("crossing", 5000, 1.0, rules)
}

/// Cells of the crossing world where the next cell depends on the previous
/// one.
pub fn crossing_intersection() -> Vec<usize> {
    let mut v = Vec::new();
    for r in BAND {
        for c in BAND {
            v.push((r * 7 + c) as usize);
        }
    }
    v
}

/// Cell triples `(prev, cur, next)` whose next-step probability under a
/// second-order rule differs from the first-order row of `cur`.
pub fn distinguishing_patterns(spec: &ToyWorldSpec) -> Vec<[usize; 3]> {
    let n = spec.num_cells();
    let mut out = Vec::new();
    for rule in &spec.second_order {
        let first = &spec.transitions[rule.cur];
        for next in 0..n {
            if (rule.row[next] - first[next]).abs() > 1e-12 {
                out.push([rule.prev, rule.cur, next]);
            }
        }
    }
    out
}

pub fn builtin_world(name: &str) -> Result<ToyWorldSpec> {
    let spec = match name {
        "corridor" => corridor(),
        "two_cluster" => two_cluster(),
        "ring" => ring(),
        "crossing" => crossing(),
        other => {
            return Err(Error::invalid(format!(
                "unknown world '{other}' (known: {})",
                BUILTIN_WORLDS.join(", ")
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}
