//! Planar points, trajectories and datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let all_finite = [x0, y0, x1, y1].iter().all(|v| v.is_finite());
        if !all_finite || !(x0 < x1) || !(y0 < y1) {
            return Err(Error::invalid(format!(
                "bounding box ({x0}, {y0}, {x1}, {y1}) must be finite with min < max"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn unit() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Closed containment.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Closed rectangles intersect (sharing an edge or a corner counts).
    pub fn touches(&self, other: &BBox, tol: f64) -> bool {
        self.x0 <= other.x1 + tol
            && other.x0 <= self.x1 + tol
            && self.y0 <= other.y1 + tol
            && other.y0 <= self.y1 + tol
    }

    /// Smallest box around `points`. Degenerate extents are padded by 0.5 on
    /// each side so that min < max always holds.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<BBox> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = BBox {
            x0: first.x,
            y0: first.y,
            x1: first.x,
            y1: first.y,
        };
        for p in it {
            b.x0 = b.x0.min(p.x);
            b.y0 = b.y0.min(p.y);
            b.x1 = b.x1.max(p.x);
            b.y1 = b.y1.max(p.y);
        }
        if b.x1 <= b.x0 {
            b.x0 -= 0.5;
            b.x1 += 0.5;
        }
        if b.y1 <= b.y0 {
            b.y0 -= 0.5;
            b.y1 += 0.5;
        }
        Some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<Point>,
}

impl Trajectory {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("trajectory must contain at least one point"));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!(
                "trajectory point ({}, {}) is not finite",
                p.x, p.y
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &Point {
        &self.points[0]
    }

    pub fn last(&self) -> &Point {
        &self.points[self.points.len() - 1]
    }
}

/// Total travelled distance: sum of consecutive Euclidean steps.
pub fn trajectory_length(t: &Trajectory) -> f64 {
    t.points().windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Largest Euclidean distance between any two points of the trajectory.
pub fn trajectory_diameter(t: &Trajectory) -> f64 {
    let pts = t.points();
    let mut best = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max(a.distance(b));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    trajectories: Vec<Trajectory>,
    bbox: BBox,
}

impl TrajectoryDataset {
    /// Dataset whose bounding box is fitted to its points.
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let bbox = BBox::around(trajectories.iter().flat_map(|t| t.points()))
            .ok_or_else(|| Error::invalid("dataset must contain at least one trajectory"))?;
        Ok(Self { trajectories, bbox })
    }

    /// Dataset with an explicit bounding box, which must contain every point.
    pub fn with_bbox(trajectories: Vec<Trajectory>, bbox: BBox) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::invalid("dataset must contain at least one trajectory"));
        }
        for p in trajectories.iter().flat_map(|t| t.points()) {
            if !bbox.contains(p) {
                return Err(Error::OutsideBBox { x: p.x, y: p.y });
            }
        }
        Ok(Self { trajectories, bbox })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}
