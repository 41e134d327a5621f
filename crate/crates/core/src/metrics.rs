//! Utility metrics comparing an original and a synthetic dataset:
//! length and diameter distribution JSD, range-query density ARE, and
//! frequent transition-pattern ARE.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{trajectory_to_states, StateId, TwoLayerGrid};
use crate::error::{Error, Result};
use crate::geometry::{trajectory_diameter, trajectory_length, BBox, Point, TrajectoryDataset};
use crate::rng::Rng;

/// Histogram with `n` equal-width bins over `[0, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    hi: f64,
    masses: Vec<f64>,
}

impl Histogram {
    /// Normalized histogram of `values`. Values at `hi` land in the last bin;
    /// with `hi == 0` everything lands in bin 0.
    pub fn from_values(values: &[f64], n_bins: usize, hi: f64) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if !(hi >= 0.0) || !hi.is_finite() {
            return Err(Error::invalid(format!("invalid histogram range [0, {hi}]")));
        }
        let mut masses = vec![0.0; n_bins];
        if values.is_empty() {
            return Ok(Self { hi, masses });
        }
        let w = 1.0 / values.len() as f64;
        for &v in values {
            let bin = if hi > 0.0 {
                ((v / hi * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1)
            } else {
                0
            };
            masses[bin] += w;
        }
        Ok(Self { hi, masses })
    }

    pub fn from_masses(masses: Vec<f64>, hi: f64) -> Self {
        Self { hi, masses }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn upper(&self) -> f64 {
        self.hi
    }
}

/// Jensen–Shannon divergence in bits, in `[0, 1]`.
pub fn jsd(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.masses.len() != q.masses.len() || p.hi != q.hi {
        return Err(Error::invalid("histograms have different bins"));
    }
    let kl_to_mid = |a: f64, b: f64| {
        if a > 0.0 {
            a * (2.0 * a / (a + b)).log2()
        } else {
            0.0
        }
    };
    let mut s = 0.0;
    for (&a, &b) in p.masses.iter().zip(&q.masses) {
        s += 0.5 * kl_to_mid(a, b) + 0.5 * kl_to_mid(b, a);
    }
    Ok(s.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Length,
    Diameter,
}

pub fn quantity_values(dataset: &TrajectoryDataset, quantity: Quantity) -> Vec<f64> {
    let f = match quantity {
        Quantity::Length => trajectory_length,
        Quantity::Diameter => trajectory_diameter,
    };
    dataset.trajectories().par_iter().map(f).collect()
}

pub fn distribution_of(
    dataset: &TrajectoryDataset,
    quantity: Quantity,
    n_bins: usize,
    hi: f64,
) -> Result<Histogram> {
    Histogram::from_values(&quantity_values(dataset, quantity), n_bins, hi)
}

/// JSD between the two datasets' distributions of `quantity`, binned over
/// `[0, max over both]`.
pub fn quantity_jsd(a: &TrajectoryDataset, b: &TrajectoryDataset, quantity: Quantity, n_bins: usize) -> Result<f64> {
    let va = quantity_values(a, quantity);
    let vb = quantity_values(b, quantity);
    let hi = va.iter().chain(&vb).fold(0.0f64, |x, &y| x.max(y));
    jsd(
        &Histogram::from_values(&va, n_bins, hi)?,
        &Histogram::from_values(&vb, n_bins, hi)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityQuery {
    pub center: Point,
    pub radius: f64,
}

/// Circles with centers uniform in `bbox` and radii uniform in
/// `radius_range` (fractions of the bbox diagonal).
pub fn random_queries(bbox: &BBox, n: usize, radius_range: [f64; 2], rng: &mut Rng) -> Vec<DensityQuery> {
    let d = bbox.diagonal();
    (0..n)
        .map(|_| {
            let center = Point::new(rng.uniform_in(bbox.x0, bbox.x1), rng.uniform_in(bbox.y0, bbox.y1));
            let radius = d * rng.uniform_in(radius_range[0], radius_range[1]);
            DensityQuery { center, radius }
        })
        .collect()
}

/// Number of trajectories with at least one point inside the circle.
pub fn query_count(dataset: &TrajectoryDataset, q: &DensityQuery) -> usize {
    let r2 = q.radius * q.radius;
    dataset
        .trajectories()
        .iter()
        .filter(|t| {
            t.points().iter().any(|p| {
                let (dx, dy) = (p.x - q.center.x, p.y - q.center.y);
                dx * dx + dy * dy <= r2
            })
        })
        .count()
}

/// Mean of `|a − b| / max(a, φ)` over paired counts.
pub fn relative_error(pairs: &[(f64, f64)], phi: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().map(|&(a, b)| (a - b).abs() / a.max(phi)).sum::<f64>() / pairs.len() as f64
}

pub fn density_are_for(d_o: &TrajectoryDataset, d_s: &TrajectoryDataset, queries: &[DensityQuery], phi: f64) -> f64 {
    let pairs: Vec<(f64, f64)> = queries
        .par_iter()
        .map(|q| (query_count(d_o, q) as f64, query_count(d_s, q) as f64))
        .collect();
    relative_error(&pairs, phi)
}

pub fn density_are(
    d_o: &TrajectoryDataset,
    d_s: &TrajectoryDataset,
    n_queries: usize,
    radius_range: [f64; 2],
    phi: f64,
    rng: &mut Rng,
) -> f64 {
    let bbox = d_o.bbox().union(d_s.bbox());
    let queries = random_queries(&bbox, n_queries, radius_range, rng);
    density_are_for(d_o, d_s, &queries, phi)
}

pub type Pattern = Vec<StateId>;

/// Occurrences of every contiguous subsequence with length in
/// `min_len..=max_len`.
pub fn count_patterns(sequences: &[Vec<StateId>], min_len: usize, max_len: usize) -> HashMap<Pattern, u64> {
    let mut out: HashMap<Pattern, u64> = HashMap::new();
    for seq in sequences {
        for len in min_len..=max_len.min(seq.len()) {
            for w in seq.windows(len) {
                *out.entry(w.to_vec()).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Top-`mu` patterns of `counts` by count, ties in lexicographic order.
pub fn top_patterns(counts: &HashMap<Pattern, u64>, mu: usize) -> Vec<(Pattern, u64)> {
    let mut v: Vec<(Pattern, u64)> = counts.iter().map(|(p, &c)| (p.clone(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(mu);
    v
}

/// Returns the ARE and the number of patterns it averages over (fewer than
/// `mu` when the original has fewer distinct patterns).
pub fn pattern_are(
    d_o: &TrajectoryDataset,
    d_s: &TrajectoryDataset,
    grid: &TwoLayerGrid,
    mu: usize,
    phi: f64,
) -> Result<(f64, usize)> {
    let to_states = |d: &TrajectoryDataset| -> Result<Vec<Vec<StateId>>> {
        d.trajectories()
            .par_iter()
            .map(|t| trajectory_to_states(t, grid))
            .collect()
    };
    let co = count_patterns(&to_states(d_o)?, 2, 5);
    let cs = count_patterns(&to_states(d_s)?, 2, 5);
    let top = top_patterns(&co, mu);
    let pairs: Vec<(f64, f64)> = top
        .iter()
        .map(|(p, c)| (*c as f64, cs.get(p).copied().unwrap_or(0) as f64))
        .collect();
    Ok((relative_error(&pairs, phi), pairs.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricParams {
    pub bins: usize,
    pub queries: usize,
    pub mu: usize,
    /// Sanity bound of both ARE metrics; `None` means `max(1, 0.001·|D_o|)`.
    pub phi: Option<f64>,
    pub radius_range: [f64; 2],
    pub pattern_grid: usize,
    pub heatmap: bool,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            bins: 50,
            queries: 500,
            mu: 200,
            phi: None,
            radius_range: [0.05, 0.25],
            pattern_grid: 20,
            heatmap: false,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.bins == 0 {
            v.push("metrics.bins must be at least 1".into());
        }
        if self.queries == 0 {
            v.push("metrics.queries must be at least 1".into());
        }
        if self.mu == 0 {
            v.push("metrics.mu must be at least 1".into());
        }
        if self.pattern_grid == 0 {
            v.push("metrics.pattern_grid must be at least 1".into());
        }
        if let Some(phi) = self.phi {
            if !(phi > 0.0) {
                v.push("metrics.phi must be positive".into());
            }
        }
        let [lo, hi] = self.radius_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            v.push("metrics.radius_range must satisfy 0 < min <= max".into());
        }
        v
    }

    pub fn phi_for(&self, n_original: usize) -> f64 {
        self.phi.unwrap_or_else(|| (0.001 * n_original as f64).max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub length_jsd: f64,
    pub diameter_jsd: f64,
    pub density_are: f64,
    pub pattern_are: f64,
    pub bins: usize,
    pub queries: usize,
    pub mu: usize,
    pub mu_used: usize,
    pub phi: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    pub pattern_grid: usize,
}

pub const METRIC_NAMES: [&str; 4] = ["length_jsd", "diameter_jsd", "density_are", "pattern_are"];

impl MetricReport {
    pub fn values(&self) -> [f64; 4] {
        [self.length_jsd, self.diameter_jsd, self.density_are, self.pattern_are]
    }
}

/// All four metrics. Both datasets are placed in the union of their
/// bounding boxes.
pub fn evaluate(
    d_o: &TrajectoryDataset,
    d_s: &TrajectoryDataset,
    params: &MetricParams,
    rng: &mut Rng,
) -> Result<MetricReport> {
    let problems = params.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let bbox = d_o.bbox().union(d_s.bbox());
    let phi = params.phi_for(d_o.len());
    let grid = TwoLayerGrid::uniform(bbox, params.pattern_grid)?;
    let queries = random_queries(&bbox, params.queries, params.radius_range, rng);
    let (pattern, used) = pattern_are(d_o, d_s, &grid, params.mu, phi)?;
    Ok(MetricReport {
        length_jsd: quantity_jsd(d_o, d_s, Quantity::Length, params.bins)?,
        diameter_jsd: quantity_jsd(d_o, d_s, Quantity::Diameter, params.bins)?,
        density_are: density_are_for(d_o, d_s, &queries, phi),
        pattern_are: pattern,
        bins: params.bins,
        queries: params.queries,
        mu: params.mu,
        mu_used: used,
        phi,
        radius_min: params.radius_range[0],
        radius_max: params.radius_range[1],
        pattern_grid: params.pattern_grid,
    })
}

/// `size × size` grid of trajectory counts (a trajectory counts once per
/// cell it touches), rows from `y0` upward, as CSV.
pub fn heatmap_csv(dataset: &TrajectoryDataset, bbox: &BBox, size: usize) -> Result<String> {
    let grid = TwoLayerGrid::uniform(*bbox, size)?;
    let mut counts = vec![0u64; size * size];
    for t in dataset.trajectories() {
        let mut cells: Vec<StateId> = t
            .points()
            .iter()
            .map(|p| grid.locate_state(p))
            .collect::<Result<_>>()?;
        cells.sort_unstable();
        cells.dedup();
        for c in cells {
            counts[c as usize] += 1;
        }
    }
    let mut out = String::new();
    for row in counts.chunks(size) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    Ok(out)
}
