//! Two-layer adaptive grid.
//!
//! The bounding box is split into `K × K` first-layer cells. Cells whose
//! noisy length-normalized density is high are split again into
//! `κ × κ` subcells. Every unsplit first-layer cell and every subcell becomes
//! one Markov state.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BBox, Point, Trajectory, TrajectoryDataset};
use crate::privacy::{check_epsilon, unit_sensitivity_noise};
use crate::rng::Rng;

pub type StateId = u32;

pub const DEFAULT_KAPPA_DENOM: f64 = 2.0e7;

/// Index of the half-open bin `[edge(i), edge(i+1))` holding `v`; the upper
/// edge of the last bin is closed.
fn axis_bin(v: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    let i = ((v - lo) / (hi - lo) * n as f64).floor() as usize;
    Some(i.min(n - 1))
}

fn axis_edge(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64 / n as f64)
    }
}

fn sub_rect(outer: &BBox, n: usize, col: usize, row: usize) -> BBox {
    BBox {
        x0: axis_edge(outer.x0, outer.x1, n, col),
        x1: axis_edge(outer.x0, outer.x1, n, col + 1),
        y0: axis_edge(outer.y0, outer.y1, n, row),
        y1: axis_edge(outer.y0, outer.y1, n, row + 1),
    }
}

/// Uniform `K × K` grid over a bounding box. Cells are indexed row-major
/// starting from the `(x0, y0)` corner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstLayerGrid {
    bbox: BBox,
    k: usize,
}

impl FirstLayerGrid {
    pub fn new(bbox: BBox, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("first-layer grid needs K >= 1"));
        }
        Ok(Self { bbox, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn num_cells(&self) -> usize {
        self.k * self.k
    }

    pub fn cell_width(&self) -> f64 {
        self.bbox.width() / self.k as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.bbox.height() / self.k as f64
    }

    /// `(col, row)` of the cell holding `p`.
    pub fn cell_of(&self, p: &Point) -> Result<(usize, usize)> {
        let b = &self.bbox;
        match (
            axis_bin(p.x, b.x0, b.x1, self.k),
            axis_bin(p.y, b.y0, b.y1, self.k),
        ) {
            (Some(c), Some(r)) => Ok((c, r)),
            _ => Err(Error::OutsideBBox { x: p.x, y: p.y }),
        }
    }

    pub fn cell_index_of(&self, p: &Point) -> Result<usize> {
        let (c, r) = self.cell_of(p)?;
        Ok(r * self.k + c)
    }

    pub fn cell_rect(&self, index: usize) -> BBox {
        sub_rect(&self.bbox, self.k, index % self.k, index / self.k)
    }
}

/// Per-first-layer-cell density, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityVector(pub Vec<f64>);

impl DensityVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Visits of one trajectory to first-layer cells: each maximal run of
/// consecutive points in the same cell is one visit. Returns
/// `(cell, visits / total_visits)` pairs.
fn normalized_visits(t: &Trajectory, grid: &FirstLayerGrid) -> Result<Vec<(usize, f64)>> {
    let mut runs: Vec<usize> = Vec::new();
    for p in t.points() {
        let cell = grid.cell_index_of(p)?;
        if runs.last() != Some(&cell) {
            runs.push(cell);
        }
    }
    let total = runs.len() as f64;
    let mut per_cell: Vec<(usize, f64)> = Vec::new();
    let mut sorted = runs;
    sorted.sort_unstable();
    for cell in sorted {
        match per_cell.last_mut() {
            Some((c, n)) if *c == cell => *n += 1.0,
            _ => per_cell.push((cell, 1.0)),
        }
    }
    for (_, n) in per_cell.iter_mut() {
        *n /= total;
    }
    Ok(per_cell)
}

/// Length-normalized occurrence density. Every trajectory contributes a total
/// mass of exactly 1, which bounds the L1 sensitivity of the vector by 1.
pub fn normalized_density(
    dataset: &TrajectoryDataset,
    grid: &FirstLayerGrid,
) -> Result<DensityVector> {
    let contributions: Vec<Vec<(usize, f64)>> = dataset
        .trajectories()
        .par_iter()
        .map(|t| normalized_visits(t, grid))
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; grid.num_cells()];
    for contrib in &contributions {
        for &(cell, mass) in contrib {
            out[cell] += mass;
        }
    }
    Ok(DensityVector(out))
}

/// Adds Laplace(1/ε₁) noise to every cell. Infinite ε₁ disables noise.
pub fn add_density_noise(density: &DensityVector, epsilon1: f64, rng: &mut Rng) -> Result<DensityVector> {
    check_epsilon(epsilon1)?;
    Ok(DensityVector(
        density
            .0
            .iter()
            .map(|v| v + unit_sensitivity_noise(epsilon1, rng))
            .collect(),
    ))
}

/// `round(sqrt(n / c))`, at least 2.
pub fn choose_first_layer_k(n_trajectories: usize, c: f64) -> usize {
    let k = (n_trajectories as f64 / c).sqrt().round();
    (k as usize).max(2)
}

/// `round(sqrt(max(d, 0) · K · pop / denom))`; values ≤ 1 mean "leave the
/// cell unsplit".
pub fn choose_kappa(noisy_density: f64, k: usize, pop: f64, denom: f64) -> usize {
    let d = noisy_density.max(0.0);
    (d * k as f64 * pop / denom).sqrt().round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CellLayout {
    Leaf { state: StateId },
    Expanded { kappa: usize, first_state: StateId },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLayerGrid {
    first: FirstLayerGrid,
    cells: Vec<CellLayout>,
    leaves: Vec<BBox>,
}

impl TwoLayerGrid {
    /// Builds the grid from per-cell split factors. `kappas[i] >= 2` expands
    /// first-layer cell `i` into `kappas[i]²` subcells.
    pub fn from_kappas(first: FirstLayerGrid, kappas: &[usize]) -> Result<Self> {
        if kappas.len() != first.num_cells() {
            return Err(Error::invalid(format!(
                "expected {} split factors, got {}",
                first.num_cells(),
                kappas.len()
            )));
        }
        let mut cells = Vec::with_capacity(kappas.len());
        let mut leaves = Vec::new();
        for (i, &kappa) in kappas.iter().enumerate() {
            let rect = first.cell_rect(i);
            let next = leaves.len() as StateId;
            if kappa >= 2 {
                cells.push(CellLayout::Expanded {
                    kappa,
                    first_state: next,
                });
                for r in 0..kappa {
                    for c in 0..kappa {
                        leaves.push(sub_rect(&rect, kappa, c, r));
                    }
                }
            } else {
                cells.push(CellLayout::Leaf { state: next });
                leaves.push(rect);
            }
        }
        Ok(Self {
            first,
            cells,
            leaves,
        })
    }

    pub fn uniform(bbox: BBox, k: usize) -> Result<Self> {
        let first = FirstLayerGrid::new(bbox, k)?;
        let n = first.num_cells();
        Self::from_kappas(first, &vec![1; n])
    }

    pub fn first_layer(&self) -> &FirstLayerGrid {
        &self.first
    }

    pub fn bbox(&self) -> &BBox {
        self.first.bbox()
    }

    pub fn cells(&self) -> &[CellLayout] {
        &self.cells
    }

    pub fn num_states(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_rect(&self, state: StateId) -> &BBox {
        &self.leaves[state as usize]
    }

    pub fn leaves(&self) -> &[BBox] {
        &self.leaves
    }

    pub fn num_expanded(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, CellLayout::Expanded { .. }))
            .count()
    }

    /// The unique leaf holding `p`.
    pub fn locate_state(&self, p: &Point) -> Result<StateId> {
        let index = self.first.cell_index_of(p)?;
        match self.cells[index] {
            CellLayout::Leaf { state } => Ok(state),
            CellLayout::Expanded { kappa, first_state } => {
                let rect = self.first.cell_rect(index);
                // Rounding can put a point a hair outside its parent cell;
                // clamp into the parent's subgrid.
                let sub = |v: f64, lo: f64, hi: f64| {
                    let i = ((v - lo) / (hi - lo) * kappa as f64).floor();
                    (i.max(0.0) as usize).min(kappa - 1)
                };
                let c = sub(p.x, rect.x0, rect.x1);
                let r = sub(p.y, rect.y0, rect.y1);
                Ok(first_state + (r * kappa + c) as StateId)
            }
        }
    }

    /// `state_id x0 y0 x1 y1`, one leaf per line.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.leaves.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {} {} {}", r.x0, r.y0, r.x1, r.y1);
        }
        out
    }
}

/// Maps points to states and collapses consecutive duplicates.
pub fn trajectory_to_states(t: &Trajectory, grid: &TwoLayerGrid) -> Result<Vec<StateId>> {
    let mut out: Vec<StateId> = Vec::with_capacity(t.len());
    for p in t.points() {
        let s = grid.locate_state(p)?;
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

pub fn dataset_to_states(
    dataset: &TrajectoryDataset,
    grid: &TwoLayerGrid,
) -> Result<Vec<Vec<StateId>>> {
    dataset
        .trajectories()
        .par_iter()
        .map(|t| trajectory_to_states(t, grid))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridParams {
    pub k: usize,
    pub pop: f64,
    pub kappa_denom: f64,
    /// When false the second layer is never built (first-layer states only).
    pub expand: bool,
}

/// Noisy density estimate followed by the (post-processing) expansion of
/// dense cells. Returns the grid and the noisy density that drove it.
pub fn build_two_layer_grid(
    dataset: &TrajectoryDataset,
    params: &GridParams,
    epsilon1: f64,
    rng: &mut Rng,
) -> Result<(TwoLayerGrid, DensityVector)> {
    if !(params.pop > 0.0) || !(params.kappa_denom > 0.0) {
        return Err(Error::invalid("pop and kappa_denom must be positive"));
    }
    let first = FirstLayerGrid::new(*dataset.bbox(), params.k)?;
    let density = normalized_density(dataset, &first)?;
    let noisy = add_density_noise(&density, epsilon1, rng)?;
    let kappas: Vec<usize> = noisy
        .values()
        .iter()
        .map(|&d| {
            if params.expand {
                choose_kappa(d, params.k, params.pop, params.kappa_denom)
            } else {
                1
            }
        })
        .collect();
    let grid = TwoLayerGrid::from_kappas(first, &kappas)?;
    Ok((grid, noisy))
}
