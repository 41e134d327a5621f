//! Synthetic trajectory generation by random walks over released models.
//!
//! This module only ever sees [`ReleasedModel`]s and the estimated
//! [`TripMatrix`], so everything it does is post-processing of private
//! outputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{StateId, TwoLayerGrid};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point, Trajectory, TrajectoryDataset};
use crate::markov::{ReleasedModel, Sym};
use crate::rng::{Categorical, Rng};
use crate::trip::TripMatrix;

pub const DEFAULT_THETA2: f64 = 5.0;
const MAX_START_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelChoice {
    UseFirstOrder,
    UseSecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionThresholds {
    pub theta1: f64,
    pub theta2: f64,
}

/// `θ1 = (√2/ε2)·m`, `θ2 = 5`. With noise disabled (infinite ε2) θ1 is 0.
pub fn default_thresholds(epsilon2: f64, m: usize) -> SelectionThresholds {
    SelectionThresholds {
        theta1: std::f64::consts::SQRT_2 / epsilon2 * m as f64,
        theta2: DEFAULT_THETA2,
    }
}

/// Chooses the model for the next step from the first-order counts of the
/// current state. Sparse rows (total below θ1) and rows with a dominant
/// entry (largest / second largest ≥ θ2) use the first-order model.
pub fn select_model(row: &[f64], thresholds: &SelectionThresholds) -> ModelChoice {
    let sum: f64 = row.iter().sum();
    if sum < thresholds.theta1 {
        return ModelChoice::UseFirstOrder;
    }
    let (mut n1, mut n2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in row {
        if v > n1 {
            n2 = n1;
            n1 = v;
        } else if v > n2 {
            n2 = v;
        }
    }
    if !(n1 > 0.0) || !(n2 > 0.0) || n1 / n2 >= thresholds.theta2 {
        ModelChoice::UseFirstOrder
    } else {
        ModelChoice::UseSecondOrder
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelPolicy {
    FirstOnly,
    SecondOnly,
    #[default]
    Adaptive,
}

/// Draws `(start, end)` with probability proportional to `t_ij`.
pub fn sample_trip(t: &TripMatrix, rng: &mut Rng) -> Result<(StateId, StateId)> {
    let cat = Categorical::new(t.values())
        .ok_or_else(|| Error::Generation("trip matrix has no positive entry".into()))?;
    let idx = cat.sample(rng);
    let m = t.size();
    Ok(((idx / m) as StateId, (idx % m) as StateId))
}

/// Where walks begin.
#[derive(Debug, Clone)]
pub enum StartSource {
    /// Start states drawn from the estimated trip distribution.
    Trips(TripMatrix),
    /// Start states drawn from the first-order `Start` row directly.
    StartRow,
}

/// Copy of a row with the entry for `current` removed, so the walk never
/// repeats a state.
fn masked_row(row: &[f64], current: Option<StateId>) -> Vec<f64> {
    let mut r = row.to_vec();
    if let Some(s) = current {
        r[s as usize] = 0.0;
    }
    r
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WalkStats {
    pub first_order_steps: u64,
    pub second_order_steps: u64,
    /// Second-order chosen but the pair context had no usable row.
    pub fallback_steps: u64,
    /// Walks stopped by the length cap.
    pub truncated: u64,
    /// Walks stopped because the current row had no mass.
    pub dead_ends: u64,
    /// Walks whose sampled end state matched the last generated state.
    pub end_matches: u64,
    pub walks: u64,
}

impl WalkStats {
    fn merge(&mut self, o: &WalkStats) {
        self.first_order_steps += o.first_order_steps;
        self.second_order_steps += o.second_order_steps;
        self.fallback_steps += o.fallback_steps;
        self.truncated += o.truncated;
        self.dead_ends += o.dead_ends;
        self.end_matches += o.end_matches;
        self.walks += o.walks;
    }
}

pub struct Generator<'a> {
    m1: &'a ReleasedModel,
    m2: &'a ReleasedModel,
    policy: ModelPolicy,
    thresholds: SelectionThresholds,
    max_len: usize,
    start: Categorical,
    start_is_trip: bool,
    trip_m: usize,
    /// First-order sampler and model choice per state.
    first: Vec<Option<Categorical>>,
    choice: Vec<ModelChoice>,
}

impl<'a> Generator<'a> {
    pub fn new(
        m1: &'a ReleasedModel,
        m2: &'a ReleasedModel,
        start: &StartSource,
        policy: ModelPolicy,
        thresholds: SelectionThresholds,
        max_len: usize,
    ) -> Result<Self> {
        if m1.order() != 1 || m2.order() != 2 {
            return Err(Error::invalid("expected a first-order and a second-order model"));
        }
        let m = m1.num_states();
        if m2.num_states() != m {
            return Err(Error::invalid("models disagree on the number of states"));
        }
        if max_len == 0 {
            return Err(Error::invalid("max_len must be at least 1"));
        }
        let (start, start_is_trip, trip_m) = match start {
            StartSource::Trips(t) => {
                if t.size() != m {
                    return Err(Error::invalid("trip matrix size does not match the models"));
                }
                let cat = Categorical::new(t.values())
                    .ok_or_else(|| Error::Generation("trip matrix has no positive entry".into()))?;
                (cat, true, m)
            }
            StartSource::StartRow => {
                let row = m1
                    .row(&[Sym::Start])
                    .map(|r| r[..m].to_vec())
                    .unwrap_or_default();
                let cat = Categorical::new(&row)
                    .ok_or_else(|| Error::Generation("start row has no positive entry".into()))?;
                (cat, false, m)
            }
        };
        let mut first = Vec::with_capacity(m);
        let mut choice = Vec::with_capacity(m);
        for s in 0..m as StateId {
            let row = m1.row(&[Sym::State(s)]).map(|r| masked_row(r, Some(s)));
            choice.push(match (&row, policy) {
                (_, ModelPolicy::FirstOnly) => ModelChoice::UseFirstOrder,
                (_, ModelPolicy::SecondOnly) => ModelChoice::UseSecondOrder,
                (Some(r), ModelPolicy::Adaptive) => select_model(r, &thresholds),
                (None, ModelPolicy::Adaptive) => ModelChoice::UseFirstOrder,
            });
            first.push(row.and_then(|r| Categorical::new(&r)));
        }
        Ok(Self {
            m1,
            m2,
            policy,
            thresholds,
            max_len,
            start,
            start_is_trip,
            trip_m,
            first,
            choice,
        })
    }

    pub fn policy(&self) -> ModelPolicy {
        self.policy
    }

    pub fn thresholds(&self) -> SelectionThresholds {
        self.thresholds
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn to_sym(idx: usize, m: usize) -> Sym {
        if idx == m {
            Sym::End
        } else {
            Sym::State(idx as StateId)
        }
    }

    /// One walk: the start state, then successors until `End` is drawn, the
    /// current row is empty, or `max_len` states have been produced.
    pub fn random_walk(&self, rng: &mut Rng) -> Result<(Vec<StateId>, WalkStats)> {
        let m = self.m1.num_states();
        let mut stats = WalkStats {
            walks: 1,
            ..WalkStats::default()
        };
        let mut attempt = 0;
        let (start, end, first_step) = loop {
            let idx = self.start.sample(rng);
            let (start, end) = if self.start_is_trip {
                ((idx / self.trip_m) as StateId, Some((idx % self.trip_m) as StateId))
            } else {
                (idx as StateId, None)
            };
            if let Some(cat) = &self.first[start as usize] {
                break (start, end, Self::to_sym(cat.sample(rng), m));
            }
            attempt += 1;
            if attempt >= MAX_START_ATTEMPTS {
                return Err(Error::Generation(format!(
                    "no start state with a usable transition row after {MAX_START_ATTEMPTS} attempts"
                )));
            }
        };

        let mut out = vec![start];
        let mut last = start;
        let mut now = first_step;
        while let Sym::State(cur) = now {
            if out.len() >= self.max_len {
                stats.truncated += 1;
                break;
            }
            out.push(cur);
            let second = match self.choice[cur as usize] {
                ModelChoice::UseFirstOrder => None,
                ModelChoice::UseSecondOrder => {
                    let row = self
                        .m2
                        .row(&[Sym::State(last), Sym::State(cur)])
                        .and_then(|r| Categorical::new(&masked_row(r, Some(cur))));
                    if row.is_none() {
                        stats.fallback_steps += 1;
                    }
                    row
                }
            };
            let next = match (second, &self.first[cur as usize]) {
                (Some(cat), _) => {
                    stats.second_order_steps += 1;
                    Some(cat.sample(rng))
                }
                (None, Some(cat)) => {
                    stats.first_order_steps += 1;
                    Some(cat.sample(rng))
                }
                (None, None) => None,
            };
            match next {
                Some(i) => {
                    last = cur;
                    now = Self::to_sym(i, m);
                }
                None => {
                    stats.dead_ends += 1;
                    break;
                }
            }
        }
        if end.is_some() && end == out.last().copied() {
            stats.end_matches += 1;
        }
        Ok((out, stats))
    }
}

/// Uniform point in `rect` at quantiles `(ux, uy)`.
pub fn point_in_rect(rect: &BBox, ux: f64, uy: f64) -> Point {
    Point::new(
        (rect.x0 + ux * rect.width()).min(rect.x1),
        (rect.y0 + uy * rect.height()).min(rect.y1),
    )
}

/// One uniformly drawn point per state.
pub fn sample_locations(states: &[StateId], grid: &TwoLayerGrid, rng: &mut Rng) -> Result<Trajectory> {
    if states.is_empty() {
        return Err(Error::invalid("cannot place an empty state sequence"));
    }
    let mut pts = Vec::with_capacity(states.len());
    for &s in states {
        if s as usize >= grid.num_states() {
            return Err(Error::invalid(format!("state {s} is not in the grid")));
        }
        let (ux, uy) = (rng.uniform_open(), rng.uniform_open());
        pts.push(point_in_rect(grid.leaf_rect(s), ux, uy));
    }
    Trajectory::new(pts)
}

/// `n_syn` independent walks, each with its own substream of `rng`, placed
/// on the grid.
pub fn generate_dataset(
    generator: &Generator<'_>,
    grid: &TwoLayerGrid,
    n_syn: usize,
    rng: &Rng,
) -> Result<(TrajectoryDataset, WalkStats)> {
    if n_syn == 0 {
        return Err(Error::invalid("n_syn must be at least 1"));
    }
    if grid.num_states() != generator.m1.num_states() {
        return Err(Error::invalid("grid does not match the models"));
    }
    let results: Vec<(Trajectory, WalkStats)> = (0..n_syn as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive_index(i);
            let (states, stats) = generator.random_walk(&mut r)?;
            Ok((sample_locations(&states, grid, &mut r)?, stats))
        })
        .collect::<Result<_>>()?;
    let mut stats = WalkStats::default();
    let mut trajectories = Vec::with_capacity(n_syn);
    for (t, s) in results {
        stats.merge(&s);
        trajectories.push(t);
    }
    Ok((TrajectoryDataset::with_bbox(trajectories, *grid.bbox())?, stats))
}

/// Default walk cap: ten times the longest shortest path.
pub fn default_max_len(longest_path_nodes: f64) -> usize {
    ((10.0 * longest_path_nodes).round() as usize).max(1)
}
