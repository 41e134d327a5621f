//! First- and second-order Markov models over grid states.
//!
//! Every trajectory is framed by virtual `Start`/`End` states. Each
//! contiguous window of `order + 1` symbols adds `1/|T|` to its transition
//! count, where `|T|` is the augmented length, so a single trajectory moves
//! the whole count table by less than 1 in L1.
//!
//! A model moves through three stages: raw counts ([`MarkovModel`]), noised,
//! and NormCut-cleaned. Only a noised and cleaned model can be turned into a
//! [`ReleasedModel`], which is the only form the generator accepts.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::discretization::StateId;
use crate::error::{Error, Result};
use crate::privacy::{check_epsilon, unit_sensitivity_noise};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    Start,
    State(StateId),
    End,
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sym::Start => f.write_str("START"),
            Sym::State(s) => write!(f, "{s}"),
            Sym::End => f.write_str("END"),
        }
    }
}

/// The `order` symbols preceding a transition, oldest first.
pub type Context = Vec<Sym>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedSequence(Vec<Sym>);

impl AugmentedSequence {
    pub fn symbols(&self) -> &[Sym] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn augment(states: &[StateId]) -> Result<AugmentedSequence> {
    if states.is_empty() {
        return Err(Error::invalid("cannot augment an empty state sequence"));
    }
    let mut v = Vec::with_capacity(states.len() + 2);
    v.push(Sym::Start);
    v.extend(states.iter().map(|&s| Sym::State(s)));
    v.push(Sym::End);
    Ok(AugmentedSequence(v))
}

/// Index of a transition target in a row: states `0..m`, then `End` at `m`.
fn target_index(sym: Sym, m: usize) -> Result<usize> {
    match sym {
        Sym::State(s) if (s as usize) < m => Ok(s as usize),
        Sym::End => Ok(m),
        other => Err(Error::Model(format!("{other} is not a valid target for m = {m}"))),
    }
}

pub fn target_symbol(index: usize, m: usize) -> Sym {
    if index == m {
        Sym::End
    } else {
        Sym::State(index as StateId)
    }
}

fn check_context(ctx: &[Sym], m: usize) -> Result<()> {
    for (i, s) in ctx.iter().enumerate() {
        match s {
            Sym::Start if i == 0 => {}
            Sym::State(v) if (*v as usize) < m => {}
            _ => return Err(Error::Model(format!("invalid context symbol {s}"))),
        }
    }
    Ok(())
}

/// Transition counts for one model order. Rows are dense over the `m + 1`
/// targets (all states plus `End`); contexts are stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    order: usize,
    m: usize,
    rows: BTreeMap<Context, Vec<f64>>,
    noised: bool,
    normcut_applied: bool,
}

impl MarkovModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_states(&self) -> usize {
        self.m
    }

    pub fn is_noised(&self) -> bool {
        self.noised
    }

    pub fn is_normcut(&self) -> bool {
        self.normcut_applied
    }

    pub fn row(&self, context: &[Sym]) -> Option<&[f64]> {
        self.rows.get(context).map(|r| r.as_slice())
    }

    pub fn num_contexts(&self) -> usize {
        self.rows.len()
    }

    pub fn num_entries(&self) -> usize {
        self.rows.values().map(|r| r.len()).sum()
    }

    /// Every stored count, in deterministic (context, target) order.
    pub fn flat_counts(&self) -> Vec<(Context, usize, f64)> {
        self.rows
            .iter()
            .flat_map(|(c, r)| r.iter().enumerate().map(move |(j, &v)| (c.clone(), j, v)))
            .collect()
    }

    /// Adds Laplace(1/ε) noise. Order 1 is noised over every context in
    /// `{Start} ∪ Σ`; order 2 over the observed contexts only unless
    /// `dense_order2` is set. Infinite ε marks the model as noised without
    /// perturbing it.
    pub fn add_noise(self, epsilon: f64, dense_order2: bool, rng: &mut Rng) -> Result<MarkovModel> {
        add_model_noise(self, epsilon, dense_order2, rng)
    }

    pub fn apply_normcut(mut self) -> MarkovModel {
        for row in self.rows.values_mut() {
            *row = normcut(row);
        }
        self.normcut_applied = true;
        self
    }

    pub fn release(self) -> Result<ReleasedModel> {
        if !self.noised {
            return Err(Error::Model("model has not been noised".into()));
        }
        if !self.normcut_applied {
            return Err(Error::Model("NormCut has not been applied".into()));
        }
        Ok(ReleasedModel { inner: self })
    }
}

/// Counts every `(order + 1)`-window of every sequence, weighted by
/// `1/|T|`.
pub fn count_transitions(sequences: &[AugmentedSequence], order: usize, m: usize) -> Result<MarkovModel> {
    if order != 1 && order != 2 {
        return Err(Error::invalid(format!("unsupported Markov order {order}")));
    }
    let per_seq: Vec<Vec<(Context, usize, f64)>> = sequences
        .par_iter()
        .map(|seq| {
            let syms = seq.symbols();
            let w = 1.0 / syms.len() as f64;
            syms.windows(order + 1)
                .map(|win| {
                    check_context(&win[..order], m)?;
                    Ok((win[..order].to_vec(), target_index(win[order], m)?, w))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows: BTreeMap<Context, Vec<f64>> = BTreeMap::new();
    for contrib in per_seq {
        for (ctx, j, w) in contrib {
            rows.entry(ctx).or_insert_with(|| vec![0.0; m + 1])[j] += w;
        }
    }
    Ok(MarkovModel {
        order,
        m,
        rows,
        noised: false,
        normcut_applied: false,
    })
}

fn all_order1_contexts(m: usize) -> impl Iterator<Item = Context> {
    std::iter::once(vec![Sym::Start]).chain((0..m).map(|s| vec![Sym::State(s as StateId)]))
}

fn all_order2_contexts(m: usize) -> impl Iterator<Item = Context> {
    let firsts = std::iter::once(Sym::Start).chain((0..m).map(|s| Sym::State(s as StateId)));
    firsts.flat_map(move |a| {
        (0..m as StateId)
            .map(Sym::State)
            .filter(move |&b| b != a)
            .map(move |b| vec![a, b])
    })
}

pub fn add_model_noise(
    mut model: MarkovModel,
    epsilon: f64,
    dense_order2: bool,
    rng: &mut Rng,
) -> Result<MarkovModel> {
    if model.noised {
        return Err(Error::Model("model has already been noised".into()));
    }
    check_epsilon(epsilon)?;
    let m = model.m;
    let dense = model.order == 1 || dense_order2;
    if dense {
        let contexts: Vec<Context> = if model.order == 1 {
            all_order1_contexts(m).collect()
        } else {
            all_order2_contexts(m).collect()
        };
        for ctx in contexts {
            model.rows.entry(ctx).or_insert_with(|| vec![0.0; m + 1]);
        }
    } else {
        model.rows.retain(|_, row| row.iter().any(|&v| v > 0.0));
    }
    for row in model.rows.values_mut() {
        for v in row.iter_mut() {
            *v += unit_sensitivity_noise(epsilon, rng);
        }
    }
    model.noised = true;
    Ok(model)
}

/// Removes negative mass: the total of the negative entries is absorbed by
/// the smallest positive entries in turn (ties go to the lower index), then
/// negatives are zeroed. A row whose total is not positive becomes all
/// zeros.
pub fn normcut(row: &[f64]) -> Vec<f64> {
    let mut out = row.to_vec();
    let mut debt: f64 = row.iter().filter(|&&v| v < 0.0).sum();
    let mut positives: Vec<usize> = (0..row.len()).filter(|&i| row[i] > 0.0).collect();
    positives.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    for i in positives {
        if debt >= 0.0 {
            break;
        }
        let t = out[i] + debt;
        if t < 0.0 {
            debt = t;
            out[i] = 0.0;
        } else {
            debt = 0.0;
            out[i] = t;
        }
    }
    for v in out.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// `row / Σ row`, or `None` when the row has no positive mass.
pub fn normalize_row(row: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = row.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    Some(row.iter().map(|v| v / total).collect())
}

/// A noised, NormCut-cleaned model. Counts are nonnegative and safe to
/// publish.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleasedModel {
    inner: MarkovModel,
}

impl ReleasedModel {
    pub fn order(&self) -> usize {
        self.inner.order
    }

    pub fn num_states(&self) -> usize {
        self.inner.m
    }

    pub fn row(&self, context: &[Sym]) -> Option<&[f64]> {
        self.inner.row(context)
    }

    pub fn num_contexts(&self) -> usize {
        self.inner.num_contexts()
    }

    pub fn num_entries(&self) -> usize {
        self.inner.num_entries()
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.inner.rows.keys()
    }

    /// Next-symbol probabilities over `Σ ∪ {End}` (End last), or `None` when
    /// the context is absent or its row is empty.
    pub fn transition_distribution(&self, context: &[Sym]) -> Option<Vec<f64>> {
        self.row(context).and_then(normalize_row)
    }

    /// Reads a model written by [`ReleasedModel::dump_text`]. The text is a
    /// published model, so loading it needs no further noise.
    pub fn from_text(text: &str, order: usize, m: usize) -> Result<Self> {
        if order != 1 && order != 2 {
            return Err(Error::invalid(format!("unsupported Markov order {order}")));
        }
        let parse_sym = |tok: &str| -> Result<Sym> {
            match tok.trim() {
                "START" => Ok(Sym::Start),
                "END" => Ok(Sym::End),
                t => t
                    .parse::<StateId>()
                    .map(Sym::State)
                    .map_err(|_| Error::Model(format!("bad symbol {t:?}"))),
            }
        };
        let mut rows: BTreeMap<Context, Vec<f64>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: Error| Error::Model(format!("line {}: {e}", n + 1));
            let (ctx_s, rest) = line
                .split_once("->")
                .ok_or_else(|| at(Error::Model("missing '->'".into())))?;
            let (target_s, count_s) = rest
                .split_once(':')
                .ok_or_else(|| at(Error::Model("missing ':'".into())))?;
            let ctx: Context = ctx_s.split(',').map(parse_sym).collect::<Result<_>>().map_err(at)?;
            if ctx.len() != order {
                return Err(at(Error::Model(format!("context of length {} for order {order}", ctx.len()))));
            }
            check_context(&ctx, m).map_err(at)?;
            let j = target_index(parse_sym(target_s).map_err(at)?, m).map_err(at)?;
            let v: f64 = count_s
                .trim()
                .parse()
                .map_err(|_| at(Error::Model(format!("bad count {:?}", count_s.trim()))))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(at(Error::Model(format!("count must be nonnegative, got {v}"))));
            }
            rows.entry(ctx).or_insert_with(|| vec![0.0; m + 1])[j] += v;
        }
        Ok(Self {
            inner: MarkovModel {
                order,
                m,
                rows,
                noised: true,
                normcut_applied: true,
            },
        })
    }

    /// `context -> target: count` lines, one per nonzero count.
    pub fn dump_text(&self) -> String {
        let m = self.inner.m;
        let mut out = String::new();
        for (ctx, row) in &self.inner.rows {
            let ctx_s: Vec<String> = ctx.iter().map(|s| s.to_string()).collect();
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    let _ = writeln!(out, "{} -> {}: {}", ctx_s.join(","), target_symbol(j, m), v);
                }
            }
        }
        out
    }
}

/// Counting, noise and NormCut for one order in a single call.
pub fn learn_model(
    sequences: &[AugmentedSequence],
    order: usize,
    m: usize,
    epsilon: f64,
    dense_order2: bool,
    rng: &mut Rng,
) -> Result<ReleasedModel> {
    count_transitions(sequences, order, m)?
        .add_noise(epsilon, dense_order2, rng)?
        .apply_normcut()
        .release()
}
