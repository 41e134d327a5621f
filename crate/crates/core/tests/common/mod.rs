#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use trajsynth::discretization::{
    dataset_to_states, normalized_density, FirstLayerGrid, StateId, TwoLayerGrid,
};
use trajsynth::generation::{Generator, ModelPolicy, StartSource};
use trajsynth::geometry::{BBox, Point, Trajectory, TrajectoryDataset};
use trajsynth::io::read_trajectories;
use trajsynth::markov::{augment, count_transitions, learn_model, normcut, Context, Sym};
use trajsynth::metrics::{jsd, Histogram};
use trajsynth::pipeline::{load_input, run_experiment, Ablation, AblationSetting, RunConfig};
use trajsynth::privacy::split_budget;
use trajsynth::synthgen::{builtin_world, distinguishing_patterns, generate_toy_dataset};
use trajsynth::trip::{
    estimate_trip_distribution_with, shortest_path_lengths, PathLengthMatrix, SolverOptions, StateGraph,
};
use trajsynth::Rng;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

// ---------------------------------------------------------------------------
// Random inputs

pub fn random_trajectory(rng: &mut Rng, max_points: usize) -> Trajectory {
    let n = 1 + (rng.next_u64() % max_points as u64) as usize;
    let pts = (0..n)
        .map(|_| Point::new(rng.uniform_in(0.0, 1.0), rng.uniform_in(0.0, 1.0)))
        .collect();
    Trajectory::new(pts).unwrap()
}

pub fn random_dataset(rng: &mut Rng, n: usize, max_points: usize) -> TrajectoryDataset {
    let ts = (0..n).map(|_| random_trajectory(rng, max_points)).collect();
    TrajectoryDataset::with_bbox(ts, BBox::unit()).unwrap()
}

pub fn pick(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

// ---------------------------------------------------------------------------
// Brute-force transition oracle on a uniform k×k grid of the unit square

const START: i64 = -1;
const END: i64 = -2;

/// Row-major cell sequence with consecutive repeats collapsed.
pub fn oracle_cells(t: &Trajectory, k: usize) -> Vec<i64> {
    let mut out: Vec<i64> = Vec::new();
    for p in t.points() {
        let c = ((p.x * k as f64).floor() as i64).clamp(0, k as i64 - 1);
        let r = ((p.y * k as f64).floor() as i64).clamp(0, k as i64 - 1);
        let s = r * k as i64 + c;
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

fn framed(cells: &[i64]) -> Vec<i64> {
    let mut v = vec![START];
    v.extend_from_slice(cells);
    v.push(END);
    v
}

/// Conditional probability of `next` after `ctx`, where every occurrence in
/// trajectory T is weighted by 1/|T| (|T| counted with both sentinels).
pub fn oracle_probability(seqs: &[Vec<i64>], ctx: &[i64], next: i64) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for s in seqs {
        let f = framed(s);
        let w = 1.0 / f.len() as f64;
        for i in 0..f.len() {
            if i + ctx.len() >= f.len() || f[i..i + ctx.len()] != *ctx {
                continue;
            }
            den += w;
            if f[i + ctx.len()] == next {
                num += w;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

fn oracle_contexts(seqs: &[Vec<i64>], order: usize) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    for s in seqs {
        let f = framed(s);
        for w in f.windows(order + 1) {
            let c = w[..order].to_vec();
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

fn to_sym(v: i64) -> Sym {
    match v {
        START => Sym::Start,
        END => Sym::End,
        s => Sym::State(s as StateId),
    }
}

fn context_to_oracle(ctx: &Context) -> Vec<i64> {
    ctx.iter()
        .map(|s| match s {
            Sym::Start => START,
            Sym::End => END,
            Sym::State(x) => *x as i64,
        })
        .collect()
}

/// Noise-free model rows against the brute-force oracle on one dataset.
pub fn compare_with_oracle(dataset: &TrajectoryDataset, k: usize, order: usize) -> Result<f64, String> {
    let grid = TwoLayerGrid::uniform(BBox::unit(), k).unwrap();
    let m = k * k;
    let states = dataset_to_states(dataset, &grid).unwrap();
    let oracle_seqs: Vec<Vec<i64>> = dataset.trajectories().iter().map(|t| oracle_cells(t, k)).collect();
    for (a, b) in states.iter().zip(&oracle_seqs) {
        let a: Vec<i64> = a.iter().map(|&s| s as i64).collect();
        ensure!(a == *b, "state sequence {a:?} differs from oracle {b:?}");
    }
    let aug: Vec<_> = states.iter().map(|s| augment(s).unwrap()).collect();
    let model = learn_model(&aug, order, m, f64::INFINITY, false, &mut Rng::new(0)).unwrap();
    let contexts = oracle_contexts(&oracle_seqs, order);
    let mut worst: f64 = 0.0;
    for ctx in &contexts {
        let syms: Vec<Sym> = ctx.iter().map(|&v| to_sym(v)).collect();
        let dist = model
            .transition_distribution(&syms)
            .ok_or_else(|| format!("context {ctx:?} missing from the model"))?;
        for (j, p) in dist.iter().enumerate() {
            let next = if j == m { END } else { j as i64 };
            let want = oracle_probability(&oracle_seqs, ctx, next).unwrap();
            worst = worst.max((p - want).abs());
        }
    }
    for ctx in model.contexts() {
        let c = context_to_oracle(ctx);
        if !contexts.contains(&c) {
            ensure!(
                model.transition_distribution(ctx).is_none(),
                "unobserved context {c:?} has a distribution"
            );
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Shortest paths

/// Lexicographic (weight, hops) with the same relative tie tolerance as
/// the library.
fn key_less(a: (f64, u32), b: (f64, u32)) -> bool {
    let tol = 1e-9 * a.0.abs().max(b.0.abs());
    if a.0 < b.0 - tol {
        true
    } else if a.0 > b.0 + tol {
        false
    } else {
        a.1 < b.1
    }
}

/// All-pairs node counts of minimum-weight paths, ties broken by fewer nodes.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<Option<f64>>> {
    let mut d: Vec<Vec<Option<(f64, u32)>>> = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some((0.0, 0));
    }
    for &(a, b, w) in edges {
        for (x, y) in [(a, b), (b, a)] {
            let cand = (w, 1);
            if d[x][y].map_or(true, |cur| key_less(cand, cur)) {
                d[x][y] = Some(cand);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    let cand = (a.0 + b.0, a.1 + b.1);
                    if d[i][j].map_or(true, |cur| key_less(cand, cur)) {
                        d[i][j] = Some(cand);
                    }
                }
            }
        }
    }
    d.into_iter()
        .map(|r| r.into_iter().map(|e| e.map(|(_, h)| (h + 1) as f64)).collect())
        .collect()
}

pub fn random_graph(rng: &mut Rng) -> (usize, Vec<(usize, usize, f64)>) {
    let n = pick(rng, 2, 20);
    let p = rng.uniform_in(0.1, 0.6);
    let integer = rng.uniform_open() < 0.7;
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.uniform_open() < p {
                let w = if integer {
                    pick(rng, 1, 3) as f64
                } else {
                    rng.uniform_in(0.1, 3.0)
                };
                edges.push((a, b, w));
            }
        }
    }
    (n, edges)
}

// ---------------------------------------------------------------------------
// Trip estimation: exhaustive active-set oracle

pub struct TripInstance {
    pub b: Vec<f64>,
    pub q: Vec<f64>,
    pub l: PathLengthMatrix,
    pub n: f64,
}

pub fn random_trip_instance(rng: &mut Rng) -> TripInstance {
    let m = pick(rng, 2, 4);
    let mut rows = vec![vec![None; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j || rng.uniform_open() < 0.8 {
                rows[i][j] = Some(pick(rng, 1, 6) as f64);
            }
        }
    }
    let n = 1.0;
    let consistent = rng.uniform_open() < 0.5;
    let (mut b, mut q) = (vec![0.0; m], vec![0.0; m]);
    if consistent {
        // marginals of a random feasible matrix, then perturbed
        let mut t = vec![vec![0.0; m]; m];
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                if rows[i][j].is_some() {
                    t[i][j] = rng.uniform_open();
                    total += t[i][j];
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                if let Some(len) = rows[i][j] {
                    let v = t[i][j] / total * n / len;
                    b[i] += v;
                    q[j] += v;
                }
            }
        }
        for v in b.iter_mut().chain(q.iter_mut()) {
            *v = (*v + rng.uniform_in(-0.05, 0.05)).max(0.0);
        }
    } else {
        for v in b.iter_mut().chain(q.iter_mut()) {
            *v = rng.uniform_in(0.0, 0.5);
        }
    }
    TripInstance {
        b,
        q,
        l: PathLengthMatrix::from_rows(rows).unwrap(),
        n,
    }
}

fn objective(a: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (a * x - c).norm_squared()
}

/// Minimum of ‖A t − c‖² over `t ≥ 0, Σt = n`. Some minimizer has a support
/// whose columns of `[A; 1ᵀ]` are independent; on such a support the
/// equality-constrained problem has a unique solution, so enumerating those
/// supports and keeping nonnegative solutions finds the optimum.
pub fn active_set_optimum(inst: &TripInstance) -> f64 {
    let m = inst.l.size();
    let vars: Vec<(usize, usize, f64)> = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter_map(|(i, j)| inst.l.get(i, j).map(|len| (i, j, 1.0 / len)))
        .collect();
    let v = vars.len();
    let mut a = DMatrix::zeros(2 * m, v);
    for (k, &(i, j, w)) in vars.iter().enumerate() {
        a[(i, k)] = w;
        a[(m + j, k)] = w;
    }
    let c = DVector::from_iterator(2 * m, inst.b.iter().chain(&inst.q).copied());
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << v) {
        let size = mask.count_ones() as usize;
        if size > 2 * m {
            continue;
        }
        let cols: Vec<usize> = (0..v).filter(|k| mask >> k & 1 == 1).collect();
        let a_s = a.select_columns(&cols);
        let mut aug = DMatrix::zeros(2 * m + 1, size);
        aug.view_mut((0, 0), (2 * m, size)).copy_from(&a_s);
        aug.row_mut(2 * m).fill(1.0);
        let sv = aug.clone().singular_values();
        if sv.min() <= 1e-9 * sv.max() {
            continue;
        }
        let mut kkt = DMatrix::zeros(size + 1, size + 1);
        kkt.view_mut((0, 0), (size, size))
            .copy_from(&(a_s.transpose() * &a_s * 2.0));
        for r in 0..size {
            kkt[(r, size)] = 1.0;
            kkt[(size, r)] = 1.0;
        }
        let mut rhs = DVector::zeros(size + 1);
        rhs.rows_mut(0, size).copy_from(&(a_s.transpose() * &c * 2.0));
        rhs[size] = inst.n;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x_s = sol.rows(0, size).into_owned();
        if x_s.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let mut x = DVector::zeros(v);
        for (k, &col) in cols.iter().enumerate() {
            x[col] = x_s[k].max(0.0);
        }
        best = best.min(objective(&a, &c, &x));
    }
    best
}

/// Objective of a full `m×m` matrix, written out independently.
pub fn oracle_trip_objective(inst: &TripInstance, t: &[f64]) -> f64 {
    let m = inst.l.size();
    let mut f = 0.0;
    for i in 0..m {
        let row: f64 = (0..m).filter_map(|j| inst.l.get(i, j).map(|len| t[i * m + j] / len)).sum();
        f += (row - inst.b[i]).powi(2);
    }
    for j in 0..m {
        let col: f64 = (0..m).filter_map(|i| inst.l.get(i, j).map(|len| t[i * m + j] / len)).sum();
        f += (col - inst.q[j]).powi(2);
    }
    f
}

// ---------------------------------------------------------------------------
// JSD

pub fn oracle_jsd(p: &[f64], q: &[f64]) -> f64 {
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    let mut out = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        let mid = 0.5 * (a + b);
        if a > 0.0 {
            out += 0.5 * a * (a / mid).ln() / std::f64::consts::LN_2;
        }
        if b > 0.0 {
            out += 0.5 * b * (b / mid).ln() / std::f64::consts::LN_2;
        }
    }
    out
}

pub fn random_masses(rng: &mut Rng, bins: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..bins)
            .map(|_| if rng.uniform_open() < 0.3 { 0.0 } else { rng.uniform_open() })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// Checks shared by the integration tests and the acceptance runner

fn l1_counts(a: &HashMap<(Context, usize), f64>, b: &HashMap<(Context, usize), f64>) -> f64 {
    let mut total = 0.0;
    for (k, v) in a {
        total += (v - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            total += v.abs();
        }
    }
    total
}

fn count_map(states: &[Vec<StateId>], order: usize, m: usize) -> HashMap<(Context, usize), f64> {
    let aug: Vec<_> = states.iter().map(|s| augment(s).unwrap()).collect();
    count_transitions(&aug, order, m)
        .unwrap()
        .flat_counts()
        .into_iter()
        .map(|(c, j, v)| ((c, j), v))
        .collect()
}

/// L1 change of the density and both count vectors when one trajectory is
/// added to a random dataset.
pub fn check_sensitivity(cases: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k = pick(&mut rng, 2, 6);
        let n = pick(&mut rng, 1, 12);
        let base = random_dataset(&mut rng, n, 15);
        let extra = random_trajectory(&mut rng, 40);
        let mut with: Vec<Trajectory> = base.trajectories().to_vec();
        with.insert(pick(&mut rng, 0, n), extra);
        let bigger = TrajectoryDataset::with_bbox(with, BBox::unit()).unwrap();

        let first = FirstLayerGrid::new(BBox::unit(), k).unwrap();
        let d0 = normalized_density(&base, &first).unwrap();
        let d1 = normalized_density(&bigger, &first).unwrap();
        let dl: f64 = d0.values().iter().zip(d1.values()).map(|(a, b)| (a - b).abs()).sum();
        ensure!(dl <= 1.0 + 1e-9, "density L1 change {dl}");
        worst = worst.max(dl);

        let grid = TwoLayerGrid::uniform(BBox::unit(), k).unwrap();
        let s0 = dataset_to_states(&base, &grid).unwrap();
        let s1 = dataset_to_states(&bigger, &grid).unwrap();
        for order in [1, 2] {
            let g = l1_counts(&count_map(&s0, order, k * k), &count_map(&s1, order, k * k));
            ensure!(g <= 1.0 + 1e-9, "order-{order} count L1 change {g}");
            worst = worst.max(g);
        }
    }
    Ok(format!("{cases} pairs, max L1 change {worst:.12}"))
}

pub fn check_normcut(cases: usize, seed: u64) -> Check {
    let out = normcut(&[-5.0, 1.0, 7.0]);
    ensure!(out == vec![0.0, 0.0, 3.0], "(-5, 1, 7) gave {out:?}");
    let mut rng = Rng::new(seed);
    let mut done = 0;
    while done < cases {
        let len = pick(&mut rng, 1, 20);
        let v: Vec<f64> = (0..len).map(|_| rng.uniform_in(-10.0, 10.0)).collect();
        let sum: f64 = v.iter().sum();
        if !(sum > 0.0) {
            continue;
        }
        let out = normcut(&v);
        ensure!(out.iter().all(|&x| x >= 0.0), "negative output for {v:?}");
        let s: f64 = out.iter().sum();
        ensure!((s - sum).abs() <= 1e-9 * sum, "sum {s} instead of {sum} for {v:?}");
        done += 1;
    }
    Ok(format!("worked example exact, {cases} random vectors"))
}

pub fn check_markov_oracle(first_order: usize, second_order: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..first_order {
        let k = pick(&mut rng, 2, 5);
        let n = pick(&mut rng, 1, 60);
        let d = random_dataset(&mut rng, n, 12);
        let e = compare_with_oracle(&d, k, 1)?;
        ensure!(e <= 1e-12, "first-order deviation {e}");
        worst = worst.max(e);
    }
    for _ in 0..second_order {
        let k = pick(&mut rng, 2, 4);
        let n = pick(&mut rng, 1, 10);
        let d = random_dataset(&mut rng, n, 12);
        let e = compare_with_oracle(&d, k, 2)?;
        ensure!(e <= 1e-12, "second-order deviation {e}");
        worst = worst.max(e);
    }
    Ok(format!(
        "{first_order} first-order and {second_order} second-order datasets, max deviation {worst:.1e}"
    ))
}

pub fn check_solver(instances: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut worst_gap: f64 = 0.0;
    for idx in 0..instances {
        let inst = random_trip_instance(&mut rng);
        let (t, _) = estimate_trip_distribution_with(&inst.b, &inst.q, &inst.l, inst.n, &SolverOptions::default())
            .map_err(|e| format!("instance {idx}: {e}"))?;
        let m = inst.l.size();
        let vals = t.values();
        let total: f64 = vals.iter().sum();
        ensure!((total - inst.n).abs() <= 1e-6 * inst.n, "instance {idx}: total {total}");
        for i in 0..m {
            for j in 0..m {
                let x = vals[i * m + j];
                ensure!(x >= -1e-6 * inst.n, "instance {idx}: negative entry {x}");
                if inst.l.get(i, j).is_none() {
                    ensure!(x == 0.0, "instance {idx}: unreachable pair ({i},{j}) has {x}");
                }
            }
        }
        let f = oracle_trip_objective(&inst, vals);
        let best = active_set_optimum(&inst);
        ensure!(f - best <= 1e-6, "instance {idx}: objective {f} vs optimum {best}");
        ensure!(best - f <= 1e-9, "instance {idx}: solver {f} below the oracle optimum {best}");
        worst_gap = worst_gap.max(f - best);
    }
    Ok(format!("{instances} instances, max objective gap {worst_gap:.2e}"))
}

pub fn check_paths(graphs: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    for idx in 0..graphs {
        let (n, edges) = random_graph(&mut rng);
        let graph = StateGraph::from_edges(n, &edges).unwrap();
        let got = shortest_path_lengths(&graph);
        let want = floyd_warshall(n, &edges);
        for i in 0..n {
            for j in 0..n {
                ensure!(
                    got.get(i, j) == want[i][j],
                    "graph {idx}: ({i},{j}) got {:?}, oracle {:?}",
                    got.get(i, j),
                    want[i][j]
                );
            }
        }
    }
    Ok(format!("{graphs} graphs match"))
}

pub fn check_jsd(pairs: usize, seed: u64) -> Check {
    let h = |v: Vec<f64>| Histogram::from_masses(v, 1.0);
    let hand = jsd(&h(vec![1.0, 0.0]), &h(vec![0.5, 0.5])).unwrap();
    let want = oracle_jsd(&[1.0, 0.0], &[0.5, 0.5]);
    ensure!((hand - 0.311278).abs() <= 1e-6, "hand case gave {hand}");
    ensure!((hand - want).abs() <= 1e-12, "hand case {hand} vs oracle {want}");
    let mut rng = Rng::new(seed);
    for _ in 0..pairs {
        let bins = pick(&mut rng, 1, 20);
        let p = random_masses(&mut rng, bins);
        let q = random_masses(&mut rng, bins);
        let pq = jsd(&h(p.clone()), &h(q.clone())).unwrap();
        let qp = jsd(&h(q.clone()), &h(p.clone())).unwrap();
        let pp = jsd(&h(p.clone()), &h(p.clone())).unwrap();
        ensure!((pq - qp).abs() <= 1e-12, "asymmetric: {pq} vs {qp}");
        ensure!(pp.abs() <= 1e-12, "jsd(p, p) = {pp}");
        ensure!((0.0..=1.0).contains(&pq), "out of bounds: {pq}");
        let o = oracle_jsd(&p, &q);
        ensure!((pq - o).abs() <= 1e-12, "{pq} vs oracle {o}");
    }
    Ok(format!("hand case {hand:.6}, {pairs} random pairs"))
}

pub const GENERATION_SOURCE: &str = include_str!("../../src/generation.rs");
pub const RAW_COUNT_NAMES: [&str; 4] = ["count_transitions", "MarkovModel", "normalized_density", "augment"];

pub fn check_ledger(seed: u64, out: &Path) -> Check {
    let mut rng = Rng::new(seed);
    for _ in 0..2000 {
        let eps = rng.uniform_in(0.01, 20.0);
        let a = rng.uniform_in(0.05, 0.6);
        let b = rng.uniform_in(0.05, 0.3);
        let budget = split_budget(eps, [a, b, 1.0 - a - b]).map_err(|e| e.to_string())?;
        ensure!(
            budget.epsilon1 + budget.epsilon2 + budget.epsilon3 == eps,
            "split of {eps} does not add up"
        );
    }
    for (eps, ratios) in [(1.0, [0.2, 0.4, 0.4]), (0.3, [0.1, 0.6, 0.3]), (7.0, [0.3, 0.3, 0.4])] {
        let config = RunConfig {
            world: Some("corridor".into()),
            toy_trajectories: Some(300),
            epsilon: eps,
            ratios,
            repetitions: 1,
            out_dir: out.to_path_buf(),
            ..RunConfig::default()
        };
        let (result, _) = run_experiment(&config).map_err(|e| e.to_string())?;
        let parts: Vec<f64> = result
            .privacy_ledger
            .iter()
            .map(|e| e.epsilon.parse::<f64>().unwrap())
            .collect();
        ensure!(parts.len() == 3, "ledger has {} entries", parts.len());
        ensure!(parts[0] + parts[1] + parts[2] == eps, "ledger {parts:?} does not add up to {eps}");
        ensure!(
            result.budget.epsilon1 + result.budget.epsilon2 + result.budget.epsilon3 == eps,
            "budget does not add up to {eps}"
        );
    }
    for name in RAW_COUNT_NAMES {
        ensure!(!GENERATION_SOURCE.contains(name), "generation module mentions {name}");
    }
    Ok("2000 splits and 3 runs add up exactly; generation sees released models only".into())
}

fn read_metric(result: &trajsynth::pipeline::ExperimentResult, name: &str) -> f64 {
    result.mean[name]
}

/// Pattern ARE between two independent samples of the same world: what the
/// metric reports for a perfect generator.
pub fn sampling_floor(world: &str, seed: u64) -> f64 {
    use trajsynth::metrics::{pattern_are, MetricParams};
    let spec = builtin_world(world).unwrap();
    let a = generate_toy_dataset(&spec, &Rng::new(seed)).unwrap();
    let b = generate_toy_dataset(&spec, &Rng::new(seed + 1)).unwrap();
    let params = MetricParams::default();
    let grid = TwoLayerGrid::uniform(a.bbox().union(b.bbox()), params.pattern_grid).unwrap();
    pattern_are(&a, &b, &grid, params.mu, params.phi_for(a.len())).unwrap().0
}

pub fn check_recovery(out: &Path) -> Check {
    let config = RunConfig {
        world: Some("corridor".into()),
        noise_disabled: true,
        unsafe_no_dp: true,
        repetitions: 1,
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    let (result, _) = run_experiment(&config).map_err(|e| e.to_string())?;
    let are = read_metric(&result, "pattern_are");
    let jsd = read_metric(&result, "length_jsd");
    let floor = sampling_floor("corridor", 11);
    let msg = format!(
        "pattern ARE {are:.4} (need ≤ 0.15), length JSD {jsd:.4} (need ≤ 0.05); \
         two independent samples of the world score pattern ARE {floor:.4}"
    );
    if are <= 0.15 && jsd <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// ARE over the world-cell triples whose next step depends on the previous
/// cell, averaged over the repetitions of one run.
pub fn distinguishing_are(config: &RunConfig, dir: &Path) -> Result<f64, String> {
    let spec = builtin_world(config.world_name().unwrap()).unwrap();
    let original = load_input(config, &Rng::new(config.seed)).map_err(|e| e.to_string())?.dataset;
    let world = TwoLayerGrid::uniform(spec.bbox, spec.g).unwrap();
    let patterns = distinguishing_patterns(&spec);
    let phi = config.metrics.phi_for(original.len());
    let triples = |d: &TrajectoryDataset| -> BTreeMap<[usize; 3], f64> {
        let mut out = BTreeMap::new();
        for s in dataset_to_states(d, &world).unwrap() {
            for w in s.windows(3) {
                *out.entry([w[0] as usize, w[1] as usize, w[2] as usize]).or_insert(0.0) += 1.0;
            }
        }
        out
    };
    let co = triples(&original);
    let mut total = 0.0;
    for k in 0..config.repetitions {
        let synth = read_trajectories(&dir.join(format!("rep{k}")).join("synthetic.txt")).map_err(|e| e.to_string())?;
        let cs = triples(&synth);
        let mut err = 0.0;
        for p in &patterns {
            let o = co.get(p).copied().unwrap_or(0.0);
            let s = cs.get(p).copied().unwrap_or(0.0);
            err += (o - s).abs() / o.max(phi);
        }
        total += err / patterns.len() as f64;
    }
    Ok(total / config.repetitions as f64)
}

pub fn ablation_config(policy: ModelPolicy, out: &Path) -> RunConfig {
    RunConfig {
        world: Some("crossing".into()),
        epsilon: 2.0,
        repetitions: 10,
        seed: 3,
        ablation: AblationSetting::Custom(Ablation {
            model: policy,
            ..Ablation::default()
        }),
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

pub fn check_ablation(out: &Path) -> Check {
    let mut are = Vec::new();
    let mut dist = Vec::new();
    for policy in [ModelPolicy::FirstOnly, ModelPolicy::SecondOnly, ModelPolicy::Adaptive] {
        let config = ablation_config(policy, out);
        let (result, dir) = run_experiment(&config).map_err(|e| e.to_string())?;
        are.push(read_metric(&result, "pattern_are"));
        dist.push(distinguishing_are(&config, &dir)?);
    }
    let [first, second, adaptive] = [are[0], are[1], are[2]];
    let msg = format!(
        "pattern ARE first {first:.4} second {second:.4} adaptive {adaptive:.4}; \
         distinguishing ARE first {:.4} adaptive {:.4}",
        dist[0], dist[2]
    );
    if adaptive <= second && adaptive <= 1.1 * first && dist[2] < dist[0] {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn check_termination(walks: usize, seed: u64) -> Check {
    let spec = builtin_world("ring").unwrap().with_size(400);
    let data = generate_toy_dataset(&spec, &Rng::new(seed)).unwrap();
    let grid = TwoLayerGrid::uniform(spec.bbox, spec.g).unwrap();
    let states = dataset_to_states(&data, &grid).unwrap();
    let aug: Vec<_> = states.iter().map(|s| augment(s).unwrap()).collect();
    let m = grid.num_states();
    let mut rng = Rng::new(seed);
    // Strong noise yields long, wandering walks.
    let m1 = learn_model(&aug, 1, m, 0.2, false, &mut rng).unwrap();
    let m2 = learn_model(&aug, 2, m, 0.2, false, &mut rng).unwrap();
    let thresholds = trajsynth::generation::SelectionThresholds { theta1: 0.0, theta2: 5.0 };
    let max_len = 12;
    let gen = Generator::new(&m1, &m2, &StartSource::StartRow, ModelPolicy::Adaptive, thresholds, max_len).unwrap();
    let root = Rng::new(seed + 1);
    let mut capped = 0;
    for i in 0..walks as u64 {
        let (walk, stats) = gen.random_walk(&mut root.derive_index(i)).map_err(|e| e.to_string())?;
        ensure!(!walk.is_empty() && walk.len() <= max_len, "walk {i} has {} states", walk.len());
        capped += stats.truncated;
    }
    Ok(format!("{walks} walks within {max_len} states ({capped} stopped by the cap)"))
}

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, base, out);
        } else if path.file_name().unwrap() != "timing.json" {
            out.insert(path.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
        }
    }
}

/// Two runs of the same config produce byte-identical outputs (wall-clock
/// timings excepted).
pub fn check_determinism(out: &Path) -> Check {
    let config = RunConfig {
        world: Some("two_cluster".into()),
        toy_trajectories: Some(800),
        repetitions: 3,
        seed: 17,
        out_dir: out.to_path_buf(),
        metrics: trajsynth::metrics::MetricParams {
            heatmap: true,
            ..Default::default()
        },
        ..RunConfig::default()
    };
    let (_, dir) = run_experiment(&config).map_err(|e| e.to_string())?;
    let mut first = BTreeMap::new();
    collect_files(&dir, &dir, &mut first);
    std::fs::remove_dir_all(&dir).unwrap();
    let (_, dir2) = run_experiment(&config).map_err(|e| e.to_string())?;
    ensure!(dir == dir2, "output directory changed");
    let mut second = BTreeMap::new();
    collect_files(&dir2, &dir2, &mut second);
    ensure!(
        first.keys().collect::<Vec<_>>() == second.keys().collect::<Vec<_>>(),
        "file sets differ"
    );
    for (path, bytes) in &first {
        ensure!(second[path] == *bytes, "{} differs between runs", path.display());
    }
    Ok(format!("{} files identical", first.len()))
}

pub fn timed(f: impl FnOnce() -> Check) -> (Check, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}
