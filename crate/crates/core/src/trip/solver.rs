use std::fmt::Write as _;

use serde::Serialize;

use super::graph::PathLengthMatrix;
use crate::error::{Error, Result};

/// Estimated number of trajectories per (start state, end state) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripMatrix {
    m: usize,
    t: Vec<f64>,
    n_target: f64,
}

impl TripMatrix {
    pub fn new(m: usize, t: Vec<f64>, n_target: f64) -> Result<Self> {
        if t.len() != m * m {
            return Err(Error::invalid(format!("trip matrix needs {} entries, got {}", m * m, t.len())));
        }
        if t.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("trip counts must be finite and nonnegative"));
        }
        Ok(Self { m, t, n_target })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.m + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.t
    }

    pub fn n_target(&self) -> f64 {
        self.n_target
    }

    pub fn total(&self) -> f64 {
        self.t.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.t.chunks(self.m.max(1)) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the projected-gradient residual is at most `tolerance · n`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Record the objective after every accepted step.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100_000,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Euclidean projection onto `{x ≥ 0, Σx = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - total) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

struct Problem<'a> {
    m: usize,
    /// Reachable pairs `(i, j, 1/l_ij)`.
    vars: Vec<(usize, usize, f64)>,
    b: &'a [f64],
    q: &'a [f64],
}

impl Problem<'_> {
    fn residuals(&self, t: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r: Vec<f64> = self.b.iter().map(|v| -v).collect();
        let mut s: Vec<f64> = self.q.iter().map(|v| -v).collect();
        for (x, &(i, j, w)) in t.iter().zip(&self.vars) {
            r[i] += w * x;
            s[j] += w * x;
        }
        (r, s)
    }

    fn objective(&self, t: &[f64]) -> f64 {
        let (r, s) = self.residuals(t);
        r.iter().chain(&s).map(|v| v * v).sum()
    }

    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        let (r, s) = self.residuals(t);
        self.vars.iter().map(|&(i, j, w)| 2.0 * w * (r[i] + s[j])).collect()
    }

    /// Upper bound on the gradient's Lipschitz constant.
    fn lipschitz(&self) -> f64 {
        let mut row = vec![0.0; self.m];
        let mut col = vec![0.0; self.m];
        let mut wmax: f64 = 0.0;
        for &(i, j, w) in &self.vars {
            row[i] += w;
            col[j] += w;
            wmax = wmax.max(w);
        }
        let smax = row.iter().chain(&col).fold(0.0f64, |a, &b| a.max(b));
        (4.0 * wmax * smax).max(f64::MIN_POSITIVE)
    }
}

fn kkt_residual(t: &[f64], g: &[f64], n: f64) -> f64 {
    let moved: Vec<f64> = t.iter().zip(g).map(|(x, d)| x - d).collect();
    project_simplex(&moved, n)
        .iter()
        .zip(t)
        .fold(0.0, |a, (p, x)| a.max((p - x).abs()))
}

/// The objective `Σ_i (Σ_j t_ij/l_ij − b_i)² + Σ_j (Σ_i t_ij/l_ij − q_j)²`
/// evaluated on a full matrix. Unreachable entries are ignored.
pub fn trip_objective(t: &TripMatrix, b: &[f64], q: &[f64], l: &PathLengthMatrix) -> f64 {
    let m = t.size();
    let mut r: Vec<f64> = b.iter().map(|v| -v).collect();
    let mut s: Vec<f64> = q.iter().map(|v| -v).collect();
    for i in 0..m {
        for j in 0..m {
            if let Some(len) = l.get(i, j) {
                r[i] += t.get(i, j) / len;
                s[j] += t.get(i, j) / len;
            }
        }
    }
    r.iter().chain(&s).map(|v| v * v).sum()
}

pub fn estimate_trip_distribution(
    b: &[f64],
    q: &[f64],
    l: &PathLengthMatrix,
    n: f64,
) -> Result<TripMatrix> {
    estimate_trip_distribution_with(b, q, l, n, &SolverOptions::default()).map(|(t, _)| t)
}

/// Projected gradient descent with backtracking over the scaled simplex
/// `{t ≥ 0, Σ t = n}`. Negative entries of `b` and `q` are treated as 0 and
/// unreachable pairs stay at 0.
pub fn estimate_trip_distribution_with(
    b: &[f64],
    q: &[f64],
    l: &PathLengthMatrix,
    n: f64,
    opts: &SolverOptions,
) -> Result<(TripMatrix, SolverReport)> {
    let m = l.size();
    if b.len() != m || q.len() != m {
        return Err(Error::invalid(format!(
            "b and q must have {m} entries, got {} and {}",
            b.len(),
            q.len()
        )));
    }
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::invalid(format!("trip total must be positive, got {n}")));
    }
    let b: Vec<f64> = b.iter().map(|v| v.max(0.0)).collect();
    let q: Vec<f64> = q.iter().map(|v| v.max(0.0)).collect();
    let mut vars = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if let Some(len) = l.get(i, j) {
                if !(len > 0.0) {
                    return Err(Error::invalid(format!("path length l[{i}][{j}] must be positive")));
                }
                vars.push((i, j, 1.0 / len));
            }
        }
    }
    if vars.is_empty() {
        return Err(Error::Solver("no reachable state pairs".into()));
    }
    let prob = Problem { m, vars, b: &b, q: &q };
    let lip = prob.lipschitz();
    let min_step = 1.0 / lip;

    let mut t = vec![n / prob.vars.len() as f64; prob.vars.len()];
    let mut f = prob.objective(&t);
    let mut step = min_step;
    let mut report = SolverReport {
        iterations: 0,
        objective: f,
        kkt_residual: f64::INFINITY,
        converged: false,
        trace: Vec::new(),
    };
    if opts.trace {
        report.trace.push(f);
    }
    let threshold = opts.tolerance * n;
    loop {
        let g = prob.gradient(&t);
        let res = kkt_residual(&t, &g, n);
        report.kkt_residual = res;
        if res <= threshold {
            report.converged = true;
            break;
        }
        if report.iterations >= opts.max_iterations {
            break;
        }
        report.iterations += 1;
        step *= 2.0;
        loop {
            let moved: Vec<f64> = t.iter().zip(&g).map(|(x, d)| x - step * d).collect();
            let cand = project_simplex(&moved, n);
            let fc = prob.objective(&cand);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((c, x), d) in cand.iter().zip(&t).zip(&g) {
                lin += d * (c - x);
                sq += (c - x) * (c - x);
            }
            if fc <= f + lin + sq / (2.0 * step) || step <= min_step {
                if fc <= f {
                    t = cand;
                    f = fc;
                }
                break;
            }
            step = (step * 0.5).max(min_step);
        }
        if opts.trace {
            report.trace.push(f);
        }
    }
    report.objective = f;
    let mut full = vec![0.0; m * m];
    for (x, &(i, j, _)) in t.iter().zip(&prob.vars) {
        full[i * m + j] = *x;
    }
    Ok((TripMatrix::new(m, full, n)?, report))
}
