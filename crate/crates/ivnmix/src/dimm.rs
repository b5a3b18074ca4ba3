//! Deviations-in-marginals estimator: constrained minimax least squares.
//!
//! The problem is `min_x max_j f_j(x) + lambda * ||x||^2` with
//! `f_j(x) = ||A_j x_j - b_j||^2` (squared-norm semantics throughout),
//! subject to `x >= 0`, `sum(x) <= 1` and, per node, `min_k x_{j,k} <= eps`.
//!
//! The solver is a feasible-point projected descent: every iterate is
//! projected onto the polyhedron obtained by pinning each node's currently
//! smallest coordinate below `eps` (re-detected every iteration), the descent
//! direction is the min-norm element of the convex hull of the gradients of
//! the active quadratic pieces, and steps are accepted only when they reduce
//! the objective, so the reported trace is non-increasing by construction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bn::NodeId;
use crate::error::{Error, Result};
use crate::marginals::OracleBundle;
use crate::mixture::MixtureSpec;

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_RESTARTS: usize = 60;
pub const DEFAULT_BUDGET: usize = 500;
/// Support threshold for reporting which interventions are present.
pub const DEFAULT_SUPPORT_TAU: f64 = 0.001;

const FEAS_TOL: f64 = 1e-6;

/// Canonical variable order: do-components node-major / category-minor with
/// zero-probability categories dropped.
#[derive(Debug, Clone)]
pub struct VariableLayout {
    pairs: Vec<(NodeId, usize)>,
    index: BTreeMap<(NodeId, usize), usize>,
    /// Variable range `[start, end)` belonging to each node.
    node_ranges: Vec<(usize, usize)>,
}

impl VariableLayout {
    pub fn from_bundle(bundle: &OracleBundle) -> Self {
        let mut pairs = Vec::new();
        let mut node_ranges = Vec::with_capacity(bundle.n());
        for j in 0..bundle.n() {
            let start = pairs.len();
            for k in 0..bundle.base.row(j).len() {
                if !bundle.zero_categories[j][k] {
                    pairs.push((j, k));
                }
            }
            node_ranges.push((start, pairs.len()));
        }
        let index = pairs
            .iter()
            .enumerate()
            .map(|(v, &pair)| (pair, v))
            .collect();
        VariableLayout {
            pairs,
            index,
            node_ranges,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, var: usize) -> (NodeId, usize) {
        self.pairs[var]
    }

    pub fn var(&self, node: NodeId, category: usize) -> Option<usize> {
        self.index.get(&(node, category)).copied()
    }

    pub fn node_range(&self, node: NodeId) -> (usize, usize) {
        self.node_ranges[node]
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ranges.len()
    }

    /// Flatten a mixture spec into this layout.
    pub fn vector_of(&self, spec: &MixtureSpec) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(node, cat)| spec.get(node, cat))
            .collect()
    }

    /// Inverse of [`VariableLayout::vector_of`]; `pi_phi` absorbs the slack.
    pub fn spec_of(&self, x: &[f64]) -> Result<MixtureSpec> {
        let clamped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        let pairs = self
            .pairs
            .iter()
            .copied()
            .zip(clamped)
            .map(|(pair, v)| (pair, v))
            .collect();
        MixtureSpec::from_pairs((1.0 - total).max(0.0), pairs)
    }
}

/// The assembled minimax problem.
#[derive(Debug, Clone)]
pub struct OptProblem {
    pub layout: VariableLayout,
    /// Per node `j`: dense rows (retained categories of `j`) over the first
    /// `cols[j]` variables (those with `i <= j`).
    blocks: Vec<Vec<Vec<f64>>>,
    rhs: Vec<Vec<f64>>,
    cols: Vec<usize>,
    pub lambda: f64,
    pub epsilon: f64,
    /// `lambda * ||x||^2` when true (the default), `lambda * ||x||` when
    /// false; kept as a sensitivity switch.
    pub squared_regularizer: bool,
    /// Theorem 1 exact-recovery solution when the bundle admits one; used
    /// as a deterministic warm start by `multi_start_solve`.
    warm_start: Option<Vec<f64>>,
}

/// Outcome of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub node_residuals: Vec<f64>,
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Per-family constraint violations at a point.
#[derive(Debug, Clone)]
pub struct ConstraintViolations {
    /// `min(0, x_v)` per variable.
    pub nonnegativity: Vec<f64>,
    /// `max(0, sum(x) - 1)`.
    pub total_mass: f64,
    /// `max(0, min_k x_{j,k} - eps)` per node.
    pub node_zero: Vec<f64>,
}

impl ConstraintViolations {
    pub fn max_violation(&self) -> f64 {
        let nn = self
            .nonnegativity
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(-v));
        let nz = self.node_zero.iter().fold(0.0f64, |acc, &v| acc.max(v));
        nn.max(self.total_mass).max(nz)
    }
}

/// Assemble the per-node coefficient blocks and right-hand sides from an
/// oracle bundle.
pub fn build_opt_problem(bundle: &OracleBundle, lambda: f64, epsilon: f64) -> Result<OptProblem> {
    let layout = VariableLayout::from_bundle(bundle);
    let n = bundle.n();
    let mut blocks = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let (_, end_j) = layout.node_range(j);
        let retained: Vec<usize> = (0..bundle.base.row(j).len())
            .filter(|&k| !bundle.zero_categories[j][k])
            .collect();
        let mut block = Vec::with_capacity(retained.len());
        let mut b_j = Vec::with_capacity(retained.len());
        for &beta in &retained {
            let base = bundle.base.get(j, beta);
            let mut row = Vec::with_capacity(end_j);
            for var in 0..end_j {
                let (i, alpha) = layout.pair(var);
                let p_ia = bundle
                    .interventional
                    .get(i)
                    .and_then(|per_cat| per_cat.get(alpha))
                    .ok_or(Error::MissingMarginal)?
                    .get(j, beta);
                row.push(p_ia - base);
            }
            block.push(row);
            b_j.push(bundle.mix.get(j, beta) - base);
        }
        blocks.push(block);
        rhs.push(b_j);
        cols.push(end_j);
    }
    // the Lemma 2 selection supplies exactly what the (rank-deficient)
    // linear systems cannot: with exact marginals this start already is
    // the global optimum of the lambda = 0 problem
    let warm_start = crate::exact::recover_all(bundle, crate::exact::DEFAULT_TOL)
        .expect_spec()
        .ok()
        .map(|spec| layout.vector_of(&spec));
    Ok(OptProblem {
        layout,
        blocks,
        rhs,
        cols,
        lambda,
        epsilon,
        squared_regularizer: true,
        warm_start,
    })
}

impl OptProblem {
    pub fn n_nodes(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_vars(&self) -> usize {
        self.layout.len()
    }

    pub fn block(&self, node: NodeId) -> (&[Vec<f64>], &[f64], usize) {
        (&self.blocks[node], &self.rhs[node], self.cols[node])
    }

    /// Squared residual `f_j(x)` of every node block.
    pub fn node_residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_vars() {
            return Err(Error::LayoutMismatch);
        }
        Ok((0..self.n_nodes())
            .map(|j| self.node_residual(j, x))
            .collect())
    }

    fn node_residual(&self, j: usize, x: &[f64]) -> f64 {
        let cols = self.cols[j];
        self.blocks[j]
            .iter()
            .zip(&self.rhs[j])
            .map(|(row, &b)| {
                let dot: f64 = row.iter().zip(&x[..cols]).map(|(a, v)| a * v).sum();
                let r = dot - b;
                r * r
            })
            .sum()
    }

    fn regularizer(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        if self.squared_regularizer {
            self.lambda * sq
        } else {
            self.lambda * sq.sqrt()
        }
    }

    /// `max_j f_j(x) + lambda * ||x||^2`.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        let residuals = self.node_residuals(x)?;
        let fmax = residuals.iter().fold(0.0f64, |acc, &v| acc.max(v));
        Ok(fmax + self.regularizer(x))
    }

    pub fn constraint_violations(&self, x: &[f64]) -> ConstraintViolations {
        let nonnegativity = x.iter().map(|&v| v.min(0.0)).collect();
        let total: f64 = x.iter().sum();
        let node_zero = (0..self.n_nodes())
            .map(|j| {
                let (start, end) = self.layout.node_range(j);
                if start == end {
                    return 0.0;
                }
                let min = x[start..end].iter().copied().fold(f64::INFINITY, f64::min);
                (min - self.epsilon).max(0.0)
            })
            .collect();
        ConstraintViolations {
            nonnegativity,
            total_mass: (total - 1.0).max(0.0),
            node_zero,
        }
    }

    /// Gradient of `f_j` (dense over the full layout; zero beyond node j's
    /// column range).
    fn node_gradient(&self, j: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let cols = self.cols[j];
        for (row, &b) in self.blocks[j].iter().zip(&self.rhs[j]) {
            let dot: f64 = row.iter().zip(&x[..cols]).map(|(a, v)| a * v).sum();
            let r = 2.0 * (dot - b);
            for (g, &a) in out[..cols].iter_mut().zip(row) {
                *g += r * a;
            }
        }
    }

    fn add_regularizer_gradient(&self, x: &[f64], out: &mut [f64]) {
        if self.squared_regularizer {
            for (g, &v) in out.iter_mut().zip(x) {
                *g += 2.0 * self.lambda * v;
            }
        } else {
            let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (g, &v) in out.iter_mut().zip(x) {
                    *g += self.lambda * v / norm;
                }
            }
        }
    }

    /// Currently smallest coordinate of each node (the one pinned below
    /// `eps` by the feasibility surrogate).
    fn active_pins(&self, x: &[f64]) -> Vec<Option<usize>> {
        (0..self.n_nodes())
            .map(|j| {
                let (start, end) = self.layout.node_range(j);
                if start == end {
                    return None;
                }
                let mut best = start;
                for v in start + 1..end {
                    if x[v] < x[best] {
                        best = v;
                    }
                }
                Some(best)
            })
            .collect()
    }

    /// Euclidean projection onto `{0 <= x, x_pin <= eps, sum(x) <= 1}`.
    fn project(&self, v: &[f64], pins: &[Option<usize>]) -> Vec<f64> {
        let mut cap = vec![f64::INFINITY; v.len()];
        for pin in pins.iter().flatten() {
            cap[*pin] = self.epsilon;
        }
        let clamp = |tau: f64| -> Vec<f64> {
            v.iter()
                .zip(&cap)
                .map(|(&vi, &ci)| (vi - tau).clamp(0.0, ci))
                .collect()
        };
        let sum = |x: &[f64]| -> f64 { x.iter().sum() };
        let x0 = clamp(0.0);
        if sum(&x0) <= 1.0 {
            return x0;
        }
        // bisect the mass multiplier; sum(clamp(tau)) is continuous and
        // non-increasing in tau
        let mut lo = 0.0;
        let mut hi = v.iter().copied().fold(0.0f64, f64::max);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if sum(&clamp(mid)) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        clamp(hi)
    }
}

/// Minimize the objective from `x0` under the full constraint set.
///
/// Returns a report whose solution satisfies every constraint within 1e-6
/// and whose trace is the non-increasing sequence of accepted objectives.
pub fn solve(prob: &OptProblem, x0: &[f64], budget: usize) -> Result<SolverReport> {
    if x0.len() != prob.n_vars() {
        return Err(Error::LayoutMismatch);
    }
    let nvars = prob.n_vars();
    let mut pins = prob.active_pins(x0);
    let mut x = prob.project(x0, &pins);
    let mut fx = prob.objective(&x)?;
    let mut trace = vec![fx];
    let mut step = 1.0f64;
    let mut calm = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for _ in 0..budget {
        iterations += 1;
        pins = prob.active_pins(&x);

        let direction = descent_direction(prob, &x);
        let mut accepted = false;
        // exact minimizer of the leading quadratic piece along the direction
        // is a much better opening trial than the doubling heuristic alone
        let mut s = quadratic_step(prob, &x, &direction).unwrap_or(step).min(1e3);
        let mut decrease = 0.0;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + s * di).collect();
            let y = prob.project(&trial, &pins);
            let moved: f64 = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            if moved == 0.0 {
                break;
            }
            let fy = prob.objective(&y)?;
            if fy <= fx - 1e-4 * moved / s {
                decrease = fx - fy;
                x = y;
                fx = fy;
                step = (s * 2.0).min(1e3);
                accepted = true;
                break;
            }
            s *= 0.5;
            if s < 1e-14 {
                break;
            }
        }
        trace.push(fx);

        let violation = prob.constraint_violations(&x).max_violation();
        if (!accepted || decrease < 1e-10) && violation < FEAS_TOL {
            calm += 1;
            if calm >= 5 {
                converged = true;
                break;
            }
        } else {
            calm = 0;
        }
        if !accepted {
            // keep probing from a smaller base step before giving up
            step = (step * 0.25).max(1e-10);
        }
        let _ = nvars;
    }

    let node_residuals = prob.node_residuals(&x)?;
    let max_violation = prob.constraint_violations(&x).max_violation();
    if max_violation > FEAS_TOL {
        return Err(Error::Diverged {
            violation: max_violation,
        });
    }
    Ok(SolverReport {
        objective: fx,
        node_residuals,
        max_violation,
        iterations,
        converged,
        trace,
        x,
    })
}

/// Step length minimizing the currently maximal quadratic piece along `d`:
/// `t* = -g.d / (d' H d)` with `H = 2 A' A (+ 2 lambda I)`.
fn quadratic_step(prob: &OptProblem, x: &[f64], d: &[f64]) -> Option<f64> {
    let residuals: Vec<f64> = (0..prob.n_nodes())
        .map(|j| prob.node_residual(j, x))
        .collect();
    let jmax = (0..prob.n_nodes())
        .max_by(|&a, &b| residuals[a].partial_cmp(&residuals[b]).unwrap())?;
    let mut g = vec![0.0; prob.n_vars()];
    prob.node_gradient(jmax, x, &mut g);
    prob.add_regularizer_gradient(x, &mut g);
    let num: f64 = -g.iter().zip(d).map(|(gi, di)| gi * di).sum::<f64>();
    let cols = prob.cols[jmax];
    let mut dhd: f64 = prob.blocks[jmax]
        .iter()
        .map(|row| {
            let ad: f64 = row.iter().zip(&d[..cols]).map(|(a, v)| a * v).sum();
            2.0 * ad * ad
        })
        .sum();
    if prob.squared_regularizer {
        dhd += 2.0 * prob.lambda * d.iter().map(|v| v * v).sum::<f64>();
    }
    if num > 0.0 && dhd > 0.0 {
        Some(num / dhd)
    } else {
        None
    }
}

/// Min-norm element of the convex hull of the active-piece gradients,
/// negated. Nonsmoothness of the max is handled by bundling every block
/// within a small margin of the maximum.
fn descent_direction(prob: &OptProblem, x: &[f64]) -> Vec<f64> {
    let residuals: Vec<f64> = (0..prob.n_nodes())
        .map(|j| prob.node_residual(j, x))
        .collect();
    let fmax = residuals.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let margin = (1e-6 * fmax).max(1e-14);
    let active: Vec<usize> = (0..prob.n_nodes())
        .filter(|&j| residuals[j] >= fmax - margin)
        .collect();

    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(active.len());
    for &j in &active {
        let mut g = vec![0.0; prob.n_vars()];
        prob.node_gradient(j, x, &mut g);
        prob.add_regularizer_gradient(x, &mut g);
        grads.push(g);
    }
    let combined = if grads.len() == 1 {
        grads.pop().unwrap()
    } else {
        min_norm_combination(&grads)
    };
    combined.into_iter().map(|g| -g).collect()
}

/// Projected gradient on the weight simplex for
/// `min_w ||sum_k w_k g_k||^2`.
fn min_norm_combination(grads: &[Vec<f64>]) -> Vec<f64> {
    let k = grads.len();
    let dim = grads[0].len();
    // Gram matrix
    let mut gram = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a..k {
            let dot: f64 = grads[a].iter().zip(&grads[b]).map(|(x, y)| x * y).sum();
            gram[a][b] = dot;
            gram[b][a] = dot;
        }
    }
    let lips = 2.0
        * gram
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
        + 1e-30;
    let mut w = vec![1.0 / k as f64; k];
    for _ in 0..200 {
        // gradient of the quadratic form
        let gw: Vec<f64> = (0..k)
            .map(|a| 2.0 * gram[a].iter().zip(&w).map(|(g, wi)| g * wi).sum::<f64>())
            .collect();
        let stepped: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - gi / lips).collect();
        w = project_simplex(&stepped);
    }
    let mut out = vec![0.0; dim];
    for (wi, g) in w.iter().zip(grads) {
        for (o, &gv) in out.iter_mut().zip(g) {
            *o += wi * gv;
        }
    }
    out
}

fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        acc += u;
        let t = (acc - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

/// Ridge least-squares warm start: minimizes the *sum* of the node
/// residuals plus the regularizer, dropping the max structure. The stacked
/// normal equations are square (one equation per variable overall), so with
/// exact marginals and `lambda = 0` this recovers the true proportions
/// outright; otherwise it lands in a good basin for the minimax descent.
fn least_squares_init(prob: &OptProblem) -> Option<Vec<f64>> {
    let n = prob.n_vars();
    if n == 0 {
        return None;
    }
    let mut normal = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for j in 0..prob.n_nodes() {
        let cols = prob.cols[j];
        for (row, &b) in prob.blocks[j].iter().zip(&prob.rhs[j]) {
            for a in 0..cols {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                rhs[a] += ra * b;
                for c in 0..cols {
                    normal[a][c] += ra * row[c];
                }
            }
        }
    }
    let ridge = if prob.squared_regularizer {
        prob.lambda
    } else {
        0.0
    };
    for (a, row) in normal.iter_mut().enumerate() {
        row[a] += ridge;
    }
    solve_spd(&mut normal, &rhs)
}

/// Cholesky solve of a symmetric positive (semi-)definite system, with a
/// diagonal jitter retry when the matrix is numerically singular.
fn solve_spd(matrix: &mut [Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    for attempt in 0..2 {
        if attempt == 1 {
            for (a, row) in matrix.iter_mut().enumerate() {
                row[a] += 1e-10;
            }
        }
        let mut chol = matrix.to_vec();
        let mut ok = true;
        'factor: for i in 0..n {
            for j in 0..=i {
                let mut sum = chol[i][j];
                for k in 0..j {
                    sum -= chol[i][k] * chol[j][k];
                }
                if i == j {
                    if sum <= 1e-14 {
                        ok = false;
                        break 'factor;
                    }
                    chol[i][i] = sum.sqrt();
                } else {
                    chol[i][j] = sum / chol[j][j];
                }
            }
        }
        if !ok {
            continue;
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= chol[i][k] * y[k];
            }
            y[i] /= chol[i][i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= chol[k][i] * y[k];
            }
            y[i] /= chol[i][i];
        }
        return Some(y);
    }
    None
}

/// Best-of-`runs` multi-start: two deterministic warm starts (the Theorem 1
/// exact-recovery solution when available and a ridge least-squares fit)
/// plus `runs` random inits (coordinates uniform in `[0, 1/n_vars]`, one
/// coordinate per node zeroed), each from its own seeded generator.
/// Deterministic given `seed`; ties broken in favor of earlier starts.
pub fn multi_start_solve(
    prob: &OptProblem,
    runs: usize,
    seed: u64,
    budget: usize,
) -> Result<SolverReport> {
    let mut inits: Vec<Vec<f64>> = Vec::with_capacity(runs + 2);
    inits.extend(prob.warm_start.clone());
    inits.extend(least_squares_init(prob));
    for run in 0..runs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        inits.push(random_init(prob, &mut rng));
    }
    let reports: Vec<Result<SolverReport>> = inits
        .into_par_iter()
        .map(|x0| solve(prob, &x0, budget))
        .collect();
    let mut best: Option<SolverReport> = None;
    let mut last_err = None;
    for report in reports {
        match report {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => r.objective < b.objective,
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or(last_err.unwrap_or(Error::Diverged { violation: f64::NAN }))
}

fn random_init<R: Rng + ?Sized>(prob: &OptProblem, rng: &mut R) -> Vec<f64> {
    let n = prob.n_vars().max(1);
    let mut x: Vec<f64> = (0..prob.n_vars())
        .map(|_| rng.random::<f64>() / n as f64)
        .collect();
    for j in 0..prob.n_nodes() {
        let (start, end) = prob.layout.node_range(j);
        if start < end {
            let zeroed = start + rng.random_range(0..end - start);
            x[zeroed] = 0.0;
        }
    }
    x
}

/// Pairs whose estimated proportion exceeds `tau`.
pub fn threshold_support(x: &[f64], layout: &VariableLayout, tau: f64) -> Vec<(NodeId, usize)> {
    x.iter()
        .enumerate()
        .filter(|&(_, &v)| v > tau)
        .map(|(var, _)| layout.pair(var))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::chain2;
    use crate::marginals::OracleBundle;
    use crate::mixture::MixtureSpec;

    fn chain2_problem(lambda: f64) -> OptProblem {
        let net = chain2();
        let spec = MixtureSpec::from_pairs(0.5, vec![((0, 1), 0.5)]).unwrap();
        let bundle = OracleBundle::exact(&net, &spec).unwrap();
        build_opt_problem(&bundle, lambda, DEFAULT_EPSILON).unwrap()
    }

    #[test]
    fn chain2_block_shapes() {
        let prob = chain2_problem(0.1);
        let (block_a, _, cols_a) = prob.block(0);
        let (block_b, _, cols_b) = prob.block(1);
        assert_eq!((block_a.len(), cols_a), (2, 2));
        assert_eq!((block_b.len(), cols_b), (2, 4));
    }

    #[test]
    fn truth_has_zero_residual() {
        let prob = chain2_problem(0.1);
        let x = vec![0.0, 0.5, 0.0, 0.0];
        for f in prob.node_residuals(&x).unwrap() {
            assert!(f < 1e-24);
        }
    }

    #[test]
    fn objective_hand_values() {
        let prob = chain2_problem(0.1);
        let x = vec![0.0, 0.5, 0.0, 0.0];
        assert!((prob.objective(&x).unwrap() - 0.025).abs() < 1e-12);
        let zero = vec![0.0; 4];
        // max_j sum_b b^2: node A gives 0.2^2 + 0.2^2 = 0.08
        assert!((prob.objective(&zero).unwrap() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let prob = chain2_problem(0.1);
        match prob.objective(&[0.0; 3]) {
            Err(Error::LayoutMismatch) => {}
            other => panic!("expected LayoutMismatch, got {other:?}"),
        }
    }

    #[test]
    fn violations_at_truth_are_zero() {
        let prob = chain2_problem(0.1);
        let v = prob.constraint_violations(&[0.0, 0.5, 0.0, 0.0]);
        assert_eq!(v.max_violation(), 0.0);
    }

    #[test]
    fn violation_formulas() {
        let prob = chain2_problem(0.1);
        let v = prob.constraint_violations(&[0.01; 4]);
        for nz in &v.node_zero {
            assert!((nz - (0.01 - DEFAULT_EPSILON)).abs() < 1e-12);
        }
        let v2 = prob.constraint_violations(&[0.3; 4]);
        assert!((v2.total_mass - 0.2).abs() < 1e-12);
        let v3 = prob.constraint_violations(&[-0.1, 0.5, 0.0, 0.0]);
        assert!((v3.max_violation() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn solve_exact_chain2_lambda_zero() {
        let prob = chain2_problem(0.0);
        let report = solve(&prob, &vec![0.0; 4], DEFAULT_BUDGET).unwrap();
        let fmax = report
            .node_residuals
            .iter()
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(fmax <= 1e-10, "fmax = {fmax:e}");
        let truth = [0.0, 0.5, 0.0, 0.0];
        for (xi, ti) in report.x.iter().zip(truth) {
            assert!((xi - ti).abs() < 1e-4, "x = {:?}", report.x);
        }
    }

    #[test]
    fn solve_phi_truth_stays_at_zero() {
        let net = chain2();
        let bundle = OracleBundle::exact(&net, &MixtureSpec::phi_only()).unwrap();
        let prob = build_opt_problem(&bundle, 0.1, DEFAULT_EPSILON).unwrap();
        let report = solve(&prob, &vec![0.0; 4], DEFAULT_BUDGET).unwrap();
        for xi in &report.x {
            assert!(xi.abs() < 1e-4);
        }
    }

    #[test]
    fn trace_is_non_increasing() {
        let prob = chain2_problem(0.1);
        let report = solve(&prob, &vec![0.2, 0.2, 0.2, 0.2], DEFAULT_BUDGET).unwrap();
        for pair in report.trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
        assert!(report.max_violation <= 1e-6);
    }

    #[test]
    fn multi_start_is_deterministic_and_no_worse() {
        let prob = chain2_problem(0.1);
        let one = multi_start_solve(&prob, 1, 7, DEFAULT_BUDGET).unwrap();
        let sixty = multi_start_solve(&prob, 60, 7, DEFAULT_BUDGET).unwrap();
        assert!(sixty.objective <= one.objective + 1e-15);
        let again = multi_start_solve(&prob, 60, 7, DEFAULT_BUDGET).unwrap();
        assert_eq!(sixty.x, again.x);
        assert_eq!(sixty.objective, again.objective);
    }

    #[test]
    fn support_thresholding() {
        let prob = chain2_problem(0.1);
        let support = threshold_support(&[0.0, 0.5, 0.0, 0.0], &prob.layout, 0.001);
        assert_eq!(support, vec![(0usize, 1usize)]);
        assert!(threshold_support(&[1e-4; 4], &prob.layout, 0.001).is_empty());
        assert_eq!(
            threshold_support(&[0.0, 0.5, 1e-4, 0.0], &prob.layout, 0.0).len(),
            2
        );
    }

    #[test]
    fn finite_difference_gradient_matches() {
        let prob = chain2_problem(0.1);
        // interior point where the max is attained by a unique block
        let x = vec![0.05, 0.3, 0.02, 0.01];
        let residuals = prob.node_residuals(&x).unwrap();
        let jmax = (0..2)
            .max_by(|&a, &b| residuals[a].partial_cmp(&residuals[b]).unwrap())
            .unwrap();
        assert!((residuals[jmax] - residuals[1 - jmax]).abs() > 1e-6);
        let mut analytic = vec![0.0; 4];
        prob.node_gradient(jmax, &x, &mut analytic);
        prob.add_regularizer_gradient(&x, &mut analytic);
        let h = 1e-6;
        for v in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[v] += h;
            xm[v] -= h;
            let fd =
                (prob.objective(&xp).unwrap() - prob.objective(&xm).unwrap()) / (2.0 * h);
            let denom = analytic[v].abs().max(1e-8);
            assert!(
                (fd - analytic[v]).abs() / denom < 1e-5,
                "var {v}: fd {fd} vs {g}",
                g = analytic[v]
            );
        }
    }
}
