//! EM baseline: estimate mixing proportions from joint samples when every
//! component distribution is known.
//!
//! Components are fixed (the base network and every single-node perfect
//! intervention), so their per-sample likelihoods are precomputed once. A
//! sample `x` has nonzero likelihood only under the base component and the
//! `n` components `Do(i, x_i)`, which keeps an EM iteration at `O(m * n)`
//! instead of `O(m * total_categories)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bn::{Assignment, CausalNetwork};
use crate::error::{Error, Result};
use crate::intervention::{enumerate_components, InterventionId};
use crate::mixture::MixtureSpec;

pub const DEFAULT_RESTARTS: usize = 50;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Per-sample likelihood of every mixture component.
///
/// Stored sparsely: the base joint, each sample's node values, and for each
/// node the joint with that node's own factor left out (the likelihood of
/// `Do(i, x_i)`); every other `Do(i, alpha)` column is exactly zero.
#[derive(Debug, Clone)]
pub struct ComponentLikelihoods {
    components: Vec<InterventionId>,
    values: Vec<Vec<usize>>,
    phi: Vec<f64>,
    excl: Vec<Vec<f64>>,
}

impl ComponentLikelihoods {
    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn components(&self) -> &[InterventionId] {
        &self.components
    }

    /// Likelihood of `component` for sample `sample` (dense-matrix
    /// semantics over the sparse storage).
    pub fn get(&self, sample: usize, component: InterventionId) -> f64 {
        match component {
            InterventionId::Phi => self.phi[sample],
            InterventionId::Do { node, category } => {
                if self.values[sample][node] == category {
                    self.excl[sample][node]
                } else {
                    0.0
                }
            }
        }
    }
}

/// Compute `P_s(x) = joint probability of x under surgery(network, s)` for
/// every component and sample.
pub fn component_likelihoods(
    network: &CausalNetwork,
    samples: &[Assignment],
) -> Result<ComponentLikelihoods> {
    let components = enumerate_components(network);
    let per_sample: Vec<Result<(Vec<usize>, f64, Vec<f64>)>> = samples
        .par_iter()
        .map(|sample| {
            let values = sample.as_full()?;
            let n = network.n();
            // per-node CPT factors of the sample
            let factors: Vec<f64> = (0..n)
                .map(|i| {
                    let row = network.cpt_row_index(i, &values);
                    network.cpt(i).rows[row][values[i]]
                })
                .collect();
            // prefix/suffix products give every leave-one-out product
            // without dividing by (possibly zero) factors
            let mut prefix = vec![1.0; n + 1];
            for i in 0..n {
                prefix[i + 1] = prefix[i] * factors[i];
            }
            let mut suffix = vec![1.0; n + 1];
            for i in (0..n).rev() {
                suffix[i] = suffix[i + 1] * factors[i];
            }
            let excl: Vec<f64> = (0..n).map(|i| prefix[i] * suffix[i + 1]).collect();
            Ok((values, prefix[n], excl))
        })
        .collect();
    let mut values = Vec::with_capacity(samples.len());
    let mut phi = Vec::with_capacity(samples.len());
    let mut excl = Vec::with_capacity(samples.len());
    for item in per_sample {
        let (v, p, e) = item?;
        values.push(v);
        phi.push(p);
        excl.push(e);
    }
    Ok(ComponentLikelihoods {
        components,
        values,
        phi,
        excl,
    })
}

/// Posterior component responsibilities, one row per sample.
#[derive(Debug, Clone)]
pub struct Responsibilities {
    pub rows: Vec<Vec<f64>>,
}

fn pi_vector(lik: &ComponentLikelihoods, spec: &MixtureSpec) -> Vec<f64> {
    lik.components
        .iter()
        .map(|&c| match c {
            InterventionId::Phi => spec.pi_phi,
            InterventionId::Do { node, category } => spec.get(node, category),
        })
        .collect()
}

fn spec_from_pi(lik: &ComponentLikelihoods, pi: &[f64]) -> Result<MixtureSpec> {
    let mut pi_phi = 0.0;
    let mut pairs = Vec::new();
    for (&component, &p) in lik.components.iter().zip(pi) {
        match component {
            InterventionId::Phi => pi_phi = p,
            InterventionId::Do { node, category } => {
                if p > 0.0 {
                    pairs.push(((node, category), p));
                }
            }
        }
    }
    MixtureSpec::from_pairs(pi_phi, pairs)
}

/// Per-sample mixture density `sum_s pi_s P_s(x)` using only the nonzero
/// columns.
fn denominator(lik: &ComponentLikelihoods, pi: &[f64], sample: usize) -> f64 {
    // component 0 is Phi by canonical ordering; Do columns are found by
    // the sample's own node values
    let mut denom = pi[0] * lik.phi[sample];
    for (node, &value) in lik.values[sample].iter().enumerate() {
        let col = column_of(lik, node, value);
        denom += pi[col] * lik.excl[sample][node];
    }
    denom
}

/// Column index of `Do(node, value)` in the canonical component order
/// (Phi first, then node-major / category-minor).
fn column_of(lik: &ComponentLikelihoods, node: usize, value: usize) -> usize {
    // cheap arithmetic over the enumeration would need cardinalities; a
    // linear scan is avoided by exploiting that components are sorted
    debug_assert!(matches!(lik.components[0], InterventionId::Phi));
    // binary search over the Do section
    let section = &lik.components[1..];
    let target = InterventionId::Do {
        node,
        category: value,
    };
    1 + section
        .binary_search_by(|c| c.cmp(&target))
        .expect("every (node, category) pair is enumerated")
}

/// E-step: `gamma[j][s] = pi_s P_s(x_j) / sum_t pi_t P_t(x_j)`.
pub fn e_step(lik: &ComponentLikelihoods, spec: &MixtureSpec) -> Result<Responsibilities> {
    let pi = pi_vector(lik, spec);
    let rows = (0..lik.m())
        .map(|j| {
            let denom = denominator(lik, &pi, j);
            if denom <= 0.0 {
                return Err(Error::ZeroDenominator(j));
            }
            Ok(lik
                .components
                .iter()
                .zip(&pi)
                .map(|(&c, &p)| p * lik.get(j, c) / denom)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(Responsibilities { rows })
}

/// M-step: column means of the responsibilities.
pub fn m_step(lik: &ComponentLikelihoods, gamma: &Responsibilities) -> Result<MixtureSpec> {
    let m = gamma.rows.len() as f64;
    let mut pi = vec![0.0; lik.components.len()];
    for row in &gamma.rows {
        for (acc, &g) in pi.iter_mut().zip(row) {
            *acc += g;
        }
    }
    for p in pi.iter_mut() {
        *p /= m;
    }
    spec_from_pi(lik, &pi)
}

/// One full EM run. The trace holds the log-likelihood of each iterate
/// (including the initial one) and is non-decreasing.
pub fn run_em(
    lik: &ComponentLikelihoods,
    init: &MixtureSpec,
    max_iter: usize,
    tol: f64,
) -> Result<(MixtureSpec, Vec<f64>)> {
    if lik.m() == 0 {
        return Err(Error::EmptySampleSet);
    }
    let n_comp = lik.components.len();
    let mut pi = pi_vector(lik, init);
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        // fused E/M step over the sparse nonzero columns; the log-likelihood
        // uses Kahan summation so the monotonicity of the trace is not
        // drowned in accumulation noise at large sample counts
        let mut loglik = 0.0;
        let mut carry = 0.0;
        let mut counts = vec![0.0; n_comp];
        for j in 0..lik.m() {
            let denom = denominator(lik, &pi, j);
            if denom <= 0.0 {
                return Err(Error::ZeroDenominator(j));
            }
            let y = denom.ln() - carry;
            let t = loglik + y;
            carry = (t - loglik) - y;
            loglik = t;
            counts[0] += pi[0] * lik.phi[j] / denom;
            for (node, &value) in lik.values[j].iter().enumerate() {
                let col = column_of(lik, node, value);
                counts[col] += pi[col] * lik.excl[j][node] / denom;
            }
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| loglik - prev < tol);
        trace.push(loglik);
        if done {
            break;
        }
        let m = lik.m() as f64;
        for (p, c) in pi.iter_mut().zip(&counts) {
            *p = c / m;
        }
    }
    Ok((spec_from_pi(lik, &pi)?, trace))
}

/// EM run outcome with restart metadata.
#[derive(Debug, Clone, Serialize)]
pub struct EmReport {
    #[serde(skip)]
    pub spec: MixtureSpec,
    pub log_likelihood: f64,
    pub trace: Vec<f64>,
    pub restarts: usize,
    pub best_restart: usize,
}

/// Best-of-`restarts` EM: inits are uniform-over-components blended with a
/// Dirichlet draw; the run with the highest final log-likelihood wins, ties
/// broken by restart index. Deterministic given `seed`.
pub fn run_em_restarts(
    network: &CausalNetwork,
    samples: &[Assignment],
    restarts: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<EmReport> {
    let lik = component_likelihoods(network, samples)?;
    let outcomes: Vec<Result<(MixtureSpec, Vec<f64>)>> = (0..restarts)
        .into_par_iter()
        .map(|run| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let init = jittered_uniform(&lik, &mut rng)?;
            run_em(&lik, &init, max_iter, tol)
        })
        .collect();
    let mut best: Option<EmReport> = None;
    for (run, outcome) in outcomes.into_iter().enumerate() {
        let (spec, trace) = outcome?;
        let log_likelihood = *trace.last().expect("trace is never empty");
        let better = match &best {
            None => true,
            Some(b) => log_likelihood > b.log_likelihood,
        };
        if better {
            best = Some(EmReport {
                spec,
                log_likelihood,
                trace,
                restarts,
                best_restart: run,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn jittered_uniform<R: Rng + ?Sized>(
    lik: &ComponentLikelihoods,
    rng: &mut R,
) -> Result<MixtureSpec> {
    let c = lik.components.len();
    let jitter: Vec<f64> = (0..c).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = jitter.iter().sum();
    let pi: Vec<f64> = jitter
        .iter()
        .map(|&j| 0.5 / c as f64 + 0.5 * j / total)
        .collect();
    spec_from_pi(lik, &pi)
}
