//! Experiment orchestration: generate instances, run recovery methods,
//! compute evaluation metrics and emit byte-stable CSV.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::bn::CausalNetwork;
use crate::dimm::{self, build_opt_problem};
use crate::em;
use crate::error::{Error, Result};
use crate::exact::{recover_all, DEFAULT_TOL};
use crate::io::{ExperimentConfig, Method, SampleSize};
use crate::marginals::OracleBundle;
use crate::mixture::{generate_instance, sample_mixture, MixtureSpec};

/// One evaluation row (§ metrics: MSE, MAE, MABRE, Δ over the N^c
/// interventional proportions).
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub n_ivn: usize,
    pub m: SampleSize,
    pub method: Method,
    pub mse: f64,
    pub mae: f64,
    pub mabre: f64,
    pub delta: Option<f64>,
    pub seconds: f64,
    pub seed: u64,
    /// N^c: number of interventional proportions compared.
    pub n_params: usize,
}

/// Recovery output retained per experiment cell for result JSON.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub row: MetricsRow,
    pub estimate: MixtureSpec,
    /// DIMM objective trace or EM log-likelihood trace; empty for exact.
    pub trace: Vec<f64>,
}

/// Compare two mixture specs over every `(node, category)` pair of the
/// network. `delta` is `|obj_truth - obj_est|` and only reported when both
/// objectives are supplied.
pub fn compute_metrics(
    network: &CausalNetwork,
    truth: &MixtureSpec,
    est: &MixtureSpec,
    obj_truth: Option<f64>,
    obj_est: Option<f64>,
) -> Result<(f64, f64, f64, Option<f64>, usize)> {
    for spec in [truth, est] {
        spec.validate(network).map_err(|_| Error::LayoutMismatch)?;
    }
    let n_params = network.total_categories();
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut max = 0.0f64;
    for j in 0..network.n() {
        for k in 0..network.cardinality(j) {
            let d = truth.get(j, k) - est.get(j, k);
            sq += d * d;
            abs += d.abs();
            max = max.max(d.abs());
        }
    }
    let delta = match (obj_truth, obj_est) {
        (Some(t), Some(e)) => Some((t - e).abs()),
        _ => None,
    };
    Ok((sq / n_params as f64, abs / n_params as f64, max, delta))
        .map(|(mse, mae, mabre, delta)| (mse, mae, mabre, delta, n_params))
}

fn cell_seed(seed: u64, n_ivn: usize, m: SampleSize, method: Method) -> u64 {
    let m_tag = match m {
        SampleSize::Exact => 0,
        SampleSize::Count(c) => c as u64 + 1,
    };
    seed ^ (n_ivn as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ m_tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (method as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Run the full cross product of `n_ivn x samples x methods` from the
/// config. Deterministic given the seed; rows are sorted by
/// `(N_ivn, m, method, seed)`. EM needs raw samples, so `em` cells under
/// exact marginals are skipped.
pub fn run_experiment(
    network: &CausalNetwork,
    config: &ExperimentConfig,
) -> Result<Vec<CellResult>> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n_ivn in &config.n_ivn {
        for &m in &config.samples {
            for &method in &config.methods {
                if method == Method::Em && m == SampleSize::Exact {
                    continue;
                }
                cells.push((n_ivn, m, method));
            }
        }
    }
    let mut results: Vec<CellResult> = cells
        .into_par_iter()
        .map(|(n_ivn, m, method)| run_cell(network, config, n_ivn, m, method))
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| {
        (a.row.n_ivn, a.row.m, a.row.method, a.row.seed)
            .cmp(&(b.row.n_ivn, b.row.m, b.row.method, b.row.seed))
    });
    Ok(results)
}

fn run_cell(
    network: &CausalNetwork,
    config: &ExperimentConfig,
    n_ivn: usize,
    m: SampleSize,
    method: Method,
) -> Result<CellResult> {
    // the instance depends only on (seed, n_ivn) so every method and m
    // sees the same ground truth
    let instance = generate_instance(
        network,
        n_ivn,
        config.seed ^ (n_ivn as u64).wrapping_mul(0xD1B5_4A32_D192_ED03),
    )?;
    let truth = &instance.spec;

    let samples = match m {
        SampleSize::Exact => None,
        SampleSize::Count(count) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(
                config.seed,
                n_ivn,
                m,
                // same draw for every method so estimates are comparable
                Method::Exact,
            ));
            Some(sample_mixture(network, truth, count, &mut rng)?)
        }
    };
    let bundle = match &samples {
        None => OracleBundle::exact(network, truth)?,
        Some(s) => OracleBundle::estimated(network, s)?,
    };

    let started = Instant::now();
    let (estimate, trace, delta) = match method {
        Method::Exact => {
            let spec = recover_all(&bundle, DEFAULT_TOL).expect_spec()?;
            (spec, Vec::new(), None)
        }
        Method::Dimm => {
            let prob = build_opt_problem(&bundle, config.lambda, config.epsilon)?;
            let report = dimm::multi_start_solve(
                &prob,
                config.restarts,
                cell_seed(config.seed, n_ivn, m, method),
                dimm::DEFAULT_BUDGET,
            )?;
            let spec = prob.layout.spec_of(&report.x)?;
            let obj_truth = prob.objective(&prob.layout.vector_of(truth))?;
            (spec, report.trace, Some((obj_truth, report.objective)))
        }
        Method::Em => {
            let samples = samples.as_ref().expect("em cells always sample");
            let report = em::run_em_restarts(
                network,
                samples,
                config.em_restarts,
                cell_seed(config.seed, n_ivn, m, method),
                em::DEFAULT_MAX_ITER,
                em::DEFAULT_TOL,
            )?;
            (report.spec, report.trace, None)
        }
    };
    let seconds = if config.record_timing {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };

    let (obj_truth, obj_est) = match delta {
        Some((t, e)) => (Some(t), Some(e)),
        None => (None, None),
    };
    let (mse, mae, mabre, delta, n_params) =
        compute_metrics(network, truth, &estimate, obj_truth, obj_est)?;
    Ok(CellResult {
        row: MetricsRow {
            n_ivn,
            m,
            method,
            mse,
            mae,
            mabre,
            delta,
            seconds,
            seed: config.seed,
            n_params,
        },
        estimate,
        trace,
    })
}

/// Fixed scientific notation with 6 significant digits: byte-stable across
/// runs and platforms.
fn sci(v: f64) -> String {
    format!("{v:.5e}")
}

pub const CSV_HEADER: &str = "N_ivn,m,method,MSE,MAE,MABRE,delta,seconds,seed";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let delta = row.delta.map(sci).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.n_ivn,
            row.m.label(),
            row.method.as_str(),
            sci(row.mse),
            sci(row.mae),
            sci(row.mabre),
            delta,
            sci(row.seconds),
            row.seed,
        ));
    }
    out
}

pub fn results_json(network: &CausalNetwork, results: &[CellResult]) -> Value {
    let cells: Vec<Value> = results
        .iter()
        .map(|cell| {
            json!({
                "n_ivn": cell.row.n_ivn,
                "m": cell.row.m.label(),
                "method": cell.row.method.as_str(),
                "seed": cell.row.seed,
                "n_params": cell.row.n_params,
                "mse": cell.row.mse,
                "mae": cell.row.mae,
                "mabre": cell.row.mabre,
                "delta": cell.row.delta,
                "seconds": cell.row.seconds,
                "estimate": cell.estimate.to_json(network),
                "trace": cell.trace,
            })
        })
        .collect();
    json!({ "results": cells })
}
