//! Command-line front end: marginal dumps, instance simulation, the three
//! recovery methods, metric evaluation and config-driven experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Diagnostics go to
//! standard error; data goes to `--out` or standard output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ivnmix::bif::parse_bif;
use ivnmix::bn::{Assignment, CausalNetwork};
use ivnmix::dimm;
use ivnmix::em;
use ivnmix::exact::{recover_all, DEFAULT_TOL};
use ivnmix::experiment::{self, metrics_csv, results_json, run_experiment};
use ivnmix::io::{load_experiment_config, network_from_json};
use ivnmix::marginals::OracleBundle;
use ivnmix::mixture::{generate_instance, sample_mixture, MixtureSpec};
use ivnmix::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ivnmix",
    about = "Separate a mixture of single-node interventions on a causal Bayesian network using only marginal probabilities",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct NetworkArg {
    /// Network file: .bif or the native JSON schema
    #[arg(long)]
    network: PathBuf,
}

#[derive(Args)]
struct OutArg {
    /// Output file (standard output when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dump base, interventional and mixture marginal tables as JSON
    Marginals {
        #[command(flatten)]
        network: NetworkArg,
        /// Mixture spec JSON; no-intervention mixture when omitted
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Generate a random problem instance and optionally joint samples
    Simulate {
        #[command(flatten)]
        network: NetworkArg,
        /// Number of interventional components with nonzero proportion
        #[arg(long, default_value_t = 0)]
        nivn: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also draw this many joint samples from the mixture
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Exact recovery from an oracle bundle (Assumption 1 required)
    RecoverExact {
        #[command(flatten)]
        network: NetworkArg,
        /// Oracle bundle JSON (as written by `marginals`)
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Constrained minimax estimation from an oracle bundle
    RecoverDimm {
        #[command(flatten)]
        network: NetworkArg,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = dimm::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = dimm::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = dimm::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// EM estimation from a joint-sample file (as written by `simulate`)
    RecoverEm {
        #[command(flatten)]
        network: NetworkArg,
        /// Sample file JSON
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = em::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Metrics between a truth and an estimated mixture spec
    Evaluate {
        #[command(flatten)]
        network: NetworkArg,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Full config-driven experiment sweep; emits metrics CSV
    Experiment {
        /// Experiment config JSON
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("IVNMIX_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are successes, everything else is usage
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("ivnmix: {err}");
            ExitCode::from(2)
        }
    }
}

fn load_network(path: &Path) -> Result<CausalNetwork> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "bif") {
        parse_bif(&text)
    } else {
        network_from_json(&serde_json::from_str(&text)?)
    }
}

fn load_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn emit(out: &OutArg, text: &str) -> Result<()> {
    match &out.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn emit_json(out: &OutArg, doc: &Value) -> Result<()> {
    emit(out, &serde_json::to_string_pretty(doc)?)
}

fn samples_to_json(network: &CausalNetwork, samples: &[Assignment]) -> Result<Value> {
    let nodes: Vec<&str> = network.nodes().iter().map(|n| n.name.as_str()).collect();
    let rows: Vec<Vec<usize>> = samples
        .iter()
        .map(Assignment::as_full)
        .collect::<Result<_>>()?;
    Ok(json!({ "nodes": nodes, "samples": rows }))
}

fn samples_from_json(network: &CausalNetwork, doc: &Value) -> Result<Vec<Assignment>> {
    let schema = |p: &str| Error::Schema(p.to_string());
    let names: Vec<&str> = doc
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("nodes"))?
        .iter()
        .map(|v| v.as_str())
        .collect::<Option<_>>()
        .ok_or_else(|| schema("nodes"))?;
    // column order in the file may differ from the network's node order
    let positions: Vec<usize> = names
        .iter()
        .map(|n| network.node_by_name(n).ok_or_else(|| schema("nodes")))
        .collect::<Result<_>>()?;
    doc.get("samples")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("samples"))?
        .iter()
        .map(|row| {
            let cells = row.as_array().ok_or_else(|| schema("samples"))?;
            if cells.len() != positions.len() {
                return Err(schema("samples"));
            }
            let mut values = vec![0usize; network.n()];
            for (&node, cell) in positions.iter().zip(cells) {
                values[node] = cell.as_u64().ok_or_else(|| schema("samples"))? as usize;
            }
            Ok(Assignment::full(values))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Marginals {
            network,
            truth,
            out,
        } => {
            let net = load_network(&network.network)?;
            let spec = match truth {
                Some(path) => MixtureSpec::from_json(&load_json(&path)?, &net)?,
                None => MixtureSpec::phi_only(),
            };
            let bundle = OracleBundle::exact(&net, &spec)?;
            emit_json(&out, &bundle.to_json(&net))
        }
        Command::Simulate {
            network,
            nivn,
            seed,
            samples,
            out,
        } => {
            let net = load_network(&network.network)?;
            let instance = generate_instance(&net, nivn, seed)?;
            let mut doc = json!({ "instance": instance.to_json(&net) });
            if let Some(m) = samples {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let drawn = sample_mixture(&net, &instance.spec, m, &mut rng)?;
                let sample_doc = samples_to_json(&net, &drawn)?;
                doc.as_object_mut()
                    .expect("doc is an object")
                    .extend(sample_doc.as_object().expect("object").clone());
            }
            emit_json(&out, &doc)
        }
        Command::RecoverExact {
            network,
            bundle,
            out,
        } => {
            let net = load_network(&network.network)?;
            let bundle = OracleBundle::from_json(&load_json(&bundle)?, &net)?;
            let spec = recover_all(&bundle, DEFAULT_TOL).expect_spec()?;
            emit_json(&out, &json!({ "estimate": spec.to_json(&net) }))
        }
        Command::RecoverDimm {
            network,
            bundle,
            lambda,
            epsilon,
            restarts,
            seed,
            out,
        } => {
            let net = load_network(&network.network)?;
            let bundle = OracleBundle::from_json(&load_json(&bundle)?, &net)?;
            let prob = dimm::build_opt_problem(&bundle, lambda, epsilon)?;
            let report = dimm::multi_start_solve(&prob, restarts, seed, dimm::DEFAULT_BUDGET)?;
            let spec = prob.layout.spec_of(&report.x)?;
            emit_json(
                &out,
                &json!({
                    "estimate": spec.to_json(&net),
                    "objective": report.objective,
                    "max_violation": report.max_violation,
                    "iterations": report.iterations,
                    "converged": report.converged,
                    "trace": report.trace,
                }),
            )
        }
        Command::RecoverEm {
            network,
            samples,
            restarts,
            seed,
            out,
        } => {
            let net = load_network(&network.network)?;
            let drawn = samples_from_json(&net, &load_json(&samples)?)?;
            let report = em::run_em_restarts(
                &net,
                &drawn,
                restarts,
                seed,
                em::DEFAULT_MAX_ITER,
                em::DEFAULT_TOL,
            )?;
            emit_json(
                &out,
                &json!({
                    "estimate": report.spec.to_json(&net),
                    "log_likelihood": report.log_likelihood,
                    "trace": report.trace,
                    "restarts": report.restarts,
                    "best_restart": report.best_restart,
                }),
            )
        }
        Command::Evaluate {
            network,
            truth,
            est,
            out,
        } => {
            let net = load_network(&network.network)?;
            let truth = MixtureSpec::from_json(&load_json(&truth)?, &net)?;
            let est = MixtureSpec::from_json(&load_json(&est)?, &net)?;
            let (mse, mae, mabre, _, n_params) =
                experiment::compute_metrics(&net, &truth, &est, None, None)?;
            emit_json(
                &out,
                &json!({ "mse": mse, "mae": mae, "mabre": mabre, "n_params": n_params }),
            )
        }
        Command::Experiment { config } => {
            let cfg = load_experiment_config(&std::fs::read_to_string(&config)?)?;
            let net = load_network(&cfg.network)?;
            eprintln!(
                "running {} x {} x {} experiment cells on {}",
                cfg.n_ivn.len(),
                cfg.samples.len(),
                cfg.methods.len(),
                cfg.network.display()
            );
            let results = run_experiment(&net, &cfg)?;
            let rows: Vec<_> = results.iter().map(|c| c.row.clone()).collect();
            let csv = metrics_csv(&rows);
            match &cfg.output {
                Some(path) => {
                    std::fs::write(path, &csv)?;
                    let results_path = path.with_extension("results.json");
                    std::fs::write(
                        &results_path,
                        serde_json::to_string_pretty(&results_json(&net, &results))?,
                    )?;
                    eprintln!(
                        "wrote {} and {}",
                        path.display(),
                        results_path.display()
                    );
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}
