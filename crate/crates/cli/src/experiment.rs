//! Experiment orchestration: seeded trials (optionally in parallel), one CSV
//! per trial, and a JSON summary. Output bytes are independent of the thread
//! count because every trial derives its own generator from (master seed,
//! trial index) and results are merged by trial index.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use markovsgd::odl::{run_odl, OdlConfig};
use markovsgd::rng::trial_seed;
use markovsgd::{
    run_adagrad, run_prox_subgrad, run_psgd, run_shb, Algorithm, MarkovChain, RunConfig, Trace,
    WeaklyConvexProblem,
};

use crate::config::{
    build_experiment, constraint_summary, BuiltExperiment, ExperimentConfig, ExperimentKind,
};
use crate::error::{HarnessError, Result};

pub struct ExperimentOutcome {
    pub traces: Vec<Option<Trace>>,
    pub trial_errors: Vec<(usize, String)>,
    pub summary_path: PathBuf,
    /// Worst coding KKT residual across trials (ODL runs only).
    pub max_coding_residual: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: String,
    config: &'a ExperimentConfig,
    resolved: Resolved,
    wall_time_s: f64,
    trials: Vec<TrialRecord>,
}

#[derive(Serialize)]
struct Resolved {
    rho_hat: f64,
    constraint: String,
    n_states: usize,
    trial_seeds: Vec<u64>,
}

#[derive(Serialize)]
struct TrialRecord {
    trial: usize,
    seed: u64,
    csv: Option<String>,
    status: String,
    output_index: Option<usize>,
    final_loss: Option<f64>,
    max_coding_residual: Option<f64>,
}

/// Runs every trial of the experiment, writes artifacts under `out_dir`, and
/// returns the traces in trial order.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
    quiet: bool,
) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let built = build_experiment(config)?;
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let seeds: Vec<u64> = (0..config.trials)
        .map(|i| trial_seed(config.master_seed, i as u64))
        .collect();
    let results = run_trials(&built, &seeds, threads);

    let mut traces = Vec::with_capacity(config.trials);
    let mut trial_errors = Vec::new();
    let mut records = Vec::with_capacity(config.trials);
    let mut worst_coding: Option<f64> = None;
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(trial) => {
                let csv_name = format!("trial_{i:03}.csv");
                write_trace_csv(&trial.trace, &out_dir.join(&csv_name))?;
                if let Some(r) = trial.coding_residual {
                    worst_coding = Some(worst_coding.map_or(r, |w: f64| w.max(r)));
                }
                records.push(TrialRecord {
                    trial: i,
                    seed: seeds[i],
                    csv: Some(csv_name),
                    status: "ok".into(),
                    output_index: Some(trial.trace.output_index),
                    final_loss: trial.trace.losses.iter().rev().flatten().next().copied(),
                    max_coding_residual: trial.coding_residual,
                });
                traces.push(Some(trial.trace));
            }
            Err(e) => {
                let message = e.to_string();
                if !quiet {
                    eprintln!("trial {i}: {message}");
                }
                records.push(TrialRecord {
                    trial: i,
                    seed: seeds[i],
                    csv: None,
                    status: format!("aborted: {message}"),
                    output_index: None,
                    final_loss: None,
                    max_coding_residual: None,
                });
                trial_errors.push((i, message));
                traces.push(None);
            }
        }
    }

    let summary = Summary {
        version: format!("markovsgd {}", env!("CARGO_PKG_VERSION")),
        config,
        resolved: Resolved {
            rho_hat: built.resolved_rho_hat,
            constraint: match &built.kind {
                ExperimentKind::Generic { problem, .. } => constraint_summary(&problem.constraint),
                ExperimentKind::Odl { odl_cfg } => constraint_summary(&odl_cfg.dict_constraint),
            },
            n_states: built.chain.n_states(),
            trial_seeds: seeds,
        },
        wall_time_s: start.elapsed().as_secs_f64(),
        trials: records,
    };
    let summary_path = out_dir.join("summary.json");
    write_summary_json(&summary, &summary_path)?;

    Ok(ExperimentOutcome {
        traces,
        trial_errors,
        summary_path,
        max_coding_residual: worst_coding,
    })
}

struct TrialResult {
    trace: Trace,
    coding_residual: Option<f64>,
}

fn run_one(built: &BuiltExperiment, seed: u64) -> markovsgd::Result<TrialResult> {
    match &built.kind {
        ExperimentKind::Generic { problem, template } => {
            let mut cfg = template.clone();
            cfg.seed = seed;
            let trace = dispatch(problem, &built.chain, &cfg)?;
            Ok(TrialResult {
                trace,
                coding_residual: None,
            })
        }
        ExperimentKind::Odl { odl_cfg } => {
            let mut cfg: OdlConfig = odl_cfg.clone();
            cfg.seed = seed;
            let run = run_odl(&built.chain, &cfg)?;
            Ok(TrialResult {
                trace: run.trace,
                coding_residual: Some(run.max_coding_residual),
            })
        }
    }
}

fn dispatch(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    cfg: &RunConfig,
) -> markovsgd::Result<Trace> {
    match cfg.algorithm {
        Algorithm::Psgd => run_psgd(problem, chain, cfg),
        Algorithm::AdaGrad => run_adagrad(problem, chain, cfg),
        Algorithm::Shb => run_shb(problem, chain, cfg),
        Algorithm::ProxSubgrad => run_prox_subgrad(problem, chain, cfg),
    }
}

/// Work-queue execution over trial indices; results land in a slot vector,
/// so the merge order never depends on scheduling.
fn run_trials(
    built: &BuiltExperiment,
    seeds: &[u64],
    threads: usize,
) -> Vec<markovsgd::Result<TrialResult>> {
    let threads = threads.max(1).min(seeds.len().max(1));
    let slots: Vec<Mutex<Option<markovsgd::Result<TrialResult>>>> =
        seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    if threads == 1 {
        for (i, &seed) in seeds.iter().enumerate() {
            *slots[i].lock().unwrap() = Some(run_one(built, seed));
        }
    } else {
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= seeds.len() {
                        break;
                    }
                    let result = run_one(built, seeds[i]);
                    *slots[i].lock().unwrap() = Some(result);
                });
            }
        });
    }
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("trial slot filled"))
        .collect()
}

/// Shortest round-trip decimal for a float; empty string for a missing cell.
fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

/// One row per iteration: step size, recorded loss, Moreau diagnostics at
/// checkpoints, and the iterate displacement.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "t,alpha_t,loss,moreau_grad_norm,grad_map_norm,proxpoint_dist,theta_change_norm\n",
    );
    for (idx, &alpha) in trace.step_sizes.iter().enumerate() {
        let t = idx + 1;
        let cp = trace.checkpoint_at(t);
        out.push_str(&format!(
            "{t},{},{},{},{},{},{}\n",
            cell(Some(alpha)),
            cell(trace.losses[idx]),
            cell(cp.and_then(|c| c.moreau_grad_norm)),
            cell(cp.and_then(|c| c.grad_map_norm)),
            cell(cp.and_then(|c| c.proxpoint_dist)),
            cell(Some(trace.theta_change[idx])),
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_summary_json<T: Serialize>(summary: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| HarnessError::Invalid(format!("summary serialization: {e}")))?;
    write_atomic(path, json.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(bytes).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Parses a CSV produced by [`write_trace_csv`] back into its float cells;
/// round-trips exactly because cells are shortest round-trip decimals.
pub fn parse_trace_csv(text: &str) -> Result<Vec<Vec<Option<f64>>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let mut row = Vec::new();
        for field in line.split(',') {
            if field.is_empty() {
                row.push(None);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|e| HarnessError::Invalid(format!("csv line {}: {e}", lineno + 1)))?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
