use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use markovsgd_cli::config::{load_config, ExperimentConfig};
use markovsgd_cli::error::HarnessError;
use markovsgd_cli::experiment::{run_experiment, write_summary_json};
use markovsgd_cli::ratefit::{power_of_two_grid, rate_fit, RateMetric};
use markovsgd_cli::verify::verify_suite;

/// Stochastic subgradient methods driven by Markov-chain data streams:
/// seeded experiments, rate fits and property verification.
#[derive(Parser)]
#[command(name = "markovsgd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// Output directory (overrides the config's `output` field).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true, default_value_t = default_threads())]
    threads: usize,
    /// Suppress progress output.
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial of a configured experiment and write CSV traces plus
    /// a JSON summary.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Run the experiment with power-of-two diagnostics checkpoints and fit
    /// the decay exponent of a stationarity metric.
    Rate {
        config: PathBuf,
        /// Smallest horizon of the fit grid (accepts `2^k` or an integer).
        #[arg(long, default_value = "2^8")]
        tmin: String,
        /// Largest horizon of the fit grid (accepts `2^k` or an integer).
        #[arg(long, default_value = "2^15")]
        tmax: String,
        /// Metric: min | final | weighted.
        #[arg(long, default_value = "min")]
        metric: String,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Run a dictionary-learning experiment (the config's problem must be
    /// `odl_synthetic`).
    Odl {
        config: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Run the property-verification suite and print one line per check.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        flags: CommonFlags,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn out_dir(config: &ExperimentConfig, flags: &CommonFlags) -> PathBuf {
    flags
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_horizon(text: &str) -> Result<usize, HarnessError> {
    let parsed = if let Some(exp) = text.strip_prefix("2^") {
        exp.parse::<u32>().ok().and_then(|e| 1usize.checked_shl(e))
    } else {
        text.parse::<usize>().ok()
    };
    parsed.ok_or_else(|| HarnessError::Invalid(format!("cannot parse horizon {text:?}")))
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, flags } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, &flags);
            let outcome = run_experiment(&cfg, &dir, flags.threads, flags.quiet)?;
            if !flags.quiet {
                println!(
                    "{} trials -> {}",
                    cfg.trials,
                    outcome.summary_path.display()
                );
            }
            fail_on_aborts(&outcome.trial_errors, cfg.trials)
        }
        Command::Odl { config, flags } => {
            let cfg = load_config(&config)?;
            if !matches!(
                cfg.problem,
                markovsgd_cli::config::ProblemSpec::OdlSynthetic { .. }
            ) {
                return Err(HarnessError::Invalid(
                    "the odl subcommand expects problem.name = odl_synthetic".into(),
                ));
            }
            let dir = out_dir(&cfg, &flags);
            let outcome = run_experiment(&cfg, &dir, flags.threads, flags.quiet)?;
            if !flags.quiet {
                if let Some(residual) = outcome.max_coding_residual {
                    println!("worst coding KKT residual: {residual:.3e}");
                }
                println!(
                    "{} trials -> {}",
                    cfg.trials,
                    outcome.summary_path.display()
                );
            }
            fail_on_aborts(&outcome.trial_errors, cfg.trials)
        }
        Command::Rate {
            config,
            tmin,
            tmax,
            metric,
            flags,
        } => {
            let mut cfg = load_config(&config)?;
            let tmin = parse_horizon(&tmin)?;
            let tmax = parse_horizon(&tmax)?;
            let metric = match metric.as_str() {
                "min" => RateMetric::MinMoreauSq,
                "final" => RateMetric::FinalMoreauSq,
                "weighted" => RateMetric::WeightedAvgMoreauSq,
                other => {
                    return Err(HarnessError::Invalid(format!(
                        "unknown metric {other:?} (expected min, final or weighted)"
                    )))
                }
            };
            // one long run per trial; the fit reads the checkpoint grid
            cfg.algorithm.horizon = tmax;
            cfg.algorithm.diagnostics = true;
            cfg.algorithm.checkpoint_stride = None;
            let dir = out_dir(&cfg, &flags);
            let outcome = run_experiment(&cfg, &dir, flags.threads, flags.quiet)?;
            fail_on_aborts(&outcome.trial_errors, cfg.trials)?;
            let traces: Vec<&markovsgd::Trace> = outcome.traces.iter().flatten().collect();
            let grid = power_of_two_grid(tmin, tmax)?;
            let fit = rate_fit(&traces, &grid, metric)?;
            let fit_path = dir.join("rate.json");
            write_summary_json(&RateSummary::new(&cfg, &fit), &fit_path)?;
            if !flags.quiet {
                println!(
                    "slope {:.4} (95% CI [{:.4}, {:.4}]), R^2 {:.4} -> {}",
                    fit.slope,
                    fit.slope_ci.0,
                    fit.slope_ci.1,
                    fit.r_squared,
                    fit_path.display()
                );
            }
            Ok(())
        }
        Command::Verify { seed, flags } => {
            let report = verify_suite(seed);
            print!("{}", report.render_table());
            if let Some(dir) = flags.out {
                std::fs::create_dir_all(&dir).map_err(|source| HarnessError::Io {
                    path: dir.clone(),
                    source,
                })?;
                write_summary_json(&report, &dir.join("verify.json"))?;
            }
            if report.all_pass() {
                Ok(())
            } else {
                Err(HarnessError::VerificationFailed {
                    failed: report.failed(),
                    total: report.checks.len(),
                })
            }
        }
    }
}

fn fail_on_aborts(errors: &[(usize, String)], total: usize) -> Result<(), HarnessError> {
    match errors.first() {
        None => Ok(()),
        Some((trial, message)) => Err(HarnessError::TrialsAborted {
            failed: errors.len(),
            total,
            first_trial: *trial,
            first_error: message.clone(),
        }),
    }
}

#[derive(Serialize)]
struct RateSummary<'a> {
    version: String,
    config: &'a ExperimentConfig,
    fit: &'a markovsgd_cli::ratefit::RateFit,
}

impl<'a> RateSummary<'a> {
    fn new(config: &'a ExperimentConfig, fit: &'a markovsgd_cli::ratefit::RateFit) -> Self {
        RateSummary {
            version: format!("markovsgd {}", env!("CARGO_PKG_VERSION")),
            config,
            fit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_horizon;

    #[test]
    fn horizon_syntax() {
        assert_eq!(parse_horizon("2^8").unwrap(), 256);
        assert_eq!(parse_horizon("1000").unwrap(), 1000);
        assert!(parse_horizon("2^").is_err());
        assert!(parse_horizon("abc").is_err());
    }
}
