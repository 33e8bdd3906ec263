//! Experiment harness for the stochastic subgradient toolkit: JSON config
//! ingestion, seeded trial orchestration with CSV/JSON persistence, log-log
//! rate fitting, and the property-verification suite. The `markovsgd` binary
//! wraps these into `run`, `rate`, `odl` and `verify` subcommands.

pub mod config;
pub mod error;
pub mod experiment;
pub mod ratefit;
pub mod verify;

pub use config::{build_experiment, load_config, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{parse_trace_csv, run_experiment, write_trace_csv, ExperimentOutcome};
pub use ratefit::{power_of_two_grid, rate_fit, RateFit, RateMetric};
pub use verify::{verify_suite, VerifyReport};
