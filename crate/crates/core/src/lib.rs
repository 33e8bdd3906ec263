//! Stochastic subgradient methods for weakly convex constrained minimization
//! when training samples are drawn from a mixing Markov chain instead of
//! i.i.d. from the target distribution.
//!
//! The crate bundles:
//!
//! * dense vector/matrix primitives, constraint-set projections and
//!   regularizer prox operators ([`linalg`], [`constraints`], [`regularizer`]);
//! * finite-state Markov chains with exact stationary distributions and
//!   total-variation mixing bounds ([`chain`]);
//! * four optimization loops — projected SGD, AdaGrad-norm, stochastic heavy
//!   ball and the proximal subgradient variant ([`algorithms`]);
//! * exact stationarity diagnostics built on the Moreau envelope
//!   ([`stationarity`]);
//! * an online dictionary learning / online NMF application ([`odl`]);
//! * seeded builtin benchmark problems ([`problems`]).
//!
//! Everything is desk-scale by design: chains are finite-state so stationary
//! distributions, mixing coefficients and population gradients are computed
//! exactly rather than estimated.

pub mod algorithms;
pub mod chain;
pub mod constraints;
pub mod error;
pub mod linalg;
pub mod odl;
pub mod problem;
pub mod problems;
pub mod regularizer;
pub mod rng;
pub mod stationarity;

pub use algorithms::{
    run_adagrad, run_prox_subgrad, run_psgd, run_shb, sample_weighted_index, select_output,
    step_size, Algorithm, Checkpoint, CheckpointSchedule, OutputMode, RunConfig, ShbGradAt,
    StepSchedule, Trace,
};
pub use chain::{
    k_schedule, make_iid, mixing_bound, stationary_distribution, tv_distance, MarkovChain,
    SampleStream,
};
pub use constraints::ConstraintSet;
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use odl::{
    dict_subgradient, dump_state_csv, load_state_csv, run_odl, sparse_code, synth_markov_data,
    synth_markov_data_with_noise, CodeConstraint, CodeMatrix, Dictionary, OdlConfig, OdlRun,
};
pub use problem::{expected_gradient, expected_loss, SamplePoint, WeaklyConvexProblem};
pub use regularizer::{prox_reg, Regularizer};
pub use stationarity::{
    gradient_mapping_norm, moreau_grad, moreau_prox, moreau_value, post_process,
    stationarity_gap_bruteforce, stationarity_report, InnerMode, MoreauConfig, StationarityReport,
};
