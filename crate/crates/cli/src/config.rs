//! JSON experiment configuration: schema, validation and builders that turn
//! a config into a chain plus problem ready to run. Unknown keys are
//! rejected; every default is materialized at load time and echoed into the
//! output metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use markovsgd::linalg::{Matrix, Vector};
use markovsgd::odl::{self, OdlConfig};
use markovsgd::problems::{self, BuiltProblem};
use markovsgd::{
    Algorithm, CheckpointSchedule, ConstraintSet, MarkovChain, Regularizer, RunConfig,
    StepSchedule, WeaklyConvexProblem,
};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub chain: ChainSpec,
    pub algorithm: AlgorithmSpec,
    pub trials: usize,
    pub master_seed: u64,
    /// Output directory; the CLI `--out` flag overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    NonconvexQuadratic {
        dim: usize,
        #[serde(default = "default_noise_scale")]
        noise_scale: f64,
        /// Multiplies the spectrum and linear term; the noise keeps its
        /// absolute magnitude.
        #[serde(default = "default_curvature_scale")]
        scale: f64,
        #[serde(default)]
        problem_seed: u64,
    },
    PhaseRetrievalL1 {
        dim: usize,
        #[serde(default)]
        problem_seed: u64,
    },
    LassoProx {
        dim: usize,
        #[serde(default)]
        problem_seed: u64,
        #[serde(default)]
        targets: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_l1_weight")]
        l1_weight: f64,
    },
    OdlSynthetic {
        p: usize,
        n: usize,
        r: usize,
        #[serde(default)]
        planted_seed: u64,
        #[serde(default = "default_kappa2")]
        kappa2: f64,
        #[serde(default = "default_code_l1")]
        l1_weight: f64,
        #[serde(default = "default_noise_frac")]
        noise_frac: f64,
        #[serde(default = "default_coding_tol")]
        coding_tol: f64,
    },
}

fn default_noise_scale() -> f64 {
    1.0
}
fn default_curvature_scale() -> f64 {
    1.0
}
fn default_l1_weight() -> f64 {
    0.5
}
fn default_kappa2() -> f64 {
    0.5
}
fn default_code_l1() -> f64 {
    0.1
}
fn default_noise_frac() -> f64 {
    0.01
}
fn default_coding_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    /// `P = [[a, 1-a], [1-b, b]]`.
    TwoState { a: f64, b: f64 },
    /// Lazy random walk on a cycle.
    CycleWalk {
        states: usize,
        #[serde(default = "default_laziness")]
        laziness: f64,
    },
    /// Every row equals `pi`: the i.i.d. baseline.
    IidFrom { pi: Vec<f64> },
    /// Explicit transition matrix, optionally with per-state sample payloads
    /// (keyed by state index) consumed by the builtin problems.
    Inline {
        transition: Vec<Vec<f64>>,
        #[serde(default)]
        samples: Option<Vec<Vec<f64>>>,
    },
}

fn default_laziness() -> f64 {
    0.5
}

impl ChainSpec {
    pub fn transition(&self) -> Result<Matrix> {
        let m = match self {
            ChainSpec::TwoState { a, b } => {
                for (name, v) in [("a", a), ("b", b)] {
                    if !(0.0..=1.0).contains(v) {
                        return Err(HarnessError::Invalid(format!(
                            "two_state parameter {name} must lie in [0,1], got {v}"
                        )));
                    }
                }
                Matrix::from_rows(vec![vec![*a, 1.0 - a], vec![1.0 - b, *b]])?
            }
            ChainSpec::CycleWalk { states, laziness } => odl::lazy_cycle_walk(*states, *laziness)?,
            ChainSpec::IidFrom { pi } => {
                let n = pi.len();
                if n == 0 {
                    return Err(HarnessError::Invalid("iid_from needs a nonempty pi".into()));
                }
                let mut rows = Vec::with_capacity(n);
                for _ in 0..n {
                    rows.push(pi.clone());
                }
                Matrix::from_rows(rows)?
            }
            ChainSpec::Inline { transition, .. } => Matrix::from_rows(transition.clone())?,
        };
        Ok(m)
    }

    pub fn is_iid(&self) -> bool {
        matches!(self, ChainSpec::IidFrom { .. })
    }

    pub fn explicit_samples(&self) -> Option<&Vec<Vec<f64>>> {
        match self {
            ChainSpec::Inline { samples, .. } => samples.as_ref(),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AlgoName {
    Psgd,
    Adagrad,
    Shb,
    ProxSubgrad,
}

impl From<AlgoName> for Algorithm {
    fn from(name: AlgoName) -> Algorithm {
        match name {
            AlgoName::Psgd => Algorithm::Psgd,
            AlgoName::Adagrad => Algorithm::AdaGrad,
            AlgoName::Shb => Algorithm::Shb,
            AlgoName::ProxSubgrad => Algorithm::ProxSubgrad,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant {
        c: f64,
    },
    InvSqrt {
        c: f64,
    },
    AdagradNorm {
        alpha: f64,
        #[serde(default = "default_v0")]
        v0: f64,
    },
}

fn default_v0() -> f64 {
    1.0
}

impl From<&ScheduleSpec> for StepSchedule {
    fn from(spec: &ScheduleSpec) -> StepSchedule {
        match spec {
            ScheduleSpec::Constant { c } => StepSchedule::Constant(*c),
            ScheduleSpec::InvSqrt { c } => StepSchedule::InvSqrt(*c),
            ScheduleSpec::AdagradNorm { alpha, v0 } => StepSchedule::AdaGradNorm {
                alpha: *alpha,
                v0: *v0,
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: AlgoName,
    pub schedule: ScheduleSpec,
    pub horizon: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Moreau parameter; defaults to twice the problem's rho.
    #[serde(default)]
    pub rho_hat: Option<f64>,
    /// L1 weight of the proximal regularizer (prox_subgrad only).
    #[serde(default)]
    pub prox_l1_weight: Option<f64>,
    #[serde(default)]
    pub diagnostics: bool,
    /// `None`: checkpoints at powers of two plus the horizon.
    #[serde(default)]
    pub checkpoint_stride: Option<usize>,
    /// 0 disables per-step loss recording (checkpoints still record it).
    #[serde(default = "default_loss_stride")]
    pub loss_stride: usize,
    #[serde(default)]
    pub start_state: Option<usize>,
    /// Where the heavy-ball momentum update evaluates the subgradient.
    #[serde(default)]
    pub shb_grad_at: ShbGradAtSpec,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ShbGradAtSpec {
    #[default]
    NextIterate,
    CurrentIterate,
}

fn default_loss_stride() -> usize {
    1
}

/// An experiment ready to run: the chain, and either a generic problem or a
/// dictionary-learning configuration.
pub struct BuiltExperiment {
    pub chain: MarkovChain,
    pub kind: ExperimentKind,
    /// rho_hat after defaulting, echoed into summaries.
    pub resolved_rho_hat: f64,
}

pub enum ExperimentKind {
    Generic {
        problem: WeaklyConvexProblem,
        template: RunConfig,
    },
    Odl {
        odl_cfg: OdlConfig,
    },
}

/// Number of randomized probes used to sanity-check declared problem
/// constants at load time.
pub const CONSTANT_PROBES: usize = 10_000;
const CONSTANT_PROBE_SEED: u64 = 0x5eed_cafe;

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    // semantic validation: building the experiment exercises every check
    build_experiment(&config)?;
    Ok(config)
}

pub fn build_experiment(config: &ExperimentConfig) -> Result<BuiltExperiment> {
    if config.trials == 0 {
        return Err(HarnessError::Invalid("trials must be >= 1".into()));
    }
    if config.algorithm.horizon == 0 {
        return Err(HarnessError::Invalid("horizon must be >= 1".into()));
    }
    if let Some(beta) = config.algorithm.beta {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(HarnessError::Invalid(format!(
                "beta must lie in (0,1], got {beta}"
            )));
        }
    }
    let schedule = StepSchedule::from(&config.algorithm.schedule);
    schedule.validate()?;
    let adaptive = schedule.is_adaptive();
    match (config.algorithm.name, adaptive) {
        (AlgoName::Adagrad, false) => {
            return Err(HarnessError::Invalid(
                "adagrad requires an adagrad_norm schedule".into(),
            ))
        }
        (AlgoName::Adagrad, true) => {}
        (_, true) => {
            return Err(HarnessError::Invalid(
                "adagrad_norm schedule is only valid for the adagrad algorithm".into(),
            ))
        }
        _ => {}
    }

    let transition = config.chain.transition()?;
    let n_states = transition.rows();
    let checkpoints = match config.algorithm.checkpoint_stride {
        Some(0) => {
            return Err(HarnessError::Invalid(
                "checkpoint_stride must be >= 1".into(),
            ))
        }
        Some(stride) => CheckpointSchedule::EveryN(stride),
        None => CheckpointSchedule::PowersOfTwo,
    };

    if let ProblemSpec::OdlSynthetic {
        p,
        n,
        r,
        planted_seed,
        kappa2,
        l1_weight,
        noise_frac,
        coding_tol,
    } = &config.problem
    {
        let (data_chain, dict) =
            odl::synth_markov_data_with_noise(*p, *n, *r, n_states, *planted_seed, *noise_frac)?;
        let chain = build_chain(&config.chain, transition, data_chain.samples().to_vec())?;
        let mut odl_cfg = OdlConfig::new((*p, *n), *r, dict.constraint.clone());
        odl_cfg.kappa2 = *kappa2;
        odl_cfg.l1_weight = *l1_weight;
        odl_cfg.coding_tol = *coding_tol;
        odl_cfg.algorithm = Algorithm::from(config.algorithm.name);
        odl_cfg.schedule = schedule;
        odl_cfg.horizon = config.algorithm.horizon;
        odl_cfg.checkpoints = checkpoints;
        odl_cfg.diagnostics_on = config.algorithm.diagnostics;
        odl_cfg.loss_stride = config.algorithm.loss_stride;
        odl_cfg.validate()?;
        if !matches!(config.algorithm.name, AlgoName::Psgd | AlgoName::Adagrad) {
            return Err(HarnessError::Invalid(
                "odl_synthetic runs with psgd or adagrad".into(),
            ));
        }
        let constants = odl::odl_constants(&chain, &odl_cfg)?;
        let resolved_rho_hat = config
            .algorithm
            .rho_hat
            .unwrap_or((2.0 * constants.rho).max(1e-6));
        return Ok(BuiltExperiment {
            chain,
            kind: ExperimentKind::Odl { odl_cfg },
            resolved_rho_hat,
        });
    }

    let pi = if config.chain.is_iid() {
        infer_iid_pi(&config.chain)?
    } else {
        markovsgd::stationary_distribution(&transition)?
    };
    if let Some(samples) = config.chain.explicit_samples() {
        if samples.len() != n_states {
            return Err(HarnessError::Invalid(format!(
                "chain supplies {} samples for {n_states} states",
                samples.len()
            )));
        }
    }
    let built = build_problem(
        &config.problem,
        &pi,
        n_states,
        config.chain.explicit_samples().cloned(),
    )?;
    let chain = build_chain(&config.chain, transition, built.samples.clone())?;
    let problem = built.problem.clone();
    let problem = if problem.has_full_oracle() {
        problem
    } else {
        problem.with_population_oracle_from(&chain)
    };

    let mut probe_rng =
        markovsgd::rng::stream_rng(CONSTANT_PROBE_SEED, markovsgd::rng::Substream::Chain);
    problem.check_constants(
        built.probe_dim,
        &built.samples,
        CONSTANT_PROBES,
        &mut probe_rng,
    )?;

    let rho_hat = config
        .algorithm
        .rho_hat
        .unwrap_or((2.0 * problem.rho).max(1e-6));
    let mut template = RunConfig::new(
        Algorithm::from(config.algorithm.name),
        StepSchedule::from(&config.algorithm.schedule),
        config.algorithm.horizon,
        built.default_init.clone(),
    )
    .with_rho_hat(rho_hat)
    .with_diagnostics(config.algorithm.diagnostics);
    template.checkpoints = checkpoints;
    template.loss_stride = config.algorithm.loss_stride;
    template.start_state = config.algorithm.start_state;
    template.shb_grad_at = match config.algorithm.shb_grad_at {
        ShbGradAtSpec::NextIterate => markovsgd::ShbGradAt::NextIterate,
        ShbGradAtSpec::CurrentIterate => markovsgd::ShbGradAt::CurrentIterate,
    };
    if let Some(beta) = config.algorithm.beta {
        template.beta = beta;
    }
    if config.algorithm.name == AlgoName::ProxSubgrad {
        template.regularizer = match (config.algorithm.prox_l1_weight, &config.problem) {
            (Some(w), _) => Regularizer::L1 { weight: w },
            (None, ProblemSpec::LassoProx { l1_weight, .. }) => {
                Regularizer::L1 { weight: *l1_weight }
            }
            _ => Regularizer::Indicator(problem.constraint.clone()),
        };
        template.regularizer.validate()?;
    }

    Ok(BuiltExperiment {
        chain,
        kind: ExperimentKind::Generic { problem, template },
        resolved_rho_hat: rho_hat,
    })
}

fn infer_iid_pi(spec: &ChainSpec) -> Result<Vector> {
    // iid chains with zero entries in pi are valid but fail the
    // irreducibility check; their stationary distribution is pi itself
    if let ChainSpec::IidFrom { pi } = spec {
        Ok(Vector::new(pi.clone()))
    } else {
        Err(HarnessError::Invalid(
            "chain must be irreducible and aperiodic (or iid_from)".into(),
        ))
    }
}

fn build_chain(
    spec: &ChainSpec,
    transition: Matrix,
    samples: Vec<markovsgd::SamplePoint>,
) -> Result<MarkovChain> {
    let chain = if spec.is_iid() {
        let pi = infer_iid_pi(spec)?;
        MarkovChain::new_with_stationary(transition, samples, pi)?
    } else {
        MarkovChain::new(transition, samples)?
    };
    Ok(chain)
}

fn build_problem(
    spec: &ProblemSpec,
    pi: &Vector,
    n_states: usize,
    explicit_samples: Option<Vec<Vec<f64>>>,
) -> Result<BuiltProblem> {
    let built = match spec {
        ProblemSpec::NonconvexQuadratic {
            dim,
            noise_scale,
            scale,
            problem_seed,
        } => problems::nonconvex_quadratic_with_samples(
            *dim,
            pi,
            *problem_seed,
            *noise_scale,
            *scale,
            explicit_samples,
        )?,
        ProblemSpec::PhaseRetrievalL1 { dim, problem_seed } => {
            if explicit_samples.is_some() {
                return Err(HarnessError::Invalid(
                    "phase_retrieval_l1 generates its own samples; drop chain.samples".into(),
                ));
            }
            problems::phase_retrieval_l1(*dim, n_states, *problem_seed)?
        }
        ProblemSpec::LassoProx {
            dim,
            problem_seed,
            targets,
            ..
        } => {
            // per-state targets may come either from the problem spec or the
            // chain's inline samples
            let targets = match (targets, explicit_samples) {
                (Some(_), Some(_)) => {
                    return Err(HarnessError::Invalid(
                        "lasso_prox: give targets either in the problem or the chain, not both"
                            .into(),
                    ))
                }
                (Some(t), None) => Some(t.clone()),
                (None, inline) => inline,
            };
            problems::lasso_prox(*dim, pi, *problem_seed, targets)?
        }
        ProblemSpec::OdlSynthetic { .. } => unreachable!("handled by the ODL path"),
    };
    Ok(built)
}

/// Constraint set echo helper for summaries.
pub fn constraint_summary(set: &ConstraintSet) -> String {
    match set {
        ConstraintSet::WholeSpace => "whole_space".into(),
        ConstraintSet::Box { lower, .. } => format!("box(dim={})", lower.len()),
        ConstraintSet::Ball { radius, .. } => format!("ball(radius={radius})"),
        ConstraintSet::NonnegOrthant => "nonneg_orthant".into(),
        ConstraintSet::Simplex { scale } => format!("simplex(scale={scale})"),
        ConstraintSet::NonnegBall { radius } => format!("nonneg_ball(radius={radius})"),
    }
}
