//! The optimization loops: projected stochastic subgradient (with plain or
//! inverse-square-root step schedules), AdaGrad-norm, stochastic heavy ball,
//! and the proximal subgradient variant, plus output-iterate selection.
//!
//! All four loops share the same skeleton: draw the next sample from the
//! Markov stream, evaluate the stochastic subgradient at the current iterate,
//! take a projected (or proximal) step, and record diagnostics at checkpoint
//! iterations. Runs are strictly sequential; independent runs parallelize at
//! the trial level.

use std::time::Instant;

use rand::Rng;

use crate::chain::{MarkovChain, SampleStream};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::problem::WeaklyConvexProblem;
use crate::regularizer::{prox_reg, Regularizer};
use crate::rng::{stream_rng, Substream};
use crate::stationarity::{self, InnerMode, MoreauConfig};

/// Step-size schedule of a run.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    /// `alpha_t = c`.
    Constant(f64),
    /// `alpha_t = c / sqrt(t)`.
    InvSqrt(f64),
    /// `alpha_t = alpha / sqrt(v_t)` with `v_t = v0 + sum of squared
    /// subgradient norms up to and including iteration t`.
    AdaGradNorm { alpha: f64, v0: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StepSchedule::Constant(c) | StepSchedule::InvSqrt(c) => {
                if *c > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("step constant must be > 0, got {c}")))
                }
            }
            StepSchedule::AdaGradNorm { alpha, v0 } => {
                if *alpha > 0.0 && *v0 > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "AdaGrad-norm needs alpha > 0 and v0 > 0, got alpha={alpha}, v0={v0}"
                    )))
                }
            }
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, StepSchedule::AdaGradNorm { .. })
    }
}

/// `alpha_t` for iteration `t >= 1`. For the AdaGrad-norm schedule,
/// `grad_sq_accum` must be `v_t`, i.e. already include the squared norm of
/// the current subgradient (the accumulator is updated before the step size
/// is formed).
pub fn step_size(schedule: &StepSchedule, t: usize, grad_sq_accum: f64) -> f64 {
    assert!(t >= 1, "step_size requires t >= 1");
    match schedule {
        StepSchedule::Constant(c) => *c,
        StepSchedule::InvSqrt(c) => c / (t as f64).sqrt(),
        StepSchedule::AdaGradNorm { alpha, .. } => alpha / grad_sq_accum.sqrt(),
    }
}

/// Which iterations get full (Moreau) diagnostics.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum CheckpointSchedule {
    /// Powers of two plus the horizon itself (default).
    #[default]
    PowersOfTwo,
    /// Every `n`-th iteration plus the horizon.
    EveryN(usize),
    /// An explicit iteration list (clipped to the horizon, which is always
    /// included).
    Explicit(Vec<usize>),
}

impl CheckpointSchedule {
    /// Sorted, deduplicated checkpoint iterations in `[1, horizon]`.
    pub fn iterations(&self, horizon: usize) -> Vec<usize> {
        let mut ts: Vec<usize> = match self {
            CheckpointSchedule::PowersOfTwo => {
                let mut v = Vec::new();
                let mut t = 1usize;
                while t <= horizon {
                    v.push(t);
                    t = t.saturating_mul(2);
                }
                v
            }
            CheckpointSchedule::EveryN(n) => {
                let n = (*n).max(1);
                (1..=horizon / n).map(|k| k * n).collect()
            }
            CheckpointSchedule::Explicit(list) => list
                .iter()
                .copied()
                .filter(|&t| t >= 1 && t <= horizon)
                .collect(),
        };
        ts.push(horizon);
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

/// The algorithm a [`RunConfig`] drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Psgd,
    AdaGrad,
    Shb,
    ProxSubgrad,
}

/// Where the heavy-ball momentum update evaluates the subgradient: at the
/// iterate just produced (as the update rule is printed) or at the previous
/// one (as the analysis manipulates it). Both are exposed; the default
/// follows the printed rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShbGradAt {
    #[default]
    NextIterate,
    CurrentIterate,
}

/// Full configuration of one optimization run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    /// Number of iterations T.
    pub horizon: usize,
    /// Initial iterate (must be feasible for projected algorithms).
    pub init: Vector,
    /// Momentum mixing parameter, SHB only; must lie in (0, 1].
    pub beta: f64,
    /// Initial momentum for SHB; `None` seeds it with the subgradient at the
    /// initial iterate and the first sample, making the first step a plain
    /// subgradient step.
    pub z1: Option<Vector>,
    pub shb_grad_at: ShbGradAt,
    /// Regularizer for the proximal variant.
    pub regularizer: Regularizer,
    /// Moreau envelope parameter; must exceed the problem's rho strictly
    /// (and at least 2*rho for SHB).
    pub rho_hat: f64,
    pub seed: u64,
    /// Start state of the sample stream; `None` draws it from pi.
    pub start_state: Option<usize>,
    pub checkpoints: CheckpointSchedule,
    /// Record Moreau diagnostics at checkpoints.
    pub diagnostics_on: bool,
    /// Record the exact population loss every `loss_stride` iterations
    /// (0 disables; requires the population oracle).
    pub loss_stride: usize,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, schedule: StepSchedule, horizon: usize, init: Vector) -> Self {
        RunConfig {
            algorithm,
            schedule,
            horizon,
            init,
            beta: 1.0,
            z1: None,
            shb_grad_at: ShbGradAt::default(),
            regularizer: Regularizer::Zero,
            rho_hat: 1.0,
            seed: 0,
            start_state: None,
            checkpoints: CheckpointSchedule::default(),
            diagnostics_on: false,
            loss_stride: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rho_hat(mut self, rho_hat: f64) -> Self {
        self.rho_hat = rho_hat;
        self
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics_on = on;
        self
    }

    fn validate(&self, problem: &WeaklyConvexProblem) -> Result<()> {
        self.schedule.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!(
                "beta must lie in (0,1], got {}",
                self.beta
            )));
        }
        if self.rho_hat <= problem.rho {
            return Err(Error::Config(format!(
                "rho_hat = {} must exceed the problem's rho = {}",
                self.rho_hat, problem.rho
            )));
        }
        if self.algorithm == Algorithm::Shb && self.rho_hat < 2.0 * problem.rho {
            return Err(Error::Config(format!(
                "SHB requires rho_hat >= 2*rho, got rho_hat = {} with rho = {}",
                self.rho_hat, problem.rho
            )));
        }
        Ok(())
    }
}

/// Diagnostics recorded at one checkpoint iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    pub iterate: Vector,
    pub moreau_grad_norm: Option<f64>,
    pub grad_map_norm: Option<f64>,
    pub proxpoint_dist: Option<f64>,
}

/// Per-iteration record of one run.
#[derive(Clone, Debug)]
pub struct Trace {
    /// `alpha_t` for `t = 1..=T`.
    pub step_sizes: Vec<f64>,
    /// Exact population loss at the pre-update iterate, where recorded.
    pub losses: Vec<Option<f64>>,
    /// `||theta_{t+1} - theta_t||` for `t = 1..=T`.
    pub theta_change: Vec<f64>,
    /// `||z_t||` for `t = 1..=T` on heavy-ball runs, empty otherwise.
    pub momentum_norms: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_iterate: Vector,
    /// The randomly selected output index tau in `{1..T}`.
    pub output_index: usize,
    /// `theta_tau`.
    pub output_iterate: Vector,
    pub wall_time_s: f64,
}

impl Trace {
    /// Structural equality ignoring wall time; exact float comparison, used
    /// by the determinism and algorithm-equivalence checks.
    pub fn bitwise_eq(&self, other: &Trace) -> bool {
        self.step_sizes == other.step_sizes
            && self.losses == other.losses
            && self.theta_change == other.theta_change
            && self.checkpoints == other.checkpoints
            && self.final_iterate == other.final_iterate
            && self.output_index == other.output_index
            && self.output_iterate == other.output_iterate
    }

    pub fn checkpoint_at(&self, t: usize) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.t == t)
    }
}

/// Output-iterate selection rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputMode {
    /// `theta_tau` with `P(tau = k)` proportional to `alpha_k` (uniform for
    /// AdaGrad), as sampled during the run.
    WeightedRandom,
    /// The checkpointed iterate minimizing the recorded squared Moreau
    /// gradient norm; earliest index wins ties.
    ArgminMoreau,
}

/// Selects the output iterate from a finished trace.
pub fn select_output(trace: &Trace, mode: OutputMode) -> Result<(usize, Vector)> {
    match mode {
        OutputMode::WeightedRandom => Ok((trace.output_index, trace.output_iterate.clone())),
        OutputMode::ArgminMoreau => {
            let mut best: Option<(usize, f64, &Vector)> = None;
            for cp in &trace.checkpoints {
                let norm = cp.moreau_grad_norm.ok_or_else(|| {
                    Error::Config(format!(
                        "ArgminMoreau requires diagnostics at every checkpoint, missing at t={}",
                        cp.t
                    ))
                })?;
                let sq = norm * norm;
                if best.is_none_or(|(_, b, _)| sq < b) {
                    best = Some((cp.t, sq, &cp.iterate));
                }
            }
            let (t, _, iterate) =
                best.ok_or_else(|| Error::Config("ArgminMoreau with no checkpoints".into()))?;
            Ok((t, iterate.clone()))
        }
    }
}

/// Draws an index in `1..=weights.len()` with probability proportional to
/// the weights.
pub fn sample_weighted_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i + 1;
        }
    }
    weights.len()
}

/// Algorithm 1: projected stochastic subgradient descent,
/// `theta_{t+1} = proj(theta_t - alpha_t G(theta_t, x_{t+1}))`.
pub fn run_psgd(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    config: &RunConfig,
) -> Result<Trace> {
    if config.schedule.is_adaptive() {
        return Err(Error::Config(
            "run_psgd takes a Constant or InvSqrt schedule; use run_adagrad for AdaGrad-norm"
                .into(),
        ));
    }
    run_loop(problem, chain, config, LoopKind::Projected)
}

/// Algorithm 2: AdaGrad-norm. The squared-gradient accumulator is updated
/// with the current subgradient before the step size is formed, exactly as
/// the update rule is written (many AdaGrad variants delay the inclusion).
pub fn run_adagrad(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    config: &RunConfig,
) -> Result<Trace> {
    if !config.schedule.is_adaptive() {
        return Err(Error::Config(
            "run_adagrad requires an AdaGradNorm schedule".into(),
        ));
    }
    run_loop(problem, chain, config, LoopKind::Projected)
}

/// Algorithm 3: stochastic heavy ball,
/// `theta_{t+1} = proj(theta_t - alpha_t z_t)` with
/// `z_{t+1} = beta G + (1-beta)/alpha_{t+1} (theta_t - theta_{t+1})`.
/// With `beta = 1` the trajectory coincides bitwise with [`run_psgd`] on the
/// same seed and schedule.
pub fn run_shb(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    config: &RunConfig,
) -> Result<Trace> {
    if config.schedule.is_adaptive() {
        return Err(Error::Config(
            "run_shb takes a Constant or InvSqrt schedule".into(),
        ));
    }
    run_loop(problem, chain, config, LoopKind::HeavyBall)
}

/// The proximal subgradient variant:
/// `theta_{t+1} = prox_{alpha_t r}(theta_t - alpha_t G(theta_t, x_{t+1}))`.
/// With `r = Indicator(set)` it reproduces [`run_psgd`] bitwise.
pub fn run_prox_subgrad(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    config: &RunConfig,
) -> Result<Trace> {
    if config.schedule.is_adaptive() {
        return Err(Error::Config(
            "run_prox_subgrad takes a Constant or InvSqrt schedule".into(),
        ));
    }
    config.regularizer.validate()?;
    run_loop(problem, chain, config, LoopKind::Proximal)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LoopKind {
    Projected,
    HeavyBall,
    Proximal,
}

fn run_loop(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    config: &RunConfig,
    kind: LoopKind,
) -> Result<Trace> {
    config.validate(problem)?;
    let start = Instant::now();
    let horizon = config.horizon;
    let feasibility_required = kind != LoopKind::Proximal;
    if feasibility_required && !problem.constraint.contains(&config.init) {
        return Err(Error::Precondition(
            "initial iterate is infeasible beyond tolerance".into(),
        ));
    }
    if !config.init.all_finite() {
        return Err(Error::Precondition(
            "initial iterate has non-finite entries".into(),
        ));
    }

    // tau is sampled up front, independently of the trajectory, from its own
    // substream: P(tau = k) ~ alpha_k for deterministic schedules, uniform
    // for AdaGrad-norm.
    let output_weights: Vec<f64> = match &config.schedule {
        StepSchedule::AdaGradNorm { .. } => vec![1.0; horizon],
        schedule => (1..=horizon).map(|t| step_size(schedule, t, 0.0)).collect(),
    };
    let mut tau_rng = stream_rng(config.seed, Substream::OutputIndex);
    let tau = sample_weighted_index(&output_weights, &mut tau_rng);

    let mut stream = match config.start_state {
        Some(s) => SampleStream::new(chain.clone(), s, config.seed)?,
        None => SampleStream::from_stationary(chain.clone(), config.seed),
    };

    let checkpoint_ts = config.checkpoints.iterations(horizon);
    let moreau_cfg = if config.diagnostics_on {
        Some(diagnostics_config(problem, config, kind))
    } else {
        None
    };

    let mut theta = config.init.clone();
    let mut v_accum = match &config.schedule {
        StepSchedule::AdaGradNorm { v0, .. } => *v0,
        _ => 0.0,
    };

    // SHB momentum seeding consumes the first sample of the stream, so the
    // t-th update of every algorithm sees the same sample sequence.
    let mut momentum: Option<Vector> = if kind == LoopKind::HeavyBall {
        let x1 = stream.step().clone();
        let z1 = match &config.z1 {
            Some(z) => {
                z.check_dim(theta.len(), "SHB z1")?;
                z.clone()
            }
            None => {
                let g = problem.subgrad(&theta, &x1);
                check_oracle(&g, 1)?;
                g
            }
        };
        Some(z1)
    } else {
        None
    };

    let mut trace = Trace {
        step_sizes: Vec::with_capacity(horizon),
        losses: Vec::with_capacity(horizon),
        theta_change: Vec::with_capacity(horizon),
        momentum_norms: Vec::new(),
        checkpoints: Vec::new(),
        final_iterate: theta.clone(),
        output_index: tau,
        output_iterate: theta.clone(),
        wall_time_s: 0.0,
    };
    let mut checkpoint_iter = checkpoint_ts.iter().peekable();

    for t in 1..=horizon {
        let at_checkpoint = checkpoint_iter.peek() == Some(&&t);
        let record_loss = problem.has_full_value()
            && (at_checkpoint || (config.loss_stride > 0 && t % config.loss_stride == 0));
        trace.losses.push(if record_loss {
            problem.full_value(&theta)
        } else {
            None
        });

        if at_checkpoint {
            checkpoint_iter.next();
            trace
                .checkpoints
                .push(make_checkpoint(problem, config, &moreau_cfg, t, &theta)?);
        }
        if t == tau {
            trace.output_iterate = theta.clone();
        }

        let (alpha, next_theta) = match kind {
            LoopKind::Projected => {
                let x = stream.step().clone();
                let g = problem.subgrad(&theta, &x);
                check_oracle(&g, t)?;
                if config.schedule.is_adaptive() {
                    v_accum += g.norm_sq();
                }
                let alpha = step_size(&config.schedule, t, v_accum);
                let next = problem.constraint.project(&theta.add_scaled(-alpha, &g))?;
                debug_assert!(
                    theta.distance(&next) <= alpha * problem.subgrad_bound + 1e-9,
                    "step displacement bound violated at t={t}"
                );
                (alpha, next)
            }
            LoopKind::HeavyBall => {
                let z = momentum.as_ref().expect("momentum seeded");
                trace.momentum_norms.push(z.norm());
                let alpha = step_size(&config.schedule, t, 0.0);
                let next = problem.constraint.project(&theta.add_scaled(-alpha, z))?;
                let x = stream.step().clone();
                let grad_point = match config.shb_grad_at {
                    ShbGradAt::NextIterate => &next,
                    ShbGradAt::CurrentIterate => &theta,
                };
                let g = problem.subgrad(grad_point, &x);
                check_oracle(&g, t)?;
                let alpha_next = step_size(&config.schedule, t + 1, 0.0);
                let mut z_next = g.scale(config.beta);
                z_next.axpy((1.0 - config.beta) / alpha_next, &theta.sub(&next));
                momentum = Some(z_next);
                (alpha, next)
            }
            LoopKind::Proximal => {
                let x = stream.step().clone();
                let g = problem.subgrad(&theta, &x);
                check_oracle(&g, t)?;
                let alpha = step_size(&config.schedule, t, 0.0);
                let next = prox_reg(&config.regularizer, alpha, &theta.add_scaled(-alpha, &g))?;
                (alpha, next)
            }
        };

        if !next_theta.all_finite() {
            return Err(Error::AbortedRun {
                t,
                reason: "iterate became non-finite".into(),
            });
        }
        debug_assert!(
            !feasibility_required || problem.constraint.contains(&next_theta),
            "iterate left the constraint set at t={t}"
        );
        trace.step_sizes.push(alpha);
        trace.theta_change.push(theta.distance(&next_theta));
        theta = next_theta;
    }

    trace.final_iterate = theta;
    trace.wall_time_s = start.elapsed().as_secs_f64();
    Ok(trace)
}

fn check_oracle(g: &Vector, t: usize) -> Result<()> {
    if g.all_finite() {
        Ok(())
    } else {
        Err(Error::AbortedRun {
            t,
            reason: "subgradient oracle produced non-finite values".into(),
        })
    }
}

fn diagnostics_config(
    problem: &WeaklyConvexProblem,
    config: &RunConfig,
    kind: LoopKind,
) -> MoreauConfig {
    let mode = if kind == LoopKind::Proximal {
        InnerMode::ProxGrad(config.regularizer.clone())
    } else if problem.smooth {
        InnerMode::ProjGrad
    } else {
        InnerMode::Subgrad
    };
    MoreauConfig::new(config.rho_hat).with_mode(mode)
}

fn make_checkpoint(
    problem: &WeaklyConvexProblem,
    config: &RunConfig,
    moreau_cfg: &Option<MoreauConfig>,
    t: usize,
    theta: &Vector,
) -> Result<Checkpoint> {
    let mut cp = Checkpoint {
        t,
        iterate: theta.clone(),
        moreau_grad_norm: None,
        grad_map_norm: None,
        proxpoint_dist: None,
    };
    if let Some(cfg) = moreau_cfg {
        let proxpoint = stationarity::moreau_prox(problem, cfg, theta)?;
        let dist = theta.distance(&proxpoint);
        cp.proxpoint_dist = Some(dist);
        cp.moreau_grad_norm = Some(cfg.rho_hat * dist);
        if problem.smooth && problem.has_full_oracle() {
            cp.grad_map_norm = Some(stationarity::gradient_mapping_norm(
                problem,
                config.rho_hat,
                theta,
            )?);
        }
    }
    Ok(cp)
}
