//! Online dictionary learning / online nonnegative matrix factorization by
//! projected stochastic gradient descent.
//!
//! Each outer step sparse-codes the incoming data matrix against the current
//! dictionary (a strongly convex Tikhonov + L1 problem solved per column by
//! proximal gradient), takes the partial-minimization gradient
//! `2 (theta H - X) H^T` at the unique code, and performs a projected update
//! of the dictionary. Data matrices arrive from a finite-state Markov chain;
//! the population oracle is the exact pi-weighted sum over chain states.

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{
    run_adagrad, run_psgd, Algorithm, CheckpointSchedule, RunConfig, StepSchedule, Trace,
};
use crate::chain::MarkovChain;
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::problem::{SamplePoint, WeaklyConvexProblem};

/// The dictionary iterate: a `p x r` matrix constrained through its
/// row-major flattening (default: entrywise nonnegative with bounded
/// Frobenius norm).
#[derive(Clone, Debug)]
pub struct Dictionary {
    pub matrix: Matrix,
    pub constraint: ConstraintSet,
}

impl Dictionary {
    pub fn flattened(&self) -> Vector {
        Vector::new(self.matrix.as_slice().to_vec())
    }

    pub fn is_feasible(&self) -> bool {
        self.constraint.contains(&self.flattened())
    }
}

/// The inner code matrix `H` (`r x n`) together with the KKT residual its
/// solver achieved.
#[derive(Clone, Debug)]
pub struct CodeMatrix {
    pub matrix: Matrix,
    pub kkt_residual: f64,
}

/// Constraint set for the code matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CodeConstraint {
    #[default]
    NonnegOrthant,
    WholeSpace,
}

/// Configuration of the dictionary learning run.
#[derive(Clone, Debug)]
pub struct OdlConfig {
    /// Data matrix shape (p, n).
    pub dims: (usize, usize),
    /// Dictionary rank r.
    pub rank: usize,
    /// Tikhonov weight kappa2 > 0: makes every coding problem strongly
    /// convex, hence uniquely solvable.
    pub kappa2: f64,
    /// L1 weight on the code.
    pub l1_weight: f64,
    pub coding_tol: f64,
    pub coding_max_iters: usize,
    pub code_constraint: CodeConstraint,
    pub dict_constraint: ConstraintSet,
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub horizon: usize,
    pub seed: u64,
    /// Initial dictionary; `None` draws a feasible one from the seed.
    pub init: Option<Matrix>,
    pub checkpoints: CheckpointSchedule,
    pub diagnostics_on: bool,
    pub loss_stride: usize,
}

impl OdlConfig {
    pub fn new(dims: (usize, usize), rank: usize, dict_constraint: ConstraintSet) -> Self {
        OdlConfig {
            dims,
            rank,
            kappa2: 0.5,
            l1_weight: 0.1,
            coding_tol: 1e-10,
            coding_max_iters: 50_000,
            code_constraint: CodeConstraint::default(),
            dict_constraint,
            algorithm: Algorithm::Psgd,
            schedule: StepSchedule::InvSqrt(0.1),
            horizon: 1000,
            seed: 0,
            init: None,
            checkpoints: CheckpointSchedule::default(),
            diagnostics_on: false,
            loss_stride: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kappa2 <= 0.0 {
            return Err(Error::Config(format!(
                "kappa2 must be > 0 for unique sparse coding, got {}",
                self.kappa2
            )));
        }
        if self.l1_weight < 0.0 {
            return Err(Error::Config("l1_weight must be >= 0".into()));
        }
        if self.rank == 0 || self.dims.0 == 0 || self.dims.1 == 0 {
            return Err(Error::Config("dimensions and rank must be positive".into()));
        }
        if self.coding_tol <= 0.0 {
            return Err(Error::Config("coding_tol must be > 0".into()));
        }
        self.dict_constraint.validate()
    }
}

/// Coding objective `||X - theta H||_F^2 + kappa2 ||H||_F^2 + l1 ||H||_1`.
pub fn coding_objective(x: &Matrix, theta: &Matrix, h: &Matrix, kappa2: f64, l1: f64) -> f64 {
    let residual = x.sub(&theta.matmul(h));
    residual.frobenius_norm().powi(2)
        + kappa2 * h.frobenius_norm().powi(2)
        + l1 * h.as_slice().iter().map(|v| v.abs()).sum::<f64>()
}

/// Solves the sparse-coding problem column by column with proximal gradient
/// steps of length `1/(2 sigma_max(theta^T theta) + 2 kappa2)` until the
/// per-column KKT residual drops below `coding_tol`.
pub fn sparse_code(x: &Matrix, theta: &Matrix, cfg: &OdlConfig) -> Result<CodeMatrix> {
    sparse_code_with_init(x, theta, cfg, None)
}

/// Same as [`sparse_code`] but warm-started; the minimizer is unique (the
/// objective is `2 kappa2`-strongly convex), so any start converges to it.
pub fn sparse_code_with_init(
    x: &Matrix,
    theta: &Matrix,
    cfg: &OdlConfig,
    init: Option<&Matrix>,
) -> Result<CodeMatrix> {
    cfg.validate()?;
    let (p, n) = (x.rows(), x.cols());
    let r = theta.cols();
    if theta.rows() != p {
        return Err(Error::DimensionMismatch {
            context: "sparse_code dictionary rows",
            expected: p,
            got: theta.rows(),
        });
    }
    let gram = theta.transpose().matmul(theta);
    let sigma_max = gram.power_iteration_sym(20);
    let lipschitz = 2.0 * sigma_max + 2.0 * cfg.kappa2;
    let step = 1.0 / lipschitz;
    let theta_t_x = theta.transpose().matmul(x);

    let mut h = Matrix::zeros(r, n);
    if let Some(h0) = init {
        if h0.rows() != r || h0.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "sparse_code warm start",
                expected: r * n,
                got: h0.rows() * h0.cols(),
            });
        }
        h = h0.clone();
    }

    let mut worst_residual: f64 = 0.0;
    let mut col = vec![0.0f64; r];
    let mut grad = vec![0.0f64; r];
    for j in 0..n {
        for i in 0..r {
            col[i] = h[(i, j)];
        }
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..cfg.coding_max_iters {
            smooth_grad(&gram, &theta_t_x, cfg.kappa2, &col, j, &mut grad);
            residual = kkt_residual(&col, &grad, cfg.l1_weight, cfg.code_constraint);
            if residual <= cfg.coding_tol {
                converged = true;
                break;
            }
            for i in 0..r {
                let moved = col[i] - step * grad[i];
                col[i] = match cfg.code_constraint {
                    CodeConstraint::NonnegOrthant => (moved - step * cfg.l1_weight).max(0.0),
                    CodeConstraint::WholeSpace => {
                        let t = step * cfg.l1_weight;
                        if moved > t {
                            moved - t
                        } else if moved < -t {
                            moved + t
                        } else {
                            0.0
                        }
                    }
                };
            }
        }
        if !converged {
            return Err(Error::InnerSolver {
                iters: cfg.coding_max_iters,
                residual,
                tol: cfg.coding_tol,
            });
        }
        worst_residual = worst_residual.max(residual);
        for i in 0..r {
            h[(i, j)] = col[i];
        }
    }
    Ok(CodeMatrix {
        matrix: h,
        kkt_residual: worst_residual,
    })
}

/// Gradient of the smooth part `||x_j - theta h||^2 + kappa2 ||h||^2` of one
/// column's objective: `2 (gram h - theta^T x_j) + 2 kappa2 h`.
fn smooth_grad(
    gram: &Matrix,
    theta_t_x: &Matrix,
    kappa2: f64,
    col: &[f64],
    j: usize,
    out: &mut [f64],
) {
    let r = col.len();
    for i in 0..r {
        let mut acc = 0.0;
        for k in 0..r {
            acc += gram[(i, k)] * col[k];
        }
        out[i] = 2.0 * (acc - theta_t_x[(i, j)]) + 2.0 * kappa2 * col[i];
    }
}

/// Max-norm KKT residual of one column. On the orthant the L1 term is linear,
/// so optimality reads: `grad_i + l1 = 0` where `h_i > 0` and
/// `grad_i + l1 >= 0` where `h_i = 0`.
fn kkt_residual(col: &[f64], grad: &[f64], l1: f64, constraint: CodeConstraint) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..col.len() {
        let r = match constraint {
            CodeConstraint::NonnegOrthant => {
                if col[i] > 0.0 {
                    (grad[i] + l1).abs()
                } else {
                    (-(grad[i] + l1)).max(0.0)
                }
            }
            CodeConstraint::WholeSpace => {
                if col[i] > 0.0 {
                    (grad[i] + l1).abs()
                } else if col[i] < 0.0 {
                    (grad[i] - l1).abs()
                } else {
                    (grad[i].abs() - l1).max(0.0)
                }
            }
        };
        worst = worst.max(r);
    }
    worst
}

/// Partial-minimization gradient of the dictionary loss at the unique code:
/// `2 (theta H - X) H^T`, a `p x r` matrix.
pub fn dict_subgradient(x: &Matrix, theta: &Matrix, h: &Matrix) -> Matrix {
    theta.matmul(h).sub(x).scale(2.0).matmul(&h.transpose())
}

/// Conservative constant estimates for the ODL objective on compact data,
/// code and dictionary sets.
#[derive(Clone, Copy, Debug)]
pub struct OdlConstants {
    pub data_radius: f64,
    pub code_radius: f64,
    pub dict_radius: f64,
    pub subgrad_bound: f64,
    /// Weak-convexity estimate `2 * code_radius^2`; an upper bound derived
    /// from the feasible code radius, not a sharp modulus.
    pub rho: f64,
}

pub fn odl_constants(chain: &MarkovChain, cfg: &OdlConfig) -> Result<OdlConstants> {
    let (p, n) = cfg.dims;
    let mut data_radius: f64 = 0.0;
    for s in 0..chain.n_states() {
        let x = state_matrix(chain, s, p, n)?;
        data_radius = data_radius.max(x.frobenius_norm());
    }
    // Coding optimality against H = 0 gives kappa2 ||H*||_F^2 <= ||X||_F^2
    // and l1 ||H*||_1 <= ||X||_F^2; take the smaller radius.
    let tikhonov_radius = data_radius / cfg.kappa2.sqrt();
    let code_radius = if cfg.l1_weight > 0.0 {
        tikhonov_radius.min(data_radius * data_radius / cfg.l1_weight)
    } else {
        tikhonov_radius
    };
    let dict_radius = constraint_radius(&cfg.dict_constraint, p * cfg.rank)?;
    // floors keep degenerate inputs (all-zero data) runnable
    let subgrad_bound = (2.0 * (dict_radius * code_radius + data_radius) * code_radius).max(1e-9);
    let rho = 2.0 * code_radius * code_radius;
    Ok(OdlConstants {
        data_radius,
        code_radius,
        dict_radius,
        subgrad_bound,
        rho,
    })
}

fn constraint_radius(set: &ConstraintSet, dim: usize) -> Result<f64> {
    match set {
        ConstraintSet::NonnegBall { radius } => Ok(*radius),
        ConstraintSet::Ball { center, radius } => Ok(center.norm() + radius),
        ConstraintSet::Box { lower, upper } => Ok((0..dim)
            .map(|i| lower[i].abs().max(upper[i].abs()).powi(2))
            .sum::<f64>()
            .sqrt()),
        ConstraintSet::Simplex { scale } => Ok(*scale),
        _ => Err(Error::Config(
            "dictionary learning needs a compact dictionary constraint".into(),
        )),
    }
}

fn state_matrix(chain: &MarkovChain, state: usize, p: usize, n: usize) -> Result<Matrix> {
    let payload = &chain.sample_of_state(state).payload;
    payload.check_dim(p * n, "ODL state payload")?;
    Matrix::from_flat(p, n, payload.as_slice().to_vec())
}

/// The dictionary loss as a weakly convex problem over the flattened
/// dictionary, with exact population oracles summed over chain states.
/// A coding failure inside an oracle surfaces as a non-finite value, which
/// aborts the surrounding run with a diagnostic.
pub fn odl_problem(chain: &MarkovChain, cfg: &OdlConfig) -> Result<WeaklyConvexProblem> {
    problem_with_tracker(chain, cfg).map(|(p, _)| p)
}

fn problem_with_tracker(
    chain: &MarkovChain,
    cfg: &OdlConfig,
) -> Result<(WeaklyConvexProblem, Arc<Mutex<f64>>)> {
    cfg.validate()?;
    let constants = odl_constants(chain, cfg)?;
    let (p, n) = cfg.dims;
    let r = cfg.rank;
    let tracker = Arc::new(Mutex::new(0.0f64));

    let grad_cfg = cfg.clone();
    let grad_tracker = Arc::clone(&tracker);
    let subgrad = move |theta_flat: &Vector, sample: &SamplePoint| -> Vector {
        let theta = match Matrix::from_flat(p, r, theta_flat.as_slice().to_vec()) {
            Ok(m) => m,
            Err(_) => return Vector::new(vec![f64::NAN; p * r]),
        };
        let x = match Matrix::from_flat(p, n, sample.payload.as_slice().to_vec()) {
            Ok(m) => m,
            Err(_) => return Vector::new(vec![f64::NAN; p * r]),
        };
        match sparse_code(&x, &theta, &grad_cfg) {
            Ok(code) => {
                let mut worst = grad_tracker.lock().expect("tracker lock");
                *worst = worst.max(code.kkt_residual);
                Vector::new(dict_subgradient(&x, &theta, &code.matrix).into_flat())
            }
            Err(_) => Vector::new(vec![f64::NAN; p * r]),
        }
    };

    let loss_cfg = cfg.clone();
    let loss = move |theta_flat: &Vector, sample: &SamplePoint| -> f64 {
        let theta = match Matrix::from_flat(p, r, theta_flat.as_slice().to_vec()) {
            Ok(m) => m,
            Err(_) => return f64::NAN,
        };
        let x = match Matrix::from_flat(p, n, sample.payload.as_slice().to_vec()) {
            Ok(m) => m,
            Err(_) => return f64::NAN,
        };
        match sparse_code(&x, &theta, &loss_cfg) {
            Ok(code) => coding_objective(
                &x,
                &theta,
                &code.matrix,
                loss_cfg.kappa2,
                loss_cfg.l1_weight,
            ),
            Err(_) => f64::NAN,
        }
    };

    let problem = WeaklyConvexProblem::builder()
        .sample_loss(loss)
        .stoch_subgrad(subgrad)
        .rho(constants.rho)
        .subgrad_bound(constants.subgrad_bound)
        .subgrad_lipschitz(constants.rho.max(1e-9))
        .value_bound(constants.data_radius.powi(2).max(1e-12) * (1.0 + 1e-9))
        .constraint(cfg.dict_constraint.clone())
        .smooth(true)
        .build()?
        .with_population_oracle_from(chain);
    Ok((problem, tracker))
}

/// Result of one dictionary learning run.
#[derive(Debug)]
pub struct OdlRun {
    pub trace: Trace,
    pub problem: WeaklyConvexProblem,
    /// Worst per-column coding KKT residual seen by any oracle call.
    pub max_coding_residual: f64,
}

/// Runs projected SGD (or AdaGrad, per the config) on the dictionary loss
/// over a Markov stream of data matrices.
pub fn run_odl(chain: &MarkovChain, cfg: &OdlConfig) -> Result<OdlRun> {
    let (problem, tracker) = problem_with_tracker(chain, cfg)?;
    let constants = odl_constants(chain, cfg)?;
    let (p, _) = cfg.dims;
    let init = match &cfg.init {
        Some(m) => {
            if m.rows() != p || m.cols() != cfg.rank {
                return Err(Error::DimensionMismatch {
                    context: "ODL initial dictionary",
                    expected: p * cfg.rank,
                    got: m.rows() * m.cols(),
                });
            }
            Vector::new(m.as_slice().to_vec())
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0d1c);
            cfg.dict_constraint.sample_feasible(p * cfg.rank, &mut rng)
        }
    };

    let mut run_cfg = RunConfig::new(cfg.algorithm, cfg.schedule.clone(), cfg.horizon, init)
        .with_seed(cfg.seed)
        .with_rho_hat((2.0 * constants.rho).max(1e-6))
        .with_diagnostics(cfg.diagnostics_on);
    run_cfg.checkpoints = cfg.checkpoints.clone();
    run_cfg.loss_stride = cfg.loss_stride;

    let trace = match cfg.algorithm {
        Algorithm::Psgd => run_psgd(&problem, chain, &run_cfg)?,
        Algorithm::AdaGrad => run_adagrad(&problem, chain, &run_cfg)?,
        other => {
            return Err(Error::Config(format!(
                "ODL supports PSGD and AdaGrad outer loops, got {other:?}"
            )))
        }
    };
    let max_coding_residual = *tracker.lock().expect("tracker lock");
    Ok(OdlRun {
        trace,
        problem,
        max_coding_residual,
    })
}

/// Synthetic planted-dictionary benchmark: a feasible nonnegative dictionary
/// `theta*`, per-state nonnegative codes, data `X_s = theta* H_s + noise`
/// with small nonnegative noise, and a lazy random walk on a cycle of
/// `n_states` states for tunably slow mixing (self-loop probability 1/2).
pub fn synth_markov_data(
    p: usize,
    n: usize,
    r: usize,
    n_states: usize,
    planted_seed: u64,
) -> Result<(MarkovChain, Dictionary)> {
    synth_markov_data_with_noise(p, n, r, n_states, planted_seed, 0.01)
}

/// [`synth_markov_data`] with an explicit noise fraction (entrywise uniform
/// on `[0, noise_frac * peak]`, so data stay nonnegative; 0 gives exact
/// planted reconstructions).
pub fn synth_markov_data_with_noise(
    p: usize,
    n: usize,
    r: usize,
    n_states: usize,
    planted_seed: u64,
    noise_frac: f64,
) -> Result<(MarkovChain, Dictionary)> {
    if p == 0 || n == 0 || r == 0 || n_states == 0 {
        return Err(Error::Config(
            "synth_markov_data dimensions must be positive".into(),
        ));
    }
    if noise_frac < 0.0 {
        return Err(Error::Config("noise_frac must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(planted_seed);
    let mut planted = Matrix::zeros(p, r);
    for i in 0..p {
        for j in 0..r {
            planted[(i, j)] = rng.gen_range(0.0..1.0);
        }
    }
    let radius = 2.0 * planted.frobenius_norm().max(1e-6);
    let constraint = ConstraintSet::NonnegBall { radius };

    let mut samples = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let mut code = Matrix::zeros(r, n);
        for i in 0..r {
            for j in 0..n {
                // half the entries are zeroed for sparse-ish codes
                if rng.gen::<f64>() < 0.5 {
                    code[(i, j)] = rng.gen_range(0.0..1.0);
                }
            }
        }
        let clean = planted.matmul(&code);
        let peak = clean.as_slice().iter().fold(0.0f64, |m, &v| m.max(v));
        let mut data = clean;
        if noise_frac > 0.0 {
            for i in 0..p {
                for j in 0..n {
                    data[(i, j)] += rng.gen_range(0.0..(noise_frac * peak).max(1e-12));
                }
            }
        }
        samples.push(SamplePoint::with_state(data.into_flat(), s));
    }

    let transition = lazy_cycle_walk(n_states, 0.5)?;
    let chain = MarkovChain::new(transition, samples)?;
    Ok((
        chain,
        Dictionary {
            matrix: planted,
            constraint,
        },
    ))
}

/// Lazy random walk on a cycle: stay with probability `laziness`, otherwise
/// move to one of the two neighbors uniformly.
pub fn lazy_cycle_walk(n_states: usize, laziness: f64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&laziness) {
        return Err(Error::Config(format!(
            "laziness must lie in [0,1), got {laziness}"
        )));
    }
    if n_states == 0 {
        return Err(Error::Config("cycle walk needs at least one state".into()));
    }
    let mut p = Matrix::zeros(n_states, n_states);
    if n_states == 1 {
        p[(0, 0)] = 1.0;
        return Ok(p);
    }
    for s in 0..n_states {
        let left = (s + n_states - 1) % n_states;
        let right = (s + 1) % n_states;
        p[(s, s)] += laziness;
        p[(s, left)] += (1.0 - laziness) / 2.0;
        p[(s, right)] += (1.0 - laziness) / 2.0;
    }
    if n_states == 2 && laziness == 0.0 {
        return Err(Error::Config("2-cycle without laziness is periodic".into()));
    }
    Ok(p)
}

/// Writes the benchmark data matrices as CSV, one file per state named
/// `state_<index>.csv`, each starting with the header row `p,n,state`
/// followed by one row per matrix row.
pub fn dump_state_csv(
    chain: &MarkovChain,
    dims: (usize, usize),
    dir: &std::path::Path,
) -> Result<()> {
    let (p, n) = dims;
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    for s in 0..chain.n_states() {
        let x = state_matrix(chain, s, p, n)?;
        let mut out = format!("{p},{n},{s}\n");
        for i in 0..p {
            let row: Vec<String> = x.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let path = dir.join(format!("state_{s:03}.csv"));
        std::fs::write(&path, out)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Reads back matrices written by [`dump_state_csv`] for states `0..n_states`
/// and returns the flattened per-state samples.
pub fn load_state_csv(dir: &std::path::Path, n_states: usize) -> Result<Vec<SamplePoint>> {
    let mut samples = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let path = dir.join(format!("state_{s:03}.csv"));
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config(format!("{}: empty file", path.display())))?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Config(format!(
                "{}: header must be p,n,state",
                path.display()
            )));
        }
        let parse = |v: &str| -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|e| Error::Config(format!("{}: bad header field: {e}", path.display())))
        };
        let (p, n, state) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
        if state != s {
            return Err(Error::Config(format!(
                "{}: header names state {state}, expected {s}",
                path.display()
            )));
        }
        let mut data = Vec::with_capacity(p * n);
        for line in lines.take(p) {
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|e| {
                    Error::Config(format!("{}: bad matrix entry: {e}", path.display()))
                })?;
                data.push(v);
            }
        }
        if data.len() != p * n {
            return Err(Error::Config(format!(
                "{}: expected {p}x{n} entries, got {}",
                path.display(),
                data.len()
            )));
        }
        samples.push(SamplePoint::with_state(data, s));
    }
    Ok(samples)
}
