//! Stationarity measures: Moreau envelope value/gradient through an inner
//! strongly convex solve, the gradient mapping for smooth problems, a
//! direction-search stationarity gap used as an independent cross-check, and
//! the averaged-gradient post-processing step.
//!
//! All diagnostics here use the exact population oracle (pi-weighted sums
//! over a finite state space), so reported norms carry inner-solver slack but
//! no sampling noise. The envelope parameter is fixed to `1/rho_hat`
//! throughout, the only value the convergence guarantees use.

use crate::chain::{k_schedule, MarkovChain, SampleStream};
use crate::constraints::{ConstraintSet, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::problem::WeaklyConvexProblem;
use crate::regularizer::{prox_reg, Regularizer};
use crate::rng::{stream_rng, Substream};

/// Inner solver used for the proximal-point subproblem.
#[derive(Clone, Debug)]
pub enum InnerMode {
    /// Projected gradient with a fixed step, for smooth constrained
    /// objectives. Linearly convergent: the subproblem is strongly convex.
    ProjGrad,
    /// Proximal gradient for composite `f + r` objectives.
    ProxGrad(Regularizer),
    /// Projected subgradient with decaying steps and weighted averaging, the
    /// fallback for nonsmooth objectives. Coarse: the iterate-change stopping
    /// rule does not certify the same accuracy as the linearly convergent
    /// modes, so use a looser tolerance.
    Subgrad,
}

/// Configuration of the Moreau-envelope computations.
#[derive(Clone, Debug)]
pub struct MoreauConfig {
    /// Envelope parameter rho_hat; the subproblem is `(rho_hat - rho)`-
    /// strongly convex, so this must exceed the problem's rho strictly.
    pub rho_hat: f64,
    /// Stopping threshold on the successive-iterate change.
    pub inner_tol: f64,
    /// Iteration cap; `None` derives it from the contraction factor plus a
    /// safety margin.
    pub inner_max_iters: Option<usize>,
    pub inner_mode: InnerMode,
}

impl MoreauConfig {
    pub fn new(rho_hat: f64) -> Self {
        MoreauConfig {
            rho_hat,
            inner_tol: 1e-9,
            inner_max_iters: None,
            inner_mode: InnerMode::ProjGrad,
        }
    }

    pub fn with_mode(mut self, mode: InnerMode) -> Self {
        if matches!(mode, InnerMode::Subgrad) && self.inner_tol < 1e-6 {
            // the averaging fallback cannot certify 1e-9 iterate changes in
            // a reasonable budget
            self.inner_tol = 1e-6;
        }
        self.inner_mode = mode;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.inner_tol = tol;
        self
    }

    pub fn with_max_iters(mut self, iters: usize) -> Self {
        self.inner_max_iters = Some(iters);
        self
    }

    fn validate(&self, problem: &WeaklyConvexProblem) -> Result<()> {
        if self.rho_hat <= problem.rho {
            return Err(Error::Config(format!(
                "Moreau rho_hat = {} must exceed rho = {} for a well-posed proximal point",
                self.rho_hat, problem.rho
            )));
        }
        if self.inner_tol <= 0.0 {
            return Err(Error::Config("inner_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Stationarity diagnostics at one point.
#[derive(Clone, Debug)]
pub struct StationarityReport {
    /// `||grad of the envelope|| = rho_hat * ||theta - proxpoint||`.
    pub moreau_grad_norm: f64,
    /// Gradient-mapping norm, for smooth problems.
    pub grad_map_norm: Option<f64>,
    /// `||theta - proxpoint||`.
    pub proxpoint_distance: f64,
    /// Distance from 0 to the (sub)differential of the constrained or
    /// composite objective at the proximal point.
    pub normal_cone_dist_at_proxpoint: f64,
    pub inner_iters_used: usize,
}

/// The proximal point: approximate
/// `argmin_u f(u) + (side condition) + rho_hat/2 ||u - theta||^2`,
/// where the side condition is feasibility (ProjGrad/Subgrad modes) or the
/// regularizer (ProxGrad mode).
pub fn moreau_prox(
    problem: &WeaklyConvexProblem,
    cfg: &MoreauConfig,
    theta: &Vector,
) -> Result<Vector> {
    moreau_prox_inner(problem, cfg, theta).map(|(u, _)| u)
}

fn effective_regularizer(problem: &WeaklyConvexProblem, cfg: &MoreauConfig) -> Regularizer {
    match &cfg.inner_mode {
        InnerMode::ProxGrad(reg) => reg.clone(),
        _ => Regularizer::Indicator(problem.constraint.clone()),
    }
}

fn moreau_prox_inner(
    problem: &WeaklyConvexProblem,
    cfg: &MoreauConfig,
    theta: &Vector,
) -> Result<(Vector, usize)> {
    cfg.validate(problem)?;
    if !theta.all_finite() {
        return Err(Error::Precondition(
            "moreau_prox: non-finite input point".into(),
        ));
    }
    if !problem.has_full_oracle() {
        return Err(Error::Unsupported(
            "Moreau diagnostics require the exact population oracle (full_grad)".into(),
        ));
    }
    match &cfg.inner_mode {
        InnerMode::ProjGrad | InnerMode::ProxGrad(_) => prox_point_gradient(problem, cfg, theta),
        InnerMode::Subgrad => prox_point_subgradient(problem, cfg, theta),
    }
}

/// Fixed-step (proximal) gradient descent on the strongly convex subproblem.
/// Step `1/(rho_hat + rho_smooth)` where `rho_smooth` is the problem's
/// gradient Lipschitz constant; the iterate-distance contraction factor per
/// step is `(rho + rho_smooth) / (rho_hat + rho_smooth)`.
fn prox_point_gradient(
    problem: &WeaklyConvexProblem,
    cfg: &MoreauConfig,
    theta: &Vector,
) -> Result<(Vector, usize)> {
    let rho_smooth = problem.subgrad_lipschitz;
    let eta = 1.0 / (cfg.rho_hat + rho_smooth);
    let q = (problem.rho + rho_smooth) / (cfg.rho_hat + rho_smooth);
    let reg = effective_regularizer(problem, cfg);

    let cap = cfg.inner_max_iters.unwrap_or_else(|| {
        let d0 = (2.0 * problem.subgrad_bound / (cfg.rho_hat - problem.rho)).max(1.0);
        let rate = (1.0 / q.max(1e-6)).ln();
        (((d0 + 1.0) / cfg.inner_tol).ln() / rate).ceil() as usize + 50
    });

    let mut u = prox_reg(&reg, eta, theta)?;
    let mut change = f64::INFINITY;
    for k in 1..=cap {
        let mut grad = problem.full_grad(&u).expect("full oracle checked above");
        grad.axpy(cfg.rho_hat, &u.sub(theta));
        let next = prox_reg(&reg, eta, &u.add_scaled(-eta, &grad))?;
        change = u.distance(&next);
        u = next;
        if change <= cfg.inner_tol {
            return Ok((u, k));
        }
    }
    Err(Error::InnerSolver {
        iters: cap,
        residual: change,
        tol: cfg.inner_tol,
    })
}

/// Projected subgradient with steps `2 / ((rho_hat - rho)(k+1))` and
/// triangular weighted averaging; stops when the averaged iterate settles.
fn prox_point_subgradient(
    problem: &WeaklyConvexProblem,
    cfg: &MoreauConfig,
    theta: &Vector,
) -> Result<(Vector, usize)> {
    let mu = cfg.rho_hat - problem.rho;
    let reg = effective_regularizer(problem, cfg);
    let cap = cfg.inner_max_iters.unwrap_or(500_000);
    let mut u = prox_reg(&reg, 1.0, theta)?;
    let mut avg = u.clone();
    let mut change = f64::INFINITY;
    for k in 1..=cap {
        let mut grad = problem.full_grad(&u).expect("full oracle checked above");
        grad.axpy(cfg.rho_hat, &u.sub(theta));
        let eta = 2.0 / (mu * (k as f64 + 1.0));
        u = prox_reg(&reg, eta, &u.add_scaled(-eta, &grad))?;
        let w = 2.0 / (k as f64 + 1.0);
        let next_avg = avg.scale(1.0 - w).add_scaled(w, &u);
        change = avg.distance(&next_avg);
        avg = next_avg;
        if k >= 10 && change <= cfg.inner_tol {
            return Ok((avg, k));
        }
    }
    Err(Error::InnerSolver {
        iters: cap,
        residual: change,
        tol: cfg.inner_tol,
    })
}

/// Envelope gradient `rho_hat * (theta - proxpoint)`; its norm is exactly
/// `rho_hat` times the proximal-point displacement.
pub fn moreau_grad(
    problem: &WeaklyConvexProblem,
    cfg: &MoreauConfig,
    theta: &Vector,
) -> Result<Vector> {
    let proxpoint = moreau_prox(problem, cfg, theta)?;
    Ok(theta.sub(&proxpoint).scale(cfg.rho_hat))
}

/// Envelope value `phi(proxpoint) + rho_hat/2 ||proxpoint - theta||^2`;
/// never exceeds the objective value at a feasible `theta`.
pub fn moreau_value(
    problem: &WeaklyConvexProblem,
    cfg: &MoreauConfig,
    theta: &Vector,
) -> Result<f64> {
    let proxpoint = moreau_prox(problem, cfg, theta)?;
    let f_val = problem.full_value(&proxpoint).ok_or_else(|| {
        Error::Unsupported("moreau_value requires the exact population value oracle".into())
    })?;
    let reg = effective_regularizer(problem, cfg);
    let r_val = match &reg {
        Regularizer::Indicator(_) => 0.0, // proxpoint is feasible by construction
        other => other.value(&proxpoint),
    };
    Ok(f_val + r_val + 0.5 * cfg.rho_hat * proxpoint.distance(theta).powi(2))
}

/// `rho_hat * ||theta - proj(theta - grad f(theta)/rho_hat)||`: the norm of
/// one exact projected-gradient step scaled back. Zero exactly at constrained
/// stationary points of smooth problems.
pub fn gradient_mapping_norm(
    problem: &WeaklyConvexProblem,
    rho_hat: f64,
    theta: &Vector,
) -> Result<f64> {
    if !problem.smooth {
        return Err(Error::Unsupported(
            "gradient mapping is defined for smooth problems only".into(),
        ));
    }
    let grad = problem.full_grad(theta).ok_or_else(|| {
        Error::Unsupported("gradient mapping requires the exact population gradient".into())
    })?;
    if !problem.constraint.contains(theta) {
        return Err(Error::Precondition(
            "gradient_mapping_norm: point is infeasible beyond tolerance".into(),
        ));
    }
    let stepped = problem
        .constraint
        .project(&theta.add_scaled(-1.0 / rho_hat, &grad))?;
    Ok(rho_hat * theta.distance(&stepped))
}

/// Distance from the origin to the subdifferential of `f +` (regularizer or
/// set indicator) at `point`, using the exact population gradient as the
/// element of the subdifferential of `f`.
pub fn composite_stationarity_dist(
    problem: &WeaklyConvexProblem,
    reg: &Regularizer,
    point: &Vector,
) -> Result<f64> {
    let grad = problem.full_grad(point).ok_or_else(|| {
        Error::Unsupported("stationarity distance requires the population gradient".into())
    })?;
    match reg {
        Regularizer::Indicator(set) => set.normal_cone_dist(point, &grad),
        Regularizer::Zero => Ok(grad.norm()),
        Regularizer::L1 { weight } => {
            let mut sq = 0.0;
            for i in 0..point.len() {
                let r = if point[i] > 0.0 {
                    (grad[i] + weight).abs()
                } else if point[i] < 0.0 {
                    (grad[i] - weight).abs()
                } else {
                    (grad[i].abs() - weight).max(0.0)
                };
                sq += r * r;
            }
            Ok(sq.sqrt())
        }
    }
}

/// Full diagnostic bundle at one point.
pub fn stationarity_report(
    problem: &WeaklyConvexProblem,
    cfg: &MoreauConfig,
    theta: &Vector,
) -> Result<StationarityReport> {
    let (proxpoint, inner_iters_used) = moreau_prox_inner(problem, cfg, theta)?;
    let proxpoint_distance = theta.distance(&proxpoint);
    let reg = effective_regularizer(problem, cfg);
    let normal_cone_dist_at_proxpoint = composite_stationarity_dist(problem, &reg, &proxpoint)?;
    let grad_map_norm = if problem.smooth && problem.has_full_oracle() {
        match gradient_mapping_norm(problem, cfg.rho_hat, theta) {
            Ok(v) => Some(v),
            Err(Error::Precondition(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(StationarityReport {
        moreau_grad_norm: cfg.rho_hat * proxpoint_distance,
        grad_map_norm,
        proxpoint_distance,
        normal_cone_dist_at_proxpoint,
        inner_iters_used,
    })
}

const POST_PROCESS_C_LOG: f64 = 2.0;

/// Averaged-gradient projection step: draws `n_hat` samples from a fresh
/// stream (advanced past a logarithmic burn-in to damp initialization bias),
/// projects `theta` minus the sample-mean gradient, and returns the new point
/// together with its exact-gradient normal-cone distance.
pub fn post_process(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    theta: &Vector,
    n_hat: usize,
    seed: u64,
) -> Result<(Vector, f64)> {
    if !problem.smooth {
        return Err(Error::Unsupported(
            "post-processing is defined for smooth problems only".into(),
        ));
    }
    if n_hat == 0 {
        return Err(Error::Config("post_process needs n_hat >= 1".into()));
    }
    if !problem.constraint.contains(theta) {
        return Err(Error::Precondition(
            "post_process: point is infeasible beyond tolerance".into(),
        ));
    }
    let mut rng = stream_rng(seed, Substream::PostProcess);
    use rand::Rng;
    let fresh_seed = rng.gen::<u64>();
    let mut stream = SampleStream::from_stationary(chain.clone(), fresh_seed);
    let burnin = k_schedule(n_hat, POST_PROCESS_C_LOG);
    for _ in 0..burnin {
        stream.step();
    }
    let mut mean = Vector::zeros(theta.len());
    for _ in 0..n_hat {
        let x = stream.step().clone();
        let g = problem.subgrad(theta, &x);
        if !g.all_finite() {
            return Err(Error::Precondition(
                "post_process: oracle produced non-finite gradient".into(),
            ));
        }
        mean.axpy(1.0 / n_hat as f64, &g);
    }
    let moved = problem.constraint.project(&theta.sub(&mean))?;
    let grad = problem.full_grad(&moved).ok_or_else(|| {
        Error::Unsupported("post_process requires the exact population gradient".into())
    })?;
    let dist = problem.constraint.normal_cone_dist(&moved, &grad)?;
    Ok((moved, dist))
}

/// Direction-search approximation of the stationarity gap
/// `max(0, sup over unit feasible directions of <-grad f(theta*), d>)`,
/// maximized over low-discrepancy sphere directions (made feasible by a
/// short projected step) plus the active-face generators of boxes, orthants
/// and simplices. Deterministic; used only as an independent cross-check of
/// the analytic normal-cone distance.
pub fn stationarity_gap_bruteforce(
    problem: &WeaklyConvexProblem,
    theta: &Vector,
    n_dirs: usize,
) -> Result<f64> {
    let grad = problem.full_grad(theta).ok_or_else(|| {
        Error::Unsupported("stationarity gap requires the population gradient".into())
    })?;
    if !problem.constraint.contains(theta) {
        return Err(Error::Precondition(
            "stationarity_gap_bruteforce: point is infeasible".into(),
        ));
    }
    let dim = theta.len();
    let set = &problem.constraint;
    let delta = 1e-6;
    let mut best: f64 = 0.0;
    let mut consider = |d: &Vector| {
        let norm = d.norm();
        if norm > 1e-12 {
            best = best.max(-grad.dot(d) / norm);
        }
    };

    for i in 1..=n_dirs {
        let h = halton_sphere_point(i, dim);
        let candidate = theta.add_scaled(delta, &h);
        let projected = set.project(&candidate)?;
        let dir = projected.sub(theta);
        consider(&dir);
    }

    for d in face_generators(set, theta) {
        consider(&d);
    }
    Ok(best)
}

/// Feasible edge directions generated by the active faces of polyhedral sets.
fn face_generators(set: &ConstraintSet, theta: &Vector) -> Vec<Vector> {
    let tol = FEASIBILITY_TOL;
    let dim = theta.len();
    let unit = |i: usize, sign: f64| {
        let mut v = Vector::zeros(dim);
        v[i] = sign;
        v
    };
    let mut dirs = Vec::new();
    match set {
        ConstraintSet::Box { lower, upper } => {
            for i in 0..dim {
                if theta[i] < upper[i] - tol {
                    dirs.push(unit(i, 1.0));
                }
                if theta[i] > lower[i] + tol {
                    dirs.push(unit(i, -1.0));
                }
            }
        }
        ConstraintSet::NonnegOrthant | ConstraintSet::NonnegBall { .. } => {
            for i in 0..dim {
                dirs.push(unit(i, 1.0));
                if theta[i] > tol {
                    dirs.push(unit(i, -1.0));
                }
            }
        }
        ConstraintSet::Simplex { scale } => {
            let active_tol = tol * (1.0 + scale);
            for i in 0..dim {
                for j in 0..dim {
                    if i != j && theta[j] > active_tol {
                        let mut v = Vector::zeros(dim);
                        v[i] = std::f64::consts::FRAC_1_SQRT_2;
                        v[j] = -std::f64::consts::FRAC_1_SQRT_2;
                        dirs.push(v);
                    }
                }
            }
        }
        _ => {}
    }
    dirs
}

/// Deterministic near-uniform sphere point: Halton coordinates mapped
/// through the inverse normal CDF and normalized.
fn halton_sphere_point(index: usize, dim: usize) -> Vector {
    const PRIMES: [u64; 24] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    ];
    assert!(
        dim <= PRIMES.len(),
        "brute-force gap supports dimensions up to 24"
    );
    let mut v = Vector::from_fn(dim, |j| {
        let u = radical_inverse(index as u64, PRIMES[j]);
        inverse_normal_cdf(u.clamp(1e-12, 1.0 - 1e-12))
    });
    let norm = v.norm();
    if norm > 0.0 {
        v = v.scale(1.0 / norm);
    }
    v
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let mut inv = 0.0;
    let mut denom = 1.0;
    while n > 0 {
        denom *= base as f64;
        inv += (n % base) as f64 / denom;
        n /= base;
    }
    inv
}

/// Acklam's rational approximation of the standard normal quantile
/// (relative error below 1.2e-9, ample for direction generation).
fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}
