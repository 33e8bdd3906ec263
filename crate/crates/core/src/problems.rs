//! Seeded builtin benchmark problems.
//!
//! Four builtins cover the smooth/nonsmooth and constrained/composite
//! quadrants the convergence guarantees address:
//!
//! * `nonconvex_quadratic` — smooth indefinite quadratic over a box, with
//!   exact analytic population oracles;
//! * `phase_retrieval_l1` — weakly convex and nonsmooth over a ball,
//!   exercising true subgradients;
//! * `lasso_prox` — convex smooth loss plus an L1 regularizer for the
//!   proximal variant;
//! * the ODL synthetic benchmark lives in [`crate::odl`].
//!
//! Every builder returns the per-state samples alongside the problem so the
//! caller can assemble whichever chain drives the experiment. State noise is
//! centered under the chain's stationary distribution where that keeps the
//! population oracle analytic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::problem::{SamplePoint, WeaklyConvexProblem};

/// A builtin problem plus the per-state samples that realize it on a chain.
pub struct BuiltProblem {
    pub problem: WeaklyConvexProblem,
    pub samples: Vec<SamplePoint>,
    pub default_init: Vector,
    pub probe_dim: usize,
}

/// `f(theta) = 1/2 theta' A theta + b' theta` with a symmetric `A` of mixed
/// sign spectrum, over the box `[-1, 1]^dim`. Per-state linear perturbations
/// are centered under `pi`, so the population gradient is exactly
/// `A theta + b`.
pub fn nonconvex_quadratic(
    dim: usize,
    pi: &Vector,
    seed: u64,
    noise_scale: f64,
) -> Result<BuiltProblem> {
    nonconvex_quadratic_scaled(dim, pi, seed, noise_scale, 1.0)
}

/// [`nonconvex_quadratic`] with the spectrum and linear term multiplied by
/// `scale` while the per-state noise keeps its absolute magnitude: shrinking
/// the scale flattens the curvature against the sampling noise, so gradient
/// norms stay comparable along the whole trajectory.
pub fn nonconvex_quadratic_scaled(
    dim: usize,
    pi: &Vector,
    seed: u64,
    noise_scale: f64,
    scale: f64,
) -> Result<BuiltProblem> {
    nonconvex_quadratic_with_samples(dim, pi, seed, noise_scale, scale, None)
}

/// [`nonconvex_quadratic_scaled`] with explicit per-state perturbation
/// vectors (keyed by state index) instead of generated ones. Explicit
/// perturbations are not re-centered; the analytic population oracle absorbs
/// their stationary mean.
pub fn nonconvex_quadratic_with_samples(
    dim: usize,
    pi: &Vector,
    seed: u64,
    noise_scale: f64,
    scale: f64,
    explicit_noise: Option<Vec<Vec<f64>>>,
) -> Result<BuiltProblem> {
    if dim == 0 || pi.is_empty() {
        return Err(Error::Config(
            "nonconvex_quadratic needs dim >= 1 and a chain".into(),
        ));
    }
    if scale <= 0.0 {
        return Err(Error::Config(
            "nonconvex_quadratic scale must be > 0".into(),
        ));
    }
    let n_states = pi.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // A = Q D Q' with eigenvalues spread over [-1, 2]
    let q = random_orthogonal(dim, &mut rng);
    let eigs = Vector::from_fn(dim, |i| {
        scale
            * if dim == 1 {
                2.0
            } else {
                -1.0 + 3.0 * i as f64 / (dim - 1) as f64
            }
    });
    let mut a = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = 0.0;
            for k in 0..dim {
                acc += q[(i, k)] * eigs[k] * q[(j, k)];
            }
            a[(i, j)] = acc;
        }
    }
    let norm_a = eigs.iter().fold(0.0f64, |m, &e| m.max(e.abs()));

    let mut b = Vector::from_fn(dim, |_| rng.gen_range(-1.0..1.0));
    let bn = b.norm();
    if bn > 0.0 {
        b = b.scale(scale / bn);
    }

    let noises: Vec<Vector> = match explicit_noise {
        Some(raw) => {
            if raw.len() != n_states {
                return Err(Error::Config(format!(
                    "nonconvex_quadratic: {} perturbations supplied for {n_states} states",
                    raw.len()
                )));
            }
            raw.into_iter()
                .map(|v| {
                    let v = Vector::new(v);
                    v.check_dim(dim, "nonconvex_quadratic perturbation")
                        .map(|_| v)
                })
                .collect::<Result<_>>()?
        }
        None => {
            // centered per-state perturbations: sum_s pi_s nu_s = 0
            let mut generated: Vec<Vector> = (0..n_states)
                .map(|_| {
                    let mut v = Vector::from_fn(dim, |_| rng.gen_range(-1.0..1.0));
                    let n = v.norm();
                    if n > 0.0 {
                        v = v.scale(noise_scale / n);
                    }
                    v
                })
                .collect();
            let mut mean = Vector::zeros(dim);
            for (s, nu) in generated.iter().enumerate() {
                mean.axpy(pi[s], nu);
            }
            for nu in &mut generated {
                nu.axpy(-1.0, &mean);
            }
            generated
        }
    };
    let mut stationary_mean = Vector::zeros(dim);
    for (s, nu) in noises.iter().enumerate() {
        stationary_mean.axpy(pi[s], nu);
    }
    let max_noise = noises.iter().map(|v| v.norm()).fold(0.0, f64::max);

    let constraint = ConstraintSet::Box {
        lower: Vector::from_fn(dim, |_| -1.0),
        upper: Vector::from_fn(dim, |_| 1.0),
    };
    let sqrt_dim = (dim as f64).sqrt();
    let subgrad_bound = norm_a * sqrt_dim + b.norm() + max_noise + 1e-9;
    let value_bound = 0.5 * norm_a * dim as f64 + (b.norm() + max_noise) * sqrt_dim + 1e-9;

    let samples: Vec<SamplePoint> = noises
        .iter()
        .enumerate()
        .map(|(s, nu)| SamplePoint::with_state(nu.as_slice().to_vec(), s))
        .collect();

    let (a_loss, b_loss) = (a.clone(), b.clone());
    let (a_grad, b_grad) = (a.clone(), b.clone());
    let (a_full, b_full) = (a.clone(), b.clone());
    let (a_val, b_val) = (a, b);
    let mean_full = stationary_mean.clone();
    let mean_val = stationary_mean;
    let problem = WeaklyConvexProblem::builder()
        .sample_loss(move |theta: &Vector, x: &SamplePoint| {
            0.5 * theta.dot(&a_loss.matvec(theta)) + b_loss.dot(theta) + x.payload.dot(theta)
        })
        .stoch_subgrad(move |theta: &Vector, x: &SamplePoint| {
            let mut g = a_grad.matvec(theta);
            g.axpy(1.0, &b_grad);
            g.axpy(1.0, &x.payload);
            g
        })
        .full_grad(move |theta: &Vector| {
            let mut g = a_full.matvec(theta);
            g.axpy(1.0, &b_full);
            g.axpy(1.0, &mean_full);
            g
        })
        .full_value(move |theta: &Vector| {
            0.5 * theta.dot(&a_val.matvec(theta)) + b_val.dot(theta) + mean_val.dot(theta)
        })
        .rho(norm_a)
        .subgrad_bound(subgrad_bound)
        .subgrad_lipschitz(norm_a)
        .value_bound(value_bound)
        .constraint(constraint)
        .smooth(true)
        .build()?;

    Ok(BuiltProblem {
        problem,
        samples,
        default_init: Vector::zeros(dim),
        probe_dim: dim,
    })
}

/// `f(theta) = E_s |<a_s, theta>^2 - b_s|` over a ball: weakly convex and
/// nonsmooth. The subgradient selection jumps across the kink surfaces, so
/// the declared Lipschitz constant is an empirical bound for the sampled-pair
/// check rather than a pointwise one.
pub fn phase_retrieval_l1(dim: usize, n_states: usize, seed: u64) -> Result<BuiltProblem> {
    if dim == 0 || n_states == 0 {
        return Err(Error::Config(
            "phase_retrieval_l1 needs dim, n_states >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 2.0;
    let signal = {
        let raw = Vector::from_fn(dim, |_| rng.gen_range(-1.0..1.0));
        let n = raw.norm().max(1e-9);
        raw.scale(1.0 / n)
    };
    let mut samples = Vec::with_capacity(n_states);
    let mut payloads = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let raw = Vector::from_fn(dim, |_| rng.gen_range(-1.0..1.0));
        let n = raw.norm().max(1e-9);
        let a_s = raw.scale(1.0 / n);
        let b_s = a_s.dot(&signal).powi(2);
        let mut payload = a_s.as_slice().to_vec();
        payload.push(b_s);
        payloads.push((a_s, b_s));
        samples.push(SamplePoint::with_state(payload, s));
    }

    let constraint = ConstraintSet::Ball {
        center: Vector::zeros(dim),
        radius,
    };
    let max_b = payloads.iter().map(|(_, b)| *b).fold(0.0, f64::max);
    let subgrad_bound = 2.0 * radius + 1e-9; // 2 |<a,theta>| ||a|| with ||a|| = 1
    let value_bound = radius * radius + max_b + 1e-9;

    let split = move |x: &SamplePoint| -> (Vector, f64) {
        let d = x.payload.len() - 1;
        (Vector::from_fn(d, |i| x.payload[i]), x.payload[d])
    };
    let split_loss = split;
    let problem = WeaklyConvexProblem::builder()
        .sample_loss(move |theta: &Vector, x: &SamplePoint| {
            let (a_s, b_s) = split_loss(x);
            (a_s.dot(theta).powi(2) - b_s).abs()
        })
        .stoch_subgrad(move |theta: &Vector, x: &SamplePoint| {
            let (a_s, b_s) = split(x);
            let inner = a_s.dot(theta);
            let sign = if inner * inner - b_s >= 0.0 {
                1.0
            } else {
                -1.0
            };
            a_s.scale(2.0 * sign * inner)
        })
        .rho(2.0)
        .subgrad_bound(subgrad_bound)
        .subgrad_lipschitz(20.0)
        .value_bound(value_bound)
        .constraint(constraint.clone())
        .smooth(false)
        .build()?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1417);
    let default_init = constraint.sample_feasible(dim, &mut init_rng);
    Ok(BuiltProblem {
        problem,
        samples,
        default_init,
        probe_dim: dim,
    })
}

/// `f(theta) = E_s 1/2 ||theta - y_s||^2` with per-state targets, over the
/// whole space; pairs with an L1 regularizer for the proximal variant. The
/// declared subgradient and value bounds hold over the probe region the
/// constant checker samples from (the problem itself is unconstrained).
pub fn lasso_prox(
    dim: usize,
    pi: &Vector,
    seed: u64,
    targets: Option<Vec<Vec<f64>>>,
) -> Result<BuiltProblem> {
    if dim == 0 || pi.is_empty() {
        return Err(Error::Config(
            "lasso_prox needs dim >= 1 and a chain".into(),
        ));
    }
    let n_states = pi.len();
    let targets: Vec<Vector> = match targets {
        Some(list) => {
            if list.len() != n_states {
                return Err(Error::Config(format!(
                    "lasso_prox: {} targets supplied for a {n_states}-state chain",
                    list.len()
                )));
            }
            list.into_iter()
                .map(|t| {
                    let v = Vector::new(t);
                    v.check_dim(dim, "lasso_prox target").map(|_| v)
                })
                .collect::<Result<_>>()?
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_states)
                .map(|_| Vector::from_fn(dim, |_| rng.gen_range(-1.0..1.0)))
                .collect()
        }
    };
    let mut mean_target = Vector::zeros(dim);
    for (s, y) in targets.iter().enumerate() {
        mean_target.axpy(pi[s], y);
    }
    // E 1/2||theta - y||^2 = 1/2||theta - ybar||^2 + 1/2 (E||y||^2 - ||ybar||^2)
    let spread = 0.5
        * (targets
            .iter()
            .enumerate()
            .map(|(s, y)| pi[s] * y.norm_sq())
            .sum::<f64>()
            - mean_target.norm_sq());

    let max_target = targets.iter().map(|y| y.norm()).fold(0.0, f64::max);
    let probe_radius = 2.0 * (dim as f64).sqrt() + 1.0;
    let subgrad_bound = probe_radius + max_target + 1e-9;
    let value_bound = 0.5 * (probe_radius + max_target).powi(2) + 1e-9;

    let samples: Vec<SamplePoint> = targets
        .iter()
        .enumerate()
        .map(|(s, y)| SamplePoint::with_state(y.as_slice().to_vec(), s))
        .collect();

    let mean_grad = mean_target.clone();
    let mean_val = mean_target.clone();
    let problem = WeaklyConvexProblem::builder()
        .sample_loss(|theta: &Vector, x: &SamplePoint| 0.5 * theta.distance(&x.payload).powi(2))
        .stoch_subgrad(|theta: &Vector, x: &SamplePoint| theta.sub(&x.payload))
        .full_grad(move |theta: &Vector| theta.sub(&mean_grad))
        .full_value(move |theta: &Vector| 0.5 * theta.distance(&mean_val).powi(2) + spread)
        .rho(0.0)
        .subgrad_bound(subgrad_bound)
        .subgrad_lipschitz(1.0)
        .value_bound(value_bound)
        .constraint(ConstraintSet::WholeSpace)
        .smooth(true)
        .build()?;

    Ok(BuiltProblem {
        problem,
        samples,
        default_init: Vector::zeros(dim),
        probe_dim: dim,
    })
}

/// Random orthogonal matrix from modified Gram-Schmidt on a random square
/// matrix; only rotation-invariance in distribution matters here.
fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::zeros(dim, dim);
    loop {
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let mut ok = true;
        // orthonormalize columns
        for j in 0..dim {
            for k in 0..j {
                let dot: f64 = (0..dim).map(|i| m[(i, j)] * m[(i, k)]).sum();
                for i in 0..dim {
                    m[(i, j)] -= dot * m[(i, k)];
                }
            }
            let norm: f64 = (0..dim).map(|i| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for i in 0..dim {
                m[(i, j)] /= norm;
            }
        }
        if ok {
            return m;
        }
    }
}
