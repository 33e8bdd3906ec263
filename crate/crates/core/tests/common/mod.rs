//! Shared fixtures for the integration suites.
#![allow(dead_code)] // each test binary uses a different subset

use markovsgd::linalg::Matrix;
use markovsgd::*;

/// Single-state chain: every draw returns the same sample, so runs on it are
/// fully deterministic and serve as their own noise-free oracles.
pub fn single_state_chain(payload: Vec<f64>) -> MarkovChain {
    let p = Matrix::from_rows(vec![vec![1.0]]).unwrap();
    MarkovChain::new(p, vec![SamplePoint::with_state(payload, 0)]).unwrap()
}

pub fn two_state_chain(payloads: [Vec<f64>; 2]) -> MarkovChain {
    let p = Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let [a, b] = payloads;
    MarkovChain::new(
        p,
        vec![SamplePoint::with_state(a, 0), SamplePoint::with_state(b, 1)],
    )
    .unwrap()
}

/// `f(theta) = 1/2 (theta - target)^2` in one dimension; the sample is
/// ignored, so a run on any chain reduces to deterministic gradient descent.
pub fn quadratic_1d(target: f64, constraint: ConstraintSet) -> WeaklyConvexProblem {
    let t = target;
    WeaklyConvexProblem::builder()
        .sample_loss(move |theta: &Vector, _: &SamplePoint| 0.5 * (theta[0] - t).powi(2))
        .stoch_subgrad(move |theta: &Vector, _: &SamplePoint| Vector::new(vec![theta[0] - t]))
        .full_grad(move |theta: &Vector| Vector::new(vec![theta[0] - t]))
        .full_value(move |theta: &Vector| 0.5 * (theta[0] - t).powi(2))
        .rho(0.0)
        .subgrad_bound(50.0)
        .subgrad_lipschitz(1.0)
        .value_bound(1000.0)
        .constraint(constraint)
        .smooth(true)
        .build()
        .unwrap()
}

/// Constant-oracle problem: `G(theta, x) = g` independent of everything.
pub fn constant_grad(g: Vec<f64>, constraint: ConstraintSet) -> WeaklyConvexProblem {
    let g_loss = Vector::new(g.clone());
    let g_grad = Vector::new(g.clone());
    let g_full = Vector::new(g.clone());
    let bound = g_full.norm().max(1e-6) + 1.0;
    WeaklyConvexProblem::builder()
        .sample_loss(move |theta: &Vector, _: &SamplePoint| g_loss.dot(theta))
        .stoch_subgrad(move |_: &Vector, _: &SamplePoint| g_grad.clone())
        .full_grad(move |_: &Vector| g_full.clone())
        .rho(0.0)
        .subgrad_bound(bound)
        .subgrad_lipschitz(1.0)
        .value_bound(1000.0)
        .constraint(constraint)
        .smooth(true)
        .build()
        .unwrap()
}

pub fn unit_box(dim: usize) -> ConstraintSet {
    ConstraintSet::Box {
        lower: Vector::from_fn(dim, |_| -1.0),
        upper: Vector::from_fn(dim, |_| 1.0),
    }
}
