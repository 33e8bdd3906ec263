//! The problem-oracle abstraction consumed by every algorithm: a per-sample
//! loss, a stochastic subgradient oracle, optional exact population oracles,
//! and the constants of the standing assumptions (weak-convexity modulus,
//! subgradient bound, subgradient Lipschitz constant, value bound).

use std::sync::Arc;

use rand::Rng;

use crate::chain::MarkovChain;
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// One training sample: a dense payload (vectors, or matrices flattened
/// row-major) plus the index of the chain state that generated it, when known.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePoint {
    pub payload: Vector,
    pub state_index: Option<usize>,
}

impl SamplePoint {
    pub fn new(payload: Vec<f64>) -> Self {
        SamplePoint {
            payload: Vector::new(payload),
            state_index: None,
        }
    }

    pub fn with_state(payload: Vec<f64>, state: usize) -> Self {
        SamplePoint {
            payload: Vector::new(payload),
            state_index: Some(state),
        }
    }
}

type LossFn = dyn Fn(&Vector, &SamplePoint) -> f64 + Send + Sync;
type SubgradFn = dyn Fn(&Vector, &SamplePoint) -> Vector + Send + Sync;
type FullGradFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type FullValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;

/// A weakly convex expected-loss minimization problem over a closed convex
/// set, described through its sampling oracles.
///
/// The oracles are infallible maps; an oracle signalling trouble does so by
/// returning non-finite values, which every run loop detects and converts
/// into an aborted-run error instead of letting NaN propagate.
pub struct WeaklyConvexProblem {
    sample_loss: Arc<LossFn>,
    stoch_subgrad: Arc<SubgradFn>,
    full_grad: Option<Arc<FullGradFn>>,
    full_value: Option<Arc<FullValueFn>>,
    /// Weak-convexity modulus rho (f + rho/2 ||.||^2 convex).
    pub rho: f64,
    /// Uniform bound L on the stochastic subgradient norm.
    pub subgrad_bound: f64,
    /// Lipschitz constant L1 of theta -> G(theta, x) for each x.
    pub subgrad_lipschitz: f64,
    /// Bound C on |f| over the constraint set.
    pub value_bound: f64,
    /// The constraint set Theta.
    pub constraint: ConstraintSet,
    /// Whether f is C^1 with Lipschitz gradient (enables gradient-mapping
    /// and post-processing diagnostics).
    pub smooth: bool,
}

impl Clone for WeaklyConvexProblem {
    fn clone(&self) -> Self {
        WeaklyConvexProblem {
            sample_loss: Arc::clone(&self.sample_loss),
            stoch_subgrad: Arc::clone(&self.stoch_subgrad),
            full_grad: self.full_grad.clone(),
            full_value: self.full_value.clone(),
            rho: self.rho,
            subgrad_bound: self.subgrad_bound,
            subgrad_lipschitz: self.subgrad_lipschitz,
            value_bound: self.value_bound,
            constraint: self.constraint.clone(),
            smooth: self.smooth,
        }
    }
}

impl std::fmt::Debug for WeaklyConvexProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeaklyConvexProblem")
            .field("rho", &self.rho)
            .field("subgrad_bound", &self.subgrad_bound)
            .field("subgrad_lipschitz", &self.subgrad_lipschitz)
            .field("value_bound", &self.value_bound)
            .field("constraint", &self.constraint)
            .field("smooth", &self.smooth)
            .field("has_full_grad", &self.full_grad.is_some())
            .finish()
    }
}

impl WeaklyConvexProblem {
    pub fn builder() -> ProblemBuilder {
        ProblemBuilder::default()
    }

    pub fn loss(&self, theta: &Vector, x: &SamplePoint) -> f64 {
        (self.sample_loss)(theta, x)
    }

    pub fn subgrad(&self, theta: &Vector, x: &SamplePoint) -> Vector {
        (self.stoch_subgrad)(theta, x)
    }

    /// Exact population (sub)gradient, when available.
    pub fn full_grad(&self, theta: &Vector) -> Option<Vector> {
        self.full_grad.as_ref().map(|g| g(theta))
    }

    /// Exact population objective value, when available.
    pub fn full_value(&self, theta: &Vector) -> Option<f64> {
        self.full_value.as_ref().map(|v| v(theta))
    }

    pub fn has_full_oracle(&self) -> bool {
        self.full_grad.is_some()
    }

    pub fn has_full_value(&self) -> bool {
        self.full_value.is_some()
    }

    /// Installs population oracles computed as exact pi-weighted sums over
    /// the finite state space of `chain`.
    pub fn with_population_oracle_from(mut self, chain: &MarkovChain) -> Self {
        let grad_chain = chain.clone();
        let value_chain = chain.clone();
        let subgrad = Arc::clone(&self.stoch_subgrad);
        let loss = Arc::clone(&self.sample_loss);
        self.full_grad = Some(Arc::new(move |theta: &Vector| {
            weighted_gradient(&grad_chain, theta, |t, x| subgrad(t, x))
        }));
        self.full_value = Some(Arc::new(move |theta: &Vector| {
            weighted_value(&value_chain, theta, |t, x| loss(t, x))
        }));
        self
    }

    /// Randomized sanity check of the declared constants: probes feasible
    /// points (pairs for the Lipschitz bound) against every state's sample.
    /// `probe_dim` is the ambient dimension, `samples` the per-state samples.
    pub fn check_constants(
        &self,
        probe_dim: usize,
        samples: &[SamplePoint],
        probes: usize,
        rng: &mut impl Rng,
    ) -> Result<()> {
        for _ in 0..probes {
            let theta = self.constraint.sample_feasible(probe_dim, rng);
            let theta2 = self.constraint.sample_feasible(probe_dim, rng);
            let x = &samples[rng.gen_range(0..samples.len())];
            let g = self.subgrad(&theta, x);
            if !g.all_finite() {
                return Err(Error::Precondition(
                    "constant check: subgradient oracle produced non-finite values".into(),
                ));
            }
            let gn = g.norm();
            if gn > self.subgrad_bound * (1.0 + 1e-9) {
                return Err(Error::Precondition(format!(
                    "constant check: ||G|| = {gn:.6} exceeds declared bound {}",
                    self.subgrad_bound
                )));
            }
            let g2 = self.subgrad(&theta2, x);
            let lhs = g.distance(&g2);
            let rhs = self.subgrad_lipschitz * theta.distance(&theta2);
            if lhs > rhs + 1e-9 {
                return Err(Error::Precondition(format!(
                    "constant check: ||G(a,x)-G(b,x)|| = {lhs:.6} exceeds L1 * ||a-b|| = {rhs:.6}"
                )));
            }
            let val = self.loss(&theta, x).abs();
            if val > self.value_bound * (1.0 + 1e-9) {
                return Err(Error::Precondition(format!(
                    "constant check: |loss| = {val:.6} exceeds declared bound {}",
                    self.value_bound
                )));
            }
        }
        Ok(())
    }
}

/// Builder for [`WeaklyConvexProblem`]; loss, subgradient, constants and
/// constraint are mandatory.
#[derive(Default)]
pub struct ProblemBuilder {
    sample_loss: Option<Arc<LossFn>>,
    stoch_subgrad: Option<Arc<SubgradFn>>,
    full_grad: Option<Arc<FullGradFn>>,
    full_value: Option<Arc<FullValueFn>>,
    rho: Option<f64>,
    subgrad_bound: Option<f64>,
    subgrad_lipschitz: Option<f64>,
    value_bound: Option<f64>,
    constraint: Option<ConstraintSet>,
    smooth: bool,
}

impl ProblemBuilder {
    pub fn sample_loss(
        mut self,
        f: impl Fn(&Vector, &SamplePoint) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.sample_loss = Some(Arc::new(f));
        self
    }

    pub fn stoch_subgrad(
        mut self,
        f: impl Fn(&Vector, &SamplePoint) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.stoch_subgrad = Some(Arc::new(f));
        self
    }

    pub fn full_grad(mut self, f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.full_grad = Some(Arc::new(f));
        self
    }

    pub fn full_value(mut self, f: impl Fn(&Vector) -> f64 + Send + Sync + 'static) -> Self {
        self.full_value = Some(Arc::new(f));
        self
    }

    pub fn rho(mut self, rho: f64) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn subgrad_bound(mut self, l: f64) -> Self {
        self.subgrad_bound = Some(l);
        self
    }

    pub fn subgrad_lipschitz(mut self, l1: f64) -> Self {
        self.subgrad_lipschitz = Some(l1);
        self
    }

    pub fn value_bound(mut self, c: f64) -> Self {
        self.value_bound = Some(c);
        self
    }

    pub fn constraint(mut self, set: ConstraintSet) -> Self {
        self.constraint = Some(set);
        self
    }

    pub fn smooth(mut self, smooth: bool) -> Self {
        self.smooth = smooth;
        self
    }

    pub fn build(self) -> Result<WeaklyConvexProblem> {
        let constraint = self
            .constraint
            .ok_or_else(|| Error::Config("problem: constraint set required".into()))?;
        constraint.validate()?;
        let rho = self
            .rho
            .ok_or_else(|| Error::Config("problem: rho required".into()))?;
        if rho < 0.0 {
            return Err(Error::Config(format!(
                "problem: rho must be >= 0, got {rho}"
            )));
        }
        let positive = |name: &str, v: Option<f64>| -> Result<f64> {
            let v = v.ok_or_else(|| Error::Config(format!("problem: {name} required")))?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::Config(format!(
                    "problem: {name} must be > 0, got {v}"
                )))
            }
        };
        Ok(WeaklyConvexProblem {
            sample_loss: self
                .sample_loss
                .ok_or_else(|| Error::Config("problem: sample loss required".into()))?,
            stoch_subgrad: self
                .stoch_subgrad
                .ok_or_else(|| Error::Config("problem: stochastic subgradient required".into()))?,
            full_grad: self.full_grad,
            full_value: self.full_value,
            rho,
            subgrad_bound: positive("subgrad_bound", self.subgrad_bound)?,
            subgrad_lipschitz: positive("subgrad_lipschitz", self.subgrad_lipschitz)?,
            value_bound: positive("value_bound", self.value_bound)?,
            constraint,
            smooth: self.smooth,
        })
    }
}

fn weighted_gradient(
    chain: &MarkovChain,
    theta: &Vector,
    subgrad: impl Fn(&Vector, &SamplePoint) -> Vector,
) -> Vector {
    let pi = chain.stationary();
    let mut acc = Vector::zeros(theta.len());
    for s in 0..chain.n_states() {
        let g = subgrad(theta, chain.sample_of_state(s));
        acc.axpy(pi[s], &g);
    }
    acc
}

fn weighted_value(
    chain: &MarkovChain,
    theta: &Vector,
    loss: impl Fn(&Vector, &SamplePoint) -> f64,
) -> f64 {
    let pi = chain.stationary();
    (0..chain.n_states())
        .map(|s| pi[s] * loss(theta, chain.sample_of_state(s)))
        .sum()
}

/// Exact population subgradient `sum_s pi(s) G(theta, sample(s))`.
pub fn expected_gradient(
    problem: &WeaklyConvexProblem,
    chain: &MarkovChain,
    theta: &Vector,
) -> Vector {
    weighted_gradient(chain, theta, |t, x| problem.subgrad(t, x))
}

/// Exact population loss `sum_s pi(s) loss(theta, sample(s))`.
pub fn expected_loss(problem: &WeaklyConvexProblem, chain: &MarkovChain, theta: &Vector) -> f64 {
    weighted_value(chain, theta, |t, x| problem.loss(t, x))
}
