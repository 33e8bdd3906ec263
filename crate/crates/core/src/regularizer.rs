//! Convex regularizers and their proximal operators.

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// A convex, proper, closed regularizer with a single-valued prox.
#[derive(Clone, Debug, PartialEq)]
pub enum Regularizer {
    /// `r = 0`; prox is the identity.
    Zero,
    /// `r = weight * ||.||_1`; prox is soft-thresholding.
    L1 { weight: f64 },
    /// Indicator of a closed convex set; prox is the projection,
    /// independently of the step.
    Indicator(ConstraintSet),
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match self {
            Regularizer::L1 { weight } => {
                if *weight >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "L1 weight must be >= 0, got {weight}"
                    )))
                }
            }
            Regularizer::Indicator(set) => set.validate(),
            Regularizer::Zero => Ok(()),
        }
    }

    /// Regularizer value at `v` (`+inf` outside an indicator's set is
    /// reported as `f64::INFINITY`).
    pub fn value(&self, v: &Vector) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight } => weight * v.iter().map(|x| x.abs()).sum::<f64>(),
            Regularizer::Indicator(set) => {
                if set.contains(v) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// `argmin_u { reg(u) + 1/(2 step) ||u - v||^2 }`.
pub fn prox_reg(reg: &Regularizer, step: f64, v: &Vector) -> Result<Vector> {
    if step <= 0.0 {
        return Err(Error::Config(format!("prox step must be > 0, got {step}")));
    }
    Ok(match reg {
        Regularizer::Zero => v.clone(),
        Regularizer::L1 { weight } => {
            let threshold = step * weight;
            Vector::from_fn(v.len(), |i| soft_threshold(v[i], threshold))
        }
        Regularizer::Indicator(set) => set.project(v)?,
    })
}

fn soft_threshold(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}
