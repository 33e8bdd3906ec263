//! Closed convex constraint sets with analytic projections and exact
//! normal-cone distances.
//!
//! The variant list covers every benchmark in the crate: boxes and balls for
//! the smooth/nonsmooth test problems, the nonnegative orthant and the
//! nonnegative norm ball for dictionary learning, and the probability simplex.
//! All projections are closed-form (the simplex uses the standard
//! sort-and-threshold scheme), so feasibility and stationarity diagnostics
//! carry no inner-solver noise.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Absolute per-coordinate feasibility tolerance used by precondition checks.
/// Two orders of magnitude above double-precision projection error.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A closed convex set with an efficiently computable projection.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSet {
    /// All of R^p; projection is the identity.
    WholeSpace,
    /// Componentwise bounds `lower <= x <= upper`.
    Box { lower: Vector, upper: Vector },
    /// Euclidean ball of positive radius around a center.
    Ball { center: Vector, radius: f64 },
    /// `x >= 0` componentwise.
    NonnegOrthant,
    /// `{ x >= 0, sum x = scale }` with `scale > 0`.
    Simplex { scale: f64 },
    /// `{ x >= 0, ||x|| <= radius }`: nonnegative vectors (flattened
    /// matrices) with bounded Euclidean/Frobenius norm.
    NonnegBall { radius: f64 },
}

impl ConstraintSet {
    /// Validates internal invariants (bound ordering, positive radii).
    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch {
                        context: "Box bounds",
                        expected: lower.len(),
                        got: upper.len(),
                    });
                }
                for i in 0..lower.len() {
                    if lower[i] > upper[i] {
                        return Err(Error::Config(format!(
                            "Box bound {i}: lower {} > upper {}",
                            lower[i], upper[i]
                        )));
                    }
                }
                Ok(())
            }
            ConstraintSet::Ball { radius, .. } | ConstraintSet::NonnegBall { radius } => {
                if *radius > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "ball radius must be > 0, got {radius}"
                    )))
                }
            }
            ConstraintSet::Simplex { scale } => {
                if *scale > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "simplex scale must be > 0, got {scale}"
                    )))
                }
            }
            _ => Ok(()),
        }
    }

    /// Dimension the set is pinned to, when it has one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ConstraintSet::Box { lower, .. } => Some(lower.len()),
            ConstraintSet::Ball { center, .. } => Some(center.len()),
            _ => None,
        }
    }

    fn check_dim(&self, v: &Vector, context: &'static str) -> Result<()> {
        if let Some(d) = self.dim() {
            v.check_dim(d, context)?;
        }
        Ok(())
    }

    /// Membership within [`FEASIBILITY_TOL`].
    pub fn contains(&self, v: &Vector) -> bool {
        let tol = FEASIBILITY_TOL;
        match self {
            ConstraintSet::WholeSpace => true,
            ConstraintSet::Box { lower, upper } => {
                v.len() == lower.len()
                    && (0..v.len()).all(|i| v[i] >= lower[i] - tol && v[i] <= upper[i] + tol)
            }
            ConstraintSet::Ball { center, radius } => {
                v.len() == center.len() && v.distance(center) <= radius + tol
            }
            ConstraintSet::NonnegOrthant => v.iter().all(|&x| x >= -tol),
            ConstraintSet::Simplex { scale } => {
                v.iter().all(|&x| x >= -tol)
                    && (v.iter().sum::<f64>() - scale).abs() <= tol * (v.len() as f64 + 1.0)
            }
            ConstraintSet::NonnegBall { radius } => {
                v.iter().all(|&x| x >= -tol) && v.norm() <= radius + tol
            }
        }
    }

    /// Euclidean projection `argmin_{u in set} 1/2 ||u - v||^2`.
    pub fn project(&self, v: &Vector) -> Result<Vector> {
        self.check_dim(v, "project")?;
        Ok(match self {
            ConstraintSet::WholeSpace => v.clone(),
            ConstraintSet::Box { lower, upper } => {
                Vector::from_fn(v.len(), |i| v[i].max(lower[i]).min(upper[i]))
            }
            ConstraintSet::Ball { center, radius } => {
                let d = v.sub(center);
                let norm = d.norm();
                if norm <= *radius {
                    v.clone()
                } else {
                    center.add_scaled(radius / norm, &d)
                }
            }
            ConstraintSet::NonnegOrthant => Vector::from_fn(v.len(), |i| v[i].max(0.0)),
            ConstraintSet::Simplex { scale } => project_simplex(v, *scale),
            ConstraintSet::NonnegBall { radius } => {
                let clamped = Vector::from_fn(v.len(), |i| v[i].max(0.0));
                let norm = clamped.norm();
                if norm <= *radius {
                    clamped
                } else {
                    clamped.scale(radius / norm)
                }
            }
        })
    }

    /// `dist(0, g + N_set(theta))`, the distance from the origin to the
    /// shifted normal cone at `theta`. Zero exactly when `-g` lies in the
    /// normal cone, i.e. when `theta` is a constrained stationary point for a
    /// gradient `g`.
    pub fn normal_cone_dist(&self, theta: &Vector, g: &Vector) -> Result<f64> {
        self.check_dim(theta, "normal_cone_dist")?;
        if theta.len() != g.len() {
            return Err(Error::DimensionMismatch {
                context: "normal_cone_dist gradient",
                expected: theta.len(),
                got: g.len(),
            });
        }
        if !self.contains(theta) {
            return Err(Error::Precondition(
                "normal_cone_dist: point is infeasible beyond tolerance".into(),
            ));
        }
        let tol = FEASIBILITY_TOL;
        Ok(match self {
            ConstraintSet::WholeSpace => g.norm(),
            ConstraintSet::Box { lower, upper } => {
                let mut sq = 0.0;
                for i in 0..theta.len() {
                    let pinned = upper[i] - lower[i] <= 2.0 * tol;
                    let at_lower = theta[i] <= lower[i] + tol;
                    let at_upper = theta[i] >= upper[i] - tol;
                    let r = if pinned {
                        0.0
                    } else if at_lower {
                        (-g[i]).max(0.0)
                    } else if at_upper {
                        g[i].max(0.0)
                    } else {
                        g[i].abs()
                    };
                    sq += r * r;
                }
                sq.sqrt()
            }
            ConstraintSet::Ball { center, radius } => {
                let d = theta.sub(center);
                let norm = d.norm();
                if norm < radius - tol {
                    g.norm()
                } else {
                    // boundary: normal cone is the outward ray along d
                    let u = d.scale(1.0 / norm);
                    let t = (-g.dot(&u)).max(0.0);
                    g.add_scaled(t, &u).norm()
                }
            }
            ConstraintSet::NonnegOrthant => {
                let mut sq = 0.0;
                for i in 0..theta.len() {
                    let r = if theta[i] <= tol {
                        (-g[i]).max(0.0)
                    } else {
                        g[i].abs()
                    };
                    sq += r * r;
                }
                sq.sqrt()
            }
            ConstraintSet::Simplex { scale } => simplex_normal_cone_dist(theta, g, *scale),
            ConstraintSet::NonnegBall { radius } => {
                let active: Vec<bool> = theta.iter().map(|&x| x <= tol).collect();
                let mut sq_active = 0.0;
                for i in 0..theta.len() {
                    if active[i] {
                        let r = (-g[i]).max(0.0);
                        sq_active += r * r;
                    }
                }
                if theta.norm() < radius - tol {
                    // sphere inactive: orthant-only normal cone
                    let mut sq = sq_active;
                    for i in 0..theta.len() {
                        if !active[i] {
                            sq += g[i] * g[i];
                        }
                    }
                    sq.sqrt()
                } else {
                    // sphere active: minimize ||g + mu*theta + n||, mu >= 0.
                    // Active coordinates decouple because theta_i = 0 there.
                    let (mut gt, mut tt) = (0.0, 0.0);
                    for i in 0..theta.len() {
                        if !active[i] {
                            gt += g[i] * theta[i];
                            tt += theta[i] * theta[i];
                        }
                    }
                    let mu = if tt > 0.0 { (-gt / tt).max(0.0) } else { 0.0 };
                    let mut sq = sq_active;
                    for i in 0..theta.len() {
                        if !active[i] {
                            let r = g[i] + mu * theta[i];
                            sq += r * r;
                        }
                    }
                    sq.sqrt()
                }
            }
        })
    }

    /// Draws a feasible point by projecting a scaled uniform sample. Test
    /// and verification helper; deterministic given the generator state.
    pub fn sample_feasible(&self, dim: usize, rng: &mut impl Rng) -> Vector {
        let scale = match self {
            ConstraintSet::Ball { radius, .. } | ConstraintSet::NonnegBall { radius } => {
                2.0 * radius
            }
            ConstraintSet::Simplex { scale } => 2.0 * scale,
            _ => 2.0,
        };
        let raw = Vector::from_fn(dim, |_| rng.gen_range(-scale..scale));
        self.project(&raw).expect("projection of sampled point")
    }
}

/// Sort-and-threshold projection onto `{ x >= 0, sum x = scale }`.
fn project_simplex(v: &Vector, scale: f64) -> Vector {
    let mut sorted: Vec<f64> = v.as_slice().to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - scale) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    Vector::from_fn(v.len(), |i| (v[i] - tau).max(0.0))
}

/// Distance from the origin to `g + N` at a simplex point, computed as the
/// norm of the projection of `-g` onto the tangent cone
/// `{ d : sum d = 0, d_i >= 0 for active i }` (Moreau decomposition).
fn simplex_normal_cone_dist(theta: &Vector, g: &Vector, scale: f64) -> f64 {
    let tol = FEASIBILITY_TOL * (1.0 + scale);
    let w: Vec<f64> = g.iter().map(|&x| -x).collect();
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    let mut active: Vec<f64> = Vec::new();
    for i in 0..theta.len() {
        if theta[i] <= tol {
            active.push(w[i]);
        } else {
            free_sum += w[i];
            n_free += 1;
        }
    }
    // A feasible simplex point always has at least one coordinate >= scale/n.
    debug_assert!(n_free > 0, "simplex point with no free coordinate");
    active.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));

    // h(mu) = sum_free (w_i - mu) + sum_{active, w_i > mu} (w_i - mu) is
    // piecewise linear and strictly decreasing; find its root by scanning
    // the candidate active sets in decreasing-w order.
    let mut mu = free_sum / n_free as f64;
    let mut top_sum = 0.0;
    for k in 0..=active.len() {
        let cand = (free_sum + top_sum) / (n_free + k) as f64;
        let upper_ok = k == 0 || active[k - 1] > cand;
        let lower_ok = k == active.len() || active[k] <= cand;
        if upper_ok && lower_ok {
            mu = cand;
            break;
        }
        if k < active.len() {
            top_sum += active[k];
        }
    }

    let mut sq = 0.0;
    for i in 0..theta.len() {
        let d = if theta[i] <= tol {
            (w[i] - mu).max(0.0)
        } else {
            w[i] - mu
        };
        sq += d * d;
    }
    sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::new(vec![a, b])
    }

    #[test]
    fn box_projection_clamps() {
        let set = ConstraintSet::Box {
            lower: vec2(0.0, 0.0),
            upper: vec2(1.0, 1.0),
        };
        let p = set.project(&vec2(1.5, -0.3)).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn ball_projection_radial() {
        let set = ConstraintSet::Ball {
            center: vec2(0.0, 0.0),
            radius: 1.0,
        };
        let p = set.project(&vec2(3.0, 4.0)).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15);
        assert!((p[1] - 0.8).abs() < 1e-15);
    }

    // Brute-force grid oracle for the 2-D simplex projection: minimize
    // 1/2 ||u - v||^2 over u = (x, scale - x), x in [0, scale].
    fn simplex2_oracle(v: &Vector, scale: f64) -> Vector {
        let mut best = (f64::INFINITY, 0.0);
        let n = 200_000;
        for k in 0..=n {
            let x = scale * k as f64 / n as f64;
            let d = (x - v[0]).powi(2) + (scale - x - v[1]).powi(2);
            if d < best.0 {
                best = (d, x);
            }
        }
        vec2(best.1, scale - best.1)
    }

    #[test]
    fn simplex_projection_matches_grid_oracle() {
        let set = ConstraintSet::Simplex { scale: 1.0 };
        let v = vec2(0.2, 0.2);
        let p = set.project(&v).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
        let oracle = simplex2_oracle(&v, 1.0);
        assert!(p.distance(&oracle) < 1e-5);

        // one-sided input lands on a vertex
        let q = set.project(&vec2(2.0, -1.0)).unwrap();
        let oracle = simplex2_oracle(&vec2(2.0, -1.0), 1.0);
        assert!(q.distance(&oracle) < 1e-5);
    }

    #[test]
    fn projection_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sets = all_test_sets();
        for set in &sets {
            for _ in 0..200 {
                let v = Vector::from_fn(3, |_| rng.gen_range(-3.0..3.0));
                let p = set.project(&v).unwrap();
                let pp = set.project(&p).unwrap();
                assert!(p.distance(&pp) <= 1e-12, "idempotence failed for {set:?}");
                assert!(set.contains(&p), "projection left the set for {set:?}");
            }
        }
    }

    #[test]
    fn normal_cone_dist_box_examples() {
        let set = ConstraintSet::Box {
            lower: Vector::new(vec![0.0]),
            upper: Vector::new(vec![1.0]),
        };
        let d = set
            .normal_cone_dist(&Vector::new(vec![0.0]), &Vector::new(vec![2.0]))
            .unwrap();
        assert_eq!(d, 0.0);
        let d = set
            .normal_cone_dist(&Vector::new(vec![0.5]), &Vector::new(vec![2.0]))
            .unwrap();
        assert_eq!(d, 2.0);
        let d = ConstraintSet::WholeSpace
            .normal_cone_dist(&vec2(0.0, 0.0), &vec2(3.0, 4.0))
            .unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn normal_cone_dist_rejects_infeasible() {
        let set = ConstraintSet::NonnegOrthant;
        let err = set
            .normal_cone_dist(&vec2(-1.0, 0.0), &vec2(0.0, 0.0))
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    fn all_test_sets() -> Vec<ConstraintSet> {
        vec![
            ConstraintSet::WholeSpace,
            ConstraintSet::Box {
                lower: Vector::new(vec![-1.0, 0.0, -0.5]),
                upper: Vector::new(vec![1.0, 2.0, 0.5]),
            },
            ConstraintSet::Ball {
                center: Vector::new(vec![0.5, 0.0, 0.0]),
                radius: 1.5,
            },
            ConstraintSet::NonnegOrthant,
            ConstraintSet::Simplex { scale: 2.0 },
            ConstraintSet::NonnegBall { radius: 1.0 },
        ]
    }

    #[test]
    fn nonexpansiveness_and_variational_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for set in &all_test_sets() {
            for _ in 0..1000 {
                let v = Vector::from_fn(3, |_| rng.gen_range(-4.0..4.0));
                let w = Vector::from_fn(3, |_| rng.gen_range(-4.0..4.0));
                let pv = set.project(&v).unwrap();
                let pw = set.project(&w).unwrap();
                assert!(
                    pv.distance(&pw) <= v.distance(&w) + 1e-12,
                    "nonexpansiveness failed for {set:?}"
                );
                let u = set.sample_feasible(3, &mut rng);
                // <v - proj(v), u - proj(v)> <= 0 for feasible u
                let lhs = v.sub(&pv).dot(&u.sub(&pv));
                assert!(
                    lhs <= 1e-9,
                    "variational inequality failed for {set:?}: {lhs}"
                );
            }
        }
    }

    #[test]
    fn normal_cone_dist_zero_iff_projection_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for set in &all_test_sets() {
            for _ in 0..500 {
                let theta = set.sample_feasible(3, &mut rng);
                let g = Vector::from_fn(3, |_| rng.gen_range(-2.0..2.0));
                let dist = set.normal_cone_dist(&theta, &g).unwrap();
                let moved = set.project(&theta.sub(&g)).unwrap();
                let displacement = moved.distance(&theta);
                if dist <= 1e-10 {
                    assert!(
                        displacement <= 1e-7,
                        "dist 0 but projection moved by {displacement} for {set:?}"
                    );
                }
                if displacement <= 1e-12 {
                    assert!(
                        dist <= 1e-6,
                        "fixed point but normal-cone dist {dist} for {set:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn nonneg_ball_normal_cone_boundary() {
        let set = ConstraintSet::NonnegBall { radius: 1.0 };
        // On the sphere with gradient pointing inward along -theta:
        // -g = theta is in the normal cone, distance 0.
        let theta = vec2(1.0, 0.0);
        let d = set.normal_cone_dist(&theta, &vec2(-1.0, 0.0)).unwrap();
        assert!(d < 1e-12);
        // Moving along +e2 stays feasible and decreases <g, .> for g = (0,-1),
        // so that gradient cannot be absorbed by the cone.
        let d = set.normal_cone_dist(&theta, &vec2(0.0, -1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }
}
