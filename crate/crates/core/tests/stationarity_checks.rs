//! Moreau envelope, gradient mapping, gap and post-processing checks:
//! closed-form proximal points, a grid-minimization oracle for the
//! constrained case, finite-difference consistency of the envelope gradient,
//! and the prox-map regularity bounds asserted on random pairs.

mod common;

use common::*;
use markovsgd::problems::nonconvex_quadratic;
use markovsgd::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn moreau_quadratic_closed_form() {
    // f = theta^2/2 unconstrained, rho_hat = 1: proxpoint = theta/2
    let problem = quadratic_1d(0.0, ConstraintSet::WholeSpace);
    let cfg = MoreauConfig::new(1.0);
    let theta = Vector::new(vec![2.0]);
    let proxpoint = moreau_prox(&problem, &cfg, &theta).unwrap();
    assert!((proxpoint[0] - 1.0).abs() < 1e-8);
    let grad = moreau_grad(&problem, &cfg, &theta).unwrap();
    assert!((grad[0] - 1.0).abs() < 1e-8);
    let value = moreau_value(&problem, &cfg, &theta).unwrap();
    assert!((value - 1.0).abs() < 1e-8);
}

#[test]
fn moreau_fixed_point_at_stationary_theta() {
    let set = ConstraintSet::Box {
        lower: Vector::new(vec![0.0]),
        upper: Vector::new(vec![1.0]),
    };
    let problem = quadratic_1d(0.3, set);
    let cfg = MoreauConfig::new(2.0);
    let theta = Vector::new(vec![0.3]);
    let proxpoint = moreau_prox(&problem, &cfg, &theta).unwrap();
    assert!(theta.distance(&proxpoint) < 1e-8);
    assert!(moreau_grad(&problem, &cfg, &theta).unwrap().norm() < 1e-8);
    // at the stationary point the envelope equals the objective value
    let value = moreau_value(&problem, &cfg, &theta).unwrap();
    assert!(value.abs() < 1e-12);
}

#[test]
fn moreau_constrained_matches_grid_oracle() {
    // f = (theta-3)^2/2 on [0,1], rho_hat = 2, theta = 0.5: the penalized
    // objective (u-3)^2/2 + (u-0.5)^2 has unconstrained argmin 4/3, clipped
    // to the box at 1.
    let set = ConstraintSet::Box {
        lower: Vector::new(vec![0.0]),
        upper: Vector::new(vec![1.0]),
    };
    let problem = quadratic_1d(3.0, set);
    let cfg = MoreauConfig::new(2.0);
    let theta = Vector::new(vec![0.5]);
    let proxpoint = moreau_prox(&problem, &cfg, &theta).unwrap();

    // independent brute-force grid minimization of the prox objective
    let mut best = (f64::INFINITY, f64::NAN);
    let n = 1_000_000;
    for k in 0..=n {
        let u = k as f64 / n as f64;
        let val = 0.5 * (u - 3.0).powi(2) + (u - 0.5).powi(2);
        if val < best.0 {
            best = (val, u);
        }
    }
    assert!((best.1 - 1.0).abs() < 1e-5, "grid oracle found {}", best.1);
    assert!((proxpoint[0] - best.1).abs() < 1e-5);
    // KKT at the active upper bound: gradient of the penalized objective
    // must push outward
    let push = (proxpoint[0] - 3.0) + 2.0 * (proxpoint[0] - 0.5);
    assert!(push < 0.0);
}

#[test]
fn moreau_envelope_never_exceeds_objective() {
    let built = nonconvex_quadratic(4, &Vector::new(vec![1.0]), 11, 0.0).unwrap();
    let problem = built.problem;
    let cfg = MoreauConfig::new(2.0 * problem.rho);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let theta = problem.constraint.sample_feasible(4, &mut rng);
        let envelope = moreau_value(&problem, &cfg, &theta).unwrap();
        let direct = problem.full_value(&theta).unwrap();
        assert!(
            envelope <= direct + 1e-9,
            "envelope {envelope} > objective {direct}"
        );
    }
}

#[test]
fn moreau_gradient_matches_finite_differences() {
    // smooth 5-D problem; central differences of the envelope value
    let built = nonconvex_quadratic(5, &Vector::new(vec![1.0]), 7, 0.0).unwrap();
    let problem = built.problem;
    let cfg = MoreauConfig::new(2.0 * problem.rho).with_tol(1e-11);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-5;
    for _ in 0..5 {
        let theta = problem.constraint.sample_feasible(5, &mut rng);
        let grad = moreau_grad(&problem, &cfg, &theta).unwrap();
        let mut fd = Vector::zeros(5);
        for i in 0..5 {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            fd[i] = (moreau_value(&problem, &cfg, &plus).unwrap()
                - moreau_value(&problem, &cfg, &minus).unwrap())
                / (2.0 * h);
        }
        let rel = grad.distance(&fd) / grad.norm().max(1e-12);
        assert!(rel <= 1e-4, "finite-difference mismatch: rel err {rel}");
    }
}

#[test]
fn prox_map_lipschitz_bound() {
    // 1-D closed form: f = -theta^2/2 is 1-weakly convex; with rho_hat = 2
    // the proximal map is exactly theta -> 2 theta, Lipschitz rho_hat/(rho_hat-rho) = 2.
    let problem = WeaklyConvexProblem::builder()
        .sample_loss(|theta: &Vector, _: &SamplePoint| -0.5 * theta[0] * theta[0])
        .stoch_subgrad(|theta: &Vector, _: &SamplePoint| Vector::new(vec![-theta[0]]))
        .full_grad(|theta: &Vector| Vector::new(vec![-theta[0]]))
        .full_value(|theta: &Vector| -0.5 * theta[0] * theta[0])
        .rho(1.0)
        .subgrad_bound(100.0)
        .subgrad_lipschitz(1.0)
        .value_bound(1000.0)
        .constraint(ConstraintSet::WholeSpace)
        .smooth(true)
        .build()
        .unwrap();
    let cfg = MoreauConfig::new(2.0);
    let p1 = moreau_prox(&problem, &cfg, &Vector::new(vec![0.4])).unwrap();
    let p2 = moreau_prox(&problem, &cfg, &Vector::new(vec![-0.3])).unwrap();
    assert!((p1[0] - 0.8).abs() < 1e-7);
    assert!((p2[0] + 0.6).abs() < 1e-7);
    let ratio = (p1[0] - p2[0]).abs() / 0.7;
    assert!(ratio <= 2.0 + 1e-6);

    // random pairs on a box-constrained indefinite quadratic
    let built = nonconvex_quadratic(3, &Vector::new(vec![1.0]), 13, 0.0).unwrap();
    let problem = built.problem;
    let rho_hat = 2.0 * problem.rho;
    let lipschitz = rho_hat / (rho_hat - problem.rho);
    let cfg = MoreauConfig::new(rho_hat);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let a = Vector::from_fn(3, |_| rng.gen_range(-1.5..1.5));
        let b = Vector::from_fn(3, |_| rng.gen_range(-1.5..1.5));
        let pa = moreau_prox(&problem, &cfg, &a).unwrap();
        let pb = moreau_prox(&problem, &cfg, &b).unwrap();
        assert!(
            pa.distance(&pb) <= lipschitz * a.distance(&b) + 1e-7,
            "prox map Lipschitz bound violated"
        );
    }
}

#[test]
fn iterate_proxpoint_distance_bound() {
    let built = nonconvex_quadratic(3, &Vector::new(vec![1.0]), 29, 0.0).unwrap();
    let problem = built.problem;
    let rho_hat = 2.0 * problem.rho;
    let cfg = MoreauConfig::new(rho_hat);
    let bound = 2.0 * problem.subgrad_bound / (rho_hat - problem.rho);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..300 {
        let theta = problem.constraint.sample_feasible(3, &mut rng);
        let proxpoint = moreau_prox(&problem, &cfg, &theta).unwrap();
        assert!(theta.distance(&proxpoint) <= bound + 1e-7);
    }
}

#[test]
fn near_stationarity_chain_at_proxpoint() {
    let built = nonconvex_quadratic(3, &Vector::new(vec![1.0]), 41, 0.0).unwrap();
    let problem = built.problem;
    let rho_hat = 2.0 * problem.rho;
    let cfg = MoreauConfig::new(rho_hat);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..100 {
        let theta = problem.constraint.sample_feasible(3, &mut rng);
        let report = stationarity_report(&problem, &cfg, &theta).unwrap();
        // the envelope gradient norm is rho_hat times the displacement, exactly
        assert_eq!(report.moreau_grad_norm, rho_hat * report.proxpoint_distance);
        // the proxpoint is near-stationary up to inner-solver slack
        assert!(
            report.normal_cone_dist_at_proxpoint
                <= report.moreau_grad_norm + rho_hat * cfg.inner_tol + 1e-7,
            "normal-cone distance {} exceeds envelope gradient {}",
            report.normal_cone_dist_at_proxpoint,
            report.moreau_grad_norm
        );
        // direction-search gap at the proxpoint, bounded by the displacement
        let proxpoint = moreau_prox(&problem, &cfg, &theta).unwrap();
        let gap = stationarity_gap_bruteforce(&problem, &proxpoint, 2_000).unwrap();
        assert!(gap <= rho_hat * report.proxpoint_distance + 1e-2);
    }
}

#[test]
fn gradient_mapping_examples_and_comparison() {
    // f = ||theta||^2 / 2 over the unit ball at (1, 0): one exact projected
    // gradient step with rho_hat = 1 lands at the origin
    let problem = WeaklyConvexProblem::builder()
        .sample_loss(|theta: &Vector, _: &SamplePoint| 0.5 * theta.norm_sq())
        .stoch_subgrad(|theta: &Vector, _: &SamplePoint| theta.clone())
        .full_grad(|theta: &Vector| theta.clone())
        .full_value(|theta: &Vector| 0.5 * theta.norm_sq())
        .rho(0.0)
        .subgrad_bound(10.0)
        .subgrad_lipschitz(1.0)
        .value_bound(100.0)
        .constraint(ConstraintSet::Ball {
            center: Vector::zeros(2),
            radius: 1.0,
        })
        .smooth(true)
        .build()
        .unwrap();
    let g = gradient_mapping_norm(&problem, 1.0, &Vector::new(vec![1.0, 0.0])).unwrap();
    assert!((g - 1.0).abs() < 1e-12);
    let g0 = gradient_mapping_norm(&problem, 1.0, &Vector::zeros(2)).unwrap();
    assert!(g0 < 1e-12);

    // comparison against the envelope gradient on random feasible points:
    // for a rho-smooth objective the mapping and envelope at the shared
    // parameter rho_hat = 2 rho satisfy
    // ||mapping|| <= (1 + rho/rho_hat) ||envelope grad|| = 3/2 ||envelope grad||
    let built = nonconvex_quadratic(3, &Vector::new(vec![1.0]), 53, 0.0).unwrap();
    let problem = built.problem;
    let rho_hat = 2.0 * problem.rho;
    let cfg = MoreauConfig::new(rho_hat);
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    for _ in 0..1000 {
        let theta = problem.constraint.sample_feasible(3, &mut rng);
        let moreau = moreau_grad(&problem, &cfg, &theta).unwrap().norm();
        let mapping = gradient_mapping_norm(&problem, rho_hat, &theta).unwrap();
        assert!(
            mapping <= 1.5 * moreau + 1e-7,
            "gradient mapping {mapping} exceeds 1.5x envelope gradient {moreau}"
        );
    }
}

#[test]
fn nonsmooth_operations_are_rejected() {
    let built = markovsgd::problems::phase_retrieval_l1(3, 2, 61).unwrap();
    let problem = built.problem;
    let theta = Vector::zeros(3);
    assert!(matches!(
        gradient_mapping_norm(&problem, 4.0, &theta),
        Err(Error::Unsupported(_))
    ));
    let chain = two_state_chain([vec![0.0; 4], vec![0.0; 4]]);
    assert!(matches!(
        post_process(&problem, &chain, &theta, 10, 1),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn subgradient_fallback_mode_on_kinked_objective() {
    // f = |theta - 1| on [-3, 3]; proximal point with rho_hat = 1 at
    // theta = 3 is exactly 2 (soft step toward the kink)
    let problem = WeaklyConvexProblem::builder()
        .sample_loss(|theta: &Vector, _: &SamplePoint| (theta[0] - 1.0).abs())
        .stoch_subgrad(|theta: &Vector, _: &SamplePoint| {
            Vector::new(vec![(theta[0] - 1.0).signum()])
        })
        .full_grad(|theta: &Vector| Vector::new(vec![(theta[0] - 1.0).signum()]))
        .full_value(|theta: &Vector| (theta[0] - 1.0).abs())
        .rho(0.0)
        .subgrad_bound(1.0)
        .subgrad_lipschitz(1.0)
        .value_bound(10.0)
        .constraint(ConstraintSet::Box {
            lower: Vector::new(vec![-3.0]),
            upper: Vector::new(vec![3.0]),
        })
        .smooth(false)
        .build()
        .unwrap();
    let cfg = MoreauConfig::new(1.0).with_mode(InnerMode::Subgrad);
    let proxpoint = moreau_prox(&problem, &cfg, &Vector::new(vec![3.0])).unwrap();
    assert!(
        (proxpoint[0] - 2.0).abs() < 1e-2,
        "subgradient fallback found {}",
        proxpoint[0]
    );
}

#[test]
fn post_process_degenerate_and_stationary() {
    // single-state chain: zero-variance samples, so the averaged step is the
    // exact gradient-mapping point
    let pi = Vector::new(vec![1.0]);
    let built = nonconvex_quadratic(4, &pi, 67, 0.0).unwrap();
    let chain = MarkovChain::new(
        Matrix::from_rows(vec![vec![1.0]]).unwrap(),
        built.samples.clone(),
    )
    .unwrap();
    let problem = built.problem;
    let theta = Vector::new(vec![0.5, -0.25, 0.125, 0.75]);
    let (moved, dist) = post_process(&problem, &chain, &theta, 100, 9).unwrap();
    let expected = problem
        .constraint
        .project(&theta.sub(&problem.full_grad(&theta).unwrap()))
        .unwrap();
    assert!(moved.distance(&expected) < 1e-12);
    let expected_dist = problem
        .constraint
        .normal_cone_dist(&moved, &problem.full_grad(&moved).unwrap())
        .unwrap();
    assert!((dist - expected_dist).abs() < 1e-12);

    // at the constrained minimizer of a convex quadratic the distance is 0
    let set = ConstraintSet::Box {
        lower: Vector::new(vec![0.0]),
        upper: Vector::new(vec![1.0]),
    };
    let problem = quadratic_1d(0.3, set);
    let chain = single_state_chain(vec![0.0]);
    let (_, dist) = post_process(&problem, &chain, &Vector::new(vec![0.3]), 50, 4).unwrap();
    assert!(dist < 1e-12);
}

#[test]
fn bruteforce_gap_interior_corner_and_cross_check() {
    let built = nonconvex_quadratic(2, &Vector::new(vec![1.0]), 71, 0.0).unwrap();
    let problem = built.problem;

    // interior point: the gap approaches the gradient norm
    let theta = Vector::new(vec![0.2, -0.1]);
    let grad_norm = problem.full_grad(&theta).unwrap().norm();
    let gap = stationarity_gap_bruteforce(&problem, &theta, 4_000).unwrap();
    assert!((gap - grad_norm).abs() <= 1e-3 * grad_norm.max(1.0));

    // corner with the gradient inside the normal cone: gap 0
    let corner_problem = constant_grad(vec![1.0, 1.0], unit_box(2));
    let corner = Vector::new(vec![-1.0, -1.0]);
    let gap = stationarity_gap_bruteforce(&corner_problem, &corner, 2_000).unwrap();
    assert!(gap <= 1e-12);

    // random box instances: the direction search agrees with the analytic
    // normal-cone distance
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for _ in 0..20 {
        let theta = problem.constraint.sample_feasible(2, &mut rng);
        let grad = problem.full_grad(&theta).unwrap();
        let analytic = problem.constraint.normal_cone_dist(&theta, &grad).unwrap();
        let gap = stationarity_gap_bruteforce(&problem, &theta, 10_000).unwrap();
        assert!(
            (gap - analytic).abs() <= 1e-2,
            "gap {gap} vs analytic {analytic}"
        );
    }
}
