//! The property-verification suite: every module invariant packaged as a
//! named, seeded, hermetic check with a measured margin. The CLI `verify`
//! subcommand prints one line per property and exits nonzero when any fails.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use markovsgd::chain::stochastic_matrix_power;
use markovsgd::linalg::{Matrix, Vector};
use markovsgd::odl::lazy_cycle_walk;
use markovsgd::problems::nonconvex_quadratic;
use markovsgd::rng::{stream_rng, Substream};
use markovsgd::*;

#[derive(Clone, Debug, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Worst remaining slack (bound minus observed value); negative on
    /// failure, absent for exact-equality checks.
    pub margin: Option<f64>,
    pub details: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
    pub elapsed_s: f64,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(8);
        for check in &self.checks {
            let margin = check
                .margin
                .map(|m| format!("{m:>12.3e}"))
                .unwrap_or_else(|| format!("{:>12}", "-"));
            out.push_str(&format!(
                "{:<width$}  {}  margin {}  {}\n",
                check.name,
                if check.pass { "PASS" } else { "FAIL" },
                margin,
                check.details,
            ));
        }
        out.push_str(&format!(
            "{} checks, {} failed, {:.2}s\n",
            self.checks.len(),
            self.failed(),
            self.elapsed_s
        ));
        out
    }
}

struct Recorder {
    checks: Vec<PropertyCheck>,
}

impl Recorder {
    /// Bound-style check: `worst_slack` is the minimum of (bound - value)
    /// over everything scanned; nonnegative means the bound held everywhere.
    fn bound(&mut self, name: &'static str, worst_slack: f64, details: String) {
        self.checks.push(PropertyCheck {
            name,
            pass: worst_slack >= 0.0,
            margin: Some(worst_slack),
            details,
        });
    }

    fn exact(&mut self, name: &'static str, pass: bool, details: String) {
        self.checks.push(PropertyCheck {
            name,
            pass,
            margin: None,
            details,
        });
    }
}

/// Runs every property with generators derived from `seed`. Hermetic: no
/// files, no network, a few seconds of compute.
pub fn verify_suite(seed: u64) -> VerifyReport {
    let start = Instant::now();
    let mut rec = Recorder { checks: Vec::new() };

    check_projections(&mut rec, seed);
    check_prox_operators(&mut rec, seed);
    check_normal_cone(&mut rec, seed);
    check_mixing(&mut rec, seed);
    check_key_lemma(&mut rec, seed);
    check_streams(&mut rec, seed);
    check_numeric_lemmas(&mut rec, seed);
    check_moreau(&mut rec, seed);
    check_gap_cross(&mut rec, seed);
    check_algorithm_identities(&mut rec, seed);

    VerifyReport {
        seed,
        checks: rec.checks,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

fn test_sets() -> Vec<(&'static str, ConstraintSet)> {
    vec![
        ("whole_space", ConstraintSet::WholeSpace),
        (
            "box",
            ConstraintSet::Box {
                lower: Vector::from_fn(4, |_| -1.0),
                upper: Vector::from_fn(4, |i| 0.5 + i as f64 * 0.25),
            },
        ),
        (
            "ball",
            ConstraintSet::Ball {
                center: Vector::from_fn(4, |i| 0.1 * i as f64),
                radius: 1.5,
            },
        ),
        ("nonneg_orthant", ConstraintSet::NonnegOrthant),
        ("simplex", ConstraintSet::Simplex { scale: 1.5 }),
        ("nonneg_ball", ConstraintSet::NonnegBall { radius: 1.2 }),
    ]
}

fn check_projections(rec: &mut Recorder, seed: u64) {
    let mut rng = stream_rng(seed, Substream::Chain);
    let mut nonexp_slack = f64::INFINITY;
    let mut vi_slack = f64::INFINITY;
    let mut idem_slack = f64::INFINITY;
    for (_, set) in test_sets() {
        for _ in 0..1000 {
            let v = Vector::from_fn(4, |_| rng.gen_range(-4.0..4.0));
            let w = Vector::from_fn(4, |_| rng.gen_range(-4.0..4.0));
            let pv = set.project(&v).unwrap();
            let pw = set.project(&w).unwrap();
            nonexp_slack = nonexp_slack.min(v.distance(&w) - pv.distance(&pw) + 1e-12);
            let u = set.sample_feasible(4, &mut rng);
            vi_slack = vi_slack.min(1e-9 - v.sub(&pv).dot(&u.sub(&pv)));
            let ppv = set.project(&pv).unwrap();
            idem_slack = idem_slack.min(1e-10 - pv.distance(&ppv));
        }
    }
    rec.bound(
        "projection_nonexpansive",
        nonexp_slack,
        "1000 random pairs per set variant".into(),
    );
    rec.bound(
        "projection_variational_inequality",
        vi_slack,
        "<v - proj v, u - proj v> <= 0 for feasible u".into(),
    );
    rec.bound(
        "projection_idempotent",
        idem_slack,
        "proj(proj(v)) = proj(v) to 1e-10".into(),
    );
}

fn check_prox_operators(rec: &mut Recorder, seed: u64) {
    let mut rng = stream_rng(seed ^ 1, Substream::Chain);
    let regs = vec![
        Regularizer::Zero,
        Regularizer::L1 { weight: 0.6 },
        Regularizer::Indicator(ConstraintSet::Simplex { scale: 1.0 }),
        Regularizer::Indicator(ConstraintSet::NonnegBall { radius: 1.0 }),
    ];
    let mut slack = f64::INFINITY;
    for reg in &regs {
        for _ in 0..1000 {
            let v = Vector::from_fn(4, |_| rng.gen_range(-3.0..3.0));
            let w = Vector::from_fn(4, |_| rng.gen_range(-3.0..3.0));
            let pv = prox_reg(reg, 0.7, &v).unwrap();
            let pw = prox_reg(reg, 0.7, &w).unwrap();
            slack = slack.min(pv.sub(&pw).dot(&v.sub(&w)) - pv.distance(&pw).powi(2) + 1e-12);
        }
    }
    rec.bound(
        "prox_firmly_nonexpansive",
        slack,
        "||prox v - prox w||^2 <= <prox v - prox w, v - w>".into(),
    );
}

fn check_normal_cone(rec: &mut Recorder, seed: u64) {
    let mut rng = stream_rng(seed ^ 2, Substream::Chain);
    let mut ok = true;
    let mut details = String::from("dist = 0 iff projection fixed point, 1e-10 tolerance");
    for (name, set) in test_sets() {
        for _ in 0..500 {
            let theta = set.sample_feasible(4, &mut rng);
            let g = Vector::from_fn(4, |_| rng.gen_range(-2.0..2.0));
            let dist = set.normal_cone_dist(&theta, &g).unwrap();
            let moved = set.project(&theta.sub(&g)).unwrap().distance(&theta);
            if dist <= 1e-10 && moved > 1e-7 {
                ok = false;
                details = format!("{name}: dist 0 but projection moved {moved:.2e}");
            }
            if moved <= 1e-12 && dist > 1e-6 {
                ok = false;
                details = format!("{name}: fixed point but dist {dist:.2e}");
            }
        }
    }
    rec.exact("normal_cone_fixed_point_equivalence", ok, details);
}

fn verification_chains(seed: u64) -> Vec<(&'static str, Matrix)> {
    let mut rng = stream_rng(seed ^ 3, Substream::Chain);
    let mut random_rows = Vec::new();
    for _ in 0..6 {
        let mut row: Vec<f64> = (0..6).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        random_rows.push(row);
    }
    vec![
        (
            "two_state",
            Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
        ),
        ("cycle_8", lazy_cycle_walk(8, 0.5).unwrap()),
        ("cycle_10_slow", lazy_cycle_walk(10, 0.8).unwrap()),
        ("random_6", Matrix::from_rows(random_rows).unwrap()),
    ]
}

fn check_mixing(rec: &mut Recorder, seed: u64) {
    let mut slack = f64::INFINITY;
    for (_, p) in verification_chains(seed) {
        let n = p.rows();
        let samples = (0..n)
            .map(|s| SamplePoint::with_state(vec![s as f64], s))
            .collect();
        let chain = MarkovChain::new(p, samples).unwrap();
        let mut prev = f64::INFINITY;
        for m in 0..=200 {
            let d = mixing_bound(&chain, m);
            slack = slack.min(prev - d + 1e-12);
            prev = d;
        }
    }
    rec.bound(
        "mixing_bound_monotone",
        slack,
        "nonincreasing in m over [0, 200] on every chain".into(),
    );
}

fn check_key_lemma(rec: &mut Recorder, seed: u64) {
    // dependent-data bias against L times the worst-case TV distance,
    // exactly (no sampling) on small chains
    let mut rng = stream_rng(seed ^ 4, Substream::Chain);
    let mut slack = f64::INFINITY;
    let mut scanned = 0usize;
    for (_, p) in verification_chains(seed) {
        let pi = stationary_distribution(&p).unwrap();
        let built = nonconvex_quadratic(3, &pi, seed ^ 5, 1.0).unwrap();
        let problem = &built.problem;
        let chain = MarkovChain::new(p.clone(), built.samples.clone()).unwrap();
        let n = chain.n_states();
        for m in 0..=50 {
            let bound = problem.subgrad_bound * mixing_bound(&chain, m);
            let pm = stochastic_matrix_power(chain.transition(), m);
            for _ in 0..100 {
                let theta = problem.constraint.sample_feasible(3, &mut rng);
                let per_state: Vec<Vector> = (0..n)
                    .map(|u| problem.subgrad(&theta, chain.sample_of_state(u)))
                    .collect();
                let mut pop = Vector::zeros(3);
                for u in 0..n {
                    pop.axpy(pi[u], &per_state[u]);
                }
                for s in 0..n {
                    let mut conditional = Vector::zeros(3);
                    for u in 0..n {
                        conditional.axpy(pm[(s, u)], &per_state[u]);
                    }
                    slack = slack.min(bound - conditional.distance(&pop) + 1e-12);
                    scanned += 1;
                }
            }
        }
    }
    rec.bound(
        "key_lemma_tv_bias_bound",
        slack,
        format!("bias <= L * Delta on {scanned} (state, m, theta) triples"),
    );
}

fn check_streams(rec: &mut Recorder, seed: u64) {
    let p = Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let samples = vec![
        SamplePoint::with_state(vec![0.0], 0),
        SamplePoint::with_state(vec![1.0], 1),
    ];
    let chain = MarkovChain::new(p, samples).unwrap();

    let mut s1 = SampleStream::from_stationary(chain.clone(), seed);
    let mut s2 = SampleStream::from_stationary(chain.clone(), seed);
    let mut identical = s1.state() == s2.state();
    for _ in 0..100_000 {
        s1.step();
        s2.step();
        identical &= s1.state() == s2.state();
    }
    rec.exact(
        "stream_determinism",
        identical,
        "equal seeds agree over 1e5 steps".into(),
    );

    let mut stream = SampleStream::from_stationary(chain.clone(), seed ^ 6);
    let n = 1_000_000usize;
    let mut counts = [0u64; 2];
    for _ in 0..n {
        stream.step();
        counts[stream.state()] += 1;
    }
    let emp = Vector::new(counts.iter().map(|&c| c as f64 / n as f64).collect());
    let tv = tv_distance(&emp, chain.stationary()).unwrap();
    rec.bound(
        "stream_occupancy",
        0.01 - tv,
        format!("TV(empirical occupancy over 1e6 steps, pi) = {tv:.4}"),
    );

    let mut monotone = true;
    let mut prev = 0usize;
    for t in 1..=10_000 {
        let k = k_schedule(t, 2.0);
        monotone &= k >= prev && k <= t;
        prev = k;
    }
    rec.exact(
        "k_schedule_monotone",
        monotone && k_schedule(100, 2.0) == 10,
        "nondecreasing, capped by t, k(100; 2) = 10".into(),
    );
}

fn check_numeric_lemmas(rec: &mut Recorder, seed: u64) {
    let mut rng = stream_rng(seed ^ 7, Substream::Chain);

    // worked example: a = (1,1,1,1), v0 = 1
    let a_example = [1.0f64; 4];
    let first_example = {
        let mut acc = 1.0;
        let mut lhs = 0.0;
        for a in a_example {
            acc += a;
            lhs += a / acc;
        }
        lhs
    };
    let second_example = {
        let mut acc = 0.0;
        let mut lhs = 0.0;
        for a in a_example {
            acc += a;
            lhs += a / acc.sqrt();
        }
        lhs
    };
    let example_ok = (first_example - 77.0 / 60.0).abs() < 1e-12
        && first_example <= 5.0f64.ln()
        && (second_example - 2.784457050376173).abs() < 1e-9
        && second_example <= 4.0;

    let mut first_slack = 5.0f64.ln() - first_example;
    let mut second_slack = 4.0 - second_example;
    for _ in 0..1000 {
        let len = rng.gen_range(1..40);
        let v0 = rng.gen_range(0.01..5.0f64);
        let seq: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..3.0)).collect();
        let total: f64 = seq.iter().sum();

        let mut acc = v0;
        let mut lhs = 0.0;
        for &a in &seq {
            acc += a;
            lhs += a / acc;
        }
        first_slack = first_slack.min((1.0 + total / v0).ln() - lhs + 1e-12);

        let mut acc = 0.0;
        let mut lhs = 0.0;
        for &a in &seq {
            acc += a;
            if acc > 0.0 {
                lhs += a / acc.sqrt();
            }
        }
        second_slack = second_slack.min(2.0 * total.sqrt() - lhs + 1e-12);
    }
    rec.bound(
        "num_seq_log_inequality",
        if example_ok { first_slack } else { -1.0 },
        format!("worked example {first_example:.6} <= ln 5; 1000 random sequences"),
    );
    rec.bound(
        "num_seq_sqrt_inequality",
        second_slack,
        format!("worked example {second_example:.6} <= 2 sqrt(4); 1000 random sequences"),
    );

    // min over k of b_k against the weighted-average bound
    let mut min_slack = f64::INFINITY;
    for _ in 0..500 {
        let len = rng.gen_range(2..50);
        let a: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..2.0)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..3.0)).collect();
        let weighted: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let a_sum: f64 = a.iter().sum();
        let min_b = b.iter().cloned().fold(f64::INFINITY, f64::min);
        min_slack = min_slack.min(weighted / a_sum - min_b + 1e-12);
    }
    rec.bound(
        "convergence_lemma_min_bound",
        min_slack,
        "min_k b_k <= sum(a b) / sum(a) on random sequences".into(),
    );
}

fn check_moreau(rec: &mut Recorder, seed: u64) {
    // closed-form 1-D check: f = -theta^2/2 (rho = 1), rho_hat = 2:
    // the proximal map is exactly theta -> 2 theta
    let concave = WeaklyConvexProblem::builder()
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
    let p1 = moreau_prox(&concave, &cfg, &Vector::new(vec![0.7])).unwrap();
    let p2 = moreau_prox(&concave, &cfg, &Vector::new(vec![-0.4])).unwrap();
    let ratio = (p1[0] - p2[0]).abs() / 1.1;
    rec.bound(
        "prox_lipschitz_closed_form",
        2.0 + 1e-6 - ratio,
        format!("1-D quadratic ratio {ratio:.9} <= rho_hat/(rho_hat - rho) = 2"),
    );

    let built = nonconvex_quadratic(3, &Vector::new(vec![1.0]), seed ^ 8, 0.0).unwrap();
    let problem = built.problem;
    let rho_hat = 2.0 * problem.rho;
    let cfg = MoreauConfig::new(rho_hat);
    let lipschitz = rho_hat / (rho_hat - problem.rho);
    let mut rng = stream_rng(seed ^ 9, Substream::Chain);

    let mut lip_slack = f64::INFINITY;
    for _ in 0..1000 {
        let a = Vector::from_fn(3, |_| rng.gen_range(-1.5..1.5));
        let b = Vector::from_fn(3, |_| rng.gen_range(-1.5..1.5));
        let pa = moreau_prox(&problem, &cfg, &a).unwrap();
        let pb = moreau_prox(&problem, &cfg, &b).unwrap();
        lip_slack = lip_slack.min(lipschitz * a.distance(&b) - pa.distance(&pb) + 1e-7);
    }
    rec.bound(
        "prox_lipschitz_random_pairs",
        lip_slack,
        "||prox a - prox b|| <= rho_hat/(rho_hat-rho) ||a - b||, 1000 pairs".into(),
    );

    let dist_bound = 2.0 * problem.subgrad_bound / (rho_hat - problem.rho);
    let mut dist_slack = f64::INFINITY;
    let mut identity_ok = true;
    let mut near_slack = f64::INFINITY;
    let mut fd_worst: f64 = 0.0;
    let mut envelope_slack = f64::INFINITY;
    let mut mapping_slack = f64::INFINITY;
    for i in 0..1000 {
        let theta = problem.constraint.sample_feasible(3, &mut rng);
        let report = stationarity_report(&problem, &cfg, &theta).unwrap();
        dist_slack = dist_slack.min(dist_bound - report.proxpoint_distance + 1e-9);
        identity_ok &= report.moreau_grad_norm == rho_hat * report.proxpoint_distance;
        near_slack = near_slack.min(
            report.moreau_grad_norm + rho_hat * cfg.inner_tol + 1e-7
                - report.normal_cone_dist_at_proxpoint,
        );
        let envelope = moreau_value(&problem, &cfg, &theta).unwrap();
        envelope_slack = envelope_slack.min(problem.full_value(&theta).unwrap() - envelope + 1e-9);
        let mapping = gradient_mapping_norm(&problem, rho_hat, &theta).unwrap();
        mapping_slack = mapping_slack.min(1.5 * report.moreau_grad_norm - mapping + 1e-7);

        // central differences on a handful of points (each is 12 inner solves)
        if i < 10 {
            let h = 1e-5;
            let grad = moreau_grad(&problem, &cfg, &theta).unwrap();
            let mut fd = Vector::zeros(3);
            for j in 0..3 {
                let mut plus = theta.clone();
                plus[j] += h;
                let mut minus = theta.clone();
                minus[j] -= h;
                fd[j] = (moreau_value(&problem, &cfg, &plus).unwrap()
                    - moreau_value(&problem, &cfg, &minus).unwrap())
                    / (2.0 * h);
            }
            fd_worst = fd_worst.max(grad.distance(&fd) / grad.norm().max(1e-12));
        }
    }
    rec.bound(
        "iterate_proxpoint_bound",
        dist_slack,
        "||theta - proxpoint|| <= 2L/(rho_hat - rho)".into(),
    );
    rec.exact(
        "moreau_grad_identity",
        identity_ok,
        "||envelope grad|| = rho_hat * proxpoint distance, exactly".into(),
    );
    rec.bound(
        "near_stationarity_at_proxpoint",
        near_slack,
        "normal-cone dist at proxpoint <= envelope grad + solver slack".into(),
    );
    rec.bound(
        "envelope_below_objective",
        envelope_slack,
        "envelope value <= objective on feasible points".into(),
    );
    rec.bound(
        "gradient_mapping_comparison",
        mapping_slack,
        "||mapping|| <= 1.5 ||envelope grad|| at rho_hat = 2 rho, 1000 points".into(),
    );
    rec.bound(
        "moreau_finite_difference",
        1e-4 - fd_worst,
        format!("worst relative FD error {fd_worst:.2e} over 10 points"),
    );
}

fn check_gap_cross(rec: &mut Recorder, seed: u64) {
    let built = nonconvex_quadratic(2, &Vector::new(vec![1.0]), seed ^ 10, 0.0).unwrap();
    let problem = built.problem;
    let rho_hat = 2.0 * problem.rho;
    let cfg = MoreauConfig::new(rho_hat);
    let mut rng = stream_rng(seed ^ 11, Substream::Chain);
    let mut cross_slack = f64::INFINITY;
    let mut prox_gap_slack = f64::INFINITY;
    for _ in 0..100 {
        let theta = problem.constraint.sample_feasible(2, &mut rng);
        let grad = problem.full_grad(&theta).unwrap();
        let analytic = problem.constraint.normal_cone_dist(&theta, &grad).unwrap();
        let gap = stationarity_gap_bruteforce(&problem, &theta, 10_000).unwrap();
        cross_slack = cross_slack.min(1e-2 - (gap - analytic).abs());

        let proxpoint = moreau_prox(&problem, &cfg, &theta).unwrap();
        let gap_hat = stationarity_gap_bruteforce(&problem, &proxpoint, 2_000).unwrap();
        prox_gap_slack = prox_gap_slack.min(rho_hat * theta.distance(&proxpoint) + 1e-2 - gap_hat);
    }
    rec.bound(
        "gap_vs_normal_cone_dist",
        cross_slack,
        "|direction-search gap - analytic dist| <= 1e-2, 100 box instances".into(),
    );
    rec.bound(
        "gap_at_proxpoint_bound",
        prox_gap_slack,
        "gap at proxpoint <= rho_hat * displacement + 1e-2".into(),
    );
}

fn check_algorithm_identities(rec: &mut Recorder, seed: u64) {
    let p = Matrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    let samples = vec![
        SamplePoint::with_state(vec![0.6], 0),
        SamplePoint::with_state(vec![-0.9], 1),
    ];
    let chain = MarkovChain::new(p, samples).unwrap();
    let set = ConstraintSet::Box {
        lower: Vector::new(vec![-1.0]),
        upper: Vector::new(vec![1.0]),
    };
    let problem = WeaklyConvexProblem::builder()
        .sample_loss(|theta: &Vector, x: &SamplePoint| 0.5 * theta.distance(&x.payload).powi(2))
        .stoch_subgrad(|theta: &Vector, x: &SamplePoint| theta.sub(&x.payload))
        .full_grad(|theta: &Vector| theta.clone())
        .full_value(|theta: &Vector| 0.5 * theta.norm_sq())
        .rho(0.0)
        .subgrad_bound(2.0)
        .subgrad_lipschitz(1.0)
        .value_bound(10.0)
        .constraint(set.clone())
        .smooth(true)
        .build()
        .unwrap();

    let mut base = RunConfig::new(
        Algorithm::Psgd,
        StepSchedule::InvSqrt(0.4),
        5_000,
        Vector::new(vec![0.25]),
    )
    .with_seed(seed)
    .with_rho_hat(1.0);
    base.loss_stride = 0;

    let psgd = run_psgd(&problem, &chain, &base).unwrap();
    let psgd_again = run_psgd(&problem, &chain, &base).unwrap();
    rec.exact(
        "trace_determinism",
        psgd.bitwise_eq(&psgd_again),
        "identical (config, seed) gives identical traces".into(),
    );

    let mut shb = base.clone();
    shb.algorithm = Algorithm::Shb;
    shb.beta = 1.0;
    let shb_trace = run_shb(&problem, &chain, &shb).unwrap();
    rec.exact(
        "shb_beta1_equals_psgd",
        psgd.bitwise_eq(&shb_trace),
        "beta = 1 heavy ball reproduces PSGD bitwise".into(),
    );

    let mut prox = base.clone();
    prox.algorithm = Algorithm::ProxSubgrad;
    prox.regularizer = Regularizer::Indicator(set);
    let prox_trace = run_prox_subgrad(&problem, &chain, &prox).unwrap();
    rec.exact(
        "prox_indicator_equals_psgd",
        psgd.bitwise_eq(&prox_trace),
        "indicator regularizer reproduces PSGD bitwise".into(),
    );

    let mut disp_slack = f64::INFINITY;
    for (idx, &change) in psgd.theta_change.iter().enumerate() {
        disp_slack = disp_slack.min(psgd.step_sizes[idx] * problem.subgrad_bound - change + 1e-12);
    }
    rec.bound(
        "step_displacement_bound",
        disp_slack,
        "||theta_{t+1} - theta_t|| <= alpha_t L along the run".into(),
    );

    // SHB momentum recursion with the squared subgradient bound
    let mut shb_rec = base.clone();
    shb_rec.algorithm = Algorithm::Shb;
    shb_rec.beta = 0.3;
    shb_rec.schedule = StepSchedule::Constant(0.05);
    shb_rec.horizon = 10_000;
    let trace = run_shb(&problem, &chain, &shb_rec).unwrap();
    let l_sq = problem.subgrad_bound * problem.subgrad_bound;
    let mut momentum_slack = f64::INFINITY;
    for w in trace.momentum_norms.windows(2) {
        momentum_slack = momentum_slack.min(0.3 * l_sq + 0.7 * w[0] * w[0] - w[1] * w[1] + 1e-9);
    }
    rec.bound(
        "shb_momentum_recursion",
        momentum_slack,
        "||z_{t+1}||^2 <= beta L^2 + (1-beta) ||z_t||^2, constant steps, 1e4 steps".into(),
    );

    // AdaGrad telescoping along a trajectory, from the recorded step sizes
    let (alpha, v0) = (1.0, 1.0);
    let mut ada = base.clone();
    ada.algorithm = Algorithm::AdaGrad;
    ada.schedule = StepSchedule::AdaGradNorm { alpha, v0 };
    ada.horizon = 5_000;
    let trace = run_adagrad(&problem, &chain, &ada).unwrap();
    let mut prev = v0;
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (idx, &a) in trace.step_sizes.iter().enumerate() {
        let v = (alpha / a).powi(2);
        let g_sq = v - prev;
        weighted += trace.step_sizes[idx] * g_sq;
        total += g_sq;
        prev = v;
    }
    rec.bound(
        "adagrad_telescoping",
        2.0 * alpha * total.sqrt() - weighted + 1e-9,
        "sum alpha_t ||G_t||^2 <= 2 alpha sqrt(sum ||G_t||^2)".into(),
    );
}
