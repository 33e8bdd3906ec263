//! Finite-state Markov-chain data streams with exact stationary
//! distributions and total-variation mixing bounds.
//!
//! Only finite state spaces are supported: that makes the stationary
//! distribution, the worst-case mixing coefficient and the population
//! gradient exactly computable, which is the whole point of desk-scale
//! verification. Index convention for the mixing coefficient: conditioning a
//! Markov chain on everything up to `t - k` collapses to the state at
//! `t - k`, so the coefficient between times `t - k` and `t + 1` equals the
//! worst-row total variation of `P^m` with `m = k + 1` transitions.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, Matrix, Vector};
use crate::problem::SamplePoint;
use crate::rng::{stream_rng, Substream};

#[derive(Debug)]
struct ChainInner {
    transition: Matrix,
    samples: Vec<SamplePoint>,
    stationary: Vector,
    is_irreducible_aperiodic: bool,
}

/// An immutable finite-state Markov chain: row-stochastic transition matrix,
/// a sample attached to each state, and the cached stationary distribution.
/// Cloning is cheap (shared storage), so oracles and threads can hold copies.
#[derive(Clone, Debug)]
pub struct MarkovChain {
    inner: Arc<ChainInner>,
}

impl MarkovChain {
    /// Validated constructor: checks row-stochasticity, irreducibility and
    /// aperiodicity (hard errors), then solves for the unique stationary
    /// distribution.
    pub fn new(transition: Matrix, samples: Vec<SamplePoint>) -> Result<Self> {
        validate_stochastic(&transition)?;
        check_irreducible_aperiodic(&transition)?;
        if samples.len() != transition.rows() {
            return Err(Error::DimensionMismatch {
                context: "MarkovChain samples",
                expected: transition.rows(),
                got: samples.len(),
            });
        }
        let stationary = stationary_distribution(&transition)?;
        Ok(MarkovChain {
            inner: Arc::new(ChainInner {
                transition,
                samples,
                stationary,
                is_irreducible_aperiodic: true,
            }),
        })
    }

    /// Constructor for chains whose stationary distribution is supplied by
    /// the caller. Verifies stochasticity and `pi P = pi` but skips the
    /// irreducibility/aperiodicity check, so degenerate dynamics (periodic
    /// cycles, i.i.d. rows with unvisited states) can still be stepped.
    pub fn new_with_stationary(
        transition: Matrix,
        samples: Vec<SamplePoint>,
        stationary: Vector,
    ) -> Result<Self> {
        validate_stochastic(&transition)?;
        if samples.len() != transition.rows() {
            return Err(Error::DimensionMismatch {
                context: "MarkovChain samples",
                expected: transition.rows(),
                got: samples.len(),
            });
        }
        stationary.check_dim(transition.rows(), "MarkovChain stationary")?;
        check_distribution(&stationary)?;
        let residual = residual_inf(&stationary, &transition);
        if residual > 1e-10 {
            return Err(Error::ChainConstruction(format!(
                "supplied distribution is not stationary: ||pi P - pi||_inf = {residual:.3e}"
            )));
        }
        let primitive = check_irreducible_aperiodic(&transition).is_ok();
        Ok(MarkovChain {
            inner: Arc::new(ChainInner {
                transition,
                samples,
                stationary,
                is_irreducible_aperiodic: primitive,
            }),
        })
    }

    pub fn n_states(&self) -> usize {
        self.inner.transition.rows()
    }

    pub fn transition(&self) -> &Matrix {
        &self.inner.transition
    }

    pub fn sample_of_state(&self, state: usize) -> &SamplePoint {
        &self.inner.samples[state]
    }

    pub fn samples(&self) -> &[SamplePoint] {
        &self.inner.samples
    }

    pub fn stationary(&self) -> &Vector {
        &self.inner.stationary
    }

    pub fn is_irreducible_aperiodic(&self) -> bool {
        self.inner.is_irreducible_aperiodic
    }
}

fn validate_stochastic(p: &Matrix) -> Result<()> {
    if p.rows() == 0 || p.rows() != p.cols() {
        return Err(Error::ChainConstruction(format!(
            "transition matrix must be square and nonempty, got {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    for i in 0..p.rows() {
        let mut sum = 0.0;
        for j in 0..p.cols() {
            let v = p[(i, j)];
            if v < 0.0 {
                return Err(Error::ChainConstruction(format!(
                    "transition entry ({i},{j}) is negative: {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::ChainConstruction(format!(
                "transition row {i} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

fn check_distribution(pi: &Vector) -> Result<()> {
    if pi.iter().any(|&x| x < -1e-12) {
        return Err(Error::Precondition(
            "distribution has negative entries".into(),
        ));
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "distribution sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Irreducibility via reachability, then aperiodicity via primitivity: some
/// boolean power of P (scanned by repeated squaring up to exponent >= S^2)
/// must be entrywise positive. Positivity of powers is monotone for
/// stochastic matrices, so squaring loses nothing.
fn check_irreducible_aperiodic(p: &Matrix) -> Result<()> {
    let n = p.rows();
    let adj: Vec<bool> = p.as_slice().iter().map(|&x| x > 0.0).collect();

    // (I + B)^(n-1) all positive <=> strongly connected
    let mut reach = adj.clone();
    for i in 0..n {
        reach[i * n + i] = true;
    }
    let mut acc = reach.clone();
    let mut steps = 1usize;
    while steps < n {
        acc = bool_matmul(&acc, &acc, n);
        steps *= 2;
    }
    if !acc.iter().all(|&b| b) {
        return Err(Error::ChainConstruction(
            "chain is reducible: some state cannot reach some other state".into(),
        ));
    }

    let mut power = adj;
    let mut exponent = 1usize;
    let cap = n * n;
    loop {
        if power.iter().all(|&b| b) {
            return Ok(());
        }
        if exponent >= cap {
            return Err(Error::ChainConstruction(format!(
                "chain is periodic: no power of P up to exponent {cap} is entrywise positive"
            )));
        }
        power = bool_matmul(&power, &power, n);
        exponent *= 2;
    }
}

fn bool_matmul(a: &[bool], b: &[bool], n: usize) -> Vec<bool> {
    let mut out = vec![false; n * n];
    for i in 0..n {
        for k in 0..n {
            if a[i * n + k] {
                for j in 0..n {
                    if b[k * n + j] {
                        out[i * n + j] = true;
                    }
                }
            }
        }
    }
    out
}

fn residual_inf(pi: &Vector, p: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..p.cols() {
        let mut acc = 0.0;
        for i in 0..p.rows() {
            acc += pi[i] * p[(i, j)];
        }
        worst = worst.max((acc - pi[j]).abs());
    }
    worst
}

/// The unique stationary distribution of an irreducible aperiodic
/// row-stochastic matrix, from the linear system `pi P = pi, sum pi = 1`.
pub fn stationary_distribution(p: &Matrix) -> Result<Vector> {
    validate_stochastic(p)?;
    check_irreducible_aperiodic(p)?;
    let n = p.rows();
    // Rows of P^T - I are linearly dependent; replace the last balance
    // equation with the normalization constraint.
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p[(j, i)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = Vector::zeros(n);
    rhs[n - 1] = 1.0;
    let raw = solve_linear(&a, &rhs)?;
    let mut pi = Vector::from_fn(n, |i| raw[i].max(0.0));
    let sum: f64 = pi.iter().sum();
    pi = pi.scale(1.0 / sum);
    let residual = residual_inf(&pi, p);
    if residual > 1e-10 {
        return Err(Error::ChainConstruction(format!(
            "stationary solve residual ||pi P - pi||_inf = {residual:.3e} exceeds 1e-10"
        )));
    }
    Ok(pi)
}

/// Total variation distance `1/2 sum |p_i - q_i|` between two distributions.
pub fn tv_distance(p: &Vector, q: &Vector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "tv_distance",
            expected: p.len(),
            got: q.len(),
        });
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(tv_unchecked(p.as_slice(), q.as_slice()))
}

fn tv_unchecked(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `P^m` by repeated squaring, renormalizing each row after every multiply
/// to absorb floating-point drift.
pub fn stochastic_matrix_power(p: &Matrix, m: usize) -> Matrix {
    let n = p.rows();
    let mut result = Matrix::identity(n);
    let mut base = p.clone();
    let mut exp = m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = renormalize_rows(result.matmul(&base));
        }
        base = renormalize_rows(base.matmul(&base));
        exp >>= 1;
    }
    result
}

fn renormalize_rows(mut m: Matrix) -> Matrix {
    for i in 0..m.rows() {
        let sum: f64 = m.row(i).iter().sum();
        if sum > 0.0 {
            for v in m.row_mut(i) {
                *v /= sum;
            }
        }
    }
    m
}

/// Worst-case total variation distance between the `m`-step conditional
/// distribution and the stationary distribution:
/// `max_s TV(P^m(s, .), pi)`. Nonincreasing in `m`.
pub fn mixing_bound(chain: &MarkovChain, m: usize) -> f64 {
    let pm = stochastic_matrix_power(chain.transition(), m);
    let pi = chain.stationary();
    (0..pm.rows())
        .map(|s| tv_unchecked(pm.row(s), pi.as_slice()))
        .fold(0.0, f64::max)
}

/// Chain whose every row equals `pi`: the i.i.d. sampling baseline. Its
/// mixing bound is 0 for every `m >= 1`.
pub fn make_iid(pi: &Vector, samples: Vec<SamplePoint>) -> Result<MarkovChain> {
    check_distribution(pi)?;
    let n = pi.len();
    let mut transition = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            transition[(i, j)] = pi[j];
        }
    }
    MarkovChain::new_with_stationary(transition, samples, pi.clone())
}

/// The logarithmically growing conditioning lag
/// `k_t = min(t, max(1, ceil(c_log * ln(t + 1))))`: nondecreasing in `t`,
/// diverging, and never larger than `t` itself.
pub fn k_schedule(t: usize, c_log: f64) -> usize {
    assert!(t >= 1, "k_schedule requires t >= 1");
    assert!(c_log > 0.0, "k_schedule requires c_log > 0");
    let raw = (c_log * ((t + 1) as f64).ln()).ceil();
    let k = if raw < 1.0 { 1 } else { raw as usize };
    k.min(t)
}

/// Partial sums `sum_{t<=n} alpha_t * Delta_{[t-k_t, t+1]}` for the given
/// step sizes, reported so the summability condition of the mixing
/// assumption can be inspected (the toolkit reports, it does not certify).
pub fn a1_partial_sums(chain: &MarkovChain, alphas: &[f64], c_log: f64) -> Vec<f64> {
    let mut cache: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(alphas.len());
    for (idx, &alpha) in alphas.iter().enumerate() {
        let t = idx + 1;
        let k = k_schedule(t, c_log);
        let m = k + 1;
        let delta = *cache.entry(m).or_insert_with(|| mixing_bound(chain, m));
        acc += alpha * delta;
        out.push(acc);
    }
    out
}

/// A seeded, single-owner stream of samples from a Markov chain. Identical
/// seed and initial state give a bitwise-identical sample sequence.
#[derive(Clone, Debug)]
pub struct SampleStream {
    chain: MarkovChain,
    state: usize,
    rng: ChaCha8Rng,
    step_count: u64,
}

impl SampleStream {
    /// Stream started at an explicit state.
    pub fn new(chain: MarkovChain, start_state: usize, seed: u64) -> Result<Self> {
        if start_state >= chain.n_states() {
            return Err(Error::Config(format!(
                "start state {start_state} out of range for {}-state chain",
                chain.n_states()
            )));
        }
        Ok(SampleStream {
            chain,
            state: start_state,
            rng: stream_rng(seed, Substream::Chain),
            step_count: 0,
        })
    }

    /// Stream whose initial state is drawn from the stationary distribution
    /// (first draw of the stream's generator).
    pub fn from_stationary(chain: MarkovChain, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Substream::Chain);
        let state = sample_index(chain.stationary().as_slice(), rng.gen::<f64>());
        SampleStream {
            chain,
            state,
            rng,
            step_count: 0,
        }
    }

    /// Advances the chain by one transition and returns the sample attached
    /// to the new state.
    pub fn step(&mut self) -> &SamplePoint {
        let row = self.chain.transition().row(self.state);
        self.state = sample_index(row, self.rng.gen::<f64>());
        self.step_count += 1;
        self.chain.sample_of_state(self.state)
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
