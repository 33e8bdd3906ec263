//! Log-log rate fitting of stationarity metrics across horizons, with a
//! trial bootstrap for the slope confidence interval.

use rand::Rng;
use serde::Serialize;

use markovsgd::rng::{stream_rng, Substream};
use markovsgd::Trace;

use crate::error::{HarnessError, Result};

/// Which per-horizon metric the fit uses. All three are squared Moreau
/// envelope gradient norms read off the recorded checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMetric {
    /// Minimum over checkpoints up to the horizon (the default; matches the
    /// argmin output rule).
    MinMoreauSq,
    /// Value at the horizon checkpoint.
    FinalMoreauSq,
    /// Step-size-weighted average over checkpoints up to the horizon
    /// (the tau-weighted output in expectation, on the checkpoint grid).
    WeightedAvgMoreauSq,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub metric: RateMetric,
    /// Horizons of the fit grid.
    pub horizons: Vec<usize>,
    /// Per-trial metric value at each horizon: `per_trial[trial][grid_idx]`.
    pub per_trial: Vec<Vec<f64>>,
    /// Mean metric across trials per horizon.
    pub mean_metric: Vec<f64>,
    /// OLS slope of log2(mean metric) against log2(horizon).
    pub slope: f64,
    /// 95% bootstrap confidence interval for the slope (trial resampling).
    pub slope_ci: (f64, f64),
    pub r_squared: f64,
}

const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0xb007;

/// Fits the decay exponent of a stationarity metric over a horizon grid.
/// Needs at least 4 grid points and 5 trials.
pub fn rate_fit(traces: &[&Trace], horizons: &[usize], metric: RateMetric) -> Result<RateFit> {
    if horizons.len() < 4 {
        return Err(HarnessError::Invalid(format!(
            "rate fit needs >= 4 horizons, got {}",
            horizons.len()
        )));
    }
    if traces.len() < 5 {
        return Err(HarnessError::Invalid(format!(
            "rate fit needs >= 5 trials, got {}",
            traces.len()
        )));
    }
    let mut per_trial = Vec::with_capacity(traces.len());
    for (i, trace) in traces.iter().enumerate() {
        let mut row = Vec::with_capacity(horizons.len());
        for &horizon in horizons {
            row.push(metric_value(trace, horizon, metric).ok_or_else(|| {
                HarnessError::Invalid(format!(
                    "trial {i}: no Moreau diagnostics recorded at or before t={horizon}"
                ))
            })?);
        }
        per_trial.push(row);
    }

    let mean_metric: Vec<f64> = (0..horizons.len())
        .map(|j| per_trial.iter().map(|row| row[j]).sum::<f64>() / per_trial.len() as f64)
        .collect();
    let xs: Vec<f64> = horizons.iter().map(|&t| (t as f64).log2()).collect();
    let (slope, r_squared) = ols(&xs, &log2_all(&mean_metric)?);

    // trial bootstrap for the slope CI
    let mut rng = stream_rng(BOOTSTRAP_SEED, Substream::Chain);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut resampled_mean = vec![0.0; horizons.len()];
        for _ in 0..per_trial.len() {
            let pick = rng.gen_range(0..per_trial.len());
            for (j, v) in per_trial[pick].iter().enumerate() {
                resampled_mean[j] += v;
            }
        }
        for v in &mut resampled_mean {
            *v /= per_trial.len() as f64;
        }
        if let Ok(ys) = log2_all(&resampled_mean) {
            slopes.push(ols(&xs, &ys).0);
        }
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).expect("finite slopes"));
    let lo = slopes[(slopes.len() as f64 * 0.025) as usize];
    let hi = slopes[((slopes.len() as f64 * 0.975) as usize).min(slopes.len() - 1)];

    Ok(RateFit {
        metric,
        horizons: horizons.to_vec(),
        per_trial,
        mean_metric,
        slope,
        slope_ci: (lo, hi),
        r_squared,
    })
}

fn metric_value(trace: &Trace, horizon: usize, metric: RateMetric) -> Option<f64> {
    let sq = |norm: f64| norm * norm;
    match metric {
        RateMetric::MinMoreauSq => trace
            .checkpoints
            .iter()
            .filter(|cp| cp.t <= horizon)
            .filter_map(|cp| cp.moreau_grad_norm)
            .map(sq)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            }),
        RateMetric::FinalMoreauSq => trace
            .checkpoint_at(horizon)
            .and_then(|cp| cp.moreau_grad_norm)
            .map(sq),
        RateMetric::WeightedAvgMoreauSq => {
            let mut num = 0.0;
            let mut den = 0.0;
            for cp in trace.checkpoints.iter().filter(|cp| cp.t <= horizon) {
                let norm = cp.moreau_grad_norm?;
                let alpha = trace.step_sizes.get(cp.t - 1).copied()?;
                num += alpha * sq(norm);
                den += alpha;
            }
            (den > 0.0).then(|| num / den)
        }
    }
}

fn log2_all(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| {
            if v > 0.0 {
                Ok(v.log2())
            } else {
                Err(HarnessError::Invalid(
                    "rate fit metric hit zero; nothing to fit on a log scale".into(),
                ))
            }
        })
        .collect()
}

/// Ordinary least squares slope and R^2 of y against x.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let fit = intercept + slope * x;
            (y - fit) * (y - fit)
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (slope, r_squared)
}

/// Power-of-two horizons in `[tmin, tmax]`.
pub fn power_of_two_grid(tmin: usize, tmax: usize) -> Result<Vec<usize>> {
    if tmin == 0 || tmax < tmin {
        return Err(HarnessError::Invalid(format!(
            "bad horizon range [{tmin}, {tmax}]"
        )));
    }
    let mut grid = Vec::new();
    let mut t = 1usize;
    while t <= tmax {
        if t >= tmin {
            grid.push(t);
        }
        t = t.saturating_mul(2);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use markovsgd::{Checkpoint, Trace, Vector};

    fn fake_trace(grid: &[usize], f: impl Fn(usize) -> f64) -> Trace {
        let horizon = *grid.last().unwrap();
        Trace {
            step_sizes: (1..=horizon).map(|t| 1.0 / (t as f64).sqrt()).collect(),
            losses: vec![None; horizon],
            theta_change: vec![0.0; horizon],
            momentum_norms: vec![],
            checkpoints: grid
                .iter()
                .map(|&t| Checkpoint {
                    t,
                    iterate: Vector::zeros(1),
                    moreau_grad_norm: Some(f(t).sqrt()),
                    grad_map_norm: None,
                    proxpoint_dist: None,
                })
                .collect(),
            final_iterate: Vector::zeros(1),
            output_index: 1,
            output_iterate: Vector::zeros(1),
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn exact_power_law_recovers_slope() {
        let grid: Vec<usize> = vec![256, 512, 1024, 2048, 4096];
        let traces: Vec<Trace> = (0..6)
            .map(|_| fake_trace(&grid, |t| 3.0 / (t as f64).sqrt()))
            .collect();
        let refs: Vec<&Trace> = traces.iter().collect();
        let fit = rate_fit(&refs, &grid, RateMetric::MinMoreauSq).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12, "slope {}", fit.slope);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.slope_ci.0 <= fit.slope && fit.slope <= fit.slope_ci.1);
    }

    #[test]
    fn constant_metric_gives_zero_slope() {
        let grid: Vec<usize> = vec![16, 32, 64, 128];
        let traces: Vec<Trace> = (0..5).map(|_| fake_trace(&grid, |_| 0.25)).collect();
        let refs: Vec<&Trace> = traces.iter().collect();
        let fit = rate_fit(&refs, &grid, RateMetric::FinalMoreauSq).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn insufficient_data_rejected() {
        let grid: Vec<usize> = vec![16, 32, 64];
        let traces: Vec<Trace> = (0..5).map(|_| fake_trace(&[16, 32, 64], |_| 1.0)).collect();
        let refs: Vec<&Trace> = traces.iter().collect();
        assert!(rate_fit(&refs, &grid, RateMetric::MinMoreauSq).is_err());
        let grid4: Vec<usize> = vec![16, 32, 64, 128];
        let traces: Vec<Trace> = (0..4).map(|_| fake_trace(&grid4, |_| 1.0)).collect();
        let refs: Vec<&Trace> = traces.iter().collect();
        assert!(rate_fit(&refs, &grid4, RateMetric::MinMoreauSq).is_err());
    }

    #[test]
    fn weighted_average_uses_step_sizes() {
        let grid: Vec<usize> = vec![4, 16, 64, 256];
        let trace = fake_trace(&grid, |t| 1.0 / t as f64);
        let value = metric_value(&trace, 256, RateMetric::WeightedAvgMoreauSq).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for &t in &grid {
            let alpha = 1.0 / (t as f64).sqrt();
            num += alpha * (1.0 / t as f64);
            den += alpha;
        }
        assert!((value - num / den).abs() < 1e-15);
    }

    #[test]
    fn grid_construction() {
        assert_eq!(
            power_of_two_grid(256, 2048).unwrap(),
            vec![256, 512, 1024, 2048]
        );
        assert!(power_of_two_grid(8, 4).is_err());
    }
}
