//! Estimating a normalization constant `W = sum_y w(y)` from samples drawn
//! proportionally to `w` with the weight of each sample revealed.
//!
//! One run draws `k = ceil(4 sqrt(N) / eps)` samples. The first half fixes a
//! set `A` of distinct items whose total weight is known exactly; the second
//! half estimates `w(A) / W` by its hit frequency, giving `W ≈ w(A) / p`.
//! Nine runs are combined by their median.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{EmdError, Result};
use crate::seed::{Rng, Seed};

/// How a sampler obtains the total weight of a sub-support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightSumMode {
    /// Enumerate the support.
    #[default]
    Exact,
    /// Sample-based estimate at the given relative precision.
    Sampled { eps: f64 },
}

/// Independent runs combined by the median.
pub const MEDIAN_RUNS: usize = 9;

/// Samples per run for a support of `support` items.
pub fn samples_per_run(support: usize, eps: f64) -> usize {
    ((4.0 * (support.max(1) as f64).sqrt() / eps).ceil() as usize).max(2)
}

/// Natural log of the estimate of `W`. `draw` returns `(item key, ln w)` for
/// one proportional sample.
pub fn estimate_log_weight_sum(mut draw: impl FnMut(&mut Rng) -> Result<(u64, f64)>, support: usize, eps: f64, seed: Seed) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(EmdError::input(format!("estimator precision {eps} outside (0, 1)")));
    }
    if support == 0 {
        return Err(EmdError::input("weight-sum estimate over an empty support"));
    }
    let k = samples_per_run(support, eps);
    let mut runs = Vec::with_capacity(MEDIAN_RUNS);
    for r in 0..MEDIAN_RUNS {
        let mut rng = seed.derive(0xE57, r as u64).rng();
        let mut seen: HashMap<u64, f64> = HashMap::new();
        for _ in 0..k / 2 {
            let (key, lw) = draw(&mut rng)?;
            seen.insert(key, lw);
        }
        let hits = (k / 2..k).try_fold(0usize, |h, _| Ok::<_, EmdError>(h + usize::from(seen.contains_key(&draw(&mut rng)?.0))))?;
        let logs: Vec<f64> = seen.values().copied().collect();
        let log_a = log_sum_exp(&logs);
        if !log_a.is_finite() {
            return Err(EmdError::input("degenerate sampler: every observed weight is zero"));
        }
        let p = (hits.max(1)) as f64 / (k - k / 2) as f64;
        runs.push(log_a - p.ln());
    }
    runs.sort_by(f64::total_cmp);
    Ok(runs[MEDIAN_RUNS / 2])
}

/// [`estimate_log_weight_sum`] on the linear scale; `draw` reveals `w` itself.
pub fn estimate_weight_sum(mut draw: impl FnMut(&mut Rng) -> Result<(u64, f64)>, support: usize, eps: f64, seed: Seed) -> Result<f64> {
    let lw = estimate_log_weight_sum(
        |rng| {
            let (k, w) = draw(rng)?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(EmdError::input(format!("sampler revealed invalid weight {w}")));
            }
            Ok((k, w.ln()))
        },
        support,
        eps,
        seed,
    )?;
    Ok(lw.exp())
}

/// `ln sum exp(l)`; `-inf` for an empty slice or all `-inf`.
pub fn log_sum_exp(logs: &[f64]) -> f64 {
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + logs.iter().map(|l| (l - mx).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    /// Proportional sampler over explicit weights via a cumulative table.
    fn table_sampler(w: &[f64]) -> impl FnMut(&mut Rng) -> Result<(u64, f64)> + '_ {
        let mut cum = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        for &x in w {
            acc += x;
            cum.push(acc);
        }
        move |rng: &mut Rng| {
            let u = rng.random::<f64>() * acc;
            let k = cum.partition_point(|&c| c <= u).min(w.len() - 1);
            Ok((k as u64, w[k]))
        }
    }

    #[test]
    fn uniform_weights() {
        let w = vec![1.0; 1000];
        for s in 0..20 {
            let est = estimate_weight_sum(table_sampler(&w), w.len(), 0.1, Seed(s)).unwrap();
            assert!((est / 1000.0 - 1.0).abs() <= 0.1, "{est}");
        }
    }

    #[test]
    fn single_item_is_exact() {
        let w = [3.5];
        let est = estimate_weight_sum(table_sampler(&w), 1, 0.1, Seed(1)).unwrap();
        assert!((est - 3.5).abs() < 1e-12);
    }

    #[test]
    fn geometric_weights() {
        for ratio in [0.999f64, 0.99, 0.9, 0.5] {
            let w: Vec<f64> = (0..1000).map(|k| ratio.powi(k)).collect();
            let total: f64 = w.iter().sum();
            let good = (0..200)
                .filter(|&s| {
                    let est = estimate_weight_sum(table_sampler(&w), w.len(), 0.1, Seed(s)).unwrap();
                    (est / total - 1.0).abs() <= 0.1
                })
                .count();
            assert!(good >= 190, "ratio {ratio}: {good}/200");
        }
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let w = [0.0, 0.0];
        let r = estimate_weight_sum(|_| Ok((0, w[0])), 2, 0.1, Seed(0));
        assert!(r.unwrap_err().is_input());
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let v = [0.5f64, -1.0, 2.0];
        let direct = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1e4, 1e4]) - (1e4 + 2f64.ln())).abs() < 1e-9);
    }
}
