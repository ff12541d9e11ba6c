//! Distribution comparisons used by tests, the self-test suite and the CLI.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::exact::{triple_index, LambdaTable};
use crate::sampler::Triple;

/// Empirical counts of `samples` in the flattened triple order of `n`.
pub fn triple_counts(n: usize, samples: &[Triple]) -> Vec<u64> {
    let mut c = vec![0u64; 2 * n * n];
    for t in samples {
        c[triple_index(n, t.i, t.j, t.sigma)] += 1;
    }
    c
}

/// Total variation distance between the empirical law of `samples` and `table`.
pub fn tv_to_table(samples: &[Triple], table: &LambdaTable) -> f64 {
    let counts = triple_counts(table.n, samples);
    let total = samples.len().max(1) as f64;
    0.5 * counts.iter().zip(&table.probs).map(|(&c, &p)| (c as f64 / total - p).abs()).sum::<f64>()
}

/// p-value of Pearson's χ² test of `counts` against the uniform law.
pub fn chi_square_uniform_pvalue(counts: &[u64]) -> f64 {
    let k = counts.len();
    if k < 2 {
        return 1.0;
    }
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_extremes() {
        assert!(chi_square_uniform_pvalue(&[100, 100, 100, 100]) > 0.99);
        assert!(chi_square_uniform_pvalue(&[400, 0, 0, 0]) < 1e-6);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tv_of_exact_law_is_zero() {
        let table = LambdaTable { n: 1, probs: vec![0.5, 0.5], log_total: 2f64.ln() };
        let s = [Triple { i: 0, j: 0, sigma: 1 }, Triple { i: 0, j: 0, sigma: -1 }];
        assert_eq!(tv_to_table(&s, &table), 0.0);
    }
}
