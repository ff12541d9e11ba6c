//! Sampling from `λ(η, C, D, P)` for arbitrary rounded duals: parts of a
//! rectangle partition are chosen by volume, rectangles are sampled by the
//! fixed-`D` sampler and the leftover set `E` by enumeration.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::constant::{log_pair_volume, rect_prefix, ConstantSampler, SamplerConfig, SamplerStats, Triple};
use super::duals::{class_value, RoundedDuals};
use super::estimate::{estimate_log_weight_sum, log_sum_exp, WeightSumMode};
use super::rectangles::{partition_rectangles, RectanglePartition};
use crate::cp::CpOracle;
use crate::error::{EmdError, Result};
use crate::geometry::RoundingState;
use crate::par;
use crate::seed::{Rng, Seed};

/// Explicit sampler over a list of pairs with exact sign law.
#[derive(Debug, Clone)]
pub struct ExplicitSampler {
    pairs: Vec<(usize, usize)>,
    a: Vec<f64>,
    signs: Vec<i8>,
    cum: Vec<f64>,
    log_volume: f64,
}

impl ExplicitSampler {
    pub fn new(rounding: &RoundingState, duals: &RoundedDuals, eta: f64, pairs: Vec<(usize, usize)>) -> Self {
        let a: Vec<f64> = pairs.iter().map(|&(i, j)| eta * duals.d(i, j) / rounding.cost(i, j)).collect();
        let signs = pairs.iter().map(|&(i, j)| duals.p(i, j)).collect();
        let logs: Vec<f64> = a.iter().map(|&x| log_pair_volume(x)).collect();
        let log_volume = log_sum_exp(&logs);
        let mut acc = 0.0;
        let cum = logs
            .iter()
            .map(|l| {
                acc += (l - log_volume).exp();
                acc
            })
            .collect();
        ExplicitSampler { pairs, a, signs, cum, log_volume }
    }

    /// `ln sum_{(i,j), sigma} w_ij sigma`.
    pub fn log_volume(&self) -> f64 {
        self.log_volume
    }

    pub fn draw(&self, rng: &mut Rng) -> Triple {
        let u = rng.random::<f64>();
        let k = self.cum.partition_point(|&c| c <= u).min(self.pairs.len() - 1);
        let (i, j) = self.pairs[k];
        // P(sigma = P_ij) = w_+ / (w_+ + w_-) = 1 / (1 + e^{-2a}).
        let keep = rng.random::<f64>() * (1.0 + (-2.0 * self.a[k]).exp()) < 1.0;
        let sigma = if keep { self.signs[k] } else { -self.signs[k] };
        Triple { i, j, sigma }
    }
}

/// Output of [`arbitrary_sampler`].
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub triples: Vec<Triple>,
    pub diagnostics: SamplerDiagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub rects: usize,
    pub e_len: usize,
    pub rect_side: usize,
    /// Rectangles that received at least one sample.
    pub rects_sampled: usize,
    /// Rectangles resampled by enumeration after a stall.
    pub stall_fallbacks: usize,
    /// Rectangles resampled by enumeration after an incomplete prefix set.
    pub prefix_misses: usize,
    pub stats: SamplerStats,
}

/// `ε² / (100 log² n log² Φ)`, the volume precision of the two-step sampler.
pub fn volume_precision(eps: f64, n: usize, phi: f64) -> f64 {
    let ln_n = (n.max(2) as f64).log2();
    let lp = phi.max(2.0).log2();
    eps * eps / (100.0 * ln_n * ln_n * lp * lp)
}

/// Samples of one rectangle, its sampler stats, and the error that forced an
/// enumeration fallback, if any.
type RectDraw = (Vec<Triple>, SamplerStats, Option<EmdError>);

/// Log volume of one rectangle under `cfg.volumes`.
#[allow(clippy::too_many_arguments)]
fn rect_log_volume(
    rounding: &RoundingState,
    duals: &RoundedDuals,
    rows: &[usize],
    cols: &[usize],
    kappa: f64,
    prefix_seed: Seed,
    oracle: &dyn CpOracle,
    cfg: &SamplerConfig,
) -> Result<f64> {
    let exact = || {
        let logs: Vec<f64> = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| log_pair_volume(cfg.eta * kappa / rounding.cost(i, j)))
            .collect();
        log_sum_exp(&logs)
    };
    match cfg.volumes {
        WeightSumMode::Exact => Ok(exact()),
        WeightSumMode::Sampled { eps } => {
            let prefix = rect_prefix(oracle, rounding, rows, cols, cfg, prefix_seed)?;
            let mut s = ConstantSampler::new(rounding, rows, cols, |i, j| duals.p(i, j), kappa, &prefix, cfg, prefix_seed)?;
            let mc = cols.len();
            let pos_of = |i: usize, j: usize| {
                let a = rows.iter().position(|&r| r == i).unwrap_or(0);
                let b = cols.iter().position(|&c| c == j).unwrap_or(0);
                (a * mc + b) as u64
            };
            let support = 2 * rows.len() * mc;
            estimate_log_weight_sum(
                |rng| {
                    let tr = s.sample(1, Seed(rng.random()))?[0];
                    let a = cfg.eta * kappa / rounding.cost(tr.i, tr.j);
                    let sign = f64::from(tr.sigma * duals.p(tr.i, tr.j));
                    Ok((pos_of(tr.i, tr.j) * 2 + u64::from(tr.sigma < 0), sign * a))
                },
                support,
                eps,
                prefix_seed.child("volume"),
            )
        }
    }
}

/// `count` samples from `λ(η, C(S), D, P)` with `C` from `rounding` and
/// `D, P` from `duals`.
pub fn arbitrary_sampler(
    rounding: &RoundingState,
    duals: &RoundedDuals,
    oracle: &dyn CpOracle,
    count: usize,
    cfg: &SamplerConfig,
    seed: Seed,
) -> Result<SampleBatch> {
    let n = rounding.n();
    if duals.n() != n || rounding.y().len() != n {
        return Err(EmdError::input("duals and rounding disagree on n"));
    }
    let partition = partition_rectangles(duals);
    sample_partition(rounding, duals, &partition, oracle, count, cfg, seed)
}

/// Two-step sampling over a prebuilt partition.
pub fn sample_partition(
    rounding: &RoundingState,
    duals: &RoundedDuals,
    partition: &RectanglePartition,
    oracle: &dyn CpOracle,
    count: usize,
    cfg: &SamplerConfig,
    seed: Seed,
) -> Result<SampleBatch> {
    let chi = duals.chi();
    let rect_seed = seed.child("rects");
    let rect_logs: Vec<Result<f64>> = par::map_range(partition.rects.len(), |r| {
        let rect = &partition.rects[r];
        let kappa = class_value(rect.class, chi);
        rect_log_volume(rounding, duals, &rect.rows, &rect.cols, kappa, rect_seed.derive(1, r as u64), oracle, cfg)
    });
    let mut logs: Vec<f64> = rect_logs.into_iter().collect::<Result<_>>()?;
    let e_sampler = (!partition.e.is_empty()).then(|| ExplicitSampler::new(rounding, duals, cfg.eta, partition.e.clone()));
    logs.push(e_sampler.as_ref().map_or(f64::NEG_INFINITY, |e| e.log_volume()));
    let total = log_sum_exp(&logs);
    let mut acc = 0.0;
    let cum: Vec<f64> = logs
        .iter()
        .map(|l| {
            acc += (l - total).exp();
            acc
        })
        .collect();

    let mut rng = seed.child("parts").rng();
    let e_part = partition.rects.len();
    let mut by_part: Vec<Vec<usize>> = vec![Vec::new(); e_part + 1];
    for s in 0..count {
        let u = rng.random::<f64>();
        let p = cum.partition_point(|&c| c <= u).min(e_part);
        let p = if logs[p] == f64::NEG_INFINITY { last_live(&logs) } else { p };
        by_part[p].push(s);
    }
    let live: Vec<usize> = (0..=e_part).filter(|&p| !by_part[p].is_empty()).collect();
    let draw_seed = seed.child("draw");
    let outcomes: Vec<Result<RectDraw>> = par::map_slice(&live, |&p| {
        let k = by_part[p].len();
        let s = draw_seed.derive(2, p as u64);
        if p == e_part {
            let e = e_sampler.as_ref().expect("E has volume");
            let mut r = s.rng();
            return Ok(((0..k).map(|_| e.draw(&mut r)).collect(), SamplerStats::default(), None));
        }
        let rect = &partition.rects[p];
        let kappa = class_value(rect.class, chi);
        let prefix = rect_prefix(oracle, rounding, &rect.rows, &rect.cols, cfg, s.child("prefix"))?;
        let mut stats = SamplerStats::default();
        let drawn = ConstantSampler::new(rounding, &rect.rows, &rect.cols, |i, j| duals.p(i, j), kappa, &prefix, cfg, s.child("prepare"))
            .and_then(|mut cs| {
                let v = cs.sample(k, s.child("samples"));
                stats = cs.stats();
                v
            });
        match drawn {
            Ok(v) => Ok((v, stats, None)),
            Err(err @ (EmdError::SamplerStall { .. } | EmdError::PrefixMiss { .. })) if cfg.stall_fallback => {
                let pairs = rect.rows.iter().flat_map(|&i| rect.cols.iter().map(move |&j| (i, j))).collect();
                let ex = ExplicitSampler::new(rounding, duals, cfg.eta, pairs);
                let mut r = s.child("fallback").rng();
                Ok(((0..k).map(|_| ex.draw(&mut r)).collect(), stats, Some(err)))
            }
            Err(e) => Err(e),
        }
    });

    let mut triples = vec![Triple { i: 0, j: 0, sigma: 1 }; count];
    let mut diagnostics =
        SamplerDiagnostics { rects: partition.rects.len(), e_len: partition.e.len(), rect_side: partition.side, ..Default::default() };
    for (&p, out) in live.iter().zip(outcomes) {
        let (v, stats, fell_back) = out?;
        if p != e_part {
            diagnostics.rects_sampled += 1;
        }
        match fell_back {
            Some(EmdError::PrefixMiss { .. }) => diagnostics.prefix_misses += 1,
            Some(_) => diagnostics.stall_fallbacks += 1,
            None => {}
        }
        diagnostics.stats.merge(&stats);
        for (&slot, t) in by_part[p].iter().zip(v) {
            triples[slot] = t;
        }
    }
    diagnostics.stats.samples = count as u64;
    Ok(SampleBatch { triples, diagnostics })
}

fn last_live(logs: &[f64]) -> usize {
    logs.iter().rposition(|l| *l > f64::NEG_INFINITY).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::BruteOracle;
    use crate::instances::separated_pair;
    use crate::sampler::duals::{round_duals, DualState};
    use crate::sampler::explicit_table;
    use crate::sampler::shatter::draw_rounding_set;
    use crate::stats::{chi_square_uniform_pvalue, triple_counts, tv_to_table};

    fn rounding_for(n: usize, seed: Seed) -> RoundingState {
        let (x, y) = separated_pair(n, 3, 24, seed);
        let s = draw_rounding_set(n, 0.5, seed.child("S"));
        RoundingState::new(x, y, 0.25, s.pairs()).unwrap()
    }

    fn cfg() -> SamplerConfig {
        SamplerConfig::new(0.5, 128.0, 0.5)
    }

    #[test]
    fn zero_duals_are_uniform() {
        let r = rounding_for(16, Seed(1));
        let duals = round_duals(DualState::zeros(16, 0.1).unwrap()).unwrap();
        let b = arbitrary_sampler(&r, &duals, &BruteOracle, 100_000, &cfg(), Seed(2)).unwrap();
        let p = chi_square_uniform_pvalue(&triple_counts(16, &b.triples));
        assert!(p >= 0.01, "p = {p}");
    }

    #[test]
    fn random_duals_match_explicit() {
        let n = 16;
        let r = rounding_for(n, Seed(3));
        let mut rng = Seed(4).rng();
        let alpha = (0..n).map(|_| rng.random_range(-12..=12)).collect();
        let beta = (0..n).map(|_| rng.random_range(-12..=12)).collect();
        let duals = round_duals(DualState::new(alpha, beta, 0.1).unwrap()).unwrap();
        let b = arbitrary_sampler(&r, &duals, &BruteOracle, 200_000, &cfg(), Seed(5)).unwrap();
        let tv = tv_to_table(&b.triples, &explicit_table(&r, &duals, 0.5).unwrap());
        assert!(tv <= 0.03, "tv = {tv}");
    }

    #[test]
    fn constant_duals_use_only_rectangles() {
        let n = 16;
        let r = rounding_for(n, Seed(6));
        let duals = round_duals(DualState::new(vec![9; n], vec![2; n], 0.1).unwrap()).unwrap();
        let part = partition_rectangles(&duals);
        assert!(part.e.is_empty());
        let b = sample_partition(&r, &duals, &part, &BruteOracle, 100_000, &cfg(), Seed(7)).unwrap();
        let tv = tv_to_table(&b.triples, &explicit_table(&r, &duals, 0.5).unwrap());
        assert!(tv <= 0.03, "tv = {tv}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let r = rounding_for(12, Seed(8));
        let duals = round_duals(DualState::new((0..12).collect(), vec![3; 12], 0.2).unwrap()).unwrap();
        let a = arbitrary_sampler(&r, &duals, &BruteOracle, 500, &cfg(), Seed(9)).unwrap();
        let b = arbitrary_sampler(&r, &duals, &BruteOracle, 500, &cfg(), Seed(9)).unwrap();
        assert_eq!(a.triples, b.triples);
    }
}
