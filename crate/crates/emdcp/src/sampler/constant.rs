//! Sampling from `λ(η, C, D, P)` on a rectangle where `D ≡ κ`.
//!
//! Pairs are drawn proportionally to `w_ij = exp(η |κ| / C_ij)` and the sign
//! by a rejection step whose restart turns the pair law into
//! `w_ij+ + w_ij-`. The explicit set `𝒯 = 𝓛_t ∪ (S ∩ (L_{t+1} ∪ L_{t+2}))`
//! holds every pair whose cost can be below `(1+eps)^t`; its complement is
//! sampled by uniform proposals under the envelope
//! `w_max = exp(η |κ| (1+eps)^{-t})`.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::estimate::{estimate_log_weight_sum, log_sum_exp, WeightSumMode};
use crate::close_pairs::{find_close_pairs, ClosePairsConfig, ClosePairsResult};
use crate::cp::CpOracle;
use crate::error::{EmdError, Result};
use crate::geometry::{level_of_distance, RoundingState};
use crate::seed::{Rng, Seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub i: usize,
    pub j: usize,
    pub sigma: i8,
}

/// Parameters shared by the constant and arbitrary samplers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub eta: f64,
    /// Aspect-ratio bound handed to prefix search.
    pub phi: f64,
    pub phi_exp: f64,
    pub close: ClosePairsConfig,
    /// Complement weight inside a rectangle.
    pub complement: WeightSumMode,
    /// Rectangle volumes in the arbitrary sampler.
    pub volumes: WeightSumMode,
    /// Attempts per sample are capped at `budget_factor * m^(1 - phi_exp / 4)`.
    pub budget_factor: f64,
    /// Resample a stalled rectangle by enumeration instead of failing.
    pub stall_fallback: bool,
}

impl SamplerConfig {
    pub fn new(eta: f64, phi: f64, phi_exp: f64) -> Self {
        SamplerConfig {
            eta,
            phi,
            phi_exp,
            close: ClosePairsConfig::default(),
            complement: WeightSumMode::Exact,
            volumes: WeightSumMode::Exact,
            budget_factor: 64.0,
            stall_fallback: false,
        }
    }
}

/// Counters of one sampler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub samples: u64,
    pub attempts: u64,
    pub explicit_size: u64,
}

impl SamplerStats {
    pub fn merge(&mut self, o: &SamplerStats) {
        self.samples += o.samples;
        self.attempts += o.attempts;
        self.explicit_size += o.explicit_size;
    }
}

/// Log of `w_ij+ + w_ij-` for `a = η D / C >= 0`.
pub fn log_pair_volume(a: f64) -> f64 {
    a + (-2.0 * a).exp().ln_1p()
}

/// Prefix of the rectangle `rows x cols` computed with `oracle`.
pub fn rect_prefix(
    oracle: &dyn CpOracle,
    rounding: &RoundingState,
    rows: &[usize],
    cols: &[usize],
    cfg: &SamplerConfig,
    seed: Seed,
) -> Result<ClosePairsResult> {
    let x = rounding.x().select(rows);
    let y = rounding.y().select(cols);
    find_close_pairs(oracle, &x, &y, cfg.phi, cfg.phi_exp, rounding.eps(), cfg.close, seed)
}

/// Prepared fixed-`D` sampler over `rows x cols` (global indices).
pub struct ConstantSampler<'a> {
    rounding: &'a RoundingState,
    rows: Vec<usize>,
    cols: Vec<usize>,
    signs: Vec<i8>,
    eta_kappa: f64,
    t: i64,
    explicit: Vec<u32>,
    explicit_set: HashSet<u32>,
    explicit_cum: Vec<f64>,
    complement: usize,
    log_w_max: f64,
    /// Probability of the explicit branch.
    p_explicit: f64,
    /// Secondary acceptance of explicit (resp. complement) candidates.
    accept_explicit: f64,
    accept_complement: f64,
    exact_mixture: bool,
    budget: u64,
    stats: SamplerStats,
}

impl<'a> ConstantSampler<'a> {
    /// `signs(i, j)` gives `P_ij` for global indices; `prefix` is the retrieval
    /// result on `rows x cols` in local indices.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rounding: &'a RoundingState,
        rows: &[usize],
        cols: &[usize],
        signs: impl Fn(usize, usize) -> i8,
        kappa: f64,
        prefix: &ClosePairsResult,
        cfg: &SamplerConfig,
        seed: Seed,
    ) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return Err(EmdError::input("constant sampler on an empty rectangle"));
        }
        if !(kappa.is_finite() && cfg.eta > 0.0) {
            return Err(EmdError::input("constant sampler needs finite kappa and positive eta"));
        }
        let (mr, mc) = (rows.len(), cols.len());
        let eps = rounding.eps();
        let t = prefix.t;
        let mut explicit_set: HashSet<u32> = HashSet::new();
        for &(a, b) in &prefix.pairs {
            explicit_set.insert((a * mc + b) as u32);
        }
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                if rounding.in_s(i, j) {
                    let lvl = level_of_distance(rounding.distance(i, j), eps);
                    if lvl == t + 1 || lvl == t + 2 {
                        explicit_set.insert((a * mc + b) as u32);
                    }
                }
            }
        }
        let mut explicit: Vec<u32> = explicit_set.iter().copied().collect();
        explicit.sort_unstable();
        let signs: Vec<i8> = rows.iter().flat_map(|&i| cols.iter().map(move |&j| (i, j))).map(|(i, j)| signs(i, j)).collect();
        let eta_kappa = cfg.eta * kappa.abs();
        let mut me = ConstantSampler {
            rounding,
            rows: rows.to_vec(),
            cols: cols.to_vec(),
            signs,
            eta_kappa,
            t,
            explicit,
            explicit_set,
            explicit_cum: Vec::new(),
            complement: mr * mc,
            log_w_max: eta_kappa * (1.0 + eps).powf(-(t as f64)),
            p_explicit: 0.0,
            accept_explicit: 1.0,
            accept_complement: 1.0,
            exact_mixture: true,
            budget: (cfg.budget_factor * (mr.max(mc) as f64).powf(1.0 - cfg.phi_exp / 4.0)).ceil().max(1.0) as u64,
            stats: SamplerStats::default(),
        };
        me.complement -= me.explicit.len();
        me.stats.explicit_size = me.explicit.len() as u64;

        let explicit_logs: Vec<f64> = me.explicit.iter().map(|&k| me.log_w(k)).collect();
        let log_wt = log_sum_exp(&explicit_logs);
        let mut acc = 0.0;
        me.explicit_cum = explicit_logs
            .iter()
            .map(|l| {
                acc += (l - log_wt).exp();
                acc
            })
            .collect();

        let log_wc = if me.complement == 0 {
            f64::NEG_INFINITY
        } else {
            match cfg.complement {
                WeightSumMode::Exact => {
                    let logs: Vec<f64> = (0..(mr * mc) as u32).filter(|k| !me.explicit_set.contains(k)).map(|k| me.log_w(k)).collect();
                    log_sum_exp(&logs)
                }
                WeightSumMode::Sampled { eps: est } => {
                    me.exact_mixture = false;
                    let mut counter = SamplerStats::default();
                    let budget = me.budget;
                    let lw = estimate_log_weight_sum(
                        |rng| {
                            let mut attempts = 0u64;
                            let k = me.complement_draw(rng, &mut attempts, budget.saturating_mul(64))?;
                            counter.attempts += attempts;
                            Ok((k as u64, me.log_w(k)))
                        },
                        me.complement,
                        est,
                        seed.child("complement-weight"),
                    )?;
                    me.stats.attempts += counter.attempts;
                    lw
                }
            }
        };
        me.p_explicit = if me.complement == 0 {
            1.0
        } else if me.explicit.is_empty() {
            0.0
        } else {
            1.0 / (1.0 + (log_wc - log_wt).exp())
        };
        if !me.exact_mixture && !me.explicit.is_empty() {
            // Per attempt both branches then emit (i, j) with probability
            // proportional to w_ij, for any positive complement estimate.
            let log_ratio = log_wc - (me.complement as f64).ln() - me.log_w_max;
            me.accept_explicit = log_ratio.min(0.0).exp();
            me.accept_complement = (-log_ratio.max(0.0)).exp();
        }
        Ok(me)
    }

    pub fn t(&self) -> i64 {
        self.t
    }

    pub fn explicit_len(&self) -> usize {
        self.explicit.len()
    }

    pub fn stats(&self) -> SamplerStats {
        self.stats
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    fn global(&self, k: u32) -> (usize, usize) {
        let mc = self.cols.len();
        (self.rows[k as usize / mc], self.cols[k as usize % mc])
    }

    /// `a = η |κ| / C` of local pair `k`.
    fn a(&self, k: u32) -> f64 {
        let (i, j) = self.global(k);
        self.eta_kappa / self.rounding.cost(i, j)
    }

    fn log_w(&self, k: u32) -> f64 {
        self.a(k)
    }

    /// Uniform pair of the complement, then the envelope test. The envelope
    /// holds exactly when the prefix set contains every pair of level `<= t`.
    fn complement_propose(&self, rng: &mut Rng) -> Result<Option<u32>> {
        let total = (self.rows.len() * self.cols.len()) as u32;
        let k = loop {
            let k = rng.random_range(0..total);
            if !self.explicit_set.contains(&k) {
                break k;
            }
        };
        let log_ratio = self.log_w(k) - self.log_w_max;
        if log_ratio > 1e-9 {
            let (i, j) = self.global(k);
            return Err(EmdError::PrefixMiss { t: self.t, i, j });
        }
        Ok((rng.random::<f64>() < log_ratio.exp()).then_some(k))
    }

    /// One complement pair drawn proportionally to `w_ij`.
    fn complement_draw(&self, rng: &mut Rng, attempts: &mut u64, budget: u64) -> Result<u32> {
        loop {
            *attempts += 1;
            if *attempts > budget {
                return Err(EmdError::SamplerStall { attempts: *attempts, budget });
            }
            if let Some(k) = self.complement_propose(rng)? {
                return Ok(k);
            }
        }
    }

    /// Draws a pair proportionally to `w_ij`, then the sign; a rejected sign
    /// restarts the draw.
    fn draw_one(&mut self, rng: &mut Rng) -> Result<Triple> {
        let mut attempts = 0u64;
        let out = loop {
            attempts += 1;
            if attempts > self.budget {
                return Err(self.stall(attempts));
            }
            let k = if rng.random::<f64>() < self.p_explicit {
                let u = rng.random::<f64>();
                let idx = self.explicit_cum.partition_point(|&c| c <= u).min(self.explicit.len() - 1);
                if rng.random::<f64>() >= self.accept_explicit {
                    continue;
                }
                self.explicit[idx]
            } else if self.exact_mixture {
                attempts -= 1;
                match self.complement_draw(rng, &mut attempts, self.budget) {
                    Err(EmdError::SamplerStall { .. }) => return Err(self.stall(attempts)),
                    other => other?,
                }
            } else {
                match self.complement_propose(rng)? {
                    Some(k) if rng.random::<f64>() < self.accept_complement => k,
                    _ => continue,
                }
            };
            let sigma: i8 = if rng.random::<bool>() { 1 } else { -1 };
            if sigma == self.signs[k as usize] || rng.random::<f64>() < (-2.0 * self.a(k)).exp() {
                let (i, j) = self.global(k);
                break Triple { i, j, sigma };
            }
        };
        self.stats.samples += 1;
        self.stats.attempts += attempts;
        Ok(out)
    }

    fn stall(&self, attempts: u64) -> EmdError {
        EmdError::SamplerStall { attempts, budget: self.budget }
    }

    pub fn sample(&mut self, count: usize, seed: Seed) -> Result<Vec<Triple>> {
        let mut rng = seed.rng();
        (0..count).map(|_| self.draw_one(&mut rng)).collect()
    }
}

/// `count` i.i.d. samples of `λ(η, C, κ, P)` restricted to `rows x cols`.
#[allow(clippy::too_many_arguments)]
pub fn constant_sampler(
    rounding: &RoundingState,
    rows: &[usize],
    cols: &[usize],
    signs: impl Fn(usize, usize) -> i8,
    kappa: f64,
    prefix: &ClosePairsResult,
    count: usize,
    cfg: &SamplerConfig,
    seed: Seed,
) -> Result<Vec<Triple>> {
    let mut s = ConstantSampler::new(rounding, rows, cols, signs, kappa, prefix, cfg, seed.child("prepare"))?;
    s.sample(count, seed.child("draw"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::BruteOracle;
    use crate::exact::{explicit_lambda, Matrix};
    use crate::geometry::PointSet;
    use crate::instances::separated_pair;
    use crate::sampler::shatter::draw_rounding_set;
    use crate::stats::tv_to_table;

    fn rounding_for(n: usize, d: usize, range: u32, eps: f64, seed: Seed) -> RoundingState {
        let (x, y) = separated_pair(n, d, range, seed);
        let s = draw_rounding_set(n, 0.5, seed.child("S"));
        RoundingState::new(x, y, eps, s.pairs()).unwrap()
    }

    fn fixed_table(r: &RoundingState, eta: f64, kappa: f64, signs: &[i8]) -> crate::exact::LambdaTable {
        let n = r.n();
        let c = Matrix::from_fn(n, n, |i, j| r.cost(i, j));
        let d = Matrix::filled(n, n, kappa);
        let p = Matrix::from_fn(n, n, |i, j| f64::from(signs[i * n + j]));
        explicit_lambda(eta, &c, &d, &p).unwrap()
    }

    fn run(r: &RoundingState, signs: &[i8], kappa: f64, cfg: &SamplerConfig, count: usize, seed: Seed) -> Result<Vec<Triple>> {
        let n = r.n();
        let idx: Vec<usize> = (0..n).collect();
        let prefix = rect_prefix(&BruteOracle, r, &idx, &idx, cfg, seed.child("prefix"))?;
        constant_sampler(r, &idx, &idx, |i, j| signs[i * n + j], kappa, &prefix, count, cfg, seed)
    }

    #[test]
    fn zero_kappa_is_uniform() {
        let r = rounding_for(8, 3, 12, 0.25, Seed(1));
        let signs = vec![1i8; 64];
        let cfg = SamplerConfig::new(1.0, 64.0, 0.5);
        let s = run(&r, &signs, 0.0, &cfg, 40_000, Seed(2)).unwrap();
        let tv = tv_to_table(&s, &fixed_table(&r, 1.0, 0.0, &signs));
        assert!(tv < 0.04, "tv = {tv}");
    }

    #[test]
    fn two_points_equal_distances() {
        let x = PointSet::from_rows(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        let y = PointSet::from_rows(&[[2.0, 0.0], [0.0, 2.0]]).unwrap();
        let r = RoundingState::new(x, y, 0.25, []).unwrap();
        let signs = [1i8, -1, -1, 1];
        let (eta, kappa) = (1.0, 1.5);
        let cfg = SamplerConfig::new(eta, 4.0, 0.5);
        let s = run(&r, &signs, kappa, &cfg, 40_000, Seed(3)).unwrap();
        let mut pairs = [0usize; 4];
        let mut agree = 0usize;
        for t in &s {
            pairs[t.i * 2 + t.j] += 1;
            agree += usize::from(t.sigma == signs[t.i * 2 + t.j]);
        }
        for c in pairs {
            assert!((c as f64 / 10_000.0 - 1.0).abs() < 0.05, "{pairs:?}");
        }
        let ratio = agree as f64 / (s.len() - agree) as f64;
        let want = (2.0 * eta * kappa / r.cost(0, 0)).exp();
        assert!((ratio / want - 1.0).abs() < 0.05, "ratio {ratio} want {want}");
    }

    #[test]
    fn sixteen_point_rectangle_matches_explicit() {
        let r = rounding_for(16, 3, 24, 0.25, Seed(4));
        let mut rng = Seed(5).rng();
        let signs: Vec<i8> = (0..256).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let eta = 1.0;
        let kappa = 12.0;
        let table = fixed_table(&r, eta, kappa, &signs);
        let spread = table.probs.iter().filter(|&&p| p > 1e-3).count();
        assert!(spread >= 40, "target too concentrated: {spread}");
        for mode in [WeightSumMode::Exact, WeightSumMode::Sampled { eps: 0.5 }] {
            let mut cfg = SamplerConfig::new(eta, 64.0, 0.5);
            cfg.complement = mode;
            cfg.budget_factor = 1e4;
            let s = run(&r, &signs, kappa, &cfg, 100_000, Seed(6)).unwrap();
            let tv = tv_to_table(&s, &table);
            assert!(tv <= 0.02, "{mode:?}: tv = {tv}");
        }
    }

    #[test]
    fn sign_law_matches_conditional() {
        let r = rounding_for(6, 2, 10, 0.5, Seed(7));
        let signs = vec![-1i8; 36];
        let (eta, kappa) = (0.7, 2.0);
        let cfg = SamplerConfig::new(eta, 32.0, 0.5);
        let s = run(&r, &signs, kappa, &cfg, 60_000, Seed(8)).unwrap();
        let mut by_pair = vec![(0usize, 0usize); 36];
        for t in &s {
            let e = &mut by_pair[t.i * 6 + t.j];
            e.0 += 1;
            e.1 += usize::from(t.sigma == -1);
        }
        for (k, &(tot, agree)) in by_pair.iter().enumerate() {
            if tot < 500 {
                continue;
            }
            let a = eta * kappa / r.cost(k / 6, k % 6);
            let want = 1.0 / (1.0 + (-2.0 * a).exp());
            let got = agree as f64 / tot as f64;
            let se = (want * (1.0 - want) / tot as f64).sqrt();
            assert!((got - want).abs() <= 4.0 * se + 1e-9, "pair {k}: {got} vs {want}");
        }
    }

    #[test]
    fn tiny_budget_stalls() {
        let r = rounding_for(8, 2, 40, 0.25, Seed(9));
        let signs = vec![1i8; 64];
        let mut cfg = SamplerConfig::new(1.0, 128.0, 0.5);
        cfg.budget_factor = 0.01;
        let err = run(&r, &signs, 200.0, &cfg, 1000, Seed(10)).unwrap_err();
        assert!(matches!(err, EmdError::SamplerStall { .. }), "{err:?}");
    }

    #[test]
    fn incomplete_prefix_is_detected() {
        let r = rounding_for(8, 2, 40, 0.25, Seed(13));
        let idx: Vec<usize> = (0..8).collect();
        let cfg = SamplerConfig::new(1.0, 128.0, 0.5);
        let mut prefix = rect_prefix(&BruteOracle, &r, &idx, &idx, &cfg, Seed(14)).unwrap();
        let lvl = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).map(|(i, j)| level_of_distance(r.distance(i, j), 0.25)).max().unwrap();
        // Every pair sits at level <= t, yet none are retrieved.
        prefix.t = lvl;
        prefix.pairs.clear();
        let signs = [1i8; 64];
        let err = constant_sampler(&r, &idx, &idx, |i, j| signs[i * 8 + j], 3.0, &prefix, 500, &cfg, Seed(15)).unwrap_err();
        assert!(matches!(err, EmdError::PrefixMiss { .. }), "{err:?}");
    }

    #[test]
    fn huge_exponents_stay_finite() {
        // eta kappa / C up to 1e4.
        let r = rounding_for(6, 2, 10, 0.25, Seed(11));
        let signs = vec![1i8; 36];
        let mut cfg = SamplerConfig::new(1.0, 32.0, 0.5);
        cfg.budget_factor = 1e6;
        let s = run(&r, &signs, 1e4, &cfg, 2000, Seed(12)).unwrap();
        let table = fixed_table(&r, 1.0, 1e4, &signs);
        assert!(table.probs.iter().all(|p| p.is_finite()));
        assert!(tv_to_table(&s, &table) < 0.05);
    }
}
