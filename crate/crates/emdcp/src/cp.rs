//! Pluggable approximate closest-pair oracles, success boosting, and the
//! subsampling wrapper used by close-pair retrieval.

use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{EmdError, Result};
use crate::exact::brute_closest_pair;
use crate::geometry::{l1, PointSet};
use crate::seed::Seed;

/// A (1+eps)-approximate closest cross pair solver.
///
/// Implementations must be safe for concurrent queries; all randomness comes
/// from the per-query seed.
pub trait CpOracle: Sync + Send {
    fn name(&self) -> &'static str;

    /// Declared upper bound on the probability that a query is not
    /// (1+eps)-approximate; at most 1/3.
    fn failure_probability(&self) -> f64;

    /// Returns `(i, j)` with `i < a.len()`, `j < b.len()`. Both sets are nonempty.
    fn query(&self, a: &PointSet, b: &PointSet, eps: f64, seed: Seed) -> Result<(usize, usize)>;
}

/// Exhaustive scan; exact, ties broken lexicographically.
#[derive(Debug, Clone, Copy, Default)]
pub struct BruteOracle;

impl CpOracle for BruteOracle {
    fn name(&self) -> &'static str {
        "brute"
    }

    fn failure_probability(&self) -> f64 {
        0.0
    }

    fn query(&self, a: &PointSet, b: &PointSet, _eps: f64, _seed: Seed) -> Result<(usize, usize)> {
        let (i, j, _) = brute_closest_pair(a, b)?;
        Ok((i, j))
    }
}

/// Single randomly shifted grid. The cell side is a distance guess from a
/// sparse sample of pairs; each point of `a` is compared with points of `b`
/// in its own cell and in the `2d` cells that differ in one coordinate. The
/// side doubles while no candidate is found.
#[derive(Debug, Clone, Copy)]
pub struct GridOracle {
    /// Sampled pairs for the distance guess, as a multiple of `sqrt(|a| |b|)`.
    pub guess_factor: f64,
}

impl Default for GridOracle {
    fn default() -> Self {
        GridOracle { guess_factor: 2.0 }
    }
}

impl CpOracle for GridOracle {
    fn name(&self) -> &'static str {
        "grid"
    }

    fn failure_probability(&self) -> f64 {
        1.0 / 3.0
    }

    fn query(&self, a: &PointSet, b: &PointSet, _eps: f64, seed: Seed) -> Result<(usize, usize)> {
        check_nonempty(a, b)?;
        let mut rng = seed.rng();
        let samples = ((self.guess_factor * ((a.len() * b.len()) as f64).sqrt()).ceil() as usize).max(1);
        let mut guess = f64::INFINITY;
        let mut fallback = (0usize, 0usize);
        for _ in 0..samples {
            let (i, j) = (rng.random_range(0..a.len()), rng.random_range(0..b.len()));
            let d = l1(a.point(i), b.point(j));
            if d < guess {
                guess = d;
                fallback = (i, j);
            }
        }
        if guess == 0.0 {
            return Ok(fallback);
        }
        let dim = a.dim();
        let shift_unit: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let mut side = guess;
        for _ in 0..64 {
            let shift: Vec<f64> = shift_unit.iter().map(|u| u * side).collect();
            let cell = |p: &[f64]| -> Vec<i64> { p.iter().zip(&shift).map(|(x, s)| ((x - s) / side).floor() as i64).collect() };
            let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            for j in 0..b.len() {
                buckets.entry(cell(b.point(j))).or_default().push(j);
            }
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..a.len() {
                let p = a.point(i);
                let mut key = cell(p);
                let visit = |key: &Vec<i64>, best: &mut Option<(usize, usize, f64)>| {
                    if let Some(js) = buckets.get(key) {
                        for &j in js {
                            let d = l1(p, b.point(j));
                            if best.is_none_or(|(bi, bj, bd)| d < bd || (d == bd && (i, j) < (bi, bj))) {
                                *best = Some((i, j, d));
                            }
                        }
                    }
                };
                visit(&key, &mut best);
                for k in 0..dim {
                    for delta in [-1i64, 1] {
                        key[k] += delta;
                        visit(&key, &mut best);
                        key[k] -= delta;
                    }
                }
            }
            if let Some((i, j, _)) = best {
                return Ok((i, j));
            }
            side *= 2.0;
        }
        Ok(fallback)
    }
}

/// Oracle selection for configuration surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    Brute,
    Grid,
}

impl OracleKind {
    pub fn build(self) -> Box<dyn CpOracle> {
        match self {
            OracleKind::Brute => Box::new(BruteOracle),
            OracleKind::Grid => Box::new(GridOracle::default()),
        }
    }
}

impl std::str::FromStr for OracleKind {
    type Err = EmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(OracleKind::Brute),
            "grid" => Ok(OracleKind::Grid),
            other => Err(EmdError::input(format!("unknown oracle '{other}' (expected brute or grid)"))),
        }
    }
}

fn check_nonempty(a: &PointSet, b: &PointSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(EmdError::input("closest pair of an empty set"));
    }
    if a.dim() != b.dim() {
        return Err(EmdError::input("closest pair across different dimensions"));
    }
    Ok(())
}

/// One oracle query with input validation.
pub fn closest_pair(oracle: &dyn CpOracle, a: &PointSet, b: &PointSet, eps: f64, seed: Seed) -> Result<(usize, usize)> {
    check_nonempty(a, b)?;
    let (i, j) = oracle.query(a, b, eps, seed)?;
    if i >= a.len() || j >= b.len() {
        return Err(EmdError::Internal(format!("oracle {} returned out-of-range pair", oracle.name())));
    }
    Ok((i, j))
}

/// Closest of `reps` independent queries; the first minimum wins ties, so the
/// result distance is non-increasing in `reps` for a fixed seed.
pub fn boosted_cp(oracle: &dyn CpOracle, a: &PointSet, b: &PointSet, eps: f64, reps: usize, seed: Seed) -> Result<(usize, usize)> {
    if reps == 0 {
        return Err(EmdError::input("boosted_cp needs at least one repetition"));
    }
    let mut best = (0, 0, f64::INFINITY);
    for r in 0..reps {
        let (i, j) = closest_pair(oracle, a, b, eps, seed.derive(0xB0057, r as u64))?;
        let d = l1(a.point(i), b.point(j));
        if d < best.2 {
            best = (i, j, d);
        }
    }
    Ok((best.0, best.1))
}

/// Repetitions bringing the failure probability to at most `n^-3`.
pub fn boost_reps(oracle: &dyn CpOracle, n: usize) -> usize {
    let p = oracle.failure_probability();
    if p <= 0.0 {
        return 1;
    }
    ((3.0 * (n.max(2) as f64).ln()) / (1.0 / p).ln()).ceil().max(1.0) as usize
}

/// Independent rate-`1/z` subsample: binomial count, then distinct indices.
pub fn subsample(n: usize, z: f64, rng: &mut crate::seed::Rng) -> Vec<usize> {
    let p = (1.0 / z).clamp(0.0, 1.0);
    let count = Binomial::new(n as u64, p).expect("rate in [0, 1]").sample(rng) as usize;
    let mut idx = rand::seq::index::sample(rng, n, count).into_vec();
    idx.sort_unstable();
    idx
}

/// Subsamples `X` and `Y` at rate `1/z` and returns a boosted closest pair of
/// the subsample (as indices into `X`, `Y`), or `None` if either side is empty.
/// The smaller side is padded with sentinel points at ten times the largest
/// subsampled coordinate magnitude in every
/// coordinate; pairs touching a sentinel are reported as `None`.
pub fn subs_cp(oracle: &dyn CpOracle, x: &PointSet, y: &PointSet, z: f64, eps: f64, seed: Seed) -> Result<Option<(usize, usize)>> {
    if !(z >= 1.0) {
        return Err(EmdError::input(format!("subsampling parameter z = {z} must be at least 1")));
    }
    let mut rng = seed.rng();
    let xi = subsample(x.len(), z, &mut rng);
    let yi = subsample(y.len(), z, &mut rng);
    if xi.is_empty() || yi.is_empty() {
        return Ok(None);
    }
    let mut xs = x.select(&xi);
    let mut ys = y.select(&yi);
    let sentinel = vec![10.0 * sentinel_scale(&xs, &ys); x.dim()];
    while xs.len() < ys.len() {
        xs.push(&sentinel)?;
    }
    while ys.len() < xs.len() {
        ys.push(&sentinel)?;
    }
    let reps = boost_reps(oracle, x.len().max(y.len()));
    let (i, j) = boosted_cp(oracle, &xs, &ys, eps, reps, seed.child("boost"))?;
    if i >= xi.len() || j >= yi.len() {
        return Ok(None);
    }
    Ok(Some((xi[i], yi[j])))
}

fn sentinel_scale(x: &PointSet, y: &PointSet) -> f64 {
    x.coords().iter().chain(y.coords()).fold(1.0f64, |m, v| m.max(v.abs()))
}
