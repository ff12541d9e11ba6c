//! Retrieval of every cross pair in a prefix set `𝓛_t` from closest-pair
//! queries on random subsamples.
//!
//! Light edges (both endpoints of small `𝓛_{t+1}` degree) are collected
//! directly from subsampled closest pairs. Heavy edges are covered by a
//! brute-force scan around the vertices that subsampled queries return
//! frequently.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cp::{subs_cp, CpOracle};
use crate::error::{EmdError, Result};
use crate::geometry::{l1, level_of_distance, prefix_member_dist, PointSet};
use crate::par;
use crate::seed::Seed;

/// Iteration constants of the two subsampling loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosePairsConfig {
    /// Light-edge loop runs `k1 z^2 ln n` subsampled queries.
    pub k1: f64,
    /// Frequency loop runs `k2 z ln n` subsampled queries.
    pub k2: f64,
}

impl Default for ClosePairsConfig {
    fn default() -> Self {
        ClosePairsConfig { k1: 4.0, k2: 4.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ClosePairsResult {
    pub t: i64,
    /// `L ∪ H`, sorted.
    pub pairs: Vec<(usize, usize)>,
    /// Hits of each X (resp. Y) point over the frequency loop.
    pub count_x: Vec<u32>,
    pub count_y: Vec<u32>,
    pub frequent_x: Vec<usize>,
    pub frequent_y: Vec<usize>,
    /// Iterations of the frequency loop.
    pub rounds: usize,
    pub z: f64,
}

/// `z = sqrt(n^(1 + phi_exp))`.
pub fn close_pairs_z(n: usize, phi_exp: f64) -> f64 {
    (n as f64).powf((1.0 + phi_exp) / 2.0)
}

/// Draws `(n^2 / z^2) log2 max(phi, n)` uniform pairs and returns
/// `min{s : L_s ∩ S ≠ ∅} - 3`.
pub fn last_small_prefix(x: &PointSet, y: &PointSet, z: f64, phi: f64, eps: f64, seed: Seed) -> Result<i64> {
    if x.is_empty() || y.is_empty() {
        return Err(EmdError::input("last_small_prefix on an empty set"));
    }
    let n = x.len().max(y.len()) as f64;
    let count = ((n * n / (z * z)) * phi.max(n).log2()).ceil().max(1.0) as usize;
    let mut rng = seed.rng();
    let mut first = i64::MAX;
    for _ in 0..count {
        let (i, j) = (rng.random_range(0..x.len()), rng.random_range(0..y.len()));
        first = first.min(level_of_distance(l1(x.point(i), y.point(j)), eps));
    }
    if first == i64::MAX {
        return Err(EmdError::Internal("no sampled pair fell in any level".into()));
    }
    Ok(first.saturating_sub(3))
}

/// Runs both subsampling loops and the brute-force scan; the returned pairs
/// are always a subset of `𝓛_t` because membership is tested by distance.
#[allow(clippy::too_many_arguments)]
pub fn find_close_pairs(
    oracle: &dyn CpOracle,
    x: &PointSet,
    y: &PointSet,
    phi: f64,
    phi_exp: f64,
    eps: f64,
    config: ClosePairsConfig,
    seed: Seed,
) -> Result<ClosePairsResult> {
    if !(phi_exp > 0.0 && phi_exp < 1.0) {
        return Err(EmdError::input(format!("phi_exp = {phi_exp} outside (0, 1)")));
    }
    let n = x.len().max(y.len());
    let z = close_pairs_z(n, phi_exp);
    let t = last_small_prefix(x, y, z, phi, eps, seed.child("prefix"))?;
    let ln_n = (n.max(2) as f64).ln();

    let light_rounds = (config.k1 * z * z * ln_n).ceil() as usize;
    let light_seed = seed.child("light");
    let light = par::fold_range(
        light_rounds,
        || Ok(BTreeSet::new()),
        |acc: &mut Result<BTreeSet<(usize, usize)>>, r| {
            if let Ok(set) = acc {
                match subs_cp(oracle, x, y, z, eps, light_seed.derive(1, r as u64)) {
                    Ok(Some((i, j))) => {
                        if prefix_member_dist(l1(x.point(i), y.point(j)), t, eps) {
                            set.insert((i, j));
                        }
                    }
                    Ok(None) => {}
                    Err(e) => *acc = Err(e),
                }
            }
        },
        merge_sets,
    )?;

    let rounds = (config.k2 * z * ln_n).ceil() as usize;
    let freq_seed = seed.child("frequency");
    let hits = par::map_range(rounds, |r| subs_cp(oracle, x, y, z, eps, freq_seed.derive(2, r as u64)));
    let mut count_x = vec![0u32; x.len()];
    let mut count_y = vec![0u32; y.len()];
    for h in hits {
        if let Some((i, j)) = h? {
            if prefix_member_dist(l1(x.point(i), y.point(j)), t + 1, eps) {
                count_x[i] += 1;
                count_y[j] += 1;
            }
        }
    }
    // c(v) >= 0.02 T in units where a C-frequent vertex is hit with
    // probability C / z per query.
    let threshold = 0.02 * rounds as f64 / z;
    let frequent_x: Vec<usize> = (0..x.len()).filter(|&i| count_x[i] as f64 >= threshold && count_x[i] > 0).collect();
    let frequent_y: Vec<usize> = (0..y.len()).filter(|&j| count_y[j] as f64 >= threshold && count_y[j] > 0).collect();

    let mut pairs = light;
    for &i in &frequent_x {
        for j in 0..y.len() {
            if prefix_member_dist(l1(x.point(i), y.point(j)), t, eps) {
                pairs.insert((i, j));
            }
        }
    }
    for &j in &frequent_y {
        for i in 0..x.len() {
            if prefix_member_dist(l1(x.point(i), y.point(j)), t, eps) {
                pairs.insert((i, j));
            }
        }
    }
    log::debug!(
        "find_close_pairs: n={n} z={z:.1} t={t} light_rounds={light_rounds} rounds={rounds} |F|={} |pairs|={}",
        frequent_x.len() + frequent_y.len(),
        pairs.len()
    );
    Ok(ClosePairsResult { t, pairs: pairs.into_iter().collect(), count_x, count_y, frequent_x, frequent_y, rounds, z })
}

fn merge_sets(a: Result<BTreeSet<(usize, usize)>>, b: Result<BTreeSet<(usize, usize)>>) -> Result<BTreeSet<(usize, usize)>> {
    let (mut a, mut b) = (a?, b?);
    if a.len() < b.len() {
        std::mem::swap(&mut a, &mut b);
    }
    a.extend(b);
    Ok(a)
}

/// Brute-force prefix set `{(i, j) : ||x_i - y_j|| < (1+eps)^t}`, sorted.
pub fn brute_prefix_set(x: &PointSet, y: &PointSet, t: i64, eps: f64) -> Vec<(usize, usize)> {
    let rows = par::map_range(x.len(), |i| {
        (0..y.len()).filter(|&j| prefix_member_dist(l1(x.point(i), y.point(j)), t, eps)).map(|j| (i, j)).collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}
