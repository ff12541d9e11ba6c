//! Reduction of an arbitrary supply/demand instance to parts with polynomial
//! aspect ratio: integer coordinates in `[1, phi]` and pairwise distances at
//! least 1.

use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{EmdError, Result};
use crate::exact::{one_d_emd, prefix_sum_emd};
use crate::geometry::{l1, PointSet, SupplyDemand};
use crate::seed::Seed;

/// Shifted grids tried by [`grid_partition`] before giving up.
pub const GRID_RETRIES: usize = 20;

/// Number of padding coordinates for `n` points: `ceil(4 ln n) + 8`.
pub fn pad_dimension(n: usize) -> usize {
    (4.0 * (n.max(1) as f64).ln()).ceil() as usize + 8
}

/// Randomised upper estimate of `EMD_X(b)`: project onto a Gaussian
/// direction scaled by `n^2 sqrt(d)` and solve the 1-D problem exactly.
pub fn rough_estimate(x: &PointSet, b: &SupplyDemand, seed: Seed) -> Result<f64> {
    check_supply(x, b)?;
    if b.is_zero() {
        return Ok(0.0);
    }
    let n = x.len() as f64;
    let d = x.dim();
    let c = n * n * (d as f64).sqrt();
    let mut rng = seed.rng();
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut proj: Vec<(f64, i64)> =
        x.iter().zip(b.as_slice()).map(|(p, &bi)| (c * p.iter().zip(&g).map(|(a, w)| a * w).sum::<f64>(), bi)).collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (pos, mass): (Vec<f64>, Vec<i64>) = proj.into_iter().unzip();
    one_d_emd(&pos, &mass)
}

/// Lower bound on `EMD_X(b)`: a flow's ℓ1 cost splits over coordinates, so the
/// sum of the per-axis 1-D optima never exceeds the true optimum.
pub fn axis_lower_bound(x: &PointSet, b: &SupplyDemand) -> f64 {
    let mut total = 0.0;
    let mut proj: Vec<(f64, f64)> = Vec::with_capacity(x.len());
    for k in 0..x.dim() {
        proj.clear();
        proj.extend(x.iter().zip(b.as_slice()).map(|(p, &bi)| (p[k], bi as f64)));
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (pos, mass): (Vec<f64>, Vec<f64>) = proj.iter().copied().unzip();
        total += prefix_sum_emd(&pos, &mass);
    }
    total
}

/// One part of a grid partition, with indices into the partitioned set.
#[derive(Debug, Clone)]
pub struct GridPart {
    pub indices: Vec<usize>,
    pub points: PointSet,
    pub b: SupplyDemand,
}

/// Integer cell of `p` in the axis grid of side `side` shifted by `shift`.
pub fn grid_cell(p: &[f64], shift: &[f64], side: f64) -> Vec<i64> {
    p.iter().zip(shift).map(|(x, s)| ((x - s) / side).floor() as i64).collect()
}

/// A single shifted grid; `None` when some part has nonzero supply sum.
pub fn grid_partition_attempt(x: &PointSet, b: &SupplyDemand, eta: f64, seed: Seed) -> Result<Option<Vec<GridPart>>> {
    check_supply(x, b)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(EmdError::input(format!("grid scale eta = {eta} must be positive")));
    }
    let side = 100.0 * eta;
    let mut rng = seed.rng();
    let shift: Vec<f64> = (0..x.dim()).map(|_| rng.random::<f64>() * side).collect();
    let mut cells: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, p) in x.iter().enumerate() {
        let key = grid_cell(p, &shift, side);
        let g = *cells.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let mut parts = Vec::with_capacity(groups.len());
    for indices in groups {
        let sub = b.select(&indices);
        if sub.iter().sum::<i64>() != 0 {
            return Ok(None);
        }
        parts.push(GridPart { points: x.select(&indices), b: SupplyDemand::new(sub)?, indices });
    }
    Ok(Some(parts))
}

/// Partitions by a randomly shifted grid of side `100 eta`, resampling the
/// shift up to [`GRID_RETRIES`] times until every part balances.
pub fn grid_partition(x: &PointSet, b: &SupplyDemand, eta: f64, seed: Seed) -> Result<Vec<GridPart>> {
    for attempt in 0..GRID_RETRIES {
        if let Some(parts) = grid_partition_attempt(x, b, eta, seed.derive(0x9A1D, attempt as u64))? {
            return Ok(parts);
        }
        log::debug!("grid partition attempt {attempt} left an unbalanced part");
    }
    Err(EmdError::PartitionRetriesExhausted { attempts: GRID_RETRIES })
}

/// Appends `pad_dimension(n)` coordinates drawn uniformly from `[0, eps_pad]`.
pub fn pad_min_distance(x: &PointSet, eps_pad: f64, seed: Seed) -> Result<PointSet> {
    if !(eps_pad > 0.0 && eps_pad.is_finite()) {
        return Err(EmdError::input(format!("eps_pad = {eps_pad} must be positive")));
    }
    let extra = pad_dimension(x.len());
    let dim = x.dim() + extra;
    let mut rng = seed.rng();
    let mut coords = Vec::with_capacity(x.len() * dim);
    for p in x.iter() {
        coords.extend_from_slice(p);
        coords.extend((0..extra).map(|_| rng.random::<f64>() * eps_pad));
    }
    PointSet::new(dim, coords)
}

/// A reduced part: integer coordinates in `[1, phi]`, every distinct pair at
/// distance at least 1. `EMD_original ~ EMD_part / scale`.
#[derive(Debug, Clone)]
pub struct ReducedPart {
    pub points: PointSet,
    pub b: SupplyDemand,
    /// For each reduced point, one source index in the original input.
    pub source: Vec<usize>,
    pub scale: f64,
    pub phi: f64,
}

impl ReducedPart {
    /// Expands supplies into unit copies: `X` holds positive, `Y` negative mass.
    pub fn split_xy(&self) -> (PointSet, PointSet) {
        let dim = self.points.dim();
        let mut x = PointSet::empty(dim);
        let mut y = PointSet::empty(dim);
        for (i, &bi) in self.b.as_slice().iter().enumerate() {
            let p = self.points.point(i);
            let target = if bi > 0 { &mut x } else { &mut y };
            for _ in 0..bi.unsigned_abs() {
                target.push(p).expect("dimension is fixed");
            }
        }
        (x, y)
    }
}

#[derive(Debug, Clone)]
pub struct ReducedInstance {
    pub parts: Vec<ReducedPart>,
    /// Largest aspect ratio over parts; 1 when there are no parts.
    pub phi: f64,
}

/// Merges coincident points (summing supply) and drops zero-supply points.
/// Returns the surviving points, their supplies and one source index each.
pub fn merge_coincident(x: &PointSet, b: &SupplyDemand) -> Result<(PointSet, Vec<i64>, Vec<usize>)> {
    check_supply(x, b)?;
    let mut slot: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut mass: Vec<i64> = Vec::new();
    let mut source: Vec<usize> = Vec::new();
    for (i, p) in x.iter().enumerate() {
        let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
        let k = *slot.entry(key).or_insert_with(|| {
            mass.push(0);
            source.push(i);
            mass.len() - 1
        });
        mass[k] += b.as_slice()[i];
    }
    let keep: Vec<usize> = (0..mass.len()).filter(|&k| mass[k] != 0).collect();
    let src: Vec<usize> = keep.iter().map(|&k| source[k]).collect();
    let pts = x.select(&src);
    Ok((pts, keep.iter().map(|&k| mass[k]).collect(), src))
}

/// Full reduction: merge, rough estimate, grid partition, then per part pad,
/// rescale so the minimum distance maps to `dim / eps`, and round.
pub fn reduce_aspect_ratio(x: &PointSet, b: &SupplyDemand, eps: f64, seed: Seed) -> Result<ReducedInstance> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(EmdError::input(format!("eps = {eps} outside (0, 1)")));
    }
    let (pts, mass, src) = merge_coincident(x, b)?;
    if pts.is_empty() {
        return Ok(ReducedInstance { parts: Vec::new(), phi: 1.0 });
    }
    let merged_b = SupplyDemand::new(mass)?;
    let mut eta = rough_estimate(&pts, &merged_b, seed.child("rough"))?;
    if !(eta > 0.0) {
        eta = merged_b.mass() as f64 * diameter_bound(&pts);
    }
    let groups = grid_partition(&pts, &merged_b, eta, seed.child("grid"))?;
    let mut parts = Vec::with_capacity(groups.len());
    for (k, g) in groups.into_iter().enumerate() {
        let source: Vec<usize> = g.indices.iter().map(|&i| src[i]).collect();
        parts.push(reduce_part(&g.points, g.b, source, eps, seed.derive(0xA5, k as u64))?);
    }
    let phi = parts.iter().map(|p| p.phi).fold(1.0, f64::max);
    Ok(ReducedInstance { parts, phi })
}

fn reduce_part(x: &PointSet, b: SupplyDemand, source: Vec<usize>, eps: f64, seed: Seed) -> Result<ReducedPart> {
    let n = x.len();
    let extra = pad_dimension(n);
    let mut lower = axis_lower_bound(x, &b);
    if !(lower > 0.0) {
        // The Gaussian projection overestimates by at most n^2 sqrt(d) log n w.h.p.
        let eta = rough_estimate(x, &b, seed.child("part-rough"))?;
        let slack = (n * n) as f64 * (x.dim() as f64).sqrt() * 3.0 * (n as f64).ln().max(1.0).sqrt();
        lower = eta / slack;
    }
    if !(lower > 0.0) {
        lower = diameter_bound(x).max(1.0);
    }
    let eps_pad = eps * lower / (n as f64 * extra as f64);
    let padded = pad_min_distance(x, eps_pad, seed.child("pad"))?;
    let min_dist = min_pairwise_distance(&padded);
    let dim = padded.dim();
    let factor = (dim as f64 / eps) / min_dist;
    let lo: Vec<f64> = (0..dim).map(|k| padded.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min)).collect();
    let mut coords = Vec::with_capacity(n * dim);
    let mut top = 1.0f64;
    for p in padded.iter() {
        for k in 0..dim {
            let v = ((p[k] - lo[k]) * factor).round() + 1.0;
            top = top.max(v);
            coords.push(v);
        }
    }
    let phi = 2f64.powi(top.log2().ceil().max(0.0) as i32);
    Ok(ReducedPart { points: PointSet::new(dim, coords)?, b, source, scale: factor, phi })
}

/// Exact minimum pairwise distance over distinct indices; `inf` for n < 2.
pub fn min_pairwise_distance(x: &PointSet) -> f64 {
    let n = x.len();
    crate::par::map_range(n, |i| ((i + 1)..n).map(|j| l1(x.point(i), x.point(j))).fold(f64::INFINITY, f64::min))
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

fn diameter_bound(x: &PointSet) -> f64 {
    (0..x.dim())
        .map(|k| {
            let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[k]), b.max(p[k])));
            hi - lo
        })
        .sum()
}

fn check_supply(x: &PointSet, b: &SupplyDemand) -> Result<()> {
    if x.len() != b.len() {
        return Err(EmdError::input(format!("{} points but {} supplies", x.len(), b.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_emd_supply;

    fn random_instance(n: usize, d: usize, seed: Seed) -> (PointSet, SupplyDemand) {
        let mut rng = seed.rng();
        let coords: Vec<f64> = (0..2 * n * d).map(|_| rng.random_range(0.0..50.0)).collect();
        (PointSet::new(d, coords).unwrap(), SupplyDemand::matching(n, n).unwrap())
    }

    #[test]
    fn rough_estimate_trivial_cases() {
        let x = PointSet::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(rough_estimate(&x, &SupplyDemand::new(vec![0, 0]).unwrap(), Seed(1)).unwrap(), 0.0);
        let dup = PointSet::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        let b = SupplyDemand::new(vec![1, -1]).unwrap();
        assert_eq!(rough_estimate(&dup, &b, Seed(2)).unwrap(), 0.0);
    }

    #[test]
    fn rough_estimate_two_points_is_scaled_projection() {
        let x = PointSet::from_rows(&[[1.0, 5.0, 2.0], [4.0, 1.0, 2.5]]).unwrap();
        let b = SupplyDemand::new(vec![1, -1]).unwrap();
        let exact = exact_emd_supply(&x, &b).unwrap().cost;
        let upper = exact * 4.0 * 3f64.sqrt() * 3.0 * 2f64.ln().max(1.0).sqrt() * 10.0;
        let mut above = 0;
        for s in 0..100 {
            let eta = rough_estimate(&x, &b, Seed(s)).unwrap();
            assert!(eta <= upper);
            if eta >= exact {
                above += 1;
            }
        }
        assert!(above >= 75, "only {above}/100 estimates reached the exact value");
    }

    #[test]
    fn axis_bound_never_exceeds_exact() {
        for s in 0..20 {
            let (x, b) = random_instance(6, 3, Seed(s));
            let exact = exact_emd_supply(&x, &b).unwrap().cost;
            assert!(axis_lower_bound(&x, &b) <= exact + 1e-9);
        }
    }

    #[test]
    fn grid_partition_single_and_coincident() {
        let one = PointSet::from_rows(&[[3.0, 3.0]]).unwrap();
        let parts = grid_partition(&one, &SupplyDemand::new(vec![0]).unwrap(), 1.0, Seed(3)).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].points, one);
        let two = PointSet::from_rows(&[[3.0, 3.0], [3.0, 3.0]]).unwrap();
        for s in 0..50 {
            let parts = grid_partition(&two, &SupplyDemand::new(vec![1, -1]).unwrap(), 0.001, Seed(s)).unwrap();
            assert_eq!(parts.len(), 1);
        }
    }

    #[test]
    fn grid_partition_separates_clusters() {
        let mut rows = Vec::new();
        let mut b = Vec::new();
        let mut rng = Seed(11).rng();
        for c in 0..2 {
            let off = c as f64 * 1e7;
            for k in 0..6 {
                rows.push(vec![off + rng.random_range(0.0..5.0), off + rng.random_range(0.0..5.0)]);
                b.push(if k % 2 == 0 { 1 } else { -1 });
            }
        }
        let x = PointSet::from_rows(&rows).unwrap();
        let b = SupplyDemand::new(b).unwrap();
        let exact = exact_emd_supply(&x, &b).unwrap().cost;
        let eta = rough_estimate(&x, &b, Seed(5)).unwrap().max(exact);
        let parts = grid_partition(&x, &b, eta, Seed(6)).unwrap();
        assert_eq!(parts.len(), 2);
        let sum: f64 = parts.iter().map(|p| exact_emd_supply(&p.points, &p.b).unwrap().cost).sum();
        assert!((sum - exact).abs() < 1e-9);
    }

    #[test]
    fn split_probability_matches_distance_over_side() {
        let x = PointSet::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let eta = 0.1;
        let side = 100.0 * eta;
        let trials = 4000;
        let mut split = 0;
        for s in 0..trials {
            let mut rng = Seed(s).rng();
            let shift: Vec<f64> = (0..2).map(|_| rng.random::<f64>() * side).collect();
            if grid_cell(x.point(0), &shift, side) != grid_cell(x.point(1), &shift, side) {
                split += 1;
            }
        }
        let freq = split as f64 / trials as f64;
        // Pr[split] = 1 - (1 - 0.3)(1 - 0.4) for independent axis shifts.
        let p = 1.0 - 0.7 * 0.6;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * se, "freq {freq} vs {p}");
        assert!(freq <= 7.0 / side + 3.0 * se);
    }

    #[test]
    fn padding_examples() {
        let one = PointSet::from_rows(&[[1.0]]).unwrap();
        let p = pad_min_distance(&one, 0.5, Seed(1)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.dim(), 1 + pad_dimension(1));
        let dup = PointSet::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let p = pad_min_distance(&dup, 0.5, Seed(2)).unwrap();
        assert!(min_pairwise_distance(&p) > 0.0);
    }

    #[test]
    fn padding_changes_emd_by_little() {
        for s in 0..50 {
            let (x, b) = random_instance(16, 4, Seed(100 + s));
            let eps_pad = 0.05;
            let before = exact_emd_supply(&x, &b).unwrap().cost;
            let after = exact_emd_supply(&pad_min_distance(&x, eps_pad, Seed(s)).unwrap(), &b).unwrap().cost;
            let n = x.len() as f64;
            assert!((after - before).abs() <= 10.0 * eps_pad * n * n.ln());
            assert!(after >= before - 1e-9);
        }
    }

    #[test]
    fn reduce_zero_supply_is_empty() {
        let x = PointSet::from_rows(&[[1.0], [2.0]]).unwrap();
        let r = reduce_aspect_ratio(&x, &SupplyDemand::new(vec![0, 0]).unwrap(), 0.1, Seed(1)).unwrap();
        assert!(r.parts.is_empty());
        let same = PointSet::from_rows(&[[1.0], [1.0]]).unwrap();
        let r = reduce_aspect_ratio(&same, &SupplyDemand::new(vec![1, -1]).unwrap(), 0.1, Seed(1)).unwrap();
        assert!(r.parts.is_empty());
    }

    #[test]
    fn reduced_parts_are_integral_and_separated() {
        for s in 0..10 {
            let (x, b) = random_instance(12, 3, Seed(200 + s));
            let r = reduce_aspect_ratio(&x, &b, 0.1, Seed(s)).unwrap();
            for part in &r.parts {
                assert!(part.points.coords().iter().all(|&v| v == v.round() && v >= 1.0 && v <= part.phi));
                assert!(min_pairwise_distance(&part.points) >= 1.0);
                assert_eq!(part.b.as_slice().iter().sum::<i64>(), 0);
            }
        }
    }

    #[test]
    fn reduction_preserves_emd_end_to_end() {
        let mut good = 0;
        for s in 0..50 {
            let (x, b) = random_instance(10, 3, Seed(300 + s));
            let exact = exact_emd_supply(&x, &b).unwrap().cost;
            let r = reduce_aspect_ratio(&x, &b, 0.1, Seed(s)).unwrap();
            let sum: f64 = r.parts.iter().map(|p| exact_emd_supply(&p.points, &p.b).unwrap().cost / p.scale).sum();
            if (sum - exact).abs() <= 0.25 * exact {
                good += 1;
            }
        }
        assert!(good >= 40, "{good}/50 trials within tolerance");
    }

    #[test]
    fn split_xy_expands_multiplicity() {
        let part = ReducedPart {
            points: PointSet::from_rows(&[[1.0], [5.0], [9.0]]).unwrap(),
            b: SupplyDemand::new(vec![2, -1, -1]).unwrap(),
            source: vec![0, 1, 2],
            scale: 1.0,
            phi: 16.0,
        };
        let (x, y) = part.split_xy();
        assert_eq!(x.len(), 2);
        assert_eq!(y.len(), 2);
    }
}
