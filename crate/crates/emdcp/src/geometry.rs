//! Point sets, supply vectors, distance levels and the consistent rounding of
//! distances to powers of `1 + eps`.

use std::collections::{HashMap, HashSet};

use crate::error::{EmdError, Result};

/// `n` points in `R^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            if !coords.is_empty() {
                return Err(EmdError::input("zero-dimensional points carry no coordinates"));
            }
        } else if !coords.len().is_multiple_of(dim) {
            return Err(EmdError::input(format!("{} coordinates do not split into rows of dimension {dim}", coords.len())));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(EmdError::input(format!("non-finite coordinate {bad}")));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        PointSet { dim, coords: Vec::new() }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(dim * rows.len());
        for (k, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(EmdError::input(format!("row {k} has dimension {}, expected {dim}", r.len())));
            }
            coords.extend_from_slice(r);
        }
        PointSet::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if self.dim == 0 && self.coords.is_empty() {
            self.dim = p.len();
        }
        if p.len() != self.dim {
            return Err(EmdError::input(format!("point of dimension {} pushed into a set of dimension {}", p.len(), self.dim)));
        }
        self.coords.extend_from_slice(p);
        Ok(())
    }

    /// Points at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            coords.extend_from_slice(self.point(i));
        }
        PointSet { dim: self.dim, coords }
    }

    /// Concatenation of `self` followed by `other`.
    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.dim != other.dim {
            return Err(EmdError::input(format!("cannot concatenate dimensions {} and {}", self.dim, other.dim)));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointSet { dim: self.dim, coords })
    }

    /// True iff every coordinate lies in `[1, phi]`.
    pub fn within_bounds(&self, phi: f64) -> bool {
        self.coords.iter().all(|&c| (1.0..=phi).contains(&c))
    }

    /// Smallest and largest coordinate over all points and axes.
    pub fn coordinate_range(&self) -> Option<(f64, f64)> {
        let mut it = self.coords.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), c| (lo.min(c), hi.max(c))))
    }
}

/// Integer supply/demand vector whose entries sum to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplyDemand {
    b: Vec<i64>,
}

impl SupplyDemand {
    pub fn new(b: Vec<i64>) -> Result<Self> {
        let s: i128 = b.iter().map(|&v| v as i128).sum();
        if s != 0 {
            return Err(EmdError::input(format!("supply vector sums to {s}, expected 0")));
        }
        Ok(SupplyDemand { b })
    }

    /// `+1` on the first `n` entries and `-1` on the last `m`; requires `n == m`
    /// for membership in the zero-sum space.
    pub fn matching(n: usize, m: usize) -> Result<Self> {
        let mut b = vec![1i64; n];
        b.extend(std::iter::repeat_n(-1i64, m));
        SupplyDemand::new(b)
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().all(|&v| v == 0)
    }

    /// Total positive mass.
    pub fn mass(&self) -> i64 {
        self.b.iter().filter(|&&v| v > 0).sum()
    }

    pub fn select(&self, idx: &[usize]) -> Vec<i64> {
        idx.iter().map(|&i| self.b[i]).collect()
    }
}

pub fn l1_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(EmdError::input(format!("dimension mismatch: {} vs {}", x.len(), y.len())));
    }
    Ok(l1(x, y))
}

/// Unchecked ℓ1 distance; `x` and `y` must have equal length.
#[inline]
pub fn l1(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// Relative window inside which a distance is snapped onto a power of `1 + eps`.
pub const SNAP_TOLERANCE: f64 = 1.0 / (1u64 << 40) as f64;

/// The unique integer `k` with `(1+eps)^k <= dist < (1+eps)^(k+1)` for any
/// `dist > 0`, with values within [`SNAP_TOLERANCE`] of a boundary snapped onto it.
pub fn level_index(dist: f64, eps: f64) -> i64 {
    debug_assert!(dist > 0.0 && eps > 0.0);
    let base = 1.0 + eps;
    let r = dist.ln() / base.ln();
    let k = r.round();
    if ((dist / base.powf(k)) - 1.0).abs() <= SNAP_TOLERANCE {
        return k as i64;
    }
    let mut p = r.floor() as i64;
    while base.powf((p + 1) as f64) <= dist {
        p += 1;
    }
    while base.powf(p as f64) > dist {
        p -= 1;
    }
    p
}

/// ψ level of the pair `(x, y)`; the distance must be at least 1.
pub fn psi_level(x: &[f64], y: &[f64], eps: f64) -> Result<i64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(EmdError::input(format!("eps = {eps} outside (0, 1]")));
    }
    let d = l1_distance(x, y)?;
    psi_of_distance(d, eps)
}

pub fn psi_of_distance(dist: f64, eps: f64) -> Result<i64> {
    if !(dist >= 1.0) {
        return Err(EmdError::domain(format!("distance {dist} < 1: instance is not aspect-ratio reduced")));
    }
    Ok(level_index(dist, eps))
}

/// Level `t` with `(1+eps)^(t-1) <= dist < (1+eps)^t`, i.e. `psi + 1`.
/// Coincident points sit below every level.
pub fn level_of_distance(dist: f64, eps: f64) -> i64 {
    if dist <= 0.0 {
        i64::MIN
    } else {
        level_index(dist, eps) + 1
    }
}

/// Membership in the prefix set: `dist < (1+eps)^t`.
pub fn prefix_member(x: &[f64], y: &[f64], t: i64, eps: f64) -> bool {
    prefix_member_dist(l1(x, y), t, eps)
}

pub fn prefix_member_dist(dist: f64, t: i64, eps: f64) -> bool {
    level_of_distance(dist, eps) <= t
}

/// Sizes of the level sets `L_t` over all cross pairs, keyed by `t`.
pub fn level_histogram(x: &PointSet, y: &PointSet, eps: f64) -> std::collections::BTreeMap<i64, usize> {
    let mut hist = std::collections::BTreeMap::new();
    for a in x.iter() {
        for b in y.iter() {
            *hist.entry(level_of_distance(l1(a, b), eps)).or_insert(0) += 1;
        }
    }
    hist
}

/// Removes coincident cross pairs with multiset semantics; returns the
/// surviving points of each side together with their original indices.
pub fn dedup_and_cancel_indexed(x: &PointSet, y: &PointSet) -> (Vec<usize>, Vec<usize>) {
    let key = |p: &[f64]| -> Vec<u64> { p.iter().map(|c| canonical_bits(*c)).collect() };
    let mut pool: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for j in (0..y.len()).rev() {
        pool.entry(key(y.point(j))).or_default().push(j);
    }
    let mut removed_y = vec![false; y.len()];
    let mut keep_x = Vec::new();
    for i in 0..x.len() {
        match pool.get_mut(&key(x.point(i))).and_then(|v| v.pop()) {
            Some(j) => removed_y[j] = true,
            None => keep_x.push(i),
        }
    }
    let keep_y = (0..y.len()).filter(|&j| !removed_y[j]).collect();
    (keep_x, keep_y)
}

fn canonical_bits(c: f64) -> u64 {
    if c == 0.0 {
        0
    } else {
        c.to_bits()
    }
}

pub fn dedup_and_cancel(x: &PointSet, y: &PointSet) -> (PointSet, PointSet) {
    let (kx, ky) = dedup_and_cancel_indexed(x, y);
    (x.select(&kx), y.select(&ky))
}

/// Packs a cross pair into a single key.
#[inline]
pub fn pair_key(i: usize, j: usize) -> u64 {
    ((i as u64) << 32) | j as u64
}

#[inline]
pub fn unpack_pair(k: u64) -> (usize, usize) {
    ((k >> 32) as usize, (k & 0xFFFF_FFFF) as usize)
}

/// Consistent rounding of cross distances: the level matrix ψ (implicit), the
/// down-rounding set `S` and the induced costs `C_ij = (1+eps)^(psi - 2 S_ij)`.
///
/// Pairs with ψ < 2 are never members of `S`, so `C >= 1` always.
#[derive(Debug, Clone)]
pub struct RoundingState {
    x: PointSet,
    y: PointSet,
    eps: f64,
    s: HashSet<u64>,
}

impl RoundingState {
    /// Builds the rounding; candidate pairs of `down` with ψ < 2 (or distance
    /// below 1) are dropped.
    pub fn new(x: PointSet, y: PointSet, eps: f64, down: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(EmdError::input(format!("eps = {eps} outside (0, 1]")));
        }
        if x.dim() != y.dim() && !x.is_empty() && !y.is_empty() {
            return Err(EmdError::input("X and Y have different dimensions"));
        }
        let mut st = RoundingState { x, y, eps, s: HashSet::new() };
        for (i, j) in down {
            if i >= st.x.len() || j >= st.y.len() {
                return Err(EmdError::input(format!("rounding pair ({i}, {j}) out of range")));
            }
            if st.distance(i, j) >= 1.0 && st.psi(i, j)? >= 2 {
                st.s.insert(pair_key(i, j));
            }
        }
        Ok(st)
    }

    pub fn x(&self) -> &PointSet {
        &self.x
    }

    pub fn y(&self) -> &PointSet {
        &self.y
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        l1(self.x.point(i), self.y.point(j))
    }

    pub fn psi(&self, i: usize, j: usize) -> Result<i64> {
        psi_of_distance(self.distance(i, j), self.eps)
    }

    pub fn in_s(&self, i: usize, j: usize) -> bool {
        self.s.contains(&pair_key(i, j))
    }

    pub fn s_len(&self) -> usize {
        self.s.len()
    }

    /// Exponent `psi - 2 S_ij` of the rounded cost.
    pub fn cost_exponent(&self, i: usize, j: usize) -> i64 {
        let psi = level_index(self.distance(i, j).max(1.0), self.eps);
        psi - if self.in_s(i, j) { 2 } else { 0 }
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        (1.0 + self.eps).powf(self.cost_exponent(i, j) as f64)
    }

    pub fn log_cost(&self, i: usize, j: usize) -> f64 {
        self.cost_exponent(i, j) as f64 * (1.0 + self.eps).ln()
    }
}

/// `C_ij` for given `psi` and membership; used where ψ is already known.
pub fn rounded_cost(psi: i64, in_s: bool, eps: f64) -> f64 {
    (1.0 + eps).powf((psi - if in_s { 2 } else { 0 }) as f64)
}
