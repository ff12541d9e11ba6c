//! Exact reference computations: assignment-based EMD, general min-cost
//! transport for integer supplies, the 1-D prefix-sum EMD, brute-force closest
//! pair and explicit enumeration of the MWU distribution.

use std::collections::BTreeMap;

use crate::error::{EmdError, Result};
use crate::geometry::{l1, PointSet, SupplyDemand};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix { rows, cols, data: vec![v; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}

/// Minimum-cost perfect matching on an `n x n` cost function by successive
/// shortest augmenting paths with potentials, `O(n^3)`.
///
/// Returns `row_to_col` and the optimal cost. Among equal-cost columns the
/// smallest index is taken, so the result is deterministic.
pub fn assignment(n: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<usize>, f64) {
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based arrays; column 0 is the virtual start of every augmenting path.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost(i, j)).sum();
    (row_to_col, total)
}

/// Exact EMD between equal-size sets: the optimal perfect matching cost.
pub fn exact_emd(x: &PointSet, y: &PointSet) -> Result<f64> {
    if x.len() != y.len() {
        return Err(EmdError::input(format!("exact_emd needs |X| = |Y|, got {} and {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    if x.dim() != y.dim() {
        return Err(EmdError::input("X and Y have different dimensions"));
    }
    Ok(assignment(x.len(), |i, j| l1(x.point(i), y.point(j))).1)
}

/// An optimal transport plan for a supply vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Mass sent from a supply index to a demand index.
    pub flow: BTreeMap<(usize, usize), f64>,
    pub cost: f64,
}

/// Exact min-cost flow for an integer supply vector under an arbitrary cost.
///
/// Every unit of positive and negative mass becomes one side of a bipartite
/// assignment problem, which keeps the flow integral.
pub fn min_cost_flow(b: &SupplyDemand, cost: impl Fn(usize, usize) -> f64) -> FlowSolution {
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for (i, &v) in b.as_slice().iter().enumerate() {
        if v > 0 {
            sources.extend(std::iter::repeat_n(i, v as usize));
        } else if v < 0 {
            sinks.extend(std::iter::repeat_n(i, (-v) as usize));
        }
    }
    let m = sources.len();
    let (rc, _) = assignment(m, |r, c| cost(sources[r], sinks[c]));
    let mut flow = BTreeMap::new();
    let mut total = 0.0;
    for (r, &c) in rc.iter().enumerate() {
        let (i, j) = (sources[r], sinks[c]);
        *flow.entry((i, j)).or_insert(0.0) += 1.0;
        total += cost(i, j);
    }
    FlowSolution { flow, cost: total }
}

/// `EMD_X(b)` under the ℓ1 metric.
pub fn exact_emd_supply(x: &PointSet, b: &SupplyDemand) -> Result<FlowSolution> {
    if x.len() != b.len() {
        return Err(EmdError::input(format!("{} points but a supply vector of length {}", x.len(), b.len())));
    }
    Ok(min_cost_flow(b, |i, j| l1(x.point(i), x.point(j))))
}

/// Exact 1-D EMD on sorted positions via the prefix-sum identity
/// `sum_k |b_1 + ... + b_k| (pos_{k+1} - pos_k)`.
pub fn one_d_emd(positions: &[f64], b: &[i64]) -> Result<f64> {
    if positions.len() != b.len() {
        return Err(EmdError::input("positions and supply differ in length"));
    }
    if positions.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(EmdError::input("positions are not sorted ascending"));
    }
    if b.iter().map(|&v| v as i128).sum::<i128>() != 0 {
        return Err(EmdError::input("supply vector does not sum to zero"));
    }
    let mass: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    Ok(prefix_sum_emd(positions, &mass))
}

/// Unchecked kernel of [`one_d_emd`]; real-valued mass is allowed.
pub(crate) fn prefix_sum_emd(positions: &[f64], b: &[f64]) -> f64 {
    let mut prefix = 0.0f64;
    let mut total = 0.0f64;
    for k in 0..positions.len().saturating_sub(1) {
        prefix += b[k];
        total += prefix.abs() * (positions[k + 1] - positions[k]);
    }
    total
}

/// Exact closest cross pair, ties broken lexicographically on `(i, j)`.
pub fn brute_closest_pair(a: &PointSet, b: &PointSet) -> Result<(usize, usize, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(EmdError::input("closest pair of an empty set"));
    }
    if a.dim() != b.dim() {
        return Err(EmdError::input("closest pair across different dimensions"));
    }
    let rows = crate::par::map_range(a.len(), |i| {
        let p = a.point(i);
        let mut best = (0usize, f64::INFINITY);
        for j in 0..b.len() {
            let d = l1(p, b.point(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    });
    let mut best = (0usize, 0usize, f64::INFINITY);
    for (i, (j, d)) in rows.into_iter().enumerate() {
        if d < best.2 {
            best = (i, j, d);
        }
    }
    Ok(best)
}

/// Index of the triple `(i, j, sigma)` in a flattened λ table.
#[inline]
pub fn triple_index(n: usize, i: usize, j: usize, sigma: i8) -> usize {
    (i * n + j) * 2 + usize::from(sigma < 0)
}

/// Explicit probability table of λ(η, C, D, P) over `[n] x [n] x {+1, -1}`.
#[derive(Debug, Clone)]
pub struct LambdaTable {
    pub n: usize,
    pub probs: Vec<f64>,
    /// Natural log of the total weight `sum w_{ij sigma}`.
    pub log_total: f64,
}

impl LambdaTable {
    pub fn prob(&self, i: usize, j: usize, sigma: i8) -> f64 {
        self.probs[triple_index(self.n, i, j, sigma)]
    }
}

/// Enumerates `w_{ij sigma} = exp(eta sigma P_ij D_ij / C_ij)` in log space and
/// normalises with log-sum-exp.
pub fn explicit_lambda(eta: f64, c: &Matrix, d: &Matrix, p: &Matrix) -> Result<LambdaTable> {
    let n = c.rows();
    for m in [c, d, p] {
        if m.rows() != n || m.cols() != n {
            return Err(EmdError::input("explicit_lambda needs square matrices of equal size"));
        }
    }
    let mut logs = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let a = eta * p.get(i, j) * d.get(i, j) / c.get(i, j);
            logs.push(a);
            logs.push(-a);
        }
    }
    Ok(lambda_from_logs(n, logs))
}

pub(crate) fn lambda_from_logs(n: usize, mut logs: Vec<f64>) -> LambdaTable {
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in logs.iter_mut() {
        *l = (*l - mx).exp();
        z += *l;
    }
    for l in logs.iter_mut() {
        *l /= z;
    }
    LambdaTable { n, probs: logs, log_total: mx + z.ln() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Seed;
    use proptest::prelude::*;

    /// Independent oracle: enumerate all permutations.
    fn brute_matching(n: usize, cost: impl Fn(usize, usize) -> f64) -> f64 {
        fn rec(k: usize, n: usize, used: &mut Vec<bool>, cost: &dyn Fn(usize, usize) -> f64) -> f64 {
            if k == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost(k, j) + rec(k + 1, n, used, cost));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, n, &mut vec![false; n], &cost)
    }

    #[test]
    fn exact_emd_examples() {
        let x = PointSet::from_rows(&[[0.0, 0.0], [4.0, 1.0]]).unwrap();
        assert_eq!(exact_emd(&x, &x).unwrap(), 0.0);
        let a = PointSet::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = PointSet::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(exact_emd(&a, &b).unwrap(), 3.0);
        let a = PointSet::from_rows(&[[0.0], [10.0]]).unwrap();
        let b = PointSet::from_rows(&[[1.0], [9.0]]).unwrap();
        assert_eq!(exact_emd(&a, &b).unwrap(), 2.0);
        assert!(exact_emd(&a, &PointSet::from_rows(&[[1.0]]).unwrap()).unwrap_err().is_input());
    }

    #[test]
    fn assignment_matches_permutation_enumeration() {
        let mut rng = Seed(7).rng();
        for n in 1..=6 {
            for _ in 0..30 {
                let m = Matrix::from_fn(n, n, |_, _| rng.random_range(0..20) as f64);
                let (perm, cost) = assignment(n, |i, j| m.get(i, j));
                let mut seen = vec![false; n];
                for &j in &perm {
                    assert!(!seen[j]);
                    seen[j] = true;
                }
                assert!((cost - brute_matching(n, |i, j| m.get(i, j))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn supply_examples() {
        let x = PointSet::from_rows(&[[0.0, 0.0], [3.0, 1.0], [5.0, 5.0]]).unwrap();
        let zero = SupplyDemand::new(vec![0, 0, 0]).unwrap();
        let sol = exact_emd_supply(&x, &zero).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert!(sol.flow.is_empty());

        let two = PointSet::from_rows(&[[0.0, 0.0], [3.0, 1.0]]).unwrap();
        let b = SupplyDemand::new(vec![1, -1]).unwrap();
        assert_eq!(exact_emd_supply(&two, &b).unwrap().cost, 4.0);
    }

    /// Independent oracle for n = 3: a transport plan between one source and
    /// two sinks (or two sources and one sink) is forced, so the optimum is the
    /// mass-weighted sum of distances.
    #[test]
    fn supply_three_points_matches_forced_plans() {
        let mut rng = Seed(11).rng();
        for _ in 0..200 {
            let pts: Vec<[f64; 2]> = (0..3).map(|_| [rng.random_range(0..10) as f64, rng.random_range(0..10) as f64]).collect();
            let x = PointSet::from_rows(&pts).unwrap();
            let b0 = rng.random_range(-4..=4i64);
            let b1 = rng.random_range(-4..=4i64);
            let b = vec![b0, b1, -b0 - b1];
            let sd = SupplyDemand::new(b.clone()).unwrap();
            let got = exact_emd_supply(&x, &sd).unwrap();
            let d = |i: usize, j: usize| l1(x.point(i), x.point(j));
            // Sign pattern: the lone-sign index receives or sends everything.
            let mut expect = 0.0;
            for k in 0..3 {
                let others: Vec<usize> = (0..3).filter(|&o| o != k).collect();
                if others.iter().all(|&o| b[o].signum() != b[k].signum() || b[o] == 0) && b[k] != 0 {
                    expect = others.iter().map(|&o| (b[o].abs() as f64) * d(k, o)).sum();
                    break;
                }
            }
            assert!((got.cost - expect).abs() < 1e-9, "b = {b:?}");
            let out: f64 = got.flow.values().sum();
            assert_eq!(out as i64, sd.mass());
        }
    }

    #[test]
    fn one_d_examples() {
        assert_eq!(one_d_emd(&[0.0, 1.0, 3.0], &[1, 0, -1]).unwrap(), 3.0);
        assert_eq!(one_d_emd(&[0.0, 1.0, 3.0], &[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(one_d_emd(&[0.0, 2.0, 5.0], &[2, -1, -1]).unwrap(), 7.0);
        assert!(one_d_emd(&[1.0, 0.0], &[1, -1]).unwrap_err().is_input());
    }

    #[test]
    fn closest_pair_examples() {
        let a = PointSet::from_rows(&[[1.0, 1.0]]).unwrap();
        let b = PointSet::from_rows(&[[2.0, 3.0]]).unwrap();
        assert_eq!(brute_closest_pair(&a, &b).unwrap(), (0, 0, 3.0));
        let s = PointSet::from_rows(&[[1.0], [2.0], [1.0]]).unwrap();
        assert_eq!(brute_closest_pair(&s, &s).unwrap(), (0, 0, 0.0));
        assert!(brute_closest_pair(&PointSet::empty(1), &s).is_err());
    }

    #[test]
    fn closest_pair_matches_independent_scan() {
        let mut rng = Seed(3).rng();
        let a = PointSet::new(4, (0..80).map(|_| rng.random::<f64>()).collect()).unwrap();
        let b = PointSet::new(4, (0..80).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (i, j, d) = brute_closest_pair(&a, &b).unwrap();
        let mut all: Vec<(f64, usize, usize)> = Vec::new();
        for p in 0..20 {
            for q in 0..20 {
                all.push((l1(a.point(p), b.point(q)), p, q));
            }
        }
        all.sort_by(|u, v| u.partial_cmp(v).unwrap());
        assert_eq!((all[0].1, all[0].2), (i, j));
        assert_eq!(all[0].0, d);
    }

    #[test]
    fn lambda_examples() {
        let n = 3;
        let c = Matrix::filled(n, n, 2.0);
        let z = Matrix::filled(n, n, 0.0);
        let p = Matrix::filled(n, n, 1.0);
        let t = explicit_lambda(0.7, &c, &z, &p).unwrap();
        for &q in &t.probs {
            assert!((q - 1.0 / 18.0).abs() < 1e-15);
        }

        let one = Matrix::filled(1, 1, 1.0);
        let t = explicit_lambda(1.0, &one, &one, &one).unwrap();
        let e = std::f64::consts::E;
        assert!((t.prob(0, 0, 1) - e / (e + 1.0 / e)).abs() < 1e-15);
        assert!((t.prob(0, 0, -1) - (1.0 / e) / (e + 1.0 / e)).abs() < 1e-15);

        let big = Matrix::filled(1, 1, 1e4);
        let t = explicit_lambda(1.0, &one, &big, &one).unwrap();
        assert!(t.probs.iter().all(|q| q.is_finite()));
        assert!((t.log_total - 1e4).abs() < 1e-9);
    }

    fn small_points(n: usize) -> impl Strategy<Value = PointSet> {
        prop::collection::vec(0i32..12, n * 2).prop_map(|v| PointSet::new(2, v.into_iter().map(f64::from).collect()).unwrap())
    }

    fn small_supply(n: usize) -> impl Strategy<Value = Vec<i64>> {
        prop::collection::vec(-3i64..=3, n - 1).prop_map(|mut v| {
            let s: i64 = v.iter().sum();
            v.push(-s);
            v
        })
    }

    proptest! {
        #[test]
        fn matching_equals_unit_supply(x in small_points(5), y in small_points(5)) {
            let both = x.concat(&y).unwrap();
            let b = SupplyDemand::matching(5, 5).unwrap();
            let via_supply = exact_emd_supply(&both, &b).unwrap().cost;
            let via_match = exact_emd(&x, &y).unwrap();
            prop_assert!((via_supply - via_match).abs() < 1e-9);
        }

        #[test]
        fn emd_is_a_norm(x in small_points(5), a in small_supply(5), b in small_supply(5), k in -3i64..=3) {
            let emd = |v: &Vec<i64>| exact_emd_supply(&x, &SupplyDemand::new(v.clone()).unwrap()).unwrap().cost;
            let sum: Vec<i64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
            prop_assert!(emd(&sum) <= emd(&a) + emd(&b) + 1e-9);
            let scaled: Vec<i64> = a.iter().map(|p| p * k).collect();
            prop_assert!((emd(&scaled) - (k.abs() as f64) * emd(&a)).abs() < 1e-9);
        }

        #[test]
        fn flow_marginals_match_supply(x in small_points(6), b in small_supply(6)) {
            let sd = SupplyDemand::new(b.clone()).unwrap();
            let sol = exact_emd_supply(&x, &sd).unwrap();
            let mut net = [0.0; 6];
            let mut cost = 0.0;
            for (&(i, j), &f) in &sol.flow {
                prop_assert!(f >= 0.0);
                net[i] += f;
                net[j] -= f;
                cost += f * l1(x.point(i), x.point(j));
            }
            for k in 0..6 {
                prop_assert!((net[k] - b[k] as f64).abs() < 1e-9);
            }
            prop_assert!((cost - sol.cost).abs() < 1e-9);
        }

        #[test]
        fn lambda_normalised_with_sign_ratio(vals in prop::collection::vec((0.5f64..5.0, 0.0f64..20.0, any::<bool>()), 9), eta in 0.01f64..3.0) {
            let c = Matrix::from_fn(3, 3, |i, j| vals[i * 3 + j].0);
            let d = Matrix::from_fn(3, 3, |i, j| vals[i * 3 + j].1);
            let p = Matrix::from_fn(3, 3, |i, j| if vals[i * 3 + j].2 { 1.0 } else { -1.0 });
            let t = explicit_lambda(eta, &c, &d, &p).unwrap();
            prop_assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(t.probs.iter().all(|&q| q >= 0.0));
            for i in 0..3 {
                for j in 0..3 {
                    let want = 2.0 * eta * p.get(i, j) * d.get(i, j) / c.get(i, j);
                    let got = (t.prob(i, j, 1) / t.prob(i, j, -1)).ln();
                    prop_assert!((got - want).abs() < 1e-9 * want.abs().max(1.0));
                }
            }
        }
    }
}
