//! Randomly shifted nested-grid quadtree, the perturbation that makes it a
//! bi-Lipschitz embedding of the perturbed points, and tree-metric EMD.
//!
//! Levels run from the root at 0 to the leaves at `h`. A level-`l` cell has
//! side `phi / 2^(l-1)` and the edge from level `l` to `l + 1` weighs
//! `phi / 2^l`.

use std::collections::HashMap;

use rand::Rng as _;

use crate::aspect::pad_dimension;
use crate::error::{EmdError, Result};
use crate::geometry::PointSet;
use crate::seed::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub level: u32,
    /// `u32::MAX` for the root.
    pub parent: u32,
}

#[derive(Debug, Clone)]
pub struct QuadTree {
    phi: f64,
    depth: usize,
    nodes: Vec<Node>,
    /// `paths[i * (depth + 1) + l]` is the level-`l` ancestor of point `i`.
    paths: Vec<u32>,
    len: usize,
}

/// Depth `ceil(log2 phi) + 1` used for aspect ratio `phi`.
pub fn depth_for(phi: f64) -> usize {
    phi.log2().ceil().max(0.0) as usize + 1
}

/// Samples a tree from the nested randomly-shifted-grid distribution.
pub fn sample_quadtree(points: &PointSet, phi: f64, seed: Seed) -> Result<QuadTree> {
    sample_quadtree_with_depth(points, phi, depth_for(phi), seed)
}

/// As [`sample_quadtree`] with an explicit depth.
pub fn sample_quadtree_with_depth(points: &PointSet, phi: f64, depth: usize, seed: Seed) -> Result<QuadTree> {
    if !(phi >= 1.0 && phi.is_finite()) {
        return Err(EmdError::input(format!("aspect ratio phi = {phi} must be at least 1")));
    }
    let mut rng = seed.rng();
    let shift: Vec<f64> = (0..points.dim()).map(|_| rng.random::<f64>() * phi).collect();
    QuadTree::build(points, phi, depth, &shift)
}

impl QuadTree {
    /// Deterministic construction from a given shift vector.
    pub fn build(points: &PointSet, phi: f64, depth: usize, shift: &[f64]) -> Result<QuadTree> {
        if shift.len() != points.dim() {
            return Err(EmdError::input("shift dimension differs from point dimension"));
        }
        let n = points.len();
        let stride = depth + 1;
        let mut nodes = vec![Node { level: 0, parent: u32::MAX }];
        let mut paths = vec![0u32; n * stride];
        // Cells are (a, a + side]; the ratio (x - s) / phi is formed once so
        // that every level rescales it by an exact power of two.
        let unit: Vec<f64> = points.iter().flat_map(|p| p.iter().zip(shift).map(|(x, s)| (x - s) / phi).collect::<Vec<_>>()).collect();
        let dim = points.dim();
        let mut cell = vec![0i64; dim];
        for level in 1..=depth {
            let mult = 2f64.powi(level as i32 - 1);
            let mut index: HashMap<(u32, Vec<i64>), u32> = HashMap::new();
            for i in 0..n {
                for k in 0..dim {
                    cell[k] = (unit[i * dim + k] * mult).ceil() as i64 - 1;
                }
                let parent = paths[i * stride + level - 1];
                let next = nodes.len() as u32;
                let id = *index.entry((parent, cell.clone())).or_insert(next);
                if id == next {
                    nodes.push(Node { level: level as u32, parent });
                }
                paths[i * stride + level] = id;
            }
        }
        Ok(QuadTree { phi, depth, nodes, paths, len: n })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Level-`level` ancestor of point `i`.
    #[inline]
    pub fn ancestor(&self, i: usize, level: usize) -> u32 {
        self.paths[i * (self.depth + 1) + level]
    }

    pub fn leaf_of(&self, i: usize) -> u32 {
        self.ancestor(i, self.depth)
    }

    /// Weight of the edge from level `level` to `level + 1`.
    #[inline]
    pub fn edge_weight(&self, level: usize) -> f64 {
        self.phi / 2f64.powi(level as i32)
    }

    /// Deepest level at which `i` and `j` share a node.
    pub fn split_level(&self, i: usize, j: usize) -> usize {
        // Paths are nested, so agreement is a prefix; binary search it.
        let (mut lo, mut hi) = (0usize, self.depth);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.ancestor(i, mid) == self.ancestor(j, mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Weighted path length `2 sum_{l = s}^{h-1} phi / 2^l` with `s` the split level.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let s = self.split_level(i, j);
        (s..self.depth).map(|l| 2.0 * self.edge_weight(l)).sum()
    }

    /// Signed mass per node of `mass` placed at the tree's points.
    pub fn node_mass(&self, mass: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.nodes.len()];
        for (i, &m) in mass.iter().enumerate() {
            for l in 1..=self.depth {
                acc[self.ancestor(i, l) as usize] += m;
            }
        }
        acc
    }

    /// Tree EMD of a signed mass vector over the tree's points:
    /// `sum over non-root v at level l of (phi / 2^(l-1)) |mass(v)|`.
    pub fn emd_signed(&self, mass: &[f64]) -> Result<f64> {
        if mass.len() != self.len {
            return Err(EmdError::input(format!("{} masses for {} tree points", mass.len(), self.len)));
        }
        let total: f64 = mass.iter().sum();
        let scale: f64 = mass.iter().map(|m| m.abs()).sum::<f64>().max(1.0);
        if total.abs() > 1e-9 * scale {
            return Err(EmdError::input(format!("tree EMD mass mismatch: net {total}")));
        }
        let acc = self.node_mass(mass);
        Ok(self.nodes.iter().zip(&acc).skip(1).map(|(v, m)| self.edge_weight(v.level as usize - 1) * m.abs()).sum())
    }
}

/// Tree EMD between `mu` on the first `mu.len()` tree points and `nu` on the rest.
pub fn tree_emd(tree: &QuadTree, mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() + nu.len() != tree.len() {
        return Err(EmdError::input("mu and nu must cover the tree's points"));
    }
    let mass: Vec<f64> = mu.iter().copied().chain(nu.iter().map(|v| -v)).collect();
    tree.emd_signed(&mass)
}

/// Bottom-up greedy matching of the first `x_len` tree points against the
/// rest: each node matches what its subtree left unmatched. Returns its cost.
pub fn greedy_tree_bound(tree: &QuadTree, x_len: usize) -> Result<f64> {
    let n = tree.len();
    if 2 * x_len != n {
        return Err(EmdError::input(format!("greedy bound needs |X| = |Y|, got {x_len} of {n}")));
    }
    let h = tree.depth();
    // Unmatched surplus per node: positive = X copies, negative = Y copies.
    let mut surplus: Vec<i64> = vec![0; tree.nodes().len()];
    for i in 0..n {
        surplus[tree.leaf_of(i) as usize] += if i < x_len { 1 } else { -1 };
    }
    let mut by_level: Vec<Vec<u32>> = vec![Vec::new(); h + 1];
    for (id, v) in tree.nodes().iter().enumerate() {
        by_level[v.level as usize].push(id as u32);
    }
    let mut cost = 0.0;
    let mut gathered: Vec<(i64, i64)> = vec![(0, 0); tree.nodes().len()];
    for level in (0..=h).rev() {
        for &v in &by_level[level] {
            let v = v as usize;
            let (mut xs, mut ys) = gathered[v];
            if level == h {
                let s = surplus[v];
                xs += s.max(0);
                ys += (-s).max(0);
            }
            let matched = xs.min(ys);
            // A pair matched at level l travels 2 * sum_{k=l}^{h-1} phi/2^k.
            let pair_cost: f64 = (level..h).map(|k| 2.0 * tree.edge_weight(k)).sum();
            cost += matched as f64 * pair_cost;
            let rest = (xs - matched, ys - matched);
            let parent = tree.nodes()[v].parent;
            if parent != u32::MAX {
                let g = &mut gathered[parent as usize];
                g.0 += rest.0;
                g.1 += rest.1;
            }
        }
    }
    Ok(cost)
}

/// Output of [`embed_and_perturb`].
#[derive(Debug, Clone)]
pub struct PerturbedInstance {
    /// Input coordinates followed by `extra_dim` perturbation coordinates.
    pub y: PointSet,
    pub tree: QuadTree,
    pub extra_dim: usize,
    /// Perturbation scale `eps / log2 phi` actually used.
    pub eps_prime: f64,
    /// Lower distortion parameter `eps / log2 phi`.
    pub d_l: f64,
    /// Upper distortion parameter `8 ln n`.
    pub d_u: f64,
}

/// Samples a quadtree on `points`, draws `z_v ~ U[0, eps' phi / 2^l]^{d'}` per
/// node and appends `(1/d') sum_{v on path} z_v` to every point.
pub fn embed_and_perturb(points: &PointSet, phi: f64, eps: f64, seed: Seed) -> Result<PerturbedInstance> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(EmdError::input(format!("eps = {eps} outside (0, 1)")));
    }
    let tree = sample_quadtree(points, phi, seed.child("tree"))?;
    let n = points.len();
    let extra = pad_dimension(n);
    let log_phi = phi.log2().max(1.0);
    let eps_prime = eps / log_phi;
    let mut rng = seed.child("perturb").rng();
    let mut z = vec![0.0; tree.nodes().len() * extra];
    for (v, node) in tree.nodes().iter().enumerate() {
        let top = eps_prime * phi / 2f64.powi(node.level as i32);
        for k in 0..extra {
            z[v * extra + k] = rng.random::<f64>() * top;
        }
    }
    let dim = points.dim() + extra;
    let mut coords = Vec::with_capacity(n * dim);
    let mut acc = vec![0.0; extra];
    for i in 0..n {
        coords.extend_from_slice(points.point(i));
        acc.iter_mut().for_each(|a| *a = 0.0);
        for l in 0..=tree.depth() {
            let v = tree.ancestor(i, l) as usize;
            for k in 0..extra {
                acc[k] += z[v * extra + k];
            }
        }
        coords.extend(acc.iter().map(|a| a / extra as f64));
    }
    let d_u = 8.0 * (n.max(2) as f64).ln();
    Ok(PerturbedInstance { y: PointSet::new(dim, coords)?, tree, extra_dim: extra, eps_prime, d_l: eps_prime, d_u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::min_cost_flow;
    use crate::geometry::{l1, SupplyDemand};
    use proptest::prelude::*;

    fn random_points(n: usize, d: usize, phi: f64, seed: Seed) -> PointSet {
        let mut rng = seed.rng();
        let coords = (0..n * d).map(|_| rng.random_range(1..=phi as i64) as f64).collect();
        PointSet::new(d, coords).unwrap()
    }

    #[test]
    fn single_point_path_has_full_length() {
        let p = PointSet::from_rows(&[[3.0, 5.0]]).unwrap();
        let t = sample_quadtree(&p, 8.0, Seed(1)).unwrap();
        assert_eq!(t.depth(), 4);
        assert_eq!(t.nodes().len(), 5);
        for l in 1..=t.depth() {
            let v = t.ancestor(0, l) as usize;
            assert_eq!(t.nodes()[v].level as usize, l);
            assert_eq!(t.nodes()[v].parent, t.ancestor(0, l - 1));
        }
    }

    #[test]
    fn distance_examples() {
        let p = PointSet::from_rows(&[[1.0], [4.0]]).unwrap();
        // With shift 0 the level-1 cells are (-4, 0], (0, 4], (4, 8] so both share it.
        let t = QuadTree::build(&p, 4.0, 2, &[0.0]).unwrap();
        assert_eq!(t.distance(0, 0), 0.0);
        let t = QuadTree::build(&p, 4.0, 2, &[1.5]).unwrap();
        assert_eq!(t.split_level(0, 1), 0);
        assert_eq!(t.distance(0, 1), 12.0);
    }

    #[test]
    fn edge_weights_are_geometric() {
        let p = random_points(10, 3, 64.0, Seed(2));
        let t = sample_quadtree(&p, 64.0, Seed(3)).unwrap();
        for l in 0..t.depth() {
            assert_eq!(t.edge_weight(l), 64.0 / 2f64.powi(l as i32));
        }
        for v in t.nodes().iter().skip(1) {
            assert_eq!(t.nodes()[v.parent as usize].level + 1, v.level);
        }
    }

    #[test]
    fn distinct_integer_points_get_distinct_leaves() {
        let p = random_points(40, 2, 16.0, Seed(4));
        let t = sample_quadtree(&p, 16.0, Seed(5)).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let same = p.point(i) == p.point(j);
                assert_eq!(t.leaf_of(i) == t.leaf_of(j), same);
            }
        }
    }

    #[test]
    fn far_points_split_at_depth_one() {
        let p = PointSet::from_rows(&[[1.0], [65.0]]).unwrap();
        let mut separated = 0;
        for s in 0..1000 {
            let t = sample_quadtree(&p, 64.0, Seed(s)).unwrap();
            if t.split_level(0, 1) == 0 {
                separated += 1;
            }
        }
        assert!(separated >= 990);
    }

    #[test]
    fn tree_emd_unit_mass_is_tree_distance() {
        let p = random_points(8, 2, 32.0, Seed(6));
        let t = sample_quadtree(&p, 32.0, Seed(7)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let mut m = vec![0.0; 8];
                m[i] += 1.0;
                m[j] -= 1.0;
                let e = t.emd_signed(&m).unwrap();
                let flow = min_cost_flow(&SupplyDemand::new(m.iter().map(|&v| v as i64).collect()).unwrap(), |a, b| t.distance(a, b));
                assert!((e - t.distance(i, j)).abs() < 1e-9);
                assert!((e - flow.cost).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tree_emd_mismatch_is_input_error() {
        let p = random_points(4, 2, 8.0, Seed(8));
        let t = sample_quadtree(&p, 8.0, Seed(9)).unwrap();
        assert!(tree_emd(&t, &[1.0, 1.0], &[1.0, 0.0]).unwrap_err().is_input());
        assert!(tree_emd(&t, &[1.0, 0.0], &[1.0, 0.0]).unwrap() >= 0.0);
    }

    #[test]
    fn greedy_matches_tree_emd() {
        for s in 0..20 {
            let p = random_points(16, 3, 64.0, Seed(100 + s));
            let t = sample_quadtree(&p, 64.0, Seed(s)).unwrap();
            let mass: Vec<f64> = (0..16).map(|i| if i < 8 { 1.0 } else { -1.0 }).collect();
            let g = greedy_tree_bound(&t, 8).unwrap();
            assert!((g - t.emd_signed(&mass).unwrap()).abs() < 1e-9);
        }
        let p = PointSet::from_rows(&[[2.0], [9.0]]).unwrap();
        let t = sample_quadtree(&p, 16.0, Seed(1)).unwrap();
        assert!((greedy_tree_bound(&t, 1).unwrap() - t.distance(0, 1)).abs() < 1e-9);
        let same = PointSet::from_rows(&[[2.0], [2.0]]).unwrap();
        let t = sample_quadtree(&same, 16.0, Seed(1)).unwrap();
        assert_eq!(greedy_tree_bound(&t, 1).unwrap(), 0.0);
    }

    #[test]
    fn perturbation_keeps_prefix_and_grows_distances() {
        let p = random_points(12, 3, 32.0, Seed(10));
        let e = embed_and_perturb(&p, 32.0, 0.3, Seed(11)).unwrap();
        for i in 0..12 {
            assert_eq!(&e.y.point(i)[..3], p.point(i));
            for j in 0..12 {
                assert!(l1(e.y.point(i), e.y.point(j)) >= l1(p.point(i), p.point(j)));
            }
        }
    }

    proptest! {
        #[test]
        fn tree_metric_triangle_and_symmetry(seed in 0u64..1000) {
            let p = random_points(10, 2, 32.0, Seed(seed));
            let t = sample_quadtree(&p, 32.0, Seed(seed ^ 0xFF)).unwrap();
            for i in 0..10 {
                for j in 0..10 {
                    prop_assert_eq!(t.distance(i, j), t.distance(j, i));
                    for k in 0..10 {
                        prop_assert!(t.distance(i, k) <= t.distance(i, j) + t.distance(j, k) + 1e-9);
                    }
                }
            }
        }

        #[test]
        fn tree_emd_is_a_norm(seed in 0u64..1000, scale in 0.1f64..10.0) {
            let p = random_points(8, 2, 16.0, Seed(seed));
            let t = sample_quadtree(&p, 16.0, Seed(seed + 1)).unwrap();
            let mut rng = Seed(seed + 2).rng();
            let mut a: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut b: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let ma = a.iter().sum::<f64>() / 8.0;
            let mb = b.iter().sum::<f64>() / 8.0;
            a.iter_mut().for_each(|v| *v -= ma);
            b.iter_mut().for_each(|v| *v -= mb);
            let ea = t.emd_signed(&a).unwrap();
            let eb = t.emd_signed(&b).unwrap();
            let sa: Vec<f64> = a.iter().map(|v| v * scale).collect();
            prop_assert!((t.emd_signed(&sa).unwrap() - scale * ea).abs() <= 1e-9 * (1.0 + scale * ea));
            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            prop_assert!(t.emd_signed(&ab).unwrap() <= ea + eb + 1e-9);
        }
    }
}
