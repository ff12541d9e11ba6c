//! The random down-rounding set `S` and the τ-shattering test.

use std::collections::HashSet;

use crate::geometry::{pair_key, unpack_pair};
use crate::seed::Seed;

/// Uniform sample of pairs of `[n] x [n]` without replacement.
#[derive(Debug, Clone)]
pub struct ShatterSet {
    n: usize,
    keys: HashSet<u64>,
}

/// `round(n^(2 - phi_exp / 8))`, clamped to `n^2`.
pub fn rounding_set_size(n: usize, phi_exp: f64) -> usize {
    let total = n * n;
    ((n as f64).powf(2.0 - phi_exp / 8.0).round() as usize).min(total)
}

pub fn draw_rounding_set(n: usize, phi_exp: f64, seed: Seed) -> ShatterSet {
    draw_rounding_set_of_size(n, rounding_set_size(n, phi_exp), seed)
}

pub fn draw_rounding_set_of_size(n: usize, size: usize, seed: Seed) -> ShatterSet {
    let total = n * n;
    let size = size.min(total);
    let mut rng = seed.rng();
    let keys = rand::seq::index::sample(&mut rng, total, size).into_iter().map(|k| pair_key(k / n, k % n)).collect();
    ShatterSet { n, keys }
}

impl ShatterSet {
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> ShatterSet {
        ShatterSet { n, keys: pairs.into_iter().map(|(i, j)| pair_key(i, j)).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.keys.contains(&pair_key(i, j))
    }

    /// Pairs in sorted order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.keys.iter().map(|&k| unpack_pair(k)).collect();
        v.sort_unstable();
        v
    }
}

/// True iff every cell `A_c` with `|A_c| >= tau` has
/// `0.9 |A_c| / |A| <= |S ∩ A_c| / |S ∩ A| <= 1.1 |A_c| / |A|`, where `A` is
/// the union of the cells and `cell_of` maps a pair to its cell.
pub fn shatter_check(s: &ShatterSet, cell_sizes: &[usize], cell_of: impl Fn(usize, usize) -> Option<usize>, tau: usize) -> bool {
    let universe: usize = cell_sizes.iter().sum();
    let mut hits = vec![0usize; cell_sizes.len()];
    let mut inside = 0usize;
    for &k in &s.keys {
        let (i, j) = unpack_pair(k);
        if let Some(c) = cell_of(i, j) {
            hits[c] += 1;
            inside += 1;
        }
    }
    cell_sizes.iter().zip(&hits).all(|(&size, &h)| {
        if size < tau || size == 0 {
            return true;
        }
        if inside == 0 {
            return false;
        }
        let want = size as f64 / universe as f64;
        let got = h as f64 / inside as f64;
        0.9 * want <= got && got <= 1.1 * want
    })
}

/// `tau = n^(1 + phi_exp / 2)`.
pub fn shatter_tau(n: usize, phi_exp: f64) -> usize {
    (n as f64).powf(1.0 + phi_exp / 2.0).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    #[test]
    fn sizes_and_extremes() {
        let s = draw_rounding_set(10, 0.5, Seed(1));
        assert_eq!(s.len(), rounding_set_size(10, 0.5));
        assert!(draw_rounding_set_of_size(8, 0, Seed(2)).is_empty());
        let all = draw_rounding_set_of_size(6, 36, Seed(3));
        assert_eq!(all.pairs(), (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).collect::<Vec<_>>());
        assert_eq!(draw_rounding_set_of_size(4, 100, Seed(4)).len(), 16);
    }

    #[test]
    fn trivial_and_adversarial_partitions() {
        let n = 16;
        let s = draw_rounding_set(n, 0.5, Seed(5));
        assert!(shatter_check(&s, &[n * n], |_, _| Some(0), 1));
        // A cell of size >= tau chosen to avoid S entirely.
        let outside: HashSet<(usize, usize)> =
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| !s.contains(i, j)).collect();
        let sizes = [outside.len(), n * n - outside.len()];
        assert!(!shatter_check(&s, &sizes, |i, j| Some(usize::from(!outside.contains(&(i, j)))), outside.len()));
    }

    #[test]
    fn fixed_set_concentration() {
        // |S ∩ A| within 10% of |S||A|/n^2 for |A| >= n^(1 + phi/2).
        let n = 64;
        let mut rng = Seed(6).rng();
        let mut cells: Vec<usize> = (0..n * n).collect();
        cells.shuffle(&mut rng);
        let a: HashSet<usize> = cells[..shatter_tau(n, 0.5)].iter().copied().collect();
        let mut good = 0;
        for s in 0..100 {
            let set = draw_rounding_set(n, 0.5, Seed(100 + s));
            let hit = a.iter().filter(|&&k| set.contains(k / n, k % n)).count() as f64;
            let want = set.len() as f64 * a.len() as f64 / (n * n) as f64;
            if (hit - want).abs() <= 0.1 * want {
                good += 1;
            }
        }
        assert!(good >= 99, "{good}/100");
    }

    #[test]
    fn random_partitions_are_shattered() {
        let n = 32;
        let tau = shatter_tau(n, 0.5);
        let mut ok = 0;
        for s in 0..100u64 {
            let mut rng = Seed(s).rng();
            let k = rng.random_range(2..6);
            let labels: Vec<usize> = (0..n * n).map(|_| rng.random_range(0..k)).collect();
            let mut sizes = vec![0; k];
            labels.iter().for_each(|&c| sizes[c] += 1);
            let set = draw_rounding_set(n, 0.5, Seed(1000 + s));
            if shatter_check(&set, &sizes, |i, j| Some(labels[i * n + j]), tau) {
                ok += 1;
            }
        }
        assert!(ok >= 99, "{ok}/100");
    }
}
