//! Seeded synthetic instances.

use rand::Rng as _;

use crate::geometry::PointSet;
use crate::seed::Seed;

/// `n` points with i.i.d. integer coordinates in `[0, range)`.
pub fn random_points(n: usize, d: usize, range: u32, seed: Seed) -> PointSet {
    let mut rng = seed.rng();
    let coords = (0..n * d).map(|_| f64::from(rng.random_range(0..range))).collect();
    PointSet::new(d, coords).expect("finite coordinates")
}

/// Disjoint `X`, `Y` of size `n`: `X` has even and `Y` odd first coordinate,
/// so every cross distance is at least 1.
pub fn separated_pair(n: usize, d: usize, range: u32, seed: Seed) -> (PointSet, PointSet) {
    let mut rng = seed.rng();
    let mut make = |parity: u32| {
        let coords = (0..n)
            .flat_map(|_| {
                let mut p: Vec<f64> = (0..d).map(|_| f64::from(rng.random_range(0..range))).collect();
                p[0] = f64::from(2 * rng.random_range(0..range.div_ceil(2).max(1)) + parity);
                p
            })
            .collect();
        PointSet::new(d, coords).expect("finite coordinates")
    };
    let x = make(0);
    let y = make(1);
    (x, y)
}

/// Two well separated clusters with `X` mostly in the first and `Y` mostly in
/// the second, so mass must travel between scales.
pub fn two_scale_pair(n: usize, d: usize, seed: Seed) -> (PointSet, PointSet) {
    let mut rng = seed.rng();
    let mut make = |offset: f64, parity: f64| {
        let coords = (0..n)
            .flat_map(|k| {
                let far = if k % 4 == 0 { 200.0 - offset } else { offset };
                let mut p: Vec<f64> = (0..d).map(|_| far + f64::from(rng.random_range(0..8u32))).collect();
                p[0] = 2.0 * (p[0] / 2.0).floor() + parity;
                p
            })
            .collect();
        PointSet::new(d, coords).expect("finite coordinates")
    };
    let x = make(0.0, 0.0);
    let y = make(200.0, 1.0);
    (x, y)
}
