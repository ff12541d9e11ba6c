//! Tiling `[n] x [n]` by combinatorial rectangles on which `D` is constant.
//!
//! Rows and columns are processed in sorted order of `alpha` and `beta`. For a
//! fixed row the classes appear as contiguous column runs whose endpoints are
//! non-decreasing in the row, so each class is swept in row blocks of
//! `ceil(sqrt n)`; the common column range of a block becomes a rectangle when
//! it is at least a block wide. Rectangles are then cut into
//! `ceil(n^(1/4))`-sided chunks and every uncovered pair goes to `E`.

use std::collections::BTreeMap;

use super::duals::{DualClass, RoundedDuals};

/// One tile `rows x cols` with a single dual class.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub class: DualClass,
}

#[derive(Debug, Clone)]
pub struct RectanglePartition {
    /// Leftover pairs, sorted.
    pub e: Vec<(usize, usize)>,
    pub rects: Vec<Rect>,
    /// Side of every tile.
    pub side: usize,
    /// Row block of the sweep and minimal pre-refinement width.
    pub block: usize,
}

/// Smallest `m` with `m^k >= n`.
pub fn int_root_ceil(n: usize, k: u32) -> usize {
    let mut m = (n as f64).powf(1.0 / k as f64).floor().max(1.0) as usize;
    while m.pow(k) < n {
        m += 1;
    }
    while m > 1 && (m - 1).pow(k) >= n {
        m -= 1;
    }
    m
}

struct Sorted<'a> {
    duals: &'a RoundedDuals,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Sorted<'_> {
    fn rank(&self, r: usize, c: usize) -> i64 {
        self.duals.class(self.rows[r], self.cols[c]).rank()
    }

    /// Sorted-column run `[a, b)` of the class with rank `k` in row `r`.
    fn run(&self, r: usize, k: i64) -> (usize, usize) {
        let n = self.cols.len();
        let a = partition_point(n, |c| self.rank(r, c) < k);
        let b = partition_point(n, |c| self.rank(r, c) <= k);
        (a, b)
    }
}

fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn partition_rectangles(duals: &RoundedDuals) -> RectanglePartition {
    let n = duals.n();
    let st = duals.state();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by_key(|&i| (st.alpha[i], i));
    let mut cols: Vec<usize> = (0..n).collect();
    cols.sort_by_key(|&j| (st.beta[j], j));
    let sorted = Sorted { duals, rows, cols };
    let side = int_root_ceil(n, 4);
    let block = int_root_ceil(n, 2);

    // Classes present in each row block, found by jumping over runs.
    let mut present: BTreeMap<(i64, DualClass), Vec<usize>> = BTreeMap::new();
    for r in 0..n {
        let mut c = 0;
        while c < n {
            let class = duals.class(sorted.rows[r], sorted.cols[c]);
            let (_, b) = sorted.run(r, class.rank());
            let blocks = present.entry((class.rank(), class)).or_default();
            if blocks.last() != Some(&(r / block)) {
                blocks.push(r / block);
            }
            c = b;
        }
    }

    let mut e = Vec::new();
    let mut rects = Vec::new();
    let mut tile = |r0: usize, r1: usize, lo: usize, hi: usize, class: DualClass, runs: &[(usize, usize)]| {
        let full_rows = (r1 - r0) / side * side;
        let full_cols = (hi - lo) / side * side;
        for a in (0..full_rows).step_by(side) {
            for b in (0..full_cols).step_by(side) {
                rects.push(Rect {
                    rows: (r0 + a..r0 + a + side).map(|r| sorted.rows[r]).collect(),
                    cols: (lo + b..lo + b + side).map(|c| sorted.cols[c]).collect(),
                    class,
                });
            }
        }
        for r in r0..r1 {
            let (a, b) = runs[r - r0];
            for c in a..b {
                if !(r < r0 + full_rows && (lo..lo + full_cols).contains(&c)) {
                    e.push((sorted.rows[r], sorted.cols[c]));
                }
            }
        }
    };

    // Zero class: equal-value groups A_x x B_x.
    let mut r0 = 0;
    while r0 < n {
        let x = st.alpha[sorted.rows[r0]];
        let mut r1 = r0;
        while r1 < n && st.alpha[sorted.rows[r1]] == x {
            r1 += 1;
        }
        let (lo, hi) = sorted.run(r0, DualClass::Zero.rank());
        let runs = vec![(lo, hi); r1 - r0];
        if r1 - r0 >= block && hi - lo >= block {
            tile(r0, r1, lo, hi, DualClass::Zero, &runs);
        } else {
            tile(r0, r1, lo, lo, DualClass::Zero, &runs);
        }
        r0 = r1;
    }

    for (&(k, class), blocks) in &present {
        if class == DualClass::Zero {
            continue;
        }
        for &bj in blocks {
            let r0 = bj * block;
            let r1 = (r0 + block).min(n);
            let runs: Vec<(usize, usize)> = (r0..r1).map(|r| sorted.run(r, k)).collect();
            let (lo, hi) = (runs[runs.len() - 1].0, runs[0].1);
            if hi >= lo + block {
                debug_assert!(runs.iter().all(|&(a, b)| a <= lo && hi <= b));
                tile(r0, r1, lo, hi, class, &runs);
            } else {
                tile(r0, r1, lo, lo, class, &runs);
            }
        }
    }
    e.sort_unstable();
    RectanglePartition { e, rects, side, block }
}

impl RectanglePartition {
    /// Number of pairs covered by rectangles.
    pub fn covered(&self) -> usize {
        self.rects.iter().map(|r| r.rows.len() * r.cols.len()).sum()
    }
}
