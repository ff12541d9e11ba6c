//! Integer dual state and its rounding `D_ij`, `P_ij`.

use serde::{Deserialize, Serialize};

use crate::error::{EmdError, Result};
use crate::geometry::level_index;

/// Integer duals in dual units together with the rounding accuracy `chi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub alpha: Vec<i64>,
    pub beta: Vec<i64>,
    pub chi: f64,
}

impl DualState {
    pub fn new(alpha: Vec<i64>, beta: Vec<i64>, chi: f64) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(EmdError::input("alpha and beta must have equal length"));
        }
        if !(chi > 0.0 && chi.is_finite()) {
            return Err(EmdError::input(format!("chi = {chi} must be positive")));
        }
        Ok(DualState { alpha, beta, chi })
    }

    pub fn zeros(n: usize, chi: f64) -> Result<Self> {
        DualState::new(vec![0; n], vec![0; n], chi)
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// `max(||alpha||_inf, ||beta||_inf)`.
    pub fn max_abs(&self) -> u64 {
        self.alpha.iter().chain(&self.beta).map(|v| v.unsigned_abs()).max().unwrap_or(0)
    }
}

/// Rounded class of one difference `alpha_i - beta_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DualClass {
    /// `alpha_i = beta_j`, so `D_ij = 0` and `P_ij = +1`.
    Zero,
    /// `D_ij = (1+chi)^exp` with `P_ij = sign`.
    Band { sign: i8, exp: i64 },
}

impl DualClass {
    pub fn sign(self) -> i8 {
        match self {
            DualClass::Zero => 1,
            DualClass::Band { sign, .. } => sign,
        }
    }

    /// Rank that is non-decreasing as `alpha_i - beta_j` decreases.
    pub(crate) fn rank(self) -> i64 {
        match self {
            DualClass::Zero => 0,
            DualClass::Band { sign, exp } if sign > 0 => -exp - 1,
            DualClass::Band { exp, .. } => exp + 1,
        }
    }
}

/// Lazy accessors for `D` and `P`; `D_ij <= |alpha_i - beta_j| < (1+chi) D_ij`.
#[derive(Debug, Clone)]
pub struct RoundedDuals {
    state: DualState,
}

pub fn round_duals(state: DualState) -> Result<RoundedDuals> {
    if !(state.chi > 0.0 && state.chi.is_finite()) {
        return Err(EmdError::input(format!("chi = {} must be positive", state.chi)));
    }
    Ok(RoundedDuals { state })
}

/// Class of a single difference under accuracy `chi`.
pub fn classify(diff: i64, chi: f64) -> DualClass {
    if diff == 0 {
        return DualClass::Zero;
    }
    let exp = level_index(diff.unsigned_abs() as f64, chi);
    DualClass::Band { sign: if diff > 0 { 1 } else { -1 }, exp }
}

impl RoundedDuals {
    pub fn state(&self) -> &DualState {
        &self.state
    }

    pub fn n(&self) -> usize {
        self.state.n()
    }

    pub fn chi(&self) -> f64 {
        self.state.chi
    }

    pub fn diff(&self, i: usize, j: usize) -> i64 {
        self.state.alpha[i] - self.state.beta[j]
    }

    pub fn class(&self, i: usize, j: usize) -> DualClass {
        classify(self.diff(i, j), self.state.chi)
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        class_value(self.class(i, j), self.state.chi)
    }

    pub fn p(&self, i: usize, j: usize) -> i8 {
        if self.diff(i, j) >= 0 {
            1
        } else {
            -1
        }
    }
}

/// `D` represented by a class.
pub fn class_value(class: DualClass, chi: f64) -> f64 {
    match class {
        DualClass::Zero => 0.0,
        DualClass::Band { exp, .. } => (1.0 + chi).powf(exp as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(diff: i64, chi: f64) -> RoundedDuals {
        round_duals(DualState::new(vec![diff], vec![0], chi).unwrap()).unwrap()
    }

    #[test]
    fn worked_values() {
        let r = single(7, 0.5);
        assert!((r.d(0, 0) - 5.0625).abs() < 1e-12);
        assert_eq!(r.p(0, 0), 1);
        let r = single(0, 0.5);
        assert_eq!(r.d(0, 0), 0.0);
        assert_eq!(r.p(0, 0), 1);
        let r = single(-3, 0.5);
        assert!((r.d(0, 0) - 2.25).abs() < 1e-12);
        assert_eq!(r.p(0, 0), -1);
    }

    #[test]
    fn rejects_nonpositive_chi() {
        assert!(DualState::new(vec![1], vec![0], 0.0).is_err());
    }

    #[test]
    fn exact_powers_are_snapped() {
        // 3^4 = 81 exactly.
        let r = single(81, 2.0);
        assert!((r.d(0, 0) - 81.0).abs() < 1e-9);
        let r = single(8, 1.0);
        assert_eq!(r.d(0, 0), 8.0);
    }

    proptest! {
        #[test]
        fn sandwich(diff in -1_000_000i64..1_000_000, chi in 0.01f64..1.0) {
            let r = single(diff, chi);
            let d = r.d(0, 0);
            let a = diff.unsigned_abs() as f64;
            if diff == 0 {
                prop_assert_eq!(d, 0.0);
            } else {
                prop_assert!(d <= a * (1.0 + 1e-12));
                prop_assert!(a < (1.0 + chi) * d * (1.0 + 1e-12));
            }
            prop_assert_eq!(r.p(0, 0), if diff >= 0 { 1 } else { -1 });
        }

        #[test]
        fn rank_is_monotone(a in -10_000i64..10_000, b in -10_000i64..10_000, chi in 0.05f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify(hi, chi).rank() <= classify(lo, chi).rank());
        }
    }
}
