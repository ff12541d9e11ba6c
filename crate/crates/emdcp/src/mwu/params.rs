//! Solver parameters: gap, width bound, learning rate, round count, dual
//! rounding accuracy, failure probability and per-call sample count.

use serde::{Deserialize, Serialize};

use crate::error::{EmdError, Result};
use crate::tree::depth_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Closed-form constants; only single rounds are affordable.
    Faithful,
    /// Capped rounds and samples, a width-matched learning rate and an exact
    /// certificate check after every round.
    #[default]
    Practical,
}

/// How `certify` picks among passing levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelRule {
    /// Shallowest passing level.
    First,
    /// Passing level with the largest estimated gap per unit of width.
    BestRatio,
}

/// Practical-mode knobs. Divisors apply to the closed-form values before the caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relax {
    pub rounds_divisor: f64,
    pub samples_divisor: f64,
    pub max_rounds: u64,
    pub max_samples: u64,
    /// Multiplies the width-matched learning rate.
    pub eta_scale: f64,
    pub level_rule: LevelRule,
}

impl Default for Relax {
    fn default() -> Self {
        Relax {
            rounds_divisor: 1.0,
            samples_divisor: 1.0,
            max_rounds: 300,
            max_samples: 4000,
            eta_scale: 6.0,
            level_rule: LevelRule::BestRatio,
        }
    }
}

impl Relax {
    /// Same caps with both divisors set to `factor`.
    pub fn with_divisor(factor: f64) -> Relax {
        Relax { rounds_divisor: factor, samples_divisor: factor, ..Relax::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwuParams {
    pub mode: Mode,
    pub n: usize,
    pub phi: f64,
    pub eps: f64,
    /// Tree depth `ceil(log2 phi) + 1`.
    pub h: usize,
    pub d_l: f64,
    pub d_u: f64,
    pub d_t: f64,
    pub gamma_gap: f64,
    pub k: f64,
    pub eta: f64,
    /// Closed-form round count before any relaxation.
    pub rounds_formula: f64,
    pub rounds: u64,
    pub chi: f64,
    pub delta: f64,
    /// Closed-form sample count before any relaxation.
    pub samples_formula: f64,
    pub samples: u64,
    pub level_rule: LevelRule,
    /// Practical relaxation in force; `None` in faithful mode.
    pub relax: Option<Relax>,
}

fn saturating_count(v: f64) -> u64 {
    if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v.ceil().max(1.0) as u64
    }
}

/// Learning-rate width reference: per-round `|alpha_i - beta_j| / C_ij` is at most
/// `d_T(i, j) / C_ij <= d_u (1 + eps)^3`.
pub fn width_reference(d_u: f64, eps: f64) -> f64 {
    d_u * (1.0 + eps).powi(3)
}

pub fn compute_params(n: usize, phi: f64, eps: f64, mode: Mode, relax: Relax) -> Result<MwuParams> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(EmdError::input(format!("eps = {eps} outside (0, 1/2)")));
    }
    if n == 0 {
        return Err(EmdError::input("solver needs at least one point per side"));
    }
    if !(phi >= 1.0 && phi.is_finite()) {
        return Err(EmdError::input(format!("aspect ratio phi = {phi} must be at least 1")));
    }
    if !(relax.rounds_divisor >= 1.0 && relax.samples_divisor >= 1.0 && relax.eta_scale > 0.0) {
        return Err(EmdError::input("relaxation divisors must be >= 1 and eta_scale positive"));
    }
    let h = depth_for(phi);
    let log_phi = phi.log2().max(1.0);
    let d_u = 8.0 * (n.max(2) as f64).ln();
    let d_l = eps / log_phi;
    let d_t = d_u / d_l;
    let gamma_gap = eps * d_l / (2.0 * h as f64);
    let k = d_u * d_t;
    let log_constraints = (2.0 * (n * n) as f64).ln();
    let eta_formula = gamma_gap / (100.0 * k * k);
    let rounds_formula = log_constraints / (100.0 * eta_formula * gamma_gap);
    let sample_base = (h as f64 * d_u / (eps * d_l)).powi(2) * n as f64;
    match mode {
        Mode::Faithful => {
            let chi = gamma_gap / (100.0 * rounds_formula * k);
            let delta = 1.0 / (100.0 * rounds_formula);
            let samples_formula = sample_base / (delta * delta);
            Ok(MwuParams {
                mode,
                n,
                phi,
                eps,
                h,
                d_l,
                d_u,
                d_t,
                gamma_gap,
                k,
                eta: eta_formula,
                rounds_formula,
                rounds: saturating_count(rounds_formula),
                chi,
                delta,
                samples_formula,
                samples: saturating_count(samples_formula),
                level_rule: LevelRule::First,
                relax: None,
            })
        }
        Mode::Practical => {
            let rounds = saturating_count(rounds_formula / relax.rounds_divisor).min(relax.max_rounds.max(1));
            let r = rounds as f64;
            let chi = gamma_gap / (100.0 * r * k);
            let delta = 1.0 / (100.0 * r);
            let samples_formula = sample_base / (delta * delta);
            let samples = saturating_count(samples_formula / relax.samples_divisor).min(relax.max_samples.max(1));
            // Hedge with losses in [-w, w] over R rounds: eta = sqrt(ln N / R) / w.
            let eta = relax.eta_scale * (log_constraints / r).sqrt() / width_reference(d_u, eps);
            log::debug!(
                "practical params: rounds {rounds} (formula {rounds_formula:.3e}), samples {samples} (formula {samples_formula:.3e}), eta {eta:.3e} (formula {eta_formula:.3e})"
            );
            Ok(MwuParams {
                mode,
                n,
                phi,
                eps,
                h,
                d_l,
                d_u,
                d_t,
                gamma_gap,
                k,
                eta,
                rounds_formula,
                rounds,
                chi,
                delta,
                samples_formula,
                samples,
                level_rule: relax.level_rule,
                relax: Some(relax),
            })
        }
    }
}

impl MwuParams {
    /// Per-level pass threshold `d_l eps t / h`.
    pub fn level_threshold(&self, t: f64) -> f64 {
        self.d_l * self.eps * t / self.h as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faithful_example_is_finite_and_consistent() {
        let p = compute_params(64, 1024.0, 0.25, Mode::Faithful, Relax::default()).unwrap();
        // Independent evaluation of the closed forms.
        let h = 11.0;
        let d_u = 8.0 * 64f64.ln();
        let d_l = 0.25 / 10.0;
        let gamma = 0.25 * d_l / (2.0 * h);
        let k = d_u * d_u / d_l;
        let eta = gamma / (100.0 * k * k);
        let r = (2.0 * 4096f64).ln() / (100.0 * eta * gamma);
        assert_eq!(p.h, 11);
        for (got, want) in [(p.d_u, d_u), (p.d_l, d_l), (p.gamma_gap, gamma), (p.k, k), (p.eta, eta), (p.rounds_formula, r)] {
            assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
        }
        let chi = gamma / (100.0 * r * k);
        let delta = 1.0 / (100.0 * r);
        let s = (h * d_u / (0.25 * d_l)).powi(2) * 64.0 / (delta * delta);
        assert!((p.chi / chi - 1.0).abs() < 1e-12);
        assert!((p.samples_formula / s - 1.0).abs() < 1e-12);
        for v in [p.d_l, p.d_u, p.d_t, p.gamma_gap, p.k, p.eta, p.chi, p.delta, p.samples_formula] {
            assert!(v.is_finite() && v > 0.0);
        }
        assert!(p.rounds >= 1);
    }

    #[test]
    fn faithful_inequalities_hold() {
        for &(n, phi, eps) in &[(8, 16.0, 0.1), (64, 1024.0, 0.25), (500, 65536.0, 0.45)] {
            let p = compute_params(n, phi, eps, Mode::Faithful, Relax::default()).unwrap();
            let h = p.h as f64;
            assert!(p.gamma_gap <= eps * p.d_l / (2.0 * h) * (1.0 + 1e-12));
            assert!(p.k >= p.d_u * p.d_t * (1.0 - 1e-12));
            assert!(p.eta <= p.gamma_gap / (100.0 * p.k * p.k) * (1.0 + 1e-12));
            let need = (2.0 * (n * n) as f64).ln() / (100.0 * p.eta * p.gamma_gap);
            assert!(p.rounds_formula >= need * (1.0 - 1e-12));
            assert!(p.chi * p.rounds_formula * p.k <= p.gamma_gap / 100.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rounds_do_not_grow_with_eps() {
        let mut last = f64::INFINITY;
        for k in 1..50 {
            let eps = k as f64 * 0.0099;
            let p = compute_params(64, 1024.0, eps, Mode::Faithful, Relax::default()).unwrap();
            assert!(p.rounds_formula <= last);
            last = p.rounds_formula;
        }
    }

    #[test]
    fn practical_mode_caps() {
        let relax = Relax { max_rounds: 50, max_samples: 1000, ..Relax::default() };
        let p = compute_params(32, 256.0, 0.25, Mode::Practical, relax).unwrap();
        assert_eq!(p.rounds, 50);
        assert_eq!(p.samples, 1000);
        assert!(p.chi * p.rounds as f64 * p.k <= p.gamma_gap / 100.0 * (1.0 + 1e-12));
        assert!(p.eta > 0.0 && p.eta.is_finite());
    }

    #[test]
    fn eps_out_of_range_is_input_error() {
        for eps in [0.0, 0.5, 0.7, f64::NAN] {
            let e = compute_params(8, 16.0, eps, Mode::Faithful, Relax::default()).unwrap_err();
            assert!(e.is_input());
        }
    }
}
