//! The multiplicative-weights round loop and exact certificate verification.

use serde::Serialize;

use crate::error::Result;
use crate::geometry::RoundingState;
use crate::sampler::{round_duals, DualState, RoundedDuals};
use crate::seed::Seed;

use super::certify::{certify, CertifyOutcome, LambdaSource, MwuInstance};
use super::params::{Mode, MwuParams};

/// Duals `scale * (alpha, beta)` claimed to lie in `Gamma_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub alpha: Vec<i64>,
    pub beta: Vec<i64>,
    pub scale: f64,
    pub t: f64,
}

impl Certificate {
    pub fn physical(&self) -> (Vec<f64>, Vec<f64>) {
        let f = |v: &[i64]| v.iter().map(|&a| a as f64 * self.scale).collect();
        (f(&self.alpha), f(&self.beta))
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MwuOutcome {
    Certificate(Certificate),
    /// Certify failed in round `round`.
    Fail {
        round: u64,
    },
    /// Practical mode ran out of rounds without an exact certificate.
    Exhausted {
        rounds: u64,
    },
}

impl MwuOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            MwuOutcome::Certificate(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub t: f64,
    pub level: Option<usize>,
    pub gap_estimate: Option<f64>,
    pub samples: usize,
    pub rejections: u64,
    /// Exact `Gamma_t` margin of the running duals (practical mode).
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MwuReport {
    pub outcome: MwuOutcome,
    pub rounds: Vec<RoundRecord>,
    /// Learning rate in force after round 1.
    pub eta: f64,
}

/// `max |alpha_i - beta_j| / C_ij` for duals `unit * (alpha, beta)`.
pub fn dual_width(alpha: &[i64], beta: &[i64], unit: f64, rounding: &RoundingState) -> f64 {
    let n = rounding.n();
    unit * crate::par::map_range(n, |i| {
        (0..n).map(|j| (alpha[i] - beta[j]).unsigned_abs() as f64 / rounding.cost(i, j)).fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// `(1/t)(sum alpha - sum beta) - max |alpha_i - beta_j| / C_ij` for duals
/// `unit * (alpha, beta)`.
pub fn gamma_margin(alpha: &[i64], beta: &[i64], unit: f64, rounding: &RoundingState, t: f64) -> f64 {
    let net = (alpha.iter().sum::<i64>() - beta.iter().sum::<i64>()) as f64;
    unit * net / t - dual_width(alpha, beta, unit, rounding)
}

/// Runs the round loop at threshold `t`. Round `r` samples from
/// `lambda(eta, C, D^r, P^r)`, certifies and adds the result to the running duals.
///
/// In practical mode `eta` is reset after round 1 (where `lambda` is uniform
/// for every `eta`) to `eta_scale sqrt(ln(2n^2) / R) / w`, with `w` the exact
/// width of the round-1 duals.
pub fn mwu_run(inst: &MwuInstance, t: f64, params: &MwuParams, source: &mut dyn LambdaSource, seed: Seed) -> Result<MwuReport> {
    mwu_run_observed(inst, t, params, source, seed, &mut |_| {})
}

/// What a round saw: the duals `lambda` was built from, the learning rate in
/// dual units and the certify outcome.
pub struct RoundView<'a> {
    pub round: u64,
    pub duals: &'a RoundedDuals,
    pub eta_units: f64,
    pub outcome: &'a CertifyOutcome,
}

/// [`mwu_run`] calling `observe` after every certify call.
pub fn mwu_run_observed(
    inst: &MwuInstance,
    t: f64,
    params: &MwuParams,
    source: &mut dyn LambdaSource,
    seed: Seed,
    observe: &mut dyn FnMut(RoundView<'_>),
) -> Result<MwuReport> {
    let n = inst.n();
    let mut alpha = vec![0i64; n];
    let mut beta = vec![0i64; n];
    let mut records = Vec::new();
    let practical = params.mode == Mode::Practical;
    // Faithful: R - 1 certify calls, output divided by R.
    let calls = if practical { params.rounds } else { params.rounds.saturating_sub(1) };
    let mut run = params.clone();
    for round in 1..=calls {
        let duals = round_duals(DualState::new(alpha.clone(), beta.clone(), run.chi)?)?;
        let (out, drawn) = certify(source, &duals, t, &run, inst, seed.derive(0x3A7E, round))?;
        observe(RoundView { round, duals: &duals, eta_units: run.eta * inst.unit(), outcome: &out });
        let mut rec = RoundRecord {
            round,
            t,
            level: None,
            gap_estimate: None,
            samples: drawn.triples.len(),
            rejections: drawn.rejections,
            margin: None,
        };
        match out {
            CertifyOutcome::Fail { .. } => {
                log::debug!("mwu round={round} t={t:.6} outcome=fail samples={} rejections={}", rec.samples, rec.rejections);
                records.push(rec);
                return Ok(MwuReport { outcome: MwuOutcome::Fail { round }, rounds: records, eta: run.eta });
            }
            CertifyOutcome::Duals { alpha: a, beta: b, level, gap_estimate, .. } => {
                alpha.iter_mut().zip(&a).for_each(|(x, d)| *x += d);
                beta.iter_mut().zip(&b).for_each(|(x, d)| *x += d);
                rec.level = Some(level);
                rec.gap_estimate = Some(gap_estimate);
                if practical && round == 1 {
                    let w = dual_width(&a, &b, inst.unit(), inst.rounding());
                    if w > 0.0 {
                        let scale = params.relax.map_or(1.0, |r| r.eta_scale);
                        run.eta = scale * ((2.0 * (n * n) as f64).ln() / params.rounds as f64).sqrt() / w;
                    }
                }
            }
        }
        if practical {
            let margin = gamma_margin(&alpha, &beta, inst.unit(), inst.rounding(), t);
            rec.margin = Some(margin);
            log::debug!(
                "mwu round={round} t={t:.6} level={:?} gap={:.3e} samples={} rejections={} margin={margin:.3e}",
                rec.level,
                rec.gap_estimate.unwrap_or(0.0),
                rec.samples,
                rec.rejections
            );
            records.push(rec);
            if margin > 0.0 {
                let cert = Certificate { alpha, beta, scale: inst.unit() / round as f64, t };
                return Ok(MwuReport { outcome: MwuOutcome::Certificate(cert), rounds: records, eta: run.eta });
            }
        } else {
            records.push(rec);
        }
    }
    if practical {
        return Ok(MwuReport { outcome: MwuOutcome::Exhausted { rounds: calls }, rounds: records, eta: run.eta });
    }
    let cert = Certificate { alpha, beta, scale: inst.unit() / params.rounds as f64, t };
    Ok(MwuReport { outcome: MwuOutcome::Certificate(cert), rounds: records, eta: run.eta })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Verification {
    /// Strict `Gamma_t` membership over all `2n^2` constraints.
    pub in_gamma: bool,
    pub margin: f64,
    /// `(sum alpha' - sum beta')` for the duals rescaled to be 1-Lipschitz
    /// in the true distances; a lower bound on EMD.
    pub lower_bound: f64,
}

/// Exact check of `cert` against the rounded costs and true distances.
pub fn verify_certificate(cert: &Certificate, rounding: &RoundingState) -> Verification {
    let n = rounding.n();
    let margin = if cert.t > 0.0 { gamma_margin(&cert.alpha, &cert.beta, cert.scale, rounding, cert.t) } else { f64::NEG_INFINITY };
    let lip = crate::par::map_range(n, |i| {
        (0..n).map(|j| (cert.alpha[i] - cert.beta[j]).unsigned_abs() as f64 / rounding.distance(i, j)).fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    let net = (cert.alpha.iter().sum::<i64>() - cert.beta.iter().sum::<i64>()) as f64;
    let lower_bound = if lip > 0.0 { (net / lip).max(0.0) } else { 0.0 };
    Verification { in_gamma: margin > 0.0, margin, lower_bound }
}
