//! End-to-end estimate: reduce, embed, round, then search `t_k = t0 (1+eps)^k`
//! for the first threshold the round loop does not certify.

use serde::{Deserialize, Serialize};

use crate::aspect::reduce_aspect_ratio;
use crate::close_pairs::ClosePairsConfig;
use crate::cp::CpOracle;
use crate::error::{EmdError, Result};
use crate::geometry::{dedup_and_cancel, PointSet, RoundingState, SupplyDemand};
use crate::sampler::{draw_rounding_set, SamplerConfig, WeightSumMode};
use crate::seed::Seed;
use crate::tree::{embed_and_perturb, greedy_tree_bound};

use super::certify::{ExplicitSource, LambdaSource, MwuInstance, OracleSource};
use super::params::{compute_params, Mode, MwuParams, Relax};
use super::solver::{mwu_run, verify_certificate, Certificate, MwuOutcome, Verification};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// Rejection sampling through the closest-pair oracle.
    #[default]
    Sampler,
    /// Explicit enumeration of `lambda`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub eps: f64,
    pub phi_exp: f64,
    pub mode: Mode,
    pub relax: Relax,
    pub source: SourceKind,
    pub close: ClosePairsConfig,
    pub complement: WeightSumMode,
    pub volumes: WeightSumMode,
}

impl ApproxConfig {
    pub fn new(eps: f64, phi_exp: f64) -> ApproxConfig {
        ApproxConfig {
            eps,
            phi_exp,
            mode: Mode::Practical,
            relax: Relax::default(),
            source: SourceKind::Sampler,
            close: ClosePairsConfig::default(),
            complement: WeightSumMode::Exact,
            volumes: WeightSumMode::Exact,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchStep {
    pub k: u32,
    pub t: f64,
    pub outcome: &'static str,
    pub rounds: u64,
    pub verification: Option<Verification>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartReport {
    pub n: usize,
    pub phi: f64,
    pub scale: f64,
    pub tree_emd: f64,
    pub t0: f64,
    pub top: f64,
    /// Estimate in the part's reduced coordinates.
    pub estimate: f64,
    /// Whether some threshold below `top` was not certified.
    pub bracketed: bool,
    pub params: MwuParams,
    pub steps: Vec<SearchStep>,
    /// Largest verified lower bound, reduced coordinates.
    pub best_lower_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproxResult {
    pub value: f64,
    pub parts: Vec<PartReport>,
}

/// A single part prepared for the search.
pub struct PreparedPart {
    pub instance: MwuInstance,
    pub params: MwuParams,
    pub tree_emd: f64,
    pub phi: f64,
    pub scale: f64,
}

/// Embeds and perturbs `x ∪ y` (aspect ratio `phi`), draws the rounding set
/// and fixes `C` on the perturbed points.
pub fn prepare_part(x: &PointSet, y: &PointSet, phi: f64, scale: f64, cfg: &ApproxConfig, seed: Seed) -> Result<PreparedPart> {
    let n = x.len();
    if y.len() != n || n == 0 {
        return Err(EmdError::input(format!("part needs |X| = |Y| > 0, got {} and {}", n, y.len())));
    }
    let pert = embed_and_perturb(&x.concat(y)?, phi, cfg.eps, seed.child("embed"))?;
    let px = pert.y.select(&(0..n).collect::<Vec<_>>());
    let py = pert.y.select(&(n..2 * n).collect::<Vec<_>>());
    let s = draw_rounding_set(n, cfg.phi_exp, seed.child("rounding-set"));
    let rounding = RoundingState::new(px, py, cfg.eps, s.pairs())?;
    let tree_emd = greedy_tree_bound(&pert.tree, n)?;
    let params = compute_params(n, phi, cfg.eps, cfg.mode, cfg.relax)?;
    Ok(PreparedPart { instance: MwuInstance::new(rounding, pert.tree)?, params, tree_emd, phi, scale })
}

/// Scans `t_k = t0 (1+eps)^k`, `t0 = d_l EMD_T`, up to `d_T t0 = d_u EMD_T`.
pub fn search_part(part: &PreparedPart, source: &mut dyn LambdaSource, seed: Seed) -> Result<PartReport> {
    let p = &part.params;
    let t0 = p.d_l * part.tree_emd;
    let top = p.d_t * t0;
    let mut steps = Vec::new();
    let mut estimate = top;
    let mut bracketed = false;
    let mut best_lower_bound = 0.0f64;
    for k in 0u32.. {
        let t = t0 * (1.0 + p.eps).powi(k as i32);
        if t > top * (1.0 + 1e-12) {
            break;
        }
        let rep = mwu_run(&part.instance, t, p, source, seed.derive(0x5EA2, u64::from(k)))?;
        let rounds = rep.rounds.len() as u64;
        let (outcome, verification) = match &rep.outcome {
            MwuOutcome::Certificate(c) => ("certificate", Some(verify(c, part.instance.rounding()))),
            MwuOutcome::Fail { .. } => ("fail", None),
            MwuOutcome::Exhausted { .. } => ("exhausted", None),
        };
        log::debug!("search k={k} t={t:.6} outcome={outcome} rounds={rounds}");
        let certified = verification.is_some_and(|v| v.in_gamma);
        if let Some(v) = verification {
            best_lower_bound = best_lower_bound.max(v.lower_bound);
        }
        steps.push(SearchStep { k, t, outcome, rounds, verification });
        if !certified {
            estimate = t;
            bracketed = true;
            break;
        }
    }
    Ok(PartReport {
        n: part.instance.n(),
        phi: part.phi,
        scale: part.scale,
        tree_emd: part.tree_emd,
        t0,
        top,
        estimate,
        bracketed,
        params: p.clone(),
        steps,
        best_lower_bound,
    })
}

fn verify(c: &Certificate, rounding: &RoundingState) -> Verification {
    verify_certificate(c, rounding)
}

/// Full pipeline; returns the estimate in the input's coordinates.
pub fn approximate_emd(x: &PointSet, y: &PointSet, cfg: &ApproxConfig, oracle: &dyn CpOracle, seed: Seed) -> Result<ApproxResult> {
    approximate_emd_observed(x, y, cfg, oracle, seed, &mut |_, _| {})
}

/// [`approximate_emd`] calling `observe` with every prepared part and its report.
pub fn approximate_emd_observed(
    x: &PointSet,
    y: &PointSet,
    cfg: &ApproxConfig,
    oracle: &dyn CpOracle,
    seed: Seed,
    observe: &mut dyn FnMut(&PreparedPart, &PartReport),
) -> Result<ApproxResult> {
    if x.len() != y.len() {
        return Err(EmdError::input(format!("|X| = {} differs from |Y| = {}", x.len(), y.len())));
    }
    if x.dim() != y.dim() && !x.is_empty() && !y.is_empty() {
        return Err(EmdError::input("X and Y have different dimensions"));
    }
    if !(cfg.phi_exp > 0.0 && cfg.phi_exp < 1.0) {
        return Err(EmdError::input(format!("phi_exp = {} outside (0, 1)", cfg.phi_exp)));
    }
    let (x, y) = dedup_and_cancel(x, y);
    if x.is_empty() {
        return Ok(ApproxResult { value: 0.0, parts: Vec::new() });
    }
    let all = x.concat(&y)?;
    let b = SupplyDemand::matching(x.len(), y.len())?;
    let reduced = reduce_aspect_ratio(&all, &b, cfg.eps, seed.child("reduce"))?;
    let mut parts = Vec::with_capacity(reduced.parts.len());
    let mut value = 0.0;
    for (k, rp) in reduced.parts.iter().enumerate() {
        let (px, py) = rp.split_xy();
        let part_seed = seed.derive(0xBA27, k as u64);
        let prepared = prepare_part(&px, &py, rp.phi, rp.scale, cfg, part_seed)?;
        let report = match cfg.source {
            SourceKind::Explicit => search_part(&prepared, &mut ExplicitSource, part_seed.child("search"))?,
            SourceKind::Sampler => {
                let mut sc = SamplerConfig::new(prepared.params.eta, rp.phi, cfg.phi_exp);
                sc.close = cfg.close;
                sc.complement = cfg.complement;
                sc.volumes = cfg.volumes;
                sc.stall_fallback = cfg.mode == Mode::Practical;
                let mut src = OracleSource { oracle, config: sc };
                search_part(&prepared, &mut src, part_seed.child("search"))?
            }
        };
        observe(&prepared, &report);
        value += report.estimate / rp.scale;
        parts.push(report);
    }
    Ok(ApproxResult { value, parts })
}
