//! The acceptance suite: fourteen seeded checks of the pipeline's components
//! against exact oracles. Each check reports a pass flag and a one-line detail.

use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;

use crate::close_pairs::{brute_prefix_set, close_pairs_z, find_close_pairs, last_small_prefix, ClosePairsConfig};
use crate::cp::{BruteOracle, GridOracle};
use crate::error::{EmdError, Result};
use crate::exact::{assignment, exact_emd, exact_emd_supply, min_cost_flow, one_d_emd};
use crate::geometry::{l1, level_of_distance, PointSet, RoundingState, SupplyDemand};
use crate::instances::{random_points, separated_pair};
use crate::mwu::{
    approximate_emd_observed, certify_exact, check_constraints, mwu_run_observed, prepare_part, transport_lambda, ApproxConfig,
    CertifyOutcome, MwuOutcome, OracleSource, PreparedPart, RoundView,
};
use crate::sampler::estimate::estimate_weight_sum;
use crate::sampler::shatter::shatter_tau;
use crate::sampler::{
    arbitrary_sampler, draw_rounding_set, explicit_table, partition_rectangles, round_duals, shatter_check, DualState, RoundedDuals,
    SamplerConfig,
};
use crate::seed::{Rng, Seed};
use crate::stats::{chi_square_uniform_pvalue, log_log_slope, triple_counts, tv_to_table};
use crate::tree::{embed_and_perturb, sample_quadtree, tree_emd};

/// Identifier and short name of every criterion, in run order.
pub const CRITERIA: [(u32, &str); 14] = [
    (1, "one-d-emd-agreement"),
    (2, "tree-emd-identity"),
    (3, "perturbation-sandwich"),
    (4, "tree-distortion"),
    (5, "close-pairs-completeness"),
    (6, "last-small-prefix-bounds"),
    (7, "sampler-fidelity"),
    (8, "rectangle-partition"),
    (9, "normalization-estimator"),
    (10, "certify-correctness"),
    (11, "certificate-soundness"),
    (12, "end-to-end-accuracy"),
    (13, "shattering"),
    (14, "close-pairs-scaling"),
];

/// Criteria reported but never gating the suite.
pub const ADVISORY: [u32; 1] = [14];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub advisory: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    /// `PASS`/`FAIL` line for terminal output.
    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let tag = if self.advisory { " (advisory)" } else { "" };
        format!("{verdict}{tag} [{:>2}] {}: {} ({:.1}s)", self.id, self.name, self.detail, self.seconds)
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

/// Runs one criterion; an internal error is reported as a failure.
pub fn run_criterion(id: u32) -> Result<CriterionResult> {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).ok_or_else(|| EmdError::input(format!("no criterion {id}")))?;
    let start = Instant::now();
    let out = match id {
        1 => one_d_agreement(),
        2 => tree_identity(),
        3 => perturbation_sandwich(),
        4 => tree_distortion(),
        5 => close_pairs_completeness(),
        6 => prefix_bounds(),
        7 => sampler_fidelity(),
        8 => rectangle_partition(),
        9 => normalization_estimator(),
        10 => certify_correctness(),
        11 => certificate_soundness(),
        12 => end_to_end_accuracy(),
        13 => shattering(),
        _ => close_pairs_scaling(),
    };
    let v = out.unwrap_or_else(|e| Verdict { pass: false, detail: format!("error: {e}") });
    Ok(CriterionResult {
        id,
        name,
        pass: v.pass,
        advisory: ADVISORY.contains(&id),
        detail: v.detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `ids` in order, or every criterion when `ids` is empty.
pub fn run_selected(ids: &[u32]) -> Result<Vec<CriterionResult>> {
    if ids.is_empty() {
        return CRITERIA.iter().map(|c| run_criterion(c.0)).collect();
    }
    ids.iter().map(|&id| run_criterion(id)).collect()
}

/// Integer supply of length `n` with entries in `[lo, hi]` summing to zero.
fn balanced_supply(n: usize, lo: i64, hi: i64, rng: &mut Rng) -> Vec<i64> {
    let mut b: Vec<i64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    loop {
        let s: i64 = b.iter().sum();
        if s == 0 {
            return b;
        }
        let k = rng.random_range(0..n);
        if s > 0 && b[k] > lo {
            b[k] -= 1;
        } else if s < 0 && b[k] < hi {
            b[k] += 1;
        }
    }
}

fn one_d_agreement() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for s in 0..200u64 {
        let mut rng = Seed(s).child("one-d").rng();
        let n = rng.random_range(2..=32);
        let b = balanced_supply(n, -5, 5, &mut rng);
        let mut pos: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        pos.sort_by(f64::total_cmp);
        let fast = one_d_emd(&pos, &b)?;
        let slow = exact_emd_supply(&PointSet::new(1, pos)?, &SupplyDemand::new(b)?)?.cost;
        worst = worst.max((fast - slow).abs());
    }
    verdict(worst <= 1e-9, format!("200 instances, max |one_d - flow| = {worst:.2e}"))
}

fn tree_identity() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for s in 0..100u64 {
        let mut rng = Seed(s).child("tree-identity").rng();
        let n = rng.random_range(2..=16);
        let d = rng.random_range(1..=4);
        let points = random_points(n, d, 32, Seed(s).child("points"));
        let tree = sample_quadtree(&points, 32.0, Seed(s).child("tree"))?;
        let k = rng.random_range(1..n);
        // First k points carry supply, the rest demand.
        let mut b: Vec<i64> = (0..n).map(|i| if i < k { rng.random_range(0..=5) } else { -rng.random_range(0..=5) }).collect();
        loop {
            let sum: i64 = b.iter().sum();
            if sum == 0 {
                break;
            }
            let i = rng.random_range(0..n);
            if sum > 0 && ((i < k && b[i] > 0) || (i >= k && b[i] > -5)) {
                b[i] -= 1;
            } else if sum < 0 && ((i < k && b[i] < 5) || (i >= k && b[i] < 0)) {
                b[i] += 1;
            }
        }
        let mu: Vec<f64> = b[..k].iter().map(|&v| v as f64).collect();
        let nu: Vec<f64> = b[k..].iter().map(|&v| -v as f64).collect();
        let fast = tree_emd(&tree, &mu, &nu)?;
        let flow = min_cost_flow(&SupplyDemand::new(b)?, |i, j| tree.distance(i, j)).cost;
        worst = worst.max((fast - flow).abs());
    }
    verdict(worst <= 1e-9, format!("100 trees, max |tree_emd - flow| = {worst:.2e}"))
}

const EMBED_SEEDS: u64 = 50;
const EMBED_N: usize = 32;
const EMBED_EPS: f64 = 0.3;
const EMBED_PHI: f64 = 64.0;

struct EmbedTrial {
    emd_x: f64,
    emd_y: f64,
    /// `max d_T / ||y_i - y_j||` over distinct perturbed points.
    max_ratio: f64,
    min_ratio: f64,
}

fn embed_trial(s: u64) -> Result<EmbedTrial> {
    let x = random_points(EMBED_N, 4, EMBED_PHI as u32, Seed(s).child("embed-x"));
    let y = random_points(EMBED_N, 4, EMBED_PHI as u32, Seed(s).child("embed-y"));
    let all = x.concat(&y)?;
    let e = embed_and_perturb(&all, EMBED_PHI, EMBED_EPS, Seed(s).child("embed"))?;
    let first: Vec<usize> = (0..EMBED_N).collect();
    let second: Vec<usize> = (EMBED_N..2 * EMBED_N).collect();
    let emd_x = exact_emd(&x, &y)?;
    let emd_y = exact_emd(&e.y.select(&first), &e.y.select(&second))?;
    let (mut max_ratio, mut min_ratio) = (0.0f64, f64::INFINITY);
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            let d = l1(e.y.point(i), e.y.point(j));
            if d > 0.0 {
                let r = e.tree.distance(i, j) / d;
                max_ratio = max_ratio.max(r);
                min_ratio = min_ratio.min(r);
            }
        }
    }
    Ok(EmbedTrial { emd_x, emd_y, max_ratio, min_ratio })
}

fn perturbation_sandwich() -> Result<Verdict> {
    let trials: Vec<EmbedTrial> = (0..EMBED_SEEDS).map(embed_trial).collect::<Result<_>>()?;
    let lower = trials.iter().filter(|t| t.emd_y >= t.emd_x - 1e-9).count();
    let upper = trials.iter().filter(|t| t.emd_y <= (1.0 + EMBED_EPS) * t.emd_x).count();
    let worst = trials.iter().map(|t| t.emd_y / t.emd_x).fold(0.0, f64::max);
    verdict(
        lower == trials.len() && upper as f64 >= 0.8 * trials.len() as f64,
        format!("lower {lower}/{EMBED_SEEDS}, upper {upper}/{EMBED_SEEDS}, max EMD_Y/EMD_X = {worst:.4}"),
    )
}

fn tree_distortion() -> Result<Verdict> {
    let n = (2 * EMBED_N) as f64;
    let shape = n.ln() * EMBED_PHI.log2() / EMBED_EPS;
    let mut good = 0;
    let (mut kappa, mut kappa_low) = (0.0f64, 0.0f64);
    for s in 0..EMBED_SEEDS {
        let t = embed_trial(s)?;
        let k_up = t.max_ratio / shape;
        let k_low = EMBED_EPS / t.min_ratio;
        if k_up <= 64.0 && k_low <= 64.0 {
            good += 1;
            kappa = kappa.max(k_up);
            kappa_low = kappa_low.max(k_low);
        }
    }
    verdict(
        good as f64 >= 0.8 * EMBED_SEEDS as f64,
        format!("{good}/{EMBED_SEEDS} seeds in envelope, kappa = {kappa:.3}, kappa' = {kappa_low:.3}"),
    )
}

/// `x_0` within one level of 24 points of `Y`; every other pair is far.
fn planted_heavy(n: usize) -> Result<(PointSet, PointSet)> {
    let mut xr = vec![vec![500.0, 500.0, 0.0, 0.0]];
    let mut yr = Vec::new();
    for k in 0..24 {
        yr.push(vec![510.0 + 0.05 * (k % 6) as f64, 500.0 + 0.01 * (k / 6) as f64, 0.0, 0.0]);
    }
    for k in 24..n {
        yr.push(vec![5000.0 * k as f64, 1.0, 0.0, 0.0]);
    }
    for k in 1..n {
        xr.push(vec![5000.0 * k as f64, 9000.0, 0.0, 0.0]);
    }
    Ok((PointSet::from_rows(&xr)?, PointSet::from_rows(&yr)?))
}

fn close_pairs_completeness() -> Result<Verdict> {
    let eps = 0.25;
    let seeds = 50u64;
    let (mut sound, mut exact, mut planted, mut planted_exact) = (0, 0, 0, 0);
    for s in 0..seeds {
        let plant = s % 5 == 0;
        let (x, y, phi) = if plant {
            let (x, y) = planted_heavy(64)?;
            (x, y, 1e6)
        } else {
            let (x, y) = separated_pair(64, 4, 64, Seed(s).child("cp-instance"));
            (x, y, 256.0)
        };
        let r = find_close_pairs(&BruteOracle, &x, &y, phi, 0.5, eps, ClosePairsConfig::default(), Seed(s))?;
        let truth = brute_prefix_set(&x, &y, r.t, eps);
        if r.pairs.iter().all(|p| truth.binary_search(p).is_ok()) {
            sound += 1;
        }
        let hit = truth == r.pairs;
        exact += usize::from(hit);
        if plant {
            planted += 1;
            planted_exact += usize::from(hit);
        }
    }
    verdict(
        sound == seeds as usize && exact as f64 >= 0.9 * seeds as f64,
        format!("exact {exact}/{seeds} (planted {planted_exact}/{planted}), sound {sound}/{seeds}"),
    )
}

fn prefix_bounds() -> Result<Verdict> {
    let eps = 0.25;
    let n = 64;
    let phi = 256.0f64;
    let z = close_pairs_z(n, 0.5);
    let big = z * z / phi.log2().powi(3);
    let (mut both, mut first, mut second) = (0, 0, 0);
    let mut worst_prefix = 0usize;
    for s in 0..100u64 {
        let (x, y) = separated_pair(n, 4, 64, Seed(s).child("prefix-instance"));
        let t = last_small_prefix(&x, &y, z, phi, eps, Seed(s))?;
        let mut level = 0usize;
        for i in 0..n {
            for j in 0..n {
                level += usize::from(level_of_distance(l1(x.point(i), y.point(j)), eps) == t + 3);
            }
        }
        let prefix = brute_prefix_set(&x, &y, t + 2, eps).len();
        worst_prefix = worst_prefix.max(prefix);
        let a = level as f64 >= big;
        let b = prefix as f64 <= 0.1 * z * z;
        first += usize::from(a);
        second += usize::from(b);
        both += usize::from(a && b);
    }
    verdict(
        both >= 90,
        format!("both {both}/100 (|L_t+3| >= {big:.2}: {first}, |prefix_t+2| <= {:.1}: {second}, max prefix {worst_prefix})", 0.1 * z * z),
    )
}

fn sampler_rounding(n: usize, seed: Seed) -> Result<RoundingState> {
    let (x, y) = separated_pair(n, 3, 24, seed);
    let s = draw_rounding_set(n, 0.5, seed.child("S"));
    RoundingState::new(x, y, 0.25, s.pairs())
}

/// Half the `alpha` near 0 and half near `2^12`; `beta` split near 0 and 64.
fn two_scale_duals(n: usize, chi: f64, seed: Seed) -> Result<RoundedDuals> {
    let mut rng = seed.rng();
    let alpha = (0..n).map(|i| if i % 2 == 0 { 0 } else { 4096 } + rng.random_range(0..4)).collect();
    let beta = (0..n).map(|j| if j % 3 == 0 { 0 } else { 64 } + rng.random_range(0..4)).collect();
    round_duals(DualState::new(alpha, beta, chi)?)
}

fn sampler_fidelity() -> Result<Verdict> {
    let n = 16;
    let eta = 0.5;
    let cfg = SamplerConfig::new(eta, 128.0, 0.5);
    let count = 200_000;
    let r = sampler_rounding(n, Seed(7))?;
    let mut rng = Seed(8).rng();
    let random = round_duals(DualState::new(
        (0..n).map(|_| rng.random_range(-12..=12)).collect(),
        (0..n).map(|_| rng.random_range(-12..=12)).collect(),
        0.1,
    )?)?;
    let states = [("zero", round_duals(DualState::zeros(n, 0.1)?)?), ("random", random), ("two-scale", two_scale_duals(n, 0.1, Seed(9))?)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (label, duals)) in states.iter().enumerate() {
        let b = arbitrary_sampler(&r, duals, &BruteOracle, count, &cfg, Seed(10 + k as u64))?;
        let tv = tv_to_table(&b.triples, &explicit_table(&r, duals, eta)?);
        pass &= tv <= 0.03;
        parts.push(format!("{label} tv {tv:.4}"));
        if k == 0 {
            let p = chi_square_uniform_pvalue(&triple_counts(n, &b.triples));
            pass &= p >= 0.01;
            parts.push(format!("chi2 p {p:.3}"));
        }
    }
    verdict(pass, parts.join(", "))
}

fn rectangle_partition() -> Result<Verdict> {
    let mut worst_e = 0.0f64;
    let mut exact = 0;
    for s in 0..20u64 {
        let n = [16, 37, 64][(s % 3) as usize];
        let mut rng = Seed(s).child("rect-state").rng();
        let duals = match s % 4 {
            0 => {
                let range = [3, 20, 1000][(s % 3) as usize];
                round_duals(DualState::new(
                    (0..n).map(|_| rng.random_range(-range..=range)).collect(),
                    (0..n).map(|_| rng.random_range(-range..=range)).collect(),
                    0.25,
                )?)?
            }
            1 => two_scale_duals(n, 0.25, Seed(s))?,
            2 => round_duals(DualState::new(
                (0..n).map(|i| if i % 2 == 0 { 0 } else { 1000 }).collect(),
                (0..n).map(|j| if j % 3 == 0 { 0 } else { 40 }).collect(),
                0.25,
            )?)?,
            _ => round_duals(DualState::new((0..n as i64).collect(), vec![rng.random_range(0..n as i64); n], 0.25)?)?,
        };
        let part = partition_rectangles(&duals);
        let mut seen = vec![0u8; n * n];
        let mut constant = true;
        for &(i, j) in &part.e {
            seen[i * n + j] += 1;
        }
        for rect in &part.rects {
            for &i in &rect.rows {
                for &j in &rect.cols {
                    seen[i * n + j] += 1;
                    constant &= duals.class(i, j) == rect.class;
                }
            }
        }
        let ratio = part.e.len() as f64 / (8.0 * (n as f64).powf(1.75));
        worst_e = worst_e.max(ratio);
        if constant && seen.iter().all(|&c| c == 1) && ratio <= 1.0 {
            exact += 1;
        }
    }
    verdict(exact == 20, format!("{exact}/20 states exact and constant, max |E| / 8n^(7/4) = {worst_e:.3}"))
}

fn normalization_estimator() -> Result<Verdict> {
    let eps = 0.1;
    let items = 1000;
    let mut good = 0;
    for s in 0..200u64 {
        let mut rng = Seed(s).child("weights").rng();
        let w: Vec<f64> = match s % 5 {
            0 => vec![1.0; items],
            1 => (0..items).map(|k| 0.99f64.powi(k as i32)).collect(),
            2 => (0..items).map(|k| 0.9f64.powi(k as i32)).collect(),
            3 => {
                let ln = LogNormal::new(0.0, 2.0).expect("valid log-normal");
                (0..items).map(|_| ln.sample(&mut rng)).collect()
            }
            _ => (0..items).map(|k| if k < 10 { 1000.0 } else { 1.0 }).collect(),
        };
        let total: f64 = w.iter().sum();
        let mut cum = Vec::with_capacity(items);
        let mut acc = 0.0;
        for &x in &w {
            acc += x;
            cum.push(acc);
        }
        let draw = |r: &mut Rng| {
            let u = r.random::<f64>() * acc;
            let k = cum.partition_point(|&c| c <= u).min(items - 1);
            Ok((k as u64, w[k]))
        };
        let est = estimate_weight_sum(draw, items, eps, Seed(s))?;
        good += usize::from((est / total - 1.0).abs() <= eps);
    }
    verdict(good >= 190, format!("{good}/200 estimates within 1 +- {eps}"))
}

const CERTIFY_EPS: f64 = 0.25;

fn certify_part(n: usize, seed: u64) -> Result<PreparedPart> {
    let x = random_points(n, 4, 64, Seed(seed).child("certify-x"));
    let y = random_points(n, 4, 64, Seed(seed).child("certify-y"));
    prepare_part(&x, &y, 64.0, 1.0, &ApproxConfig::new(CERTIFY_EPS, 0.5), Seed(seed))
}

fn certify_correctness() -> Result<Verdict> {
    let n = 16;
    let (mut checked, mut held) = (0usize, 0usize);
    let (mut fails, mut sound_fails) = (0usize, 0usize);
    let mut worst_fail = 0.0f64;
    for seed in 0..4u64 {
        let p = certify_part(n, seed)?;
        let inst = &p.instance;
        let r = inst.rounding();
        let exact = exact_emd(r.x(), r.y())?;
        let emd_c = assignment(n, |i, j| r.cost(i, j)).1;
        let t0 = p.params.d_l * p.tree_emd;
        let grid: Vec<f64> = (0..).map(|k| t0 * (1.0 + CERTIFY_EPS).powi(k)).take_while(|&t| t <= 1.3 * emd_c.max(t0)).collect();
        let mut cfg = SamplerConfig::new(p.params.eta, 64.0, 0.5);
        cfg.stall_fallback = true;
        for (k, &t) in grid.iter().enumerate() {
            let mut source = OracleSource { oracle: &BruteOracle, config: cfg };
            let mut observe = |v: RoundView<'_>| {
                if let CertifyOutcome::Duals { alpha, beta, .. } = v.outcome {
                    if let Ok(table) = explicit_table(r, v.duals, v.eta_units) {
                        checked += 1;
                        held += usize::from(check_constraints(alpha, beta, inst.unit(), r, &table, t, &p.params).all());
                    }
                }
            };
            let rep = mwu_run_observed(inst, t, &p.params, &mut source, Seed(seed).derive(0xCE27, k as u64), &mut observe)?;
            if let MwuOutcome::Fail { .. } = rep.outcome {
                fails += 1;
                sound_fails += usize::from(exact <= (1.0 + 3.0 * CERTIFY_EPS) * t);
                worst_fail = worst_fail.max(exact / t);
            }
            if let Some(lam) = transport_lambda(r, t) {
                if certify_exact(&lam, t, &p.params, inst)?.is_fail() {
                    fails += 1;
                    sound_fails += usize::from(exact <= (1.0 + 3.0 * CERTIFY_EPS) * t);
                    worst_fail = worst_fail.max(exact / t);
                }
            }
        }
    }
    verdict(
        checked > 0 && held == checked && fails > 0 && sound_fails == fails,
        format!(
            "constraints {held}/{checked} rounds, fail soundness {sound_fails}/{fails} (max EMD/t {worst_fail:.3}, bound {:.3})",
            1.0 + 3.0 * CERTIFY_EPS
        ),
    )
}

const E2E_SEEDS: u64 = 50;
const E2E_EPS: f64 = 0.25;

struct EndToEnd {
    ratios: Vec<f64>,
    certificates: usize,
    verified: usize,
    bounded: usize,
    worst_excess: f64,
}

/// One pass over the end-to-end corpus, shared by the accuracy and
/// certificate-soundness criteria.
fn end_to_end() -> Result<&'static EndToEnd> {
    static CACHE: std::sync::OnceLock<std::result::Result<EndToEnd, String>> = std::sync::OnceLock::new();
    CACHE.get_or_init(|| end_to_end_uncached().map_err(|e| e.to_string())).as_ref().map_err(|e| EmdError::Internal(e.clone()))
}

fn end_to_end_uncached() -> Result<EndToEnd> {
    let cfg = ApproxConfig::new(E2E_EPS, 0.5);
    let mut out = EndToEnd { ratios: Vec::new(), certificates: 0, verified: 0, bounded: 0, worst_excess: f64::NEG_INFINITY };
    for s in 0..E2E_SEEDS {
        let x = random_points(32, 4, 100, Seed(1000 + s));
        let y = random_points(32, 4, 100, Seed(2000 + s));
        let exact = exact_emd(&x, &y)?;
        let mut part_err = None;
        let mut observe = |part: &PreparedPart, report: &crate::mwu::PartReport| {
            let r = part.instance.rounding();
            let part_exact = match exact_emd(r.x(), r.y()) {
                Ok(v) => v,
                Err(e) => {
                    part_err = Some(e);
                    return;
                }
            };
            for step in &report.steps {
                if let Some(v) = step.verification {
                    out.certificates += 1;
                    out.verified += usize::from(v.in_gamma);
                    out.bounded += usize::from(v.lower_bound <= part_exact + 1e-6);
                    out.worst_excess = out.worst_excess.max(v.lower_bound - part_exact);
                }
            }
        };
        let res = approximate_emd_observed(&x, &y, &cfg, &BruteOracle, Seed(s), &mut observe)?;
        if let Some(e) = part_err {
            return Err(e);
        }
        out.ratios.push(res.value / exact);
    }
    Ok(out)
}

fn certificate_soundness() -> Result<Verdict> {
    let e = end_to_end()?;
    verdict(
        e.certificates > 0 && e.verified == e.certificates && e.bounded == e.certificates,
        format!("{} certificates, verified {}, bounded {}, max (LB - EMD) = {:.3e}", e.certificates, e.verified, e.bounded, e.worst_excess),
    )
}

fn end_to_end_accuracy() -> Result<Verdict> {
    let e = end_to_end()?;
    let lo = 1.0 / (1.0 + 5.0 * E2E_EPS);
    let hi = 1.0 + 5.0 * E2E_EPS;
    let good = e.ratios.iter().filter(|r| (lo..=hi).contains(*r)).count();
    let min = e.ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = e.ratios.iter().copied().fold(0.0, f64::max);
    verdict(
        good as f64 >= 0.9 * E2E_SEEDS as f64,
        format!("{good}/{E2E_SEEDS} ratios in [{lo:.3}, {hi:.3}], observed [{min:.3}, {max:.3}]"),
    )
}

/// Fixed partitions of `[n] x [n]` into at most eight structured cells.
fn structured_partition(n: usize, k: usize) -> (Vec<usize>, usize) {
    let cells = 2 + k % 7;
    let label = |i: usize, j: usize| -> usize {
        match k % 5 {
            0 => i * cells / n,
            1 => j * cells / n,
            2 => (i + j) % cells,
            3 => ((i * 2 / n) * 2 + j * 2 / n) % cells,
            _ => usize::from(i == j || i + 1 == j || j + 1 == i) + 2 * usize::from(i < j),
        }
    };
    let labels: Vec<usize> = (0..n * n).map(|p| label(p / n, p % n)).collect();
    let used = labels.iter().copied().max().unwrap_or(0) + 1;
    (labels, used)
}

fn shattering() -> Result<Verdict> {
    let n = 64;
    let tau = shatter_tau(n, 0.5);
    let mut ok = 0;
    for k in 0..100usize {
        let (labels, cells) = structured_partition(n, k);
        let mut sizes = vec![0usize; cells];
        labels.iter().for_each(|&c| sizes[c] += 1);
        let s = draw_rounding_set(n, 0.5, Seed(k as u64).child("shatter"));
        ok += usize::from(shatter_check(&s, &sizes, |i, j| Some(labels[i * n + j]), tau));
    }
    verdict(ok >= 99, format!("{ok}/100 partitions shattered (tau = {tau})"))
}

fn close_pairs_scaling() -> Result<Verdict> {
    let sizes = [256usize, 512, 1024];
    let mut times = Vec::new();
    for &n in &sizes {
        let (x, y) = separated_pair(n, 8, 64, Seed(n as u64).child("scaling"));
        let start = Instant::now();
        find_close_pairs(&GridOracle::default(), &x, &y, 512.0, 0.5, 0.25, ClosePairsConfig::default(), Seed(1))?;
        times.push(start.elapsed().as_secs_f64());
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let slope = log_log_slope(&xs, &times);
    let shown: Vec<String> = sizes.iter().zip(&times).map(|(n, t)| format!("n={n} {t:.2}s")).collect();
    verdict(slope <= 1.9, format!("{}, fitted exponent {slope:.2}", shown.join(", ")))
}
