//! The certification oracle: from samples of `lambda`, either a tree-level
//! dual with a positive gap or `Fail`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use crate::cp::CpOracle;
use crate::error::{EmdError, Result};
use crate::exact::LambdaTable;
use crate::geometry::RoundingState;
use crate::sampler::{arbitrary_sampler, explicit_table, RoundedDuals, SamplerConfig, SamplerDiagnostics, Triple};
use crate::seed::Seed;
use crate::tree::QuadTree;

use super::params::{LevelRule, MwuParams};

/// A rounded instance together with the tree on its `2n` points (`X` first).
#[derive(Debug, Clone)]
pub struct MwuInstance {
    rounding: RoundingState,
    tree: QuadTree,
    /// `|X_v| - |Y_v|` per tree node.
    balance: Vec<i64>,
    /// `max 1 / C_ij` over pairs separated at level `l`, indexed by `l`.
    split_inv_cost: Vec<f64>,
}

impl MwuInstance {
    pub fn new(rounding: RoundingState, tree: QuadTree) -> Result<MwuInstance> {
        let n = rounding.n();
        if tree.len() != 2 * n {
            return Err(EmdError::input(format!("tree has {} points, instance needs {}", tree.len(), 2 * n)));
        }
        let mass: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let balance = tree.node_mass(&mass).into_iter().map(|m| m.round() as i64).collect();
        let h = tree.depth();
        let per_row = crate::par::map_range(n, |i| {
            let mut m = vec![0.0f64; h + 1];
            for j in 0..n {
                let s = tree.split_level(i, n + j);
                let inv = 1.0 / rounding.cost(i, j);
                for v in m.iter_mut().skip(s + 1) {
                    *v = v.max(inv);
                }
            }
            m
        });
        let mut split_inv_cost = vec![0.0f64; h + 1];
        for row in per_row {
            for (a, b) in split_inv_cost.iter_mut().zip(row) {
                *a = a.max(b);
            }
        }
        Ok(MwuInstance { rounding, tree, balance, split_inv_cost })
    }

    pub fn rounding(&self) -> &RoundingState {
        &self.rounding
    }

    pub fn tree(&self) -> &QuadTree {
        &self.tree
    }

    pub fn n(&self) -> usize {
        self.rounding.n()
    }

    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    /// Physical value of one integer dual unit: the lightest edge weight.
    pub fn unit(&self) -> f64 {
        self.tree.edge_weight(self.depth() - 1)
    }

    /// Weight `phi / 2^(l-1)` of the edge above a level-`l` node.
    pub fn level_weight(&self, level: usize) -> f64 {
        self.tree.edge_weight(level - 1)
    }

    /// Level weight in integer units, `2^(h - l)`.
    pub fn level_units(&self, level: usize) -> i64 {
        1i64 << (self.depth() - level)
    }
}

/// Produces triples from `lambda(eta, C, D, P)` for the current rounded duals.
pub trait LambdaSource {
    /// `eta` is already scaled to integer dual units.
    fn draw(&mut self, inst: &MwuInstance, duals: &RoundedDuals, eta: f64, count: usize, seed: Seed) -> Result<Drawn>;
}

#[derive(Debug, Clone, Default)]
pub struct Drawn {
    pub triples: Vec<Triple>,
    /// Rejected proposals, zero for exact enumeration.
    pub rejections: u64,
    pub diagnostics: Option<SamplerDiagnostics>,
}

/// Enumerates `lambda` explicitly; desk-scale reference path.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExplicitSource;

impl LambdaSource for ExplicitSource {
    fn draw(&mut self, inst: &MwuInstance, duals: &RoundedDuals, eta: f64, count: usize, seed: Seed) -> Result<Drawn> {
        let table = explicit_table(inst.rounding(), duals, eta)?;
        Ok(Drawn { triples: draw_from_table(&table, count, seed)?, ..Drawn::default() })
    }
}

/// I.i.d. draws from an explicit table.
pub fn draw_from_table(table: &LambdaTable, count: usize, seed: Seed) -> Result<Vec<Triple>> {
    let dist = WeightedIndex::new(&table.probs).map_err(|e| EmdError::Internal(format!("explicit lambda: {e}")))?;
    let mut rng = seed.rng();
    Ok((0..count)
        .map(|_| {
            let k = dist.sample(&mut rng);
            let (pair, neg) = (k / 2, k % 2 == 1);
            Triple { i: pair / table.n, j: pair % table.n, sigma: if neg { -1 } else { 1 } }
        })
        .collect())
}

/// Rejection sampler through closest-pair queries.
pub struct OracleSource<'a> {
    pub oracle: &'a dyn CpOracle,
    /// Template; its `eta` is overwritten per call.
    pub config: SamplerConfig,
}

impl LambdaSource for OracleSource<'_> {
    fn draw(&mut self, inst: &MwuInstance, duals: &RoundedDuals, eta: f64, count: usize, seed: Seed) -> Result<Drawn> {
        let mut cfg = self.config;
        cfg.eta = eta;
        let batch = arbitrary_sampler(inst.rounding(), duals, self.oracle, count, &cfg, seed)?;
        let st = batch.diagnostics.stats;
        Ok(Drawn { triples: batch.triples, rejections: st.attempts.saturating_sub(st.samples), diagnostics: Some(batch.diagnostics) })
    }
}

/// Per-level estimate of `sum_v (phi / 2^(l-1)) |Q_v|`, index 0 unused.
#[derive(Debug, Clone, Serialize)]
pub struct LevelScan {
    pub values: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub enum CertifyOutcome {
    Duals {
        /// Integer units, see [`MwuInstance::unit`].
        alpha: Vec<i64>,
        beta: Vec<i64>,
        level: usize,
        /// Estimated `v - E_lambda[sigma (alpha_i - beta_j) / C_ij]`.
        gap_estimate: f64,
        scan: LevelScan,
    },
    Fail {
        scan: LevelScan,
    },
}

impl CertifyOutcome {
    pub fn is_fail(&self) -> bool {
        matches!(self, CertifyOutcome::Fail { .. })
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(EmdError::input(format!("threshold t = {t} must be positive")));
    }
    Ok(())
}

/// Estimates `Q_v` for every node from `samples` and scans levels `1..=h`.
pub fn certify_from_samples(samples: &[Triple], t: f64, params: &MwuParams, inst: &MwuInstance) -> Result<CertifyOutcome> {
    if samples.is_empty() {
        return Err(EmdError::input("certify needs at least one sample"));
    }
    check_t(t)?;
    let n = inst.n();
    let h = inst.depth();
    let tree = inst.tree();
    let rounding = inst.rounding();
    let mut z = vec![0.0f64; tree.nodes().len()];
    for s in samples {
        let (xi, yj) = (s.i, n + s.j);
        let split = tree.split_level(xi, yj);
        let val = f64::from(s.sigma) / rounding.cost(s.i, s.j);
        for l in split + 1..=h {
            z[tree.ancestor(xi, l) as usize] += val;
            z[tree.ancestor(yj, l) as usize] -= val;
        }
    }
    Ok(scan_levels(&z, t / samples.len() as f64, t, params, inst))
}

/// Quadratic-time variant reading `Q_v` off an explicit `lambda`.
pub fn certify_exact(table: &LambdaTable, t: f64, params: &MwuParams, inst: &MwuInstance) -> Result<CertifyOutcome> {
    check_t(t)?;
    let n = inst.n();
    if table.n != n {
        return Err(EmdError::input(format!("lambda over {} points, instance has {n}", table.n)));
    }
    let h = inst.depth();
    let tree = inst.tree();
    let rounding = inst.rounding();
    let mut z = vec![0.0f64; tree.nodes().len()];
    for i in 0..n {
        for j in 0..n {
            let val = (table.prob(i, j, 1) - table.prob(i, j, -1)) / rounding.cost(i, j);
            if val == 0.0 {
                continue;
            }
            for l in tree.split_level(i, n + j) + 1..=h {
                z[tree.ancestor(i, l) as usize] += val;
                z[tree.ancestor(n + j, l) as usize] -= val;
            }
        }
    }
    Ok(scan_levels(&z, t, t, params, inst))
}

/// `Q_v = w_l (|X_v| - |Y_v| - scale z_v)`; picks a passing level by the
/// configured rule and votes `alpha_i = beta_j = w_l sign(Q_v)` inside each node.
fn scan_levels(z: &[f64], scale: f64, t: f64, params: &MwuParams, inst: &MwuInstance) -> CertifyOutcome {
    let n = inst.n();
    let h = inst.depth();
    let tree = inst.tree();
    let q: Vec<f64> = inst.balance.iter().zip(z).map(|(&b, &zv)| b as f64 - scale * zv).collect();
    let mut values = vec![0.0; h + 1];
    for (v, node) in tree.nodes().iter().enumerate().skip(1) {
        let l = node.level as usize;
        values[l] += inst.level_weight(l) * q[v].abs();
    }
    let threshold = params.level_threshold(t);
    let scan = LevelScan { values, threshold };
    let passing = (1..=h).filter(|&l| scan.values[l] >= threshold);
    let level = match params.level_rule {
        LevelRule::First => passing.min(),
        LevelRule::BestRatio => passing
            .map(|l| {
                let width = 2.0 * inst.level_weight(l) * inst.split_inv_cost[l];
                (l, if width > 0.0 { scan.values[l] / width } else { 0.0 })
            })
            .fold(None, |best: Option<(usize, f64)>, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            })
            .map(|b| b.0),
    };
    let Some(level) = level else {
        return CertifyOutcome::Fail { scan };
    };
    let units = inst.level_units(level);
    let sign_of = |p: usize| if q[tree.ancestor(p, level) as usize] >= 0.0 { units } else { -units };
    let alpha = (0..n).map(sign_of).collect();
    let beta = (0..n).map(|j| sign_of(n + j)).collect();
    let gap_estimate = scan.values[level] / t;
    CertifyOutcome::Duals { alpha, beta, level, gap_estimate, scan }
}

/// Draws `params.samples` triples and runs [`certify_from_samples`].
pub fn certify(
    source: &mut dyn LambdaSource,
    duals: &RoundedDuals,
    t: f64,
    params: &MwuParams,
    inst: &MwuInstance,
    seed: Seed,
) -> Result<(CertifyOutcome, Drawn)> {
    let count = usize::try_from(params.samples).unwrap_or(usize::MAX);
    let drawn = source.draw(inst, duals, params.eta * inst.unit(), count, seed)?;
    let out = certify_from_samples(&drawn.triples, t, params, inst)?;
    Ok((out, drawn))
}

/// The three output constraints evaluated against an explicit `lambda`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstraintCheck {
    /// `E_lambda[sigma (alpha_i - beta_j) / C_ij]`.
    pub special: f64,
    pub v: f64,
    /// `max |alpha_i - beta_j| / C_ij`.
    pub width: f64,
    pub special_ok: bool,
    pub width_ok: bool,
    pub v_ok: bool,
}

impl ConstraintCheck {
    pub fn all(&self) -> bool {
        self.special_ok && self.width_ok && self.v_ok
    }
}

/// Evaluates the certify constraints for physical duals `unit * (alpha, beta)`.
pub fn check_constraints(
    alpha: &[i64],
    beta: &[i64],
    unit: f64,
    rounding: &RoundingState,
    table: &LambdaTable,
    t: f64,
    params: &MwuParams,
) -> ConstraintCheck {
    let n = rounding.n();
    let mut special = 0.0;
    let mut width = 0.0f64;
    for (i, &a) in alpha.iter().enumerate().take(n) {
        for (j, &b) in beta.iter().enumerate().take(n) {
            let diff = unit * (a - b) as f64;
            let c = rounding.cost(i, j);
            special += (table.prob(i, j, 1) - table.prob(i, j, -1)) * diff / c;
            width = width.max(diff.abs() / c);
        }
    }
    let net: i64 = alpha.iter().sum::<i64>() - beta.iter().sum::<i64>();
    let v = unit * net as f64 / t;
    let tol = 1e-12 * (1.0 + v.abs());
    ConstraintCheck {
        special,
        v,
        width,
        special_ok: special <= v - params.gamma_gap + tol,
        width_ok: width <= params.k,
        v_ok: v.abs() <= params.k,
    }
}

/// `lambda_{i, pi(i), +} = C_{i pi(i)} / t` along an optimal assignment `pi`
/// under `C`, leftover mass split evenly over both signs of pair `(0, 0)`.
/// Then `mu = nu = 1` exactly. `None` when `t < EMD_C`.
pub fn transport_lambda(rounding: &RoundingState, t: f64) -> Option<LambdaTable> {
    let n = rounding.n();
    let (pi, cost) = crate::exact::assignment(n, |i, j| rounding.cost(i, j));
    if !(t >= cost) {
        return None;
    }
    let mut probs = vec![0.0; 2 * n * n];
    for (i, &j) in pi.iter().enumerate() {
        probs[crate::exact::triple_index(n, i, j, 1)] = rounding.cost(i, j) / t;
    }
    let rest = (1.0 - cost / t).max(0.0) / 2.0;
    probs[crate::exact::triple_index(n, 0, 0, 1)] += rest;
    probs[crate::exact::triple_index(n, 0, 0, -1)] += rest;
    Some(LambdaTable { n, probs, log_total: 0.0 })
}
