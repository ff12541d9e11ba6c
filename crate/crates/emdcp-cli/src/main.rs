//! `emdcp`: exact and approximate Earth Mover's Distance from the command line.
//!
//! Every command prints one JSON report
//! `{schema, command, config, result, diagnostics, timings}` to stdout (or
//! `--out`). Exit codes: 0 ok, 2 input error, 3 run error, 4 self-test failure.

mod io;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use emdcp::aspect::reduce_aspect_ratio;
use emdcp::close_pairs::{brute_prefix_set, find_close_pairs, ClosePairsConfig};
use emdcp::cp::{CpOracle, OracleKind};
use emdcp::exact::{exact_emd, exact_emd_supply};
use emdcp::geometry::{dedup_and_cancel, l1};
use emdcp::instances::random_points;
use emdcp::mwu::{approximate_emd, compute_params, ApproxConfig, Mode, MwuParams, Relax};
use emdcp::sampler::{arbitrary_sampler, draw_rounding_set, explicit_table, round_duals, DualState, SamplerConfig};
use emdcp::selftest::run_selected;
use emdcp::stats::{chi_square_uniform_pvalue, log_log_slope, triple_counts, tv_to_table};
use emdcp::tree::{embed_and_perturb, greedy_tree_bound};
use emdcp::{EmdError, PointSet, RoundingState, Seed, SupplyDemand};

/// Schema version of the JSON report.
const SCHEMA: u32 = 1;
/// Largest `n` for which reports include an exact reference value.
const EXACT_LIMIT: usize = 256;
/// Largest `n` for which `sample` compares against the explicit distribution.
const EXPLICIT_LIMIT: usize = 64;
/// Faithful-mode round counts above this are refused by `approx`.
const FAITHFUL_ROUND_LIMIT: u64 = 100_000;

#[derive(Parser, Debug)]
#[command(name = "emdcp", version, about = "Exact and approximate Earth Mover's Distance in l1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Opts {
    /// Accuracy parameter, in (0, 0.5).
    #[arg(long, global = true, default_value_t = 0.25)]
    eps: f64,
    /// Closest-pair exponent phi, in (0, 1).
    #[arg(long = "phi", global = true, default_value_t = 0.5)]
    phi_exp: f64,
    /// Master seed; every random choice is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Practical)]
    mode: ModeArg,
    #[arg(long, global = true, value_enum, default_value_t = OracleArg::Brute)]
    oracle: OracleArg,
    /// Point file for X (or for the support of --b).
    #[arg(long, global = true)]
    x: Option<PathBuf>,
    /// Point file for Y.
    #[arg(long, global = true)]
    y: Option<PathBuf>,
    /// Supply file, one integer per point of --x.
    #[arg(long, global = true)]
    b: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Repetitions: samples for `sample`, seeds for `bench`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Divide the closed-form round and sample counts by R before the caps.
    #[arg(long, global = true)]
    relax: Option<f64>,
    /// Record wall-clock timings (reports are then no longer byte-identical).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Faithful,
    Practical,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Faithful => Mode::Faithful,
            ModeArg::Practical => Mode::Practical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OracleArg {
    Brute,
    Grid,
}

impl From<OracleArg> for OracleKind {
    fn from(o: OracleArg) -> OracleKind {
        match o {
            OracleArg::Brute => OracleKind::Brute,
            OracleArg::Grid => OracleKind::Grid,
        }
    }
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
enum Command {
    /// Exact EMD by min-cost matching (--x --y) or min-cost flow (--x --b).
    Exact,
    /// Quadtree embedding estimate with distortion statistics.
    Tree,
    /// Full approximation pipeline.
    Approx,
    /// Prefix set retrieval through subsampled closest-pair queries.
    Closepairs,
    /// Samples from the MWU distribution for given duals.
    Sample(SampleArgs),
    /// Accuracy and runtime table over seeded random instances.
    Bench(BenchArgs),
    /// Runs the acceptance suite.
    Selftest(SelftestArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Exact => "exact",
            Command::Tree => "tree",
            Command::Approx => "approx",
            Command::Closepairs => "closepairs",
            Command::Sample(_) => "sample",
            Command::Bench(_) => "bench",
            Command::Selftest(_) => "selftest",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct SampleArgs {
    /// Integer dual file for alpha (default all zero).
    #[arg(long)]
    alpha: Option<PathBuf>,
    /// Integer dual file for beta (default all zero).
    #[arg(long)]
    beta: Option<PathBuf>,
    /// Learning rate of the distribution.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BenchTarget {
    Approx,
    Closepairs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BenchArgs {
    /// Comma-separated instance sizes.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Coordinates are integers in [0, range).
    #[arg(long, default_value_t = 100)]
    range: u32,
    #[arg(long, value_enum, default_value_t = BenchTarget::Approx)]
    target: BenchTarget,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SelftestArgs {
    /// Comma-separated criterion ids (default: all).
    #[arg(long, value_delimiter = ',')]
    only: Vec<u32>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Run(String),
    Selftest(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Run(_) => 3,
            Failure::Selftest(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Input(_) => "input",
            Failure::Run(_) => "run",
            Failure::Selftest(_) => "selftest",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Run(m) | Failure::Selftest(m) => m,
        }
    }
}

impl From<EmdError> for Failure {
    fn from(e: EmdError) -> Failure {
        if e.is_input() {
            Failure::Input(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

impl From<io::ParseError> for Failure {
    fn from(e: io::ParseError) -> Failure {
        Failure::Input(e.to_string())
    }
}

/// What a command produces besides its result.
#[derive(Default)]
struct Context {
    params: Option<MwuParams>,
    diagnostics: Vec<String>,
    timings: BTreeMap<String, f64>,
}

type Outcome = std::result::Result<Value, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // Help and version requests.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = json!({
                "schema": SCHEMA,
                "command": Value::Null,
                "error": { "kind": "input", "message": e.to_string().trim_end() },
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let mut ctx = Context::default();
    let outcome = validate(&cli.opts).and_then(|()| run(&cli, &mut ctx));
    if cli.opts.timings {
        ctx.timings.insert("total_seconds".into(), start.elapsed().as_secs_f64());
    }
    let mut config = serde_json::to_value(&cli.opts).expect("serializable");
    config["command"] = serde_json::to_value(&cli.command).expect("serializable");
    config["params"] = serde_json::to_value(&ctx.params).expect("serializable");
    let (report, code) = match outcome {
        Ok(result) => (
            json!({
                "schema": SCHEMA,
                "command": cli.command.name(),
                "config": config,
                "result": result,
                "diagnostics": ctx.diagnostics,
                "timings": ctx.timings,
            }),
            0,
        ),
        Err(f) => (
            json!({
                "schema": SCHEMA,
                "command": cli.command.name(),
                "config": config,
                "error": { "kind": f.kind(), "message": f.message() },
                "diagnostics": ctx.diagnostics,
                "timings": ctx.timings,
            }),
            f.code(),
        ),
    };
    let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    match &cli.opts.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("emdcp: cannot write {}: {e}", path.display());
                return ExitCode::from(3);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(code)
}

fn validate(o: &Opts) -> std::result::Result<(), Failure> {
    if !(o.eps > 0.0 && o.eps < 0.5) {
        return Err(Failure::Input(format!("--eps {} outside (0, 0.5)", o.eps)));
    }
    if !(o.phi_exp > 0.0 && o.phi_exp < 1.0) {
        return Err(Failure::Input(format!("--phi {} outside (0, 1)", o.phi_exp)));
    }
    if let Some(r) = o.relax {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Failure::Input(format!("--relax {r} must be at least 1")));
        }
    }
    Ok(())
}

fn run(cli: &Cli, ctx: &mut Context) -> Outcome {
    let o = &cli.opts;
    match &cli.command {
        Command::Exact => cmd_exact(o, ctx),
        Command::Tree => cmd_tree(o, ctx),
        Command::Approx => cmd_approx(o, ctx),
        Command::Closepairs => cmd_closepairs(o, ctx),
        Command::Sample(a) => cmd_sample(o, a, ctx),
        Command::Bench(a) => cmd_bench(o, a, ctx),
        Command::Selftest(a) => cmd_selftest(a, ctx),
    }
}

fn relax(o: &Opts) -> Relax {
    o.relax.map_or_else(Relax::default, Relax::with_divisor)
}

fn required(path: &Option<PathBuf>, flag: &str) -> std::result::Result<PointSet, Failure> {
    let p = path.as_ref().ok_or_else(|| Failure::Input(format!("missing --{flag} point file")))?;
    Ok(io::load_points(p)?)
}

fn load_xy(o: &Opts) -> std::result::Result<(PointSet, PointSet), Failure> {
    let x = required(&o.x, "x")?;
    let y = required(&o.y, "y")?;
    if x.dim() != y.dim() {
        return Err(Failure::Input(format!("--x has dimension {} but --y has {}", x.dim(), y.dim())));
    }
    Ok((x, y))
}

/// Smallest power of two at least the ratio of the largest to the smallest
/// nonzero cross distance; at least 2.
fn aspect_bound(x: &PointSet, y: &PointSet) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for p in x.iter() {
        for q in y.iter() {
            let d = l1(p, q);
            if d > 0.0 {
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
    }
    if hi == 0.0 {
        return 2.0;
    }
    2f64.powi((hi / lo).log2().ceil().max(1.0) as i32)
}

fn record_params(ctx: &mut Context, o: &Opts, n: usize, phi: f64) -> std::result::Result<(), Failure> {
    if n > 0 {
        ctx.params = Some(compute_params(n, phi, o.eps, o.mode.into(), relax(o))?);
    }
    Ok(())
}

fn cmd_exact(o: &Opts, ctx: &mut Context) -> Outcome {
    let x = required(&o.x, "x")?;
    if let Some(bp) = &o.b {
        let b = io::load_ints(bp)?;
        let supply = SupplyDemand::new(b)?;
        record_params(ctx, o, supply.mass().max(1) as usize, aspect_bound(&x, &x))?;
        let sol = exact_emd_supply(&x, &supply)?;
        return Ok(json!({ "emd": sol.cost }));
    }
    let y = required(&o.y, "y")?;
    if x.dim() != y.dim() {
        return Err(Failure::Input(format!("--x has dimension {} but --y has {}", x.dim(), y.dim())));
    }
    record_params(ctx, o, x.len(), aspect_bound(&x, &y))?;
    Ok(json!({ "emd": exact_emd(&x, &y)? }))
}

fn cmd_tree(o: &Opts, ctx: &mut Context) -> Outcome {
    let (x, y) = load_xy(o)?;
    if x.len() != y.len() {
        return Err(Failure::Input(format!("|X| = {} differs from |Y| = {}", x.len(), y.len())));
    }
    record_params(ctx, o, x.len(), aspect_bound(&x, &y))?;
    let (x, y) = dedup_and_cancel(&x, &y);
    if x.is_empty() {
        return Ok(json!({ "tree_emd": 0.0, "lower": 0.0, "upper": 0.0, "parts": [] }));
    }
    let seed = Seed(o.seed);
    let b = SupplyDemand::matching(x.len(), y.len())?;
    let reduced = reduce_aspect_ratio(&x.concat(&y)?, &b, o.eps, seed.child("reduce"))?;
    let (mut total, mut lower, mut upper) = (0.0, 0.0, 0.0);
    let mut parts = Vec::new();
    for (k, rp) in reduced.parts.iter().enumerate() {
        let (px, py) = rp.split_xy();
        let n = px.len();
        let pert = embed_and_perturb(&px.concat(&py)?, rp.phi, o.eps, seed.derive(0xBA27, k as u64).child("embed"))?;
        let t = greedy_tree_bound(&pert.tree, n)?;
        let (mut max_ratio, mut min_ratio) = (0.0f64, f64::INFINITY);
        for i in 0..2 * n {
            for j in (i + 1)..2 * n {
                let d = l1(pert.y.point(i), pert.y.point(j));
                if d > 0.0 {
                    let r = pert.tree.distance(i, j) / d;
                    max_ratio = max_ratio.max(r);
                    min_ratio = min_ratio.min(r);
                }
            }
        }
        total += t / rp.scale;
        lower += pert.d_l * t / rp.scale;
        upper += pert.d_u * t / rp.scale;
        parts.push(json!({
            "n": n,
            "phi": rp.phi,
            "scale": rp.scale,
            "tree_emd": t,
            "d_l": pert.d_l,
            "d_u": pert.d_u,
            "max_distortion": max_ratio,
            "min_distortion": if min_ratio.is_finite() { json!(min_ratio) } else { Value::Null },
        }));
    }
    let mut out = json!({ "tree_emd": total, "lower": lower, "upper": upper, "parts": parts });
    add_exact(&mut out, &x, &y, total, "tree_ratio")?;
    Ok(out)
}

/// Adds `exact` and `key = value / exact` when the instance is small enough.
fn add_exact(out: &mut Value, x: &PointSet, y: &PointSet, value: f64, key: &str) -> std::result::Result<(), Failure> {
    if x.len() <= EXACT_LIMIT {
        let e = exact_emd(x, y)?;
        out["exact"] = json!(e);
        out[key] = if e > 0.0 { json!(value / e) } else { Value::Null };
    }
    Ok(())
}

fn cmd_approx(o: &Opts, ctx: &mut Context) -> Outcome {
    let (x, y) = load_xy(o)?;
    if x.len() != y.len() {
        return Err(Failure::Input(format!("|X| = {} differs from |Y| = {}", x.len(), y.len())));
    }
    record_params(ctx, o, x.len(), aspect_bound(&x, &y))?;
    if let Some(p) = ctx.params.as_ref().filter(|p| p.mode == Mode::Faithful && p.rounds > FAITHFUL_ROUND_LIMIT) {
        return Err(Failure::Run(format!("faithful mode needs {} rounds per threshold; rerun with --mode practical", p.rounds)));
    }
    let mut cfg = ApproxConfig::new(o.eps, o.phi_exp);
    cfg.mode = o.mode.into();
    cfg.relax = relax(o);
    let oracle = OracleKind::from(o.oracle).build();
    let start = Instant::now();
    let res = approximate_emd(&x, &y, &cfg, oracle.as_ref(), Seed(o.seed))?;
    if o.timings {
        ctx.timings.insert("approx_seconds".into(), start.elapsed().as_secs_f64());
    }
    if let Some(first) = res.parts.first() {
        ctx.params = Some(first.params.clone());
    }
    for (k, p) in res.parts.iter().enumerate() {
        log::info!("part {k}: estimate {} from {} thresholds", p.estimate, p.steps.len());
        ctx.diagnostics.push(format!("part {k}: n={} phi={} thresholds={} bracketed={}", p.n, p.phi, p.steps.len(), p.bracketed));
        if !p.bracketed {
            ctx.diagnostics.push(format!("part {k}: every threshold up to the top of the bracket was certified"));
        }
    }
    let lower: f64 = res.parts.iter().map(|p| p.best_lower_bound / p.scale).sum();
    let mut out = json!({ "emd": res.value, "lower_bound": lower, "parts": res.parts });
    add_exact(&mut out, &x, &y, res.value, "ratio")?;
    Ok(out)
}

fn cmd_closepairs(o: &Opts, ctx: &mut Context) -> Outcome {
    let (x, y) = load_xy(o)?;
    let phi = aspect_bound(&x, &y);
    record_params(ctx, o, x.len().max(y.len()), phi)?;
    let oracle = OracleKind::from(o.oracle).build();
    let r = find_close_pairs(oracle.as_ref(), &x, &y, phi, o.phi_exp, o.eps, ClosePairsConfig::default(), Seed(o.seed))?;
    let truth = brute_prefix_set(&x, &y, r.t, o.eps);
    let complete = truth == r.pairs;
    if !complete {
        ctx.diagnostics.push(format!("returned {} of {} prefix pairs", r.pairs.len(), truth.len()));
    }
    Ok(json!({
        "t": r.t,
        "z": r.z,
        "rounds": r.rounds,
        "phi": phi,
        "pairs": r.pairs,
        "frequent_x": r.frequent_x,
        "frequent_y": r.frequent_y,
        "prefix_size": truth.len(),
        "complete": complete,
    }))
}

fn load_duals(path: &Option<PathBuf>, n: usize, flag: &str) -> std::result::Result<Vec<i64>, Failure> {
    match path {
        None => Ok(vec![0; n]),
        Some(p) => {
            let v = io::load_ints(p)?;
            if v.len() != n {
                return Err(Failure::Input(format!("--{flag} has {} values, expected {n}", v.len())));
            }
            Ok(v)
        }
    }
}

fn cmd_sample(o: &Opts, a: &SampleArgs, ctx: &mut Context) -> Outcome {
    let (x, y) = load_xy(o)?;
    let n = x.len();
    if y.len() != n {
        return Err(Failure::Input(format!("|X| = {n} differs from |Y| = {}", y.len())));
    }
    if !(a.eta > 0.0 && a.eta.is_finite()) {
        return Err(Failure::Input(format!("--eta {} must be positive", a.eta)));
    }
    if x.iter().any(|p| y.iter().any(|q| l1(p, q) < 1.0)) {
        return Err(Failure::Input("sample needs every cross distance at least 1".into()));
    }
    let phi = aspect_bound(&x, &y);
    record_params(ctx, o, n, phi)?;
    let chi = ctx.params.as_ref().map_or(0.1, |p| p.chi);
    let alpha = load_duals(&a.alpha, n, "alpha")?;
    let beta = load_duals(&a.beta, n, "beta")?;
    let zero = alpha.iter().chain(&beta).all(|&v| v == alpha[0]);
    let duals = round_duals(DualState::new(alpha, beta, chi)?)?;
    let seed = Seed(o.seed);
    let s = draw_rounding_set(n, o.phi_exp, seed.child("rounding-set"));
    let rounding = RoundingState::new(x, y, o.eps, s.pairs())?;
    let mut cfg = SamplerConfig::new(a.eta, phi, o.phi_exp);
    cfg.stall_fallback = o.mode == ModeArg::Practical;
    let oracle = OracleKind::from(o.oracle).build();
    let count = o.trials.unwrap_or(10_000);
    let batch = arbitrary_sampler(&rounding, &duals, oracle.as_ref(), count, &cfg, seed.child("samples"))?;
    let triples: Vec<[i64; 3]> = batch.triples.iter().map(|t| [t.i as i64, t.j as i64, i64::from(t.sigma)]).collect();
    let mut out = json!({ "count": count, "samples": triples, "sampler": batch.diagnostics });
    if n <= EXPLICIT_LIMIT {
        let table = explicit_table(&rounding, &duals, a.eta)?;
        out["tv_to_explicit"] = json!(tv_to_table(&batch.triples, &table));
        if zero {
            out["uniform_chi2_p"] = json!(chi_square_uniform_pvalue(&triple_counts(n, &batch.triples)));
        }
    } else {
        ctx.diagnostics.push(format!("n = {n} > {EXPLICIT_LIMIT}: no explicit comparison"));
    }
    if batch.diagnostics.stall_fallbacks > 0 {
        ctx.diagnostics.push(format!("{} rectangles resampled by enumeration after a stall", batch.diagnostics.stall_fallbacks));
    }
    if batch.diagnostics.prefix_misses > 0 {
        ctx.diagnostics
            .push(format!("{} rectangles resampled by enumeration after an incomplete prefix set", batch.diagnostics.prefix_misses));
    }
    Ok(out)
}

fn cmd_bench(o: &Opts, a: &BenchArgs, ctx: &mut Context) -> Outcome {
    if a.n.is_empty() || a.n.contains(&0) || a.d == 0 || a.range < 2 {
        return Err(Failure::Input("bench needs positive --n, --d and --range >= 2".into()));
    }
    let trials = o.trials.unwrap_or(5).max(1);
    let oracle = OracleKind::from(o.oracle).build();
    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    for &n in &a.n {
        let mut total = 0.0;
        for k in 0..trials as u64 {
            let seed = Seed(o.seed).derive(n as u64, k);
            let x = random_points(n, a.d, a.range, seed.child("x"));
            let y = random_points(n, a.d, a.range, seed.child("y"));
            let start = Instant::now();
            let row = match a.target {
                BenchTarget::Approx => bench_approx(o, &x, &y, oracle.as_ref(), seed)?,
                BenchTarget::Closepairs => bench_closepairs(o, &x, &y, oracle.as_ref(), seed)?,
            };
            let secs = start.elapsed().as_secs_f64();
            log::info!("bench n={n} trial={k}: {secs:.3}s");
            total += secs;
            let mut row = row;
            row["n"] = json!(n);
            row["trial"] = json!(k);
            row["seconds"] = json!(secs);
            rows.push(row);
        }
        per_n.push(total / trials as f64);
        ctx.timings.insert(format!("mean_seconds_n{n}"), total / trials as f64);
    }
    record_params(ctx, o, a.n[0], 2f64.powi((a.range as f64 * a.d as f64).log2().ceil() as i32))?;
    let mut out = json!({ "target": a.target, "rows": rows });
    if a.target == BenchTarget::Approx {
        let lo = 1.0 / (1.0 + 5.0 * o.eps);
        let hi = 1.0 + 5.0 * o.eps;
        let ratios: Vec<f64> = out["rows"].as_array().into_iter().flatten().filter_map(|r| r["ratio"].as_f64()).collect();
        let inside = ratios.iter().filter(|r| (lo..=hi).contains(*r)).count();
        out["within_band"] = json!(inside);
        out["band"] = json!([lo, hi]);
    }
    if a.n.len() >= 2 {
        let xs: Vec<f64> = a.n.iter().map(|&n| n as f64).collect();
        out["fitted_exponent"] = json!(log_log_slope(&xs, &per_n));
    }
    Ok(out)
}

fn bench_approx(o: &Opts, x: &PointSet, y: &PointSet, oracle: &dyn CpOracle, seed: Seed) -> Outcome {
    let mut cfg = ApproxConfig::new(o.eps, o.phi_exp);
    cfg.mode = Mode::Practical;
    cfg.relax = relax(o);
    let r = approximate_emd(x, y, &cfg, oracle, seed)?;
    let e = exact_emd(x, y)?;
    Ok(json!({ "approx": r.value, "exact": e, "ratio": if e > 0.0 { json!(r.value / e) } else { Value::Null } }))
}

fn bench_closepairs(o: &Opts, x: &PointSet, y: &PointSet, oracle: &dyn CpOracle, seed: Seed) -> Outcome {
    let phi = aspect_bound(x, y);
    let r = find_close_pairs(oracle, x, y, phi, o.phi_exp, o.eps, ClosePairsConfig::default(), seed)?;
    Ok(json!({ "t": r.t, "pairs": r.pairs.len() }))
}

fn cmd_selftest(a: &SelftestArgs, ctx: &mut Context) -> Outcome {
    let results = run_selected(&a.only)?;
    let mut failed = Vec::new();
    for r in &results {
        eprintln!("{}", r.line());
        ctx.timings.insert(format!("criterion_{:02}_seconds", r.id), r.seconds);
        if !r.pass && !r.advisory {
            failed.push(r.id.to_string());
        }
    }
    if !failed.is_empty() {
        ctx.diagnostics.extend(results.iter().map(|r| r.line()));
        return Err(Failure::Selftest(format!("failed criteria: {}", failed.join(", "))));
    }
    Ok(json!({ "criteria": results }))
}
