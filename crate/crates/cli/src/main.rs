//! `avgcost`: evaluate, optimize and probe stationary policies.
//!
//! Exit codes: 0 success, 2 usage / config / model error, 3 numerical
//! failure (instability, truncation cap, search cap), 4 a `--check`
//! self-check failed.

mod output;

use avgcost_core::config::{LoadedModel, ModelConfig};
use avgcost_core::continuity::{eta_diff_bound, modulus_scan, NeighborhoodModel, Sampler};
use avgcost_core::generic::{average_cost_generic, GenericCtmdpModel};
use avgcost_core::line_chain::{
    block_averages, eta_line, history_stream_average, stationary_supremum_gap, LineChainModel,
};
use avgcost_core::optimizer::{exhaustive_search, Mode, SearchOptions, SearchResult};
use avgcost_core::policy::distance;
use avgcost_core::queue::{average_cost, GroupServerModel};
use avgcost_core::simulate::{simulate_eta, SimConfig};
use avgcost_core::{Error, MetricParams, Policy, TailRule};
use clap::{Args, Parser, Subcommand};
use output::{num, write_csv, RunManifest};
use rayon::prelude::*;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "avgcost", version, about = "Long-run average cost of stationary policies on countable-state MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads [default: available parallelism]
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for CSV files and manifest.json
    #[arg(long, global = true, default_value = "avgcost-out")]
    out: PathBuf,

    /// Run self-checks; a failed check exits with code 4
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Certified average cost of one policy
    Eval(EvalArgs),
    /// Exhaustive search over prefixes of length L
    Optimize(OptimizeArgs),
    /// Perturbation bounds and the sampled continuity modulus
    Continuity(ContinuityArgs),
    /// The two deterministic line chains
    Examples(ExamplesArgs),
    /// Discrete-event simulation against the analytic value
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML model file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Error tolerance of each evaluation
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Metric ratio in (0, 1/2); overrides the config file
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "prefix=[];tail=all-on")]
    policy: String,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Prefix length
    #[arg(long = "L", default_value_t = 12)]
    prefix_len: usize,
    /// Tail rule shared by all candidates
    #[arg(long, default_value = "all-on")]
    tail: String,
    /// Largest number of candidates
    #[arg(long, default_value_t = 1 << 20)]
    cap: u64,
    #[arg(long, default_value = "min")]
    mode: String,
}

#[derive(Args)]
struct ContinuityArgs {
    #[command(flatten)]
    common: Common,
    /// Use a line chain (1 = cost, 2 = reward) instead of a config
    #[arg(long)]
    which: Option<u8>,
    #[arg(long)]
    policy: Option<String>,
    /// Report a single pair against this policy instead of scanning
    #[arg(long)]
    against: Option<String>,
    /// Agreement depths to scan
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    samples: usize,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExamplesArgs {
    /// 1 = cost chain, 2 = reward chain
    #[arg(long)]
    which: u8,
    #[arg(long, default_value = "prefix=[];tail=constant(1)")]
    policy: String,
    /// Length of the history-dependent reward stream
    #[arg(long = "stream-T", default_value_t = 100_000)]
    stream_t: usize,
    /// Largest prefix length for the optimum / gap table
    #[arg(long = "L", default_value_t = 12)]
    prefix_len: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "prefix=[];tail=all-on")]
    policy: String,
    /// Seed of the first replication; replication i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replications: u64,
    #[arg(long, default_value_t = 1e5)]
    horizon: f64,
    #[arg(long, default_value_t = 1e3)]
    warmup: f64,
    #[arg(long, default_value_t = 20)]
    batches: usize,
}

enum Failure {
    Core(Error),
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("output: {e}"))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_numerical() => 3,
            Failure::Core(_) | Failure::Usage(_) => 2,
            Failure::Check(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Usage(m) => m.clone(),
            Failure::Check(m) => format!("self-check failed: {m}"),
        }
    }
}

type Run = Result<(), Failure>;

struct Ctx {
    out: PathBuf,
    check: bool,
    manifest: RunManifest,
}

impl Ctx {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Run {
        let path = write_csv(&self.out, name, header, rows)?;
        self.manifest.outputs.push(path);
        Ok(())
    }

    fn verify(&self, ok: bool, what: impl FnOnce() -> String) -> Run {
        if self.check && !ok {
            Err(Failure::Check(what()))
        } else {
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let (name, config) = match &cli.command {
        Command::Eval(a) => ("eval", a.common.config.clone()),
        Command::Optimize(a) => ("optimize", a.common.config.clone()),
        Command::Continuity(a) => ("continuity", a.common.config.clone()),
        Command::Examples(_) => ("examples", None),
        Command::Simulate(a) => ("simulate", a.common.config.clone()),
    };
    if let Some(n) = cli.workers {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: --workers must be a positive thread count");
            return ExitCode::from(2);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(2);
    }
    let start = Instant::now();
    let mut ctx = Ctx { out: cli.out.clone(), check: cli.check, manifest: RunManifest::new(name, config, argv) };
    ctx.manifest.param("workers", rayon::current_num_threads());
    ctx.manifest.param("check", cli.check);
    let result = match &cli.command {
        Command::Eval(a) => eval(&mut ctx, a),
        Command::Optimize(a) => optimize(&mut ctx, a),
        Command::Continuity(a) => continuity(&mut ctx, a),
        Command::Examples(a) => examples(&mut ctx, a),
        Command::Simulate(a) => simulate(&mut ctx, a),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ctx.manifest.error = Some(f.message());
            f.code()
        }
    };
    ctx.manifest.exit_code = code as i32;
    ctx.manifest.wall_clock_secs = start.elapsed().as_secs_f64();
    if let Err(e) = ctx.manifest.write(&ctx.out) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}

fn load(ctx: &mut Ctx, common: &Common) -> Result<ModelConfig, Failure> {
    let path = common.config.as_ref().ok_or_else(|| Failure::Usage("--config <file> is required".into()))?;
    let mut cfg = ModelConfig::from_path(path)?;
    if let Some(r) = common.r {
        cfg.metric = MetricParams::new(r)?;
    }
    ctx.manifest.param("tol", common.tol);
    ctx.manifest.param("r", cfg.metric.r());
    Ok(cfg)
}

fn parse_policy(text: &str) -> Result<Policy, Failure> {
    Ok(text.parse::<Policy>()?)
}

fn queue_only<'a>(cfg: &'a ModelConfig, what: &str) -> Result<&'a GroupServerModel, Failure> {
    match &cfg.model {
        LoadedModel::Queue(q) => Ok(q),
        _ => Err(Failure::Usage(format!("{what} needs a queue model (model = \"queue\")"))),
    }
}

fn eval(ctx: &mut Ctx, a: &EvalArgs) -> Run {
    let cfg = load(ctx, &a.common)?;
    let u = parse_policy(&a.policy)?;
    ctx.manifest.param("policy", &u);
    let tol = a.common.tol;
    let (bound, eta, rows, detail) = match &cfg.model {
        LoadedModel::Queue(q) => {
            let ss = average_cost(q, &u, tol)?;
            let bound = u.bind(q)?;
            let eta = ss.eta.expect("average_cost fills eta");
            let rows = table_rows(&bound, &ss.pi, &ss.costs)?;
            let detail = format!(
                "product form truncated at N = {}, rho0 = {}, tail mass <= {:e}",
                ss.n_trunc, ss.certificate.rho0, ss.tail_mass_bound
            );
            if ctx.check {
                let generic = average_cost_generic(&GenericCtmdpModel::from_queue(q), &u, tol)?;
                let other = generic.eta.expect("average_cost_generic fills eta");
                ctx.verify((other.value - eta.value).abs() <= eta.error_bound + other.error_bound + tol, || {
                    format!("truncated solver gives {other}, product form {eta}")
                })?;
            }
            (bound, eta, rows, detail)
        }
        LoadedModel::BirthDeath(_, g) | LoadedModel::Table(g) => {
            let sol = average_cost_generic(g, &u, tol)?;
            let bound = u.bind(g)?;
            let eta = sol.eta.expect("average_cost_generic fills eta");
            let rows = table_rows(&bound, &sol.pi, &sol.costs)?;
            let max_nu = sol.nu.iter().cloned().fold(0.0, f64::max);
            ctx.verify(sol.residual <= 1e-9 * g.rate_bound() * max_nu, || {
                format!("balance residual {:e} too large", sol.residual)
            })?;
            let detail = format!(
                "truncated system K = {}, residual {:e}, kappa bound {}",
                sol.k_trunc,
                sol.residual,
                sol.kappa_bound.map_or("n/a".into(), |k| format!("{k:e}"))
            );
            (bound, eta, rows, detail)
        }
    };
    ctx.verify(eta.error_bound <= tol, || format!("error bound {:e} exceeds tol {tol:e}", eta.error_bound))?;
    println!("policy {bound}");
    println!("eta = {} ± {:e}", eta.value, eta.error_bound);
    println!("{detail}");
    ctx.csv("eval.csv", &["state", "action", "pi", "cost"], &rows)
}

fn table_rows(u: &Policy, pi: &[f64], costs: &[f64]) -> Result<Vec<Vec<String>>, Failure> {
    pi.iter()
        .zip(costs)
        .enumerate()
        .map(|(n, (p, c))| Ok(vec![n.to_string(), u.action_at(n)?.to_string(), num(*p), num(*c)]))
        .collect()
}

fn optimize(ctx: &mut Ctx, a: &OptimizeArgs) -> Run {
    let cfg = load(ctx, &a.common)?;
    let tail: TailRule = a.tail.parse()?;
    let mode: Mode = a.mode.parse()?;
    ctx.manifest.param("L", a.prefix_len);
    ctx.manifest.param("tail", &tail);
    ctx.manifest.param("cap", a.cap);
    ctx.manifest.param("mode", &a.mode);
    let opts = SearchOptions { cap: a.cap, mode };
    let tol = a.common.tol;
    let res = match &cfg.model {
        LoadedModel::Queue(q) => exhaustive_search(q, a.prefix_len, &tail, tol, opts)?.with_cmu_check(q)?,
        LoadedModel::BirthDeath(_, g) | LoadedModel::Table(g) => exhaustive_search(g, a.prefix_len, &tail, tol, opts)?,
    };
    report_search(ctx, &res, mode, "optimize.csv")?;
    if let Some(v) = res.cmu {
        match v.witness {
            None => println!("c/mu priority: conformant"),
            Some(w) => println!(
                "c/mu priority: violated at state {} (group {} on while group {} is not fully on)",
                w.state, w.active_group, w.idle_group
            ),
        }
        ctx.verify(v.conformant, || format!("optimum {} violates the c/mu priority", res.best_policy))?;
    }
    Ok(())
}

fn report_search(ctx: &mut Ctx, res: &SearchResult, mode: Mode, csv_name: &str) -> Run {
    println!("best {} with eta = {}", res.best_policy, res.best_eta);
    println!("evaluated {}, skipped as unstable {}", res.evaluated, res.skipped_unstable);
    if let Some(gap) = res.runner_up_gap {
        println!("runner-up gap {gap:e}");
    }
    let mut rows = Vec::with_capacity(res.candidates.len());
    for (rank, c) in res.ranked(mode).into_iter().enumerate() {
        rows.push(vec![
            (rank + 1).to_string(),
            c.policy.to_string(),
            num(c.eta.unwrap().value),
            num(c.eta.unwrap().error_bound),
            String::new(),
        ]);
    }
    for c in res.candidates.iter().filter(|c| c.eta.is_none()) {
        rows.push(vec![
            String::new(),
            c.policy.to_string(),
            String::new(),
            String::new(),
            c.skipped.clone().unwrap_or_default(),
        ]);
    }
    // optimality over the enumerated class, up to the summed error bounds
    let best = res.best_eta;
    let beaten = res.candidates.iter().filter_map(|c| c.eta).any(|e| match mode {
        Mode::Min => e.upper() < best.lower() - best.error_bound - e.error_bound,
        Mode::Max => e.lower() > best.upper() + best.error_bound + e.error_bound,
    });
    ctx.verify(!beaten, || "a candidate beats the reported optimum".into())?;
    ctx.csv(csv_name, &["rank", "policy", "eta", "error_bound", "skipped"], &rows)
}

fn continuity(ctx: &mut Ctx, a: &ContinuityArgs) -> Run {
    let sampler = Sampler { samples_per_k: a.samples, depth: a.depth, tail_prob: 0.25, seed: a.seed };
    ctx.manifest.param("ks", format!("{:?}", a.ks));
    ctx.manifest.param("samples", a.samples);
    ctx.manifest.param("depth", a.depth);
    ctx.manifest.param("seed", a.seed);
    let tol = a.common.tol;
    match (a.which, &a.common.config) {
        (Some(_), Some(_)) => Err(Failure::Usage("use either --which or --config, not both".into())),
        (None, None) => Err(Failure::Usage("--config <file> or --which 1|2 is required".into())),
        (Some(w), None) => {
            let model = line_model(w)?;
            let metric = match a.common.r {
                Some(r) => MetricParams::new(r)?,
                None => MetricParams::default(),
            };
            ctx.manifest.param("which", w);
            ctx.manifest.param("tol", tol);
            ctx.manifest.param("r", metric.r());
            let u = parse_policy(a.policy.as_deref().unwrap_or("prefix=[];tail=constant(1)"))?;
            scan(ctx, &model, &u, a, &sampler, metric)
        }
        (None, Some(_)) => {
            let cfg = load(ctx, &a.common)?;
            let q = queue_only(&cfg, "continuity")?;
            let u = parse_policy(a.policy.as_deref().unwrap_or("prefix=[];tail=all-on"))?;
            match &a.against {
                Some(v) => pair(ctx, q, &u, &parse_policy(v)?, cfg.metric, tol),
                None => {
                    scan(ctx, q, &u, a, &sampler, cfg.metric)?;
                    if ctx.check {
                        check_pairs(ctx, q, &u, &a.ks, &sampler, tol)?;
                    }
                    Ok(())
                }
            }
        }
    }
}

fn scan<M: NeighborhoodModel>(
    ctx: &mut Ctx,
    model: &M,
    u: &Policy,
    a: &ContinuityArgs,
    sampler: &Sampler,
    metric: MetricParams,
) -> Run {
    ctx.manifest.param("policy", u);
    let scan = modulus_scan(model, u, &a.ks, sampler, metric, a.common.tol)?;
    println!("{:>4} {:>12} {:>8} {:>8} {:>14} {:>14}", "k", "radius", "samples", "unstable", "max |diff|", "max bound");
    let mut rows = Vec::new();
    for r in &scan.rows {
        println!(
            "{:>4} {:>12.3e} {:>8} {:>8} {:>14.6e} {:>14.6e}{}",
            r.k,
            r.radius,
            r.samples,
            r.skipped_unstable,
            r.max_diff,
            r.max_bound,
            if r.exhausted { "  (no alternative actions)" } else { "" }
        );
        rows.push(vec![
            r.k.to_string(),
            num(r.radius),
            r.samples.to_string(),
            r.skipped_unstable.to_string(),
            num(r.max_diff),
            num(r.max_bound),
            r.exhausted.to_string(),
        ]);
    }
    if scan.discontinuity_suspected {
        println!("modulus does not vanish with k: discontinuity suspected at {u}");
    } else {
        println!(
            "max |diff| nonincreasing: {}, max bound nonincreasing: {}",
            scan.diff_nonincreasing, scan.bound_nonincreasing
        );
    }
    ctx.csv(
        "continuity.csv",
        &["k", "radius", "samples", "skipped_unstable", "max_diff", "max_bound", "exhausted"],
        &rows,
    )
}

fn check_pairs(ctx: &Ctx, q: &GroupServerModel, u: &Policy, ks: &[usize], sampler: &Sampler, tol: f64) -> Run {
    for &k in ks {
        let (neighbours, _) = sampler.neighbours(q, u, k)?;
        let bad = neighbours.par_iter().find_map_first(|v| match eta_diff_bound(q, u, v, tol) {
            Ok(r) if r.sound && r.sandwich_holds => None,
            Ok(_) => Some(format!("bound or sandwich fails for {v}")),
            Err(e) if e.is_instability() => None,
            Err(e) => Some(format!("{v}: {e}")),
        });
        if let Some(msg) = bad {
            return ctx.verify(false, || msg);
        }
    }
    Ok(())
}

fn pair(ctx: &mut Ctx, q: &GroupServerModel, u: &Policy, v: &Policy, metric: MetricParams, tol: f64) -> Run {
    ctx.manifest.param("policy", u);
    ctx.manifest.param("against", v);
    let rep = eta_diff_bound(q, u, v, tol)?;
    let d = distance(&u.bind(q)?, &v.bind(q)?, metric)?;
    println!("agreement {} (n = {}), distance {d:e}", rep.agreement, rep.n);
    println!("eta(u) = {}, eta(u') = {}", rep.eta_u, rep.eta_u2);
    println!(
        "sigma = {} in ({:e}, {:e}): sandwich {}",
        rep.sigma,
        rep.sigma_bounds.0,
        rep.sigma_bounds.1,
        if rep.sandwich_holds { "holds" } else { "FAILS" }
    );
    println!(
        "|eta(u') - eta(u)| = {:e} <= {:e} = {:e} (head) + {:e} (tail) + {:e} (remainder)",
        rep.eta_diff.value.abs(),
        rep.rigorous_bound,
        rep.bound_terms[0],
        rep.bound_terms[1],
        rep.bound_terms[2]
    );
    ctx.verify(rep.sound && rep.sandwich_holds, || format!("pair {u} / {v} is not certified"))?;
    let row = vec![
        rep.n.to_string(),
        num(d),
        num(rep.sigma.value),
        num(rep.sigma.error_bound),
        num(rep.sigma_bounds.0),
        num(rep.sigma_bounds.1),
        num(rep.eta_diff.value),
        num(rep.bound_terms[0]),
        num(rep.bound_terms[1]),
        num(rep.bound_terms[2]),
        num(rep.rigorous_bound),
        rep.sound.to_string(),
    ];
    ctx.csv(
        "continuity_pair.csv",
        &[
            "n",
            "distance",
            "sigma",
            "sigma_err",
            "sigma_lo",
            "sigma_hi",
            "eta_diff",
            "head_term",
            "tail_term",
            "remainder",
            "bound",
            "sound",
        ],
        &[row],
    )
}

fn line_model(which: u8) -> Result<LineChainModel, Failure> {
    match which {
        1 => Ok(LineChainModel::cost()),
        2 => Ok(LineChainModel::reward()),
        w => Err(Failure::Usage(format!("--which must be 1 or 2, got {w}"))),
    }
}

fn examples(ctx: &mut Ctx, a: &ExamplesArgs) -> Run {
    let model = line_model(a.which)?;
    let u = parse_policy(&a.policy)?;
    ctx.manifest.param("which", a.which);
    ctx.manifest.param("policy", &u);
    ctx.manifest.param("stream_T", a.stream_t);
    ctx.manifest.param("L", a.prefix_len);
    let value = eta_line(&model, &u)?;
    match a.which {
        1 => {
            println!("cost chain: eta({u}) = {value}");
            let mut rows = Vec::new();
            for l in 1..=a.prefix_len {
                let res =
                    exhaustive_search(&model, l, &TailRule::Constant("1".parse()?), 1e-12, SearchOptions::default())?;
                ctx.verify(res.best_eta.value == 0.0, || format!("L = {l}: optimum {}", res.best_eta))?;
                rows.push(vec![
                    l.to_string(),
                    res.best_policy.to_string(),
                    num(res.best_eta.value),
                    res.evaluated.to_string(),
                ]);
            }
            if let Some(last) = rows.last() {
                println!("minimum over prefixes of length {}: {} at {}", a.prefix_len, last[2], last[1]);
            }
            ctx.csv("examples.csv", &["L", "best_policy", "eta", "evaluated"], &rows)
        }
        _ => {
            println!("reward chain: eta({u}) = {value}");
            let mut rows = Vec::new();
            let mut best: f64 = 0.0;
            for l in 1..=a.prefix_len {
                let g = stationary_supremum_gap(&model, l)?;
                ctx.verify(g.max_stationary < 1.0, || format!("L = {l}: stationary value reaches 1"))?;
                best = best.max(g.max_stationary);
                rows.push(vec![
                    l.to_string(),
                    num(g.max_stationary),
                    g.argmax_stop.map_or(String::new(), |i| i.to_string()),
                    num(g.gap),
                ]);
            }
            println!(
                "best stationary reward with L <= {}: {best} (optimal reward 1, gap {})",
                a.prefix_len,
                1.0 - best
            );
            let avg = history_stream_average(a.stream_t)?;
            println!("history-dependent stream: average {avg} over T = {}", a.stream_t);
            let blocks = block_averages(a.prefix_len.max(2) * 4);
            ctx.verify(blocks.windows(2).all(|w| w[1].1 >= w[0].1), || "block averages decrease".into())?;
            if avg > best {
                println!("the history-dependent stream beats every stationary policy with L <= {}", a.prefix_len);
            }
            ctx.csv("examples.csv", &["L", "max_stationary", "argmax_stop", "gap"], &rows)
        }
    }
}

fn simulate(ctx: &mut Ctx, a: &SimulateArgs) -> Run {
    let cfg = load(ctx, &a.common)?;
    let q = queue_only(&cfg, "simulate")?;
    let u = parse_policy(&a.policy)?;
    let sim = SimConfig { horizon: a.horizon, warmup: a.warmup, seed: a.seed, batches: a.batches };
    sim.validate()?;
    if a.replications == 0 {
        return Err(Failure::Usage("--replications must be at least 1".into()));
    }
    for (k, v) in
        [("policy", u.to_string()), ("seed", a.seed.to_string()), ("replications", a.replications.to_string())]
    {
        ctx.manifest.param(k, v);
    }
    for (k, v) in [("horizon", a.horizon), ("warmup", a.warmup)] {
        ctx.manifest.param(k, v);
    }
    ctx.manifest.param("batches", a.batches);
    let analytic = match average_cost(q, &u, a.common.tol) {
        Ok(ss) => ss.eta.map(|e| e.value),
        Err(e) if e.is_instability() => {
            eprintln!("warning: {e}; simulating anyway");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let estimates = (0..a.replications)
        .into_par_iter()
        .map(|i| simulate_eta(q, &u, &SimConfig { seed: a.seed + i, ..sim }))
        .collect::<Result<Vec<_>, _>>()?;
    println!("seed, eta_hat, ci_lo, ci_hi, analytic, inside");
    let mut rows = Vec::new();
    let mut inside = 0;
    for (i, est) in estimates.iter().enumerate() {
        let seed = a.seed + i as u64;
        let hit = analytic.map(|x| est.widened_contains(x, 3.0));
        inside += hit.unwrap_or(false) as u64;
        println!(
            "{seed}, {}, {}, {}, {}, {}",
            est.eta_hat,
            est.ci_lo,
            est.ci_hi,
            analytic.map_or("nan".into(), |x| x.to_string()),
            hit.map_or("n/a".into(), |h| h.to_string())
        );
        for (b, m) in est.batch_means.iter().enumerate() {
            rows.push(vec![seed.to_string(), b.to_string(), num(*m)]);
        }
    }
    if analytic.is_some() {
        let share = inside as f64 / a.replications as f64;
        ctx.verify(share >= 0.95, || {
            format!("analytic value inside the widened interval in {inside}/{} runs", a.replications)
        })?;
    }
    ctx.csv("simulate.csv", &["seed", "batch", "mean"], &rows)
}
