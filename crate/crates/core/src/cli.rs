//! The `mtbounds` command-line driver.
//!
//! Every subcommand writes its artifacts into `--out DIR` (refusing to
//! overwrite without `--force`) or, without `--out`, prints them to stdout.
//! A JSON config file passed with `--config` supplies default values for
//! the subcommand's flags; flags on the command line win.
//!
//! Exit codes: 0 success, 1 a `verify` adjudication was violated, 2 an
//! error (reported as JSON on stderr), 64 a usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::{
    bound_martingale, bound_transform, mp_bracket, optimize_quadruple, theta_function, BoundReport, HolderQuadruple,
    Provenance, DEFAULT_VIOLATION_WIDTHS,
};
use crate::entropy::{
    covering_entropy, holder_condition, integral_dudley, integral_gls, integral_pisier, DistanceMatrix, EntropyModel,
    EntropyProfile, EntropySource,
};
use crate::gls::{tail_bound, PsiFunction};
use crate::mixed_norms::MomentTable;
use crate::sharpness::{
    constant_c, limit_formula, lower_bound_ratio, series_bound, series_bound_limit, write_sharpness_csv, zeta,
    DyadicMartingale, DEFAULT_CELL_BUDGET,
};
use crate::simulate::{
    attach_multipliers, empirical_norms, fit_tail_decay, generate, summarize, Generator, MultiplierSpec,
    SimulationSpec, StreamSpec,
};
use crate::verify::{run_verify, VerifyConfig};
use crate::{Error, Result};

/// Moment grid used when a table is built from a generator description.
pub const DEFAULT_TABLE_GRID: [f64; 11] = [2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0];

pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "mtbounds",
    version,
    about = "Moment and tail bounds for martingales and martingale transforms",
    args_override_self = true
)]
struct Cli {
    /// JSON object of default flag values for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory receiving the artifacts; stdout when absent.
    #[arg(long, global = true, value_name = "DIR", env = "MTBOUNDS_OUT")]
    out: Option<PathBuf>,
    /// Seed of every stochastic computation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// (p - 1) |xi|_{p,2}: the bound on |n^-1/2 S(n)|_p.
    BoundMartingale(BoundArgs),
    /// (p - 1) |b|_{alpha p, 2 lambda} |xi|_{beta p, 2 mu} for one Hölder quadruple.
    BoundTransform(TransformArgs),
    /// The transform bound minimised over Hölder quadruples.
    OptimizeQuad(PairArgs),
    /// theta(p): the optimised transform bound on the moment grid, as CSV and psi JSON.
    Theta(PairArgs),
    /// Exponential tail bound 2 exp(-psi_bar*(ln(u / norm))).
    Tail(TailArgs),
    /// Dyadic lower-bound construction and the limiting constant.
    Sharpness(SharpnessArgs),
    /// Riemann zeta function.
    Zeta(ZetaArgs),
    /// Simulates martingale paths and reports empirical norms.
    Simulate(SimulateArgs),
    /// Adjudicates every bound on a matrix of generators and multipliers.
    Verify(VerifyArgs),
    /// Covering entropy and the integral continuity criteria.
    Entropy(EntropyArgs),
    /// Reference constants, or a verify report flattened to CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct XiArgs {
    /// Moment table CSV (`i,p,value`) of the differences.
    #[arg(long, value_name = "FILE")]
    xi: Option<PathBuf>,
    /// Difference family as JSON, inline or `@file`.
    #[arg(long, value_name = "JSON")]
    generator: Option<String>,
    /// Horizon n.
    #[arg(long)]
    n: usize,
    /// Moment grid for tables built from generators.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Replicates for empirical tables and adjudication.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Args)]
struct MultiplierArgs {
    /// Moment table CSV of the multipliers; rows with `p = inf` carry the essential supremum.
    #[arg(long, value_name = "FILE")]
    b: Option<PathBuf>,
    /// Multiplier family as JSON, inline or `@file`.
    #[arg(long, value_name = "JSON")]
    multiplier: Option<String>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[command(flatten)]
    xi: XiArgs,
    #[arg(long)]
    p: f64,
}

#[derive(Debug, Args)]
struct PairArgs {
    #[command(flatten)]
    xi: XiArgs,
    #[command(flatten)]
    b: MultiplierArgs,
    /// Order p (not used by `theta`).
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_parser = parse_ext)]
    alpha: f64,
    #[arg(long, value_parser = parse_ext)]
    beta: f64,
    #[arg(long, value_parser = parse_ext)]
    lambda: f64,
    #[arg(long, value_parser = parse_ext)]
    mu: f64,
}

#[derive(Debug, Args)]
struct TailArgs {
    /// Psi-function: `sub2`, `r:<r>`, or a JSON file.
    #[arg(long)]
    psi: Option<String>,
    /// GLS norm of the variable.
    #[arg(long, default_value_t = 1.0)]
    norm: f64,
    /// Thresholds u.
    #[arg(long, value_delimiter = ',', required = true)]
    u: Vec<f64>,
    /// Gaussian-style pipeline: build theta from these families and compare
    /// with the simulated tail of n^-1/2 W(n).
    #[arg(long, value_name = "JSON")]
    generator: Option<String>,
    #[arg(long, value_name = "JSON")]
    multiplier: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Args)]
struct SharpnessArgs {
    /// Print the limiting constant C.
    #[arg(long)]
    constant_c: bool,
    /// Integer orders p.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    p: Vec<u32>,
    /// Stored dyadic levels; defaults to the most the budget allows.
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_CELL_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = 7)]
    precision: usize,
}

#[derive(Debug, Args)]
struct ZetaArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 7)]
    precision: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_name = "JSON")]
    generator: String,
    #[arg(long, value_name = "JSON")]
    multiplier: Option<String>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: usize,
    /// Orders of the reported norms.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    p: Vec<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// `default` or `quick`.
    #[arg(long, default_value = "default")]
    preset: String,
    /// Override the replicate count of the preset.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Args)]
struct EntropyArgs {
    /// Analytic entropy model as JSON, inline or `@file`.
    #[arg(long, value_name = "JSON")]
    model: Option<String>,
    /// CSV of points (one coordinate per column, no header) under the Euclidean distance.
    #[arg(long, value_name = "FILE")]
    points: Option<PathBuf>,
    /// Epsilon grid, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Psi of the GLS criterion: `sub2`, `r:<r>` or a JSON file.
    #[arg(long, default_value = "sub2")]
    psi: String,
    /// Exponent of the Pisier criterion.
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    /// Evaluate only `r > d / alpha` for `d,alpha,r`.
    #[arg(long, value_delimiter = ',')]
    holder: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Flatten this verify report into CSV instead.
    #[arg(long, value_name = "FILE")]
    verify: Option<PathBuf>,
}

fn parse_ext(s: &str) -> std::result::Result<f64, String> {
    match s {
        "inf" | "Inf" | "infinity" => Ok(f64::INFINITY),
        _ => s.parse::<f64>().map_err(|e| e.to_string()),
    }
}

/// Global state shared by the subcommands.
struct Context<'a> {
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    force: bool,
    stdout: &'a mut (dyn Write + Send),
}

impl Context<'_> {
    fn seed(&self, what: &str) -> Result<u64> {
        self.seed.ok_or_else(|| Error::domain(format!("{what} is stochastic and needs --seed")))
    }

    /// Writes `content` to `<out>/<name>` or prints it.
    fn emit(&mut self, name: &str, content: &[u8]) -> Result<()> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join(name);
                check_writable(&path, self.force)?;
                fs::write(&path, content)?;
                Ok(())
            }
            None => {
                self.stdout.write_all(content)?;
                if !content.ends_with(b"\n") {
                    self.stdout.write_all(b"\n")?;
                }
                Ok(())
            }
        }
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(name, text.as_bytes())
    }

    /// Prints a short line to stdout regardless of `--out`.
    fn say(&mut self, line: &str) -> Result<()> {
        writeln!(self.stdout, "{line}")?;
        Ok(())
    }
}

fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} exists; pass --force to overwrite", path.display()),
        )));
    }
    Ok(())
}

/// Inline JSON, or the contents of a file when prefixed with `@`.
fn json_arg<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let body = match text.strip_prefix('@') {
        Some(path) => fs::read_to_string(path)?,
        None => text.to_string(),
    };
    Ok(serde_json::from_str(&body)?)
}

fn parse_psi(text: &str) -> Result<PsiFunction> {
    if text == "sub2" {
        return Ok(PsiFunction::Sub2);
    }
    if let Some(r) = text.strip_prefix("r:") {
        let r: f64 = r.parse().map_err(|_| Error::domain(format!("bad psi_r exponent {r:?}")))?;
        return PsiFunction::psi_r(r);
    }
    PsiFunction::load(Path::new(text))
}

/// Inserts the config file's entries as flags right after the subcommand
/// name so that later command-line flags override them.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut config = None;
    let mut sub_at = None;
    let mut k = 1;
    while k < argv.len() {
        let a = &argv[k];
        if a == "--config" {
            config = argv.get(k + 1).cloned();
            k += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if sub_at.is_none() && !a.starts_with('-') {
            sub_at = Some(k);
        } else if sub_at.is_none() && matches!(a.as_str(), "--out" | "--seed" | "--threads") {
            k += 1;
        }
        k += 1;
    }
    let (Some(path), Some(at)) = (config, sub_at) else { return Ok(argv) };
    let value: Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let Value::Object(map) = value else {
        return Err(Error::format("config file must hold a JSON object"));
    };
    let mut extra = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Bool(true) => extra.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => extra.extend([flag, s]),
            Value::Number(x) => extra.extend([flag, x.to_string()]),
            Value::Array(items) if items.iter().all(|x| x.is_number() || x.is_string()) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|x| x.as_str().map_or_else(|| x.to_string(), str::to_string))
                    .collect();
                extra.extend([flag, joined.join(",")]);
            }
            other => extra.extend([flag, other.to_string()]),
        }
    }
    let mut out = argv[..=at].to_vec();
    out.extend(extra);
    out.extend(argv[at + 1..].iter().cloned());
    Ok(out)
}

/// Runs the driver on `argv` (including the program name) and returns the
/// process exit code.
pub fn run(argv: Vec<String>, stdout: &mut (dyn Write + Send), stderr: &mut dyn Write) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => return report_error(&e, stderr),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let mut ctx = Context { out: cli.out, seed: cli.seed, threads: cli.threads, force: cli.force, stdout };
    let result = match ctx.threads {
        Some(t) if !matches!(cli.command, Command::Verify(_)) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli.command, &mut ctx))),
        _ => dispatch(&cli.command, &mut ctx),
    };
    match result {
        Ok(code) => code,
        Err(e) => report_error(&e, stderr),
    }
}

fn report_error(e: &Error, stderr: &mut dyn Write) -> i32 {
    let body = json!({ "error": e.kind(), "message": e.to_string() });
    let _ = writeln!(stderr, "{body}");
    EXIT_ERROR
}

fn dispatch(cmd: &Command, ctx: &mut Context) -> Result<i32> {
    let done = match cmd {
        Command::BoundMartingale(a) => cmd_bound_martingale(a, ctx),
        Command::BoundTransform(a) => cmd_bound_transform(a, ctx),
        Command::OptimizeQuad(a) => cmd_optimize(a, ctx),
        Command::Theta(a) => cmd_theta(a, ctx),
        Command::Tail(a) => cmd_tail(a, ctx),
        Command::Sharpness(a) => cmd_sharpness(a, ctx),
        Command::Zeta(a) => cmd_zeta(a, ctx),
        Command::Simulate(a) => cmd_simulate(a, ctx),
        Command::Verify(a) => return cmd_verify(a, ctx),
        Command::Entropy(a) => cmd_entropy(a, ctx),
        Command::Report(a) => cmd_report(a, ctx),
    };
    done.map(|()| 0)
}

/// Moment tables and the families they came from.
struct Inputs {
    xi: MomentTable,
    b: Option<MomentTable>,
    generator: Option<Generator>,
    multiplier: Option<MultiplierSpec>,
}

fn load_inputs(x: &XiArgs, m: Option<&MultiplierArgs>, ctx: &Context) -> Result<Inputs> {
    let grid = x.grid.clone().unwrap_or_else(|| DEFAULT_TABLE_GRID.to_vec());
    let generator: Option<Generator> = x.generator.as_deref().map(json_arg).transpose()?;
    let multiplier: Option<MultiplierSpec> = m.and_then(|m| m.multiplier.as_deref()).map(json_arg).transpose()?;
    if let Some(g) = &generator {
        g.validate(x.n)?;
    }
    if let Some(mm) = &multiplier {
        mm.validate()?;
    }
    let need_b = m.is_some();
    let xi_exact = generator.as_ref().and_then(|g| g.exact_table(&grid, x.n));
    let b_exact = multiplier.as_ref().and_then(|mm| mm.exact_table(&grid, x.n));
    let empirical_needed =
        (generator.is_some() && xi_exact.is_none()) || (multiplier.is_some() && b_exact.is_none());
    let summary = if empirical_needed {
        let reps = x.reps.ok_or_else(|| Error::domain("an empirical moment table needs --reps"))?;
        let seed = ctx.seed("building an empirical moment table")?;
        Some(summarize(&StreamSpec {
            generator: generator.clone().ok_or_else(|| Error::domain("multiplier tables from families need --generator"))?,
            checkpoints: vec![x.n],
            reps,
            seed,
            multipliers: multiplier.iter().cloned().collect(),
            p_values: vec![2.0],
            tail_u: vec![],
            table_grid: Some(grid.clone()),
        })?)
    } else {
        None
    };
    let xi = match (&x.xi, xi_exact) {
        (Some(path), _) => MomentTable::load(path)?,
        (None, Some(t)) => t,
        (None, None) => match summary.as_ref().and_then(|s| s.xi_table.clone()) {
            Some(t) => t.table,
            None => return Err(Error::domain("pass --xi FILE or --generator JSON")),
        },
    };
    let b = if need_b {
        let m = m.expect("multiplier args present");
        Some(match (&m.b, b_exact) {
            (Some(path), _) => MomentTable::load(path)?,
            (None, Some(t)) => t,
            (None, None) => match summary.as_ref().and_then(|s| s.b_tables.first().cloned().flatten()) {
                Some(t) => t.table,
                None => return Err(Error::domain("pass --b FILE or --multiplier JSON")),
            },
        })
    } else {
        None
    };
    Ok(Inputs { xi, b, generator, multiplier })
}

/// Simulates `n^-1/2 S(n)` or `n^-1/2 W(n)` at `p` when a generator and
/// `--reps` are available; returns `(empirical, halfwidth, seed, label)`.
fn simulate_norm(
    inputs: &Inputs,
    x: &XiArgs,
    p: f64,
    ctx: &Context,
    transform: bool,
) -> Result<Option<(f64, Option<f64>, u64, String)>> {
    let (Some(g), Some(reps)) = (&inputs.generator, x.reps) else { return Ok(None) };
    if transform && inputs.multiplier.is_none() {
        return Ok(None);
    }
    let seed = ctx.seed("adjudication")?;
    let multipliers: Vec<MultiplierSpec> = if transform { inputs.multiplier.iter().cloned().collect() } else { vec![] };
    let summary = summarize(&StreamSpec {
        generator: g.clone(),
        checkpoints: vec![x.n],
        reps,
        seed,
        multipliers: multipliers.clone(),
        p_values: vec![p],
        tail_u: vec![],
        table_grid: None,
    })?;
    let stats = if transform { &summary.w[0][0] } else { &summary.s[0] };
    let label = match multipliers.first() {
        Some(m) => format!("{}+{}", g.name(), m.name()),
        None => g.name().to_string(),
    };
    Ok(Some((stats.norms[0].value, stats.norms[0].halfwidth, seed, label)))
}

fn bound_output(
    bound: f64,
    p: f64,
    n: usize,
    quad: Option<HolderQuadruple>,
    sim: Option<(f64, Option<f64>, u64, String)>,
) -> Value {
    match sim {
        Some((emp, hw, seed, label)) => {
            let mut r = BoundReport::new(bound, emp, hw, p, n, label, seed, DEFAULT_VIOLATION_WIDTHS);
            if let Some(q) = quad {
                r = r.with_quadruple(q);
            }
            serde_json::to_value(r).expect("report serialises")
        }
        None => {
            let mut v = json!({ "bound": bound, "p": p, "n": n, "bound_provenance": Provenance::Formula });
            if let Some(q) = quad {
                v["quadruple"] = serde_json::to_value(q).expect("quadruple serialises");
            }
            v
        }
    }
}

fn cmd_bound_martingale(a: &BoundArgs, ctx: &mut Context) -> Result<()> {
    let inputs = load_inputs(&a.xi, None, ctx)?;
    let bound = bound_martingale(&inputs.xi, a.p, a.xi.n)?;
    let sim = simulate_norm(&inputs, &a.xi, a.p, ctx, false)?;
    let v = bound_output(bound, a.p, a.xi.n, None, sim);
    ctx.emit_json("bound_martingale.json", &v)
}

fn require_p(p: Option<f64>) -> Result<f64> {
    p.ok_or_else(|| Error::domain("--p is required"))
}

fn cmd_bound_transform(a: &TransformArgs, ctx: &mut Context) -> Result<()> {
    let p = require_p(a.pair.p)?;
    let quad = HolderQuadruple::new(a.alpha, a.beta, a.lambda, a.mu)?;
    let inputs = load_inputs(&a.pair.xi, Some(&a.pair.b), ctx)?;
    let b = inputs.b.as_ref().expect("multiplier table loaded");
    let bound = bound_transform(b, &inputs.xi, p, a.pair.xi.n, &quad)?;
    let sim = simulate_norm(&inputs, &a.pair.xi, p, ctx, true)?;
    let v = bound_output(bound, p, a.pair.xi.n, Some(quad), sim);
    ctx.emit_json("bound_transform.json", &v)
}

fn cmd_optimize(a: &PairArgs, ctx: &mut Context) -> Result<()> {
    let p = require_p(a.p)?;
    let inputs = load_inputs(&a.xi, Some(&a.b), ctx)?;
    let b = inputs.b.as_ref().expect("multiplier table loaded");
    let opt = optimize_quadruple(b, &inputs.xi, p, a.xi.n)?;
    let sim = simulate_norm(&inputs, &a.xi, p, ctx, true)?;
    let mut v = bound_output(opt.value, p, a.xi.n, Some(opt.quadruple), sim);
    v["probed"] = json!(opt.probed);
    v["excluded"] = json!(opt.excluded);
    ctx.emit_json("optimize_quad.json", &v)
}

fn cmd_theta(a: &PairArgs, ctx: &mut Context) -> Result<()> {
    let inputs = load_inputs(&a.xi, Some(&a.b), ctx)?;
    let b = inputs.b.as_ref().expect("multiplier table loaded");
    let theta = theta_function(b, &inputs.xi, a.xi.n)?;
    let PsiFunction::Grid { p, values, .. } = &theta else { unreachable!("theta is a grid psi") };
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["p", "theta"])?;
    for (p, v) in p.iter().zip(values) {
        wr.write_record([p.to_string(), v.to_string()])?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    ctx.emit("theta.csv", &bytes)?;
    if ctx.out.is_some() {
        ctx.emit_json("theta.json", &theta.to_json())?;
    }
    Ok(())
}

fn cmd_tail(a: &TailArgs, ctx: &mut Context) -> Result<()> {
    if let (Some(g), Some(m)) = (&a.generator, &a.multiplier) {
        return tail_pipeline(a, g, m, ctx);
    }
    let psi = parse_psi(a.psi.as_deref().unwrap_or("sub2"))?;
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["u", "bound"])?;
    for &u in &a.u {
        wr.write_record([u.to_string(), tail_bound(&psi, a.norm, u)?.to_string()])?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    ctx.emit("tail.csv", &bytes)
}

/// One row of the tail pipeline.
#[derive(Debug, Serialize)]
struct TailRow {
    u: f64,
    bound: f64,
    empirical: f64,
    lower: f64,
    upper: f64,
    count: u64,
    resolvable: bool,
    dominates: bool,
}

fn tail_pipeline(a: &TailArgs, g: &str, m: &str, ctx: &mut Context) -> Result<()> {
    let generator: Generator = json_arg(g)?;
    let multiplier: MultiplierSpec = json_arg(m)?;
    let n = a.n.ok_or_else(|| Error::domain("the tail pipeline needs --n"))?;
    let reps = a.reps.ok_or_else(|| Error::domain("the tail pipeline needs --reps"))?;
    let seed = ctx.seed("the tail pipeline")?;
    let grid = DEFAULT_TABLE_GRID.to_vec();
    let xi = generator
        .exact_table(&grid, n)
        .ok_or_else(|| Error::domain("the tail pipeline needs a difference family with exact moments"))?;
    let b = multiplier
        .exact_table(&grid, n)
        .ok_or_else(|| Error::domain("the tail pipeline needs a multiplier family with exact moments"))?;
    let theta = theta_function(&b, &xi, n)?;
    let summary = summarize(&StreamSpec {
        generator,
        checkpoints: vec![n],
        reps,
        seed,
        multipliers: vec![multiplier],
        p_values: vec![2.0],
        tail_u: a.u.clone(),
        table_grid: None,
    })?;
    let stats = &summary.w[0][0];
    let rows: Vec<TailRow> = stats
        .tails
        .iter()
        .map(|t| {
            let bound = if t.u > 0.0 { tail_bound(&theta, 1.0, t.u)? } else { 1.0 };
            Ok(TailRow {
                u: t.u,
                bound,
                empirical: t.estimate,
                lower: t.lower,
                upper: t.upper,
                count: t.count,
                resolvable: t.resolvable,
                dominates: t.estimate <= bound,
            })
        })
        .collect::<Result<_>>()?;
    let fit = fit_tail_decay(&stats.tails);
    let mut wr = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        wr.serialize(r)?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    ctx.emit("tail.csv", &bytes)?;
    let fit_json = |f: Option<crate::numeric::LineFit>| {
        f.map(|f| json!({ "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared }))
    };
    let summary_json = json!({
        "n": n,
        "reps": reps,
        "seed": seed,
        "null_atom": stats.null_atom,
        "all_dominated": rows.iter().all(|r| r.dominates),
        "decay_fit_linear_u": fit_json(fit.linear),
        "decay_fit_sqrt_u": fit_json(fit.sqrt),
    });
    if ctx.out.is_some() {
        ctx.emit_json("tail_summary.json", &summary_json)
    } else {
        ctx.say(&summary_json.to_string())
    }
}

fn cmd_sharpness(a: &SharpnessArgs, ctx: &mut Context) -> Result<()> {
    if a.constant_c {
        let text = format!("{:.*}", a.precision, constant_c());
        return ctx.emit("constant_c.txt", text.as_bytes());
    }
    let rows = a
        .p
        .iter()
        .map(|&p| {
            let levels = a.levels.unwrap_or_else(|| DyadicMartingale::max_levels(p, a.budget));
            lower_bound_ratio(p, levels, a.budget)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut buf = Vec::new();
    write_sharpness_csv(&rows, &mut buf)?;
    ctx.emit("sharpness.csv", &buf)
}

fn cmd_zeta(a: &ZetaArgs, ctx: &mut Context) -> Result<()> {
    let text = format!("{:.*}", a.precision, zeta(a.p)?);
    ctx.emit("zeta.txt", text.as_bytes())
}

fn cmd_simulate(a: &SimulateArgs, ctx: &mut Context) -> Result<()> {
    let seed = ctx.seed("simulate")?;
    let generator: Generator = json_arg(&a.generator)?;
    let batch = generate(&SimulationSpec { generator, n: a.n, reps: a.reps, seed })?;
    let batch = match &a.multiplier {
        Some(m) => attach_multipliers(&batch, &json_arg(m)?)?,
        None => batch,
    };
    let norms = empirical_norms(&batch, &a.p)?;
    let summary = json!({
        "generator": batch.spec().generator,
        "multiplier": batch.multiplier_spec(),
        "n": a.n,
        "reps": a.reps,
        "seed": seed,
        "s_norms": norms.s,
        "w_norms": norms.w,
        "empirical_provenance": Provenance::Mc,
    });
    if let Some(dir) = ctx.out.clone() {
        fs::create_dir_all(&dir)?;
        let xi_path = dir.join("xi.bin");
        check_writable(&xi_path, ctx.force)?;
        batch.xi_matrix()?.save(&xi_path)?;
        if let Some(b) = batch.multiplier_matrix() {
            let b_path = dir.join("b.bin");
            check_writable(&b_path, ctx.force)?;
            b?.save(&b_path)?;
        }
    }
    ctx.emit_json("simulate.json", &summary)
}

fn cmd_verify(a: &VerifyArgs, ctx: &mut Context) -> Result<i32> {
    let seed = ctx.seed("verify")?;
    let mut config = VerifyConfig::preset(&a.preset, seed)?;
    if let Some(r) = a.reps {
        config.reps = r;
    }
    let report = run_verify(&config, ctx.threads)?;
    let mut text = report.to_json()?;
    text.push('\n');
    ctx.emit("verify.json", text.as_bytes())?;
    let s = &report.summary;
    if ctx.out.is_some() {
        ctx.say(&format!(
            "{} adjudications: {} hold, {} violated, {} inconclusive",
            s.adjudications, s.holds, s.violated, s.inconclusive
        ))?;
    }
    Ok(if report.any_violated() { EXIT_VIOLATED } else { 0 })
}

fn cmd_entropy(a: &EntropyArgs, ctx: &mut Context) -> Result<()> {
    if let Some(h) = &a.holder {
        if h.len() != 3 {
            return Err(Error::domain("--holder takes d,alpha,r"));
        }
        let d = h[0];
        if d.fract() != 0.0 || d < 1.0 {
            return Err(Error::domain("holder dimension d must be a positive integer"));
        }
        let ok = holder_condition(d as u32, h[1], h[2])?;
        return ctx.emit_json("holder.json", &json!({ "d": d, "alpha": h[1], "r": h[2], "condition": ok }));
    }
    let psi = parse_psi(&a.psi)?;
    let (profile, model) = match (&a.model, &a.points) {
        (Some(m), _) => {
            let model: EntropyModel = json_arg(m)?;
            let eps = a.eps.clone().unwrap_or_else(|| (0..20).map(|k| 0.5f64.powi(k)).collect());
            (EntropyProfile::from_model(&model, &eps)?, Some(model))
        }
        (None, Some(path)) => {
            let mut rd = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
            let mut pts = Vec::new();
            for rec in rd.records() {
                let rec = rec?;
                pts.push(rec.iter().map(crate::gls::parse_f64).collect::<Result<Vec<f64>>>()?);
            }
            let d = DistanceMatrix::euclidean(&pts)?;
            let eps = match &a.eps {
                Some(e) => e.clone(),
                None => {
                    let diam = d.diameter().max(f64::MIN_POSITIVE);
                    (0..24).map(|k| diam * 0.75f64.powi(k)).collect()
                }
            };
            (covering_entropy(&d, &eps)?, None)
        }
        (None, None) => return Err(Error::domain("pass --model JSON, --points FILE or --holder d,alpha,r")),
    };
    let source = match model {
        Some(m) => EntropySource::Model(m),
        None => EntropySource::Profile(&profile),
    };
    let verdicts = vec![integral_gls(&psi, source)?, integral_pisier(source, a.r)?, integral_dudley(source)?];
    if ctx.out.is_some() {
        let mut buf = Vec::new();
        profile.write_csv(&mut buf)?;
        ctx.emit("entropy_profile.csv", &buf)?;
    }
    ctx.emit_json("entropy_verdicts.json", &verdicts)
}

fn cmd_report(a: &ReportArgs, ctx: &mut Context) -> Result<()> {
    match &a.verify {
        Some(path) => {
            let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            let mut wr = csv::Writer::from_writer(Vec::new());
            wr.write_record([
                "kind",
                "generator",
                "p",
                "n",
                "bound",
                "empirical",
                "halfwidth",
                "verdict",
                "bound_provenance",
                "empirical_provenance",
                "tolerance",
            ])?;
            let cell = |x: &Value| match x {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                other => other.to_string(),
            };
            let mut push = |kind: &str, r: &Value| -> Result<()> {
                let fields = ["generator", "p", "n", "bound", "empirical", "halfwidth", "verdict"]
                    .iter()
                    .chain(&["bound_provenance", "empirical_provenance", "tolerance"])
                    .map(|k| cell(&r[*k]));
                let row: Vec<String> = std::iter::once(kind.to_string()).chain(fields).collect();
                wr.write_record(&row)?;
                Ok(())
            };
            let empty = Vec::new();
            for r in v["martingale"].as_array().unwrap_or(&empty) {
                push("martingale", r)?;
            }
            for t in v["transform"].as_array().unwrap_or(&empty) {
                push("transform", &t["report"])?;
            }
            let bytes = wr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            ctx.emit("verify_table.csv", &bytes)
        }
        None => {
            let zetas: Vec<Value> = [2.0, 4.0, 8.0, 16.0, 32.0, 50.0]
                .iter()
                .map(|&p| {
                    Ok(json!({
                        "p": p,
                        "zeta": zeta(p)?,
                        "series_bound": series_bound(p)?,
                        "limit_formula": limit_formula(p)?,
                        "mp_bracket": mp_bracket(p).map(|b| json!({"lower": b.lower, "upper": b.upper, "valid": b.valid}))?,
                    }))
                })
                .collect::<Result<_>>()?;
            let report = json!({
                "constant_c": constant_c(),
                "series_bound_limit": series_bound_limit(),
                "provenance": Provenance::Formula,
                "orders": zetas,
            });
            ctx.emit_json("report.json", &report)
        }
    }
}
