//! The `csgrw` command line. [`run`] takes argv and writers so it can be
//! driven from tests; exit codes are 0 on success, 1 on usage errors and 2 on
//! runtime errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::ast::{Dim, Expr};
use crate::exec::execute_hard;
use crate::graft::{CacheConfig, SubexprCache};
use crate::grid::{OccupancyGrid, Shape};
use crate::io::{self, DatasetManifest};
use crate::metrics::{chamfer, iou, objective, ObjectiveConfig, Recon};
use crate::parse::{parse, parse_any, print};
use crate::prune::{oracle_cp, rewrite_cp};
use crate::rewriters::{Rewriter, RewriterSuite};
use crate::siri::{LoopConfig, MemorizingRetriever, Mode, ProposalSource, RandomSampler, SiriLoop};
use crate::ttr::{ttr_report, TtrConfig};

pub const SEED_ENV: &str = "COREF_SEED";

#[derive(Parser, Debug)]
#[command(name = "csgrw", version, about = "Rewrite and evaluate CSG shape programs", args_override_self = true)]
pub struct Cli {
    /// Master seed; falls back to $COREF_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// key=value file with flag defaults; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to every core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Sample random programs and write them with their grids.
    GenData(GenDataArgs),
    /// Execute a program into an occupancy grid file.
    Execute(ExecuteArgs),
    /// Render a grid or program to PGM (plus a voxel list in 3D).
    Render(RenderArgs),
    /// Score a program against a target grid as one CSV row.
    Eval(EvalArgs),
    /// Parameter optimization.
    Po(PoArgs),
    /// Code pruning.
    Cp(CpArgs),
    /// Code grafting from a sub-expression cache.
    Cg(CgArgs),
    /// Test-time rewriting with all rewriters.
    Ttr(TtrArgs),
    /// Bootstrapped training loop over a dataset.
    Siri(SiriArgs),
    /// Summarize a sub-expression cache.
    CacheStats(CacheStatsArgs),
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 2)]
    pub depth_max: usize,
    /// Grid resolution; defaults to 64 in 2D and 32 in 3D.
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ExecuteArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct RenderArgs {
    #[arg(long, required_unless_present = "program", conflicts_with = "program")]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub program: Option<PathBuf>,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Objective settings shared by every scoring command.
#[derive(Args, Debug, Clone)]
pub struct ObjectiveArgs {
    /// Length penalty per program token.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `iou` or `chamfer`; defaults to chamfer in 2D and iou in 3D.
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub obj: ObjectiveArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct PoArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub obj: ObjectiveArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct CpArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Exhaustive search over the sub-program space instead of the greedy passes.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub obj: ObjectiveArgs,
}

/// Where a sub-expression cache comes from.
#[derive(Args, Debug, Clone)]
pub struct CacheArgs {
    /// Cache file written by `siri` or `--save-cache`.
    #[arg(long, conflicts_with = "corpus")]
    pub cache: Option<PathBuf>,
    /// Dataset directory whose programs fill a fresh cache.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub save_cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct CgArgs {
    #[arg(long)]
    pub program: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 4)]
    pub max_repl: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub obj: ObjectiveArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct TtrArgs {
    /// Single program; pair with --target.
    #[arg(long, requires = "target", conflicts_with = "dataset")]
    pub program: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Dataset directory; pair with --programs.
    #[arg(long, requires = "programs", required_unless_present = "program")]
    pub dataset: Option<PathBuf>,
    /// `id<TAB>program` lines as written by `siri`.
    #[arg(long)]
    pub programs: Option<PathBuf>,
    /// Rounds over the rewriter order.
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    /// Comma-separated rewriter order.
    #[arg(long, default_value = "po,cp,cg")]
    pub order: String,
    #[arg(long, default_value_t = 250)]
    pub po_steps: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines trace of every rewriter step.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub cache: CacheArgs,
    #[command(flatten)]
    pub obj: ObjectiveArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SiriArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// `siri`, `plad` or `p+r`.
    #[arg(long, default_value = "siri")]
    pub mode: String,
    #[arg(long, default_value_t = 5)]
    pub rounds: usize,
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    #[arg(long, default_value_t = 0.5)]
    pub frac_po: f64,
    #[arg(long, default_value_t = 0.5)]
    pub frac_cp: f64,
    #[arg(long, default_value_t = 0.15)]
    pub frac_cg: f64,
    #[arg(long, default_value_t = 250)]
    pub po_steps: usize,
    /// `memorizing` or `random`.
    #[arg(long, default_value = "memorizing")]
    pub proposer: String,
    /// Pretraining corpus size for the memorizing proposer.
    #[arg(long, default_value_t = 200)]
    pub pretrain: usize,
    #[arg(long, default_value_t = 2)]
    pub depth_max: usize,
    /// Output directory for history.csv, programs.tsv, store.txt and cache.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub obj: ObjectiveArgs,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct CacheStatsArgs {
    #[command(flatten)]
    pub cache: CacheArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn rt(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code. Diagnostics go to `err`.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match parse_argv(argv) {
        Ok(cli) => match dispatch(cli, out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                e.code()
            }
        },
        Err(ParseOutcome::Exit(text)) => {
            let _ = write!(out, "{text}");
            0
        }
        Err(ParseOutcome::Fail(text)) => {
            let _ = write!(err, "{text}");
            1
        }
    }
}

enum ParseOutcome {
    /// Help or version text.
    Exit(String),
    Fail(String),
}

fn clap_outcome(e: clap::Error) -> ParseOutcome {
    use clap::error::ErrorKind;
    let text = e.render().to_string();
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ParseOutcome::Exit(text),
        _ => ParseOutcome::Fail(text),
    }
}

/// Parses argv, then re-parses with `--config` values spliced in right after
/// the subcommand name so that later command-line flags override them.
fn parse_argv(argv: &[String]) -> Result<Cli, ParseOutcome> {
    let first = Cli::try_parse_from(argv).map_err(clap_outcome)?;
    let Some(cfg_path) = first.config.clone() else {
        return Ok(first);
    };
    let fail = |m: String| ParseOutcome::Fail(format!("error: {m}\n"));
    let file = fs::File::open(&cfg_path).map_err(|e| fail(format!("cannot read {}: {e}", cfg_path.display())))?;
    let kv = io::read_key_values(BufReader::new(file)).map_err(|e| fail(format!("{}: {e}", cfg_path.display())))?;
    let root = Cli::command();
    let name = subcommand_name(&first.cmd);
    let sub = root.find_subcommand(name).expect("parsed subcommand exists");
    let mut spliced = Vec::new();
    for (key, value) in &kv {
        if key == "config" {
            return Err(fail("a config file cannot name another config".into()));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| fail(format!("unknown config key `{key}` for `{name}`")))?;
        if arg.get_action().takes_values() {
            spliced.push(format!("--{key}"));
            spliced.push(value.clone());
        } else {
            match value.as_str() {
                "true" => spliced.push(format!("--{key}")),
                "false" => {}
                _ => return Err(fail(format!("config key `{key}` takes true or false"))),
            }
        }
    }
    let at = argv.iter().position(|a| a == name).expect("subcommand token present") + 1;
    let mut full: Vec<String> = argv[..at].to_vec();
    full.extend(spliced);
    full.extend_from_slice(&argv[at..]);
    Cli::try_parse_from(&full).map_err(clap_outcome)
}

fn subcommand_name(c: &Cmd) -> &'static str {
    match c {
        Cmd::GenData(_) => "gen-data",
        Cmd::Execute(_) => "execute",
        Cmd::Render(_) => "render",
        Cmd::Eval(_) => "eval",
        Cmd::Po(_) => "po",
        Cmd::Cp(_) => "cp",
        Cmd::Cg(_) => "cg",
        Cmd::Ttr(_) => "ttr",
        Cmd::Siri(_) => "siri",
        Cmd::CacheStats(_) => "cache-stats",
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = resolve_seed(cli.seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(rt)?;
    let mut buf = Vec::new();
    let res = pool.install(|| run_cmd(cli.cmd, seed, &mut buf));
    out.write_all(&buf).map_err(rt)?;
    res
}

fn run_cmd(cmd: Cmd, seed: u64, out: &mut Vec<u8>) -> Result<(), CliError> {
    match cmd {
        Cmd::GenData(a) => gen_data(a, seed, out),
        Cmd::Execute(a) => execute_cmd(a, out),
        Cmd::Render(a) => render(a, out),
        Cmd::Eval(a) => eval(a, out),
        Cmd::Po(a) => po(a, seed, out),
        Cmd::Cp(a) => cp(a, out),
        Cmd::Cg(a) => cg(a, seed, out),
        Cmd::Ttr(a) => ttr(a, seed, out),
        Cmd::Siri(a) => siri(a, seed, out),
        Cmd::CacheStats(a) => cache_stats(a, seed, out),
    }
}

fn dim_of(axes: usize) -> Result<Dim, CliError> {
    Dim::from_axes(axes).ok_or_else(|| usage(format!("--dim must be 2 or 3, got {axes}")))
}

fn read_program_any(p: &Path) -> Result<Expr, CliError> {
    let text = fs::read_to_string(p).map_err(|e| rt(format!("{}: {e}", p.display())))?;
    parse_any(text.trim()).map_err(|e| rt(format!("{}: {e}", p.display())))
}

fn read_grid(p: &Path) -> Result<OccupancyGrid, CliError> {
    io::read_grid(p).map_err(|e| rt(format!("{}: {e}", p.display())))
}

/// Program and target, checked for matching dimension.
fn load_pair(program: &Path, target: &Path) -> Result<(Expr, OccupancyGrid), CliError> {
    let x = read_grid(target)?;
    let text = fs::read_to_string(program).map_err(|e| rt(format!("{}: {e}", program.display())))?;
    let z = parse(text.trim(), x.dim()).map_err(|e| rt(format!("{}: {e}", program.display())))?;
    Ok((z, x))
}

fn objective_config(a: &ObjectiveArgs, dim: Dim) -> Result<ObjectiveConfig, CliError> {
    let mut cfg = ObjectiveConfig::for_dim(dim);
    if let Some(m) = &a.metric {
        cfg = cfg.with_recon(match m.as_str() {
            "iou" => Recon::Iou,
            "chamfer" => Recon::NegChamfer,
            _ => return Err(usage(format!("--metric must be iou or chamfer, got `{m}`"))),
        });
    }
    if let Some(w) = a.alpha {
        if w.is_nan() || w < 0.0 {
            return Err(usage("--alpha must be non-negative"));
        }
        cfg = cfg.with_length_weight(w);
    }
    Ok(cfg)
}

fn write_program(p: &Path, z: &Expr) -> Result<(), CliError> {
    io::write_program(p, z).map_err(|e| rt(format!("{}: {e}", p.display())))
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(rt)
}

fn gen_data(a: GenDataArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let dim = dim_of(a.dim)?;
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let shape = Shape::cubic(dim, a.res.unwrap_or(dim.default_resolution()));
    let m = io::gen_data_at(shape, a.count, a.depth_max, seed, &a.out).map_err(rt)?;
    emit(out, format!("wrote {} shapes to {}", m.items.len(), a.out.display()))
}

fn execute_cmd(a: ExecuteArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let z = read_program_any(&a.program)?;
    let dim = z.dim();
    let g = execute_hard(&z, &Shape::cubic(dim, a.res.unwrap_or(dim.default_resolution())));
    io::write_grid(&a.out, &g).map_err(rt)?;
    emit(out, format!("{} occupied of {}", g.count(), g.len()))
}

fn render(a: RenderArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let g = match (&a.grid, &a.program) {
        (Some(p), _) => read_grid(p)?,
        (None, Some(p)) => {
            let z = read_program_any(p)?;
            execute_hard(&z, &Shape::cubic(z.dim(), a.res.unwrap_or(z.dim().default_resolution())))
        }
        (None, None) => return Err(usage("render needs --grid or --program")),
    };
    for p in io::render(&g, &a.out).map_err(rt)? {
        emit(out, p.display())?;
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (z, x) = load_pair(&a.program, &a.target)?;
    let cfg = objective_config(&a.obj, x.dim())?;
    let g = execute_hard(&z, x.shape());
    let s = objective(&x, &z, &cfg);
    emit(out, "iou,chamfer,length,objective")?;
    emit(
        out,
        format!(
            "{:.6},{:.6},{},{:.6}",
            iou(&x, &g).map_err(rt)?,
            chamfer(&x, &g).map_err(rt)?,
            s.length,
            s.objective
        ),
    )
}

/// Prints `before,after,changed` and writes the (possibly unchanged) program.
fn report_rewrite(out: &mut dyn Write, x: &OccupancyGrid, z: &Expr, next: Option<Expr>, obj: &ObjectiveConfig, path: &Path) -> Result<(), CliError> {
    let before = objective(x, z, obj).objective;
    let changed = next.is_some();
    let best = next.unwrap_or_else(|| z.clone());
    write_program(path, &best)?;
    emit(out, "objective_before,objective_after,changed")?;
    emit(out, format!("{:.6},{:.6},{}", before, objective(x, &best, obj).objective, changed))
}

fn po(a: PoArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let (z, x) = load_pair(&a.program, &a.target)?;
    let obj = objective_config(&a.obj, x.dim())?;
    let cfg = crate::po::PoConfig {
        steps: a.steps,
        lr: a.lr,
        seed,
        ..Default::default()
    };
    let next = crate::po::rewrite_po(&x, &z, &cfg, &obj);
    report_rewrite(out, &x, &z, next, &obj, &a.out)
}

fn cp(a: CpArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (z, x) = load_pair(&a.program, &a.target)?;
    let obj = objective_config(&a.obj, x.dim())?;
    let next = if a.oracle {
        let o = oracle_cp(&x, &z, &obj).map_err(rt)?;
        (objective(&x, &o, &obj).objective > objective(&x, &z, &obj).objective).then_some(o)
    } else {
        rewrite_cp(&x, &z, &obj, &Default::default())
    };
    report_rewrite(out, &x, &z, next, &obj, &a.out)
}

/// Loads or builds the cache described by `a`, saving it when asked.
fn load_cache(a: &CacheArgs, dim: Option<Dim>, seed: u64) -> Result<SubexprCache, CliError> {
    let cache = match (&a.cache, &a.corpus) {
        (Some(p), _) => {
            let f = fs::File::open(p).map_err(|e| rt(format!("{}: {e}", p.display())))?;
            SubexprCache::read_from(BufReader::new(f), seed).map_err(|e| rt(format!("{}: {e}", p.display())))?
        }
        (None, Some(dir)) => {
            let m = DatasetManifest::load(dir).map_err(rt)?;
            let mut c = SubexprCache::new(CacheConfig {
                seed,
                ..CacheConfig::for_dim(m.shape.dim)
            });
            for (i, z) in m.load_programs().map_err(rt)?.into_iter().enumerate() {
                if let Some(z) = z {
                    c.insert_program(i, &z);
                }
            }
            c
        }
        (None, None) => {
            let dim = dim.ok_or_else(|| usage("needs --cache or --corpus"))?;
            SubexprCache::new(CacheConfig {
                seed,
                ..CacheConfig::for_dim(dim)
            })
        }
    };
    if dim.is_some_and(|d| d != cache.cfg.dim) {
        return Err(rt("cache dimension does not match the target"));
    }
    if let Some(p) = &a.save_cache {
        save_cache(p, &cache)?;
    }
    Ok(cache)
}

fn save_cache(p: &Path, c: &SubexprCache) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(fs::File::create(p).map_err(rt)?);
    c.write_to(&mut f).map_err(rt)?;
    f.flush().map_err(rt)
}

fn cg(a: CgArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let (z, x) = load_pair(&a.program, &a.target)?;
    let obj = objective_config(&a.obj, x.dim())?;
    let cache = load_cache(&a.cache, Some(x.dim()), seed)?;
    let cfg = crate::graft::CgConfig {
        k: a.k,
        max_repl: a.max_repl,
        ..Default::default()
    };
    let next = crate::graft::rewrite_cg(&x, &z, &cache, &obj, &cfg);
    report_rewrite(out, &x, &z, next, &obj, &a.out)
}

fn parse_order(s: &str) -> Result<Vec<Rewriter>, CliError> {
    s.split(',')
        .map(|t| Rewriter::from_name(t.trim()).ok_or_else(|| usage(format!("unknown rewriter `{t}` in --order"))))
        .collect()
}

/// `id<TAB>program` lines.
pub fn read_program_table(p: &Path, dim: Dim) -> Result<BTreeMap<usize, Expr>, CliError> {
    let text = fs::read_to_string(p).map_err(|e| rt(format!("{}: {e}", p.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (id, prog) = l.split_once('\t').ok_or_else(|| rt(format!("bad program line `{l}`")))?;
            let id = id.trim().parse().map_err(|_| rt(format!("bad shape id `{id}`")))?;
            Ok((id, parse(prog.trim(), dim).map_err(rt)?))
        })
        .collect()
}

pub fn write_program_table(p: &Path, progs: &BTreeMap<usize, Expr>) -> Result<(), CliError> {
    let text: String = progs.iter().map(|(id, z)| format!("{id}\t{}\n", print(z))).collect();
    fs::write(p, text).map_err(rt)
}

fn ttr(a: TtrArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let order = parse_order(&a.order)?;
    let jobs: Vec<(usize, Expr, OccupancyGrid)> = match (&a.program, &a.target, &a.dataset, &a.programs) {
        (Some(p), Some(t), _, _) => {
            let (z, x) = load_pair(p, t)?;
            vec![(0, z, x)]
        }
        (None, _, Some(d), Some(ps)) => {
            let m = DatasetManifest::load(d).map_err(rt)?;
            let grids = m.load_grids().map_err(rt)?;
            let progs = read_program_table(ps, m.shape.dim)?;
            let mut jobs = Vec::new();
            for (id, z) in progs {
                let x = grids.get(id).ok_or_else(|| rt(format!("shape {id} is not in the dataset")))?;
                jobs.push((id, z, x.clone()));
            }
            jobs
        }
        _ => return Err(usage("ttr needs --program with --target, or --dataset with --programs")),
    };
    let Some(dim) = jobs.first().map(|j| j.2.dim()) else {
        return Err(rt("no programs to rewrite"));
    };
    let obj = objective_config(&a.obj, dim)?;
    let cache = load_cache(&a.cache, Some(dim), seed)?;
    let mut suite = RewriterSuite::new(obj);
    suite.po.steps = a.po_steps;
    let cfg = TtrConfig {
        k: a.rounds,
        order,
        suite,
        seed,
    };
    let mut results = BTreeMap::new();
    let mut trace = String::new();
    emit(out, "id,objective_before,objective_after")?;
    for (id, z, x) in &jobs {
        let (best, steps) = ttr_report(x, z, &cache, &cfg);
        for s in steps {
            let mut v = serde_json::to_value(&s).map_err(rt)?;
            v["id"] = (*id).into();
            v["millis"] = serde_json::Value::Null;
            trace.push_str(&v.to_string());
            trace.push('\n');
        }
        emit(
            out,
            format!("{id},{:.6},{:.6}", objective(x, z, &obj).objective, objective(x, &best, &obj).objective),
        )?;
        results.insert(*id, best);
    }
    if let Some(p) = &a.trace {
        fs::write(p, trace).map_err(rt)?;
    }
    if a.program.is_some() {
        write_program(&a.out, &results[&0])
    } else {
        write_program_table(&a.out, &results)
    }
}

fn siri(a: SiriArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let mode = Mode::from_name(&a.mode).ok_or_else(|| usage(format!("unknown --mode `{}`", a.mode)))?;
    let train_m = DatasetManifest::load(&a.train).map_err(rt)?;
    let dim = train_m.shape.dim;
    if train_m.shape != Shape::default_for(dim) {
        return Err(rt("training grids must use the default resolution for their dimension"));
    }
    let train = train_m.load_grids().map_err(rt)?;
    let val = match &a.val {
        Some(d) => {
            let m = DatasetManifest::load(d).map_err(rt)?;
            if m.shape != train_m.shape {
                return Err(rt("validation grids do not match the training grids"));
            }
            m.load_grids().map_err(rt)?
        }
        None => Vec::new(),
    };
    let mut cfg = LoopConfig::new(dim, mode);
    cfg.seed = seed;
    cfg.rounds = a.rounds;
    cfg.beam = a.beam;
    cfg.frac_po = a.frac_po;
    cfg.frac_cp = a.frac_cp;
    cfg.frac_cg = a.frac_cg;
    cfg.suite.obj = objective_config(&a.obj, dim)?;
    cfg.suite.po.steps = a.po_steps;
    for f in [a.frac_po, a.frac_cp, a.frac_cg] {
        if !(0.0..=1.0).contains(&f) {
            return Err(usage("rewrite fractions must lie in [0, 1]"));
        }
    }
    let mut src: Box<dyn ProposalSource> = match a.proposer.as_str() {
        "memorizing" => Box::new(MemorizingRetriever::pretrained(dim, a.pretrain, a.depth_max, seed)),
        "random" => Box::new(RandomSampler::new(dim, a.depth_max)),
        p => return Err(usage(format!("unknown --proposer `{p}`"))),
    };
    let n = train.len();
    let mut lp = SiriLoop::new(cfg, train, val, src.as_mut());
    fs::create_dir_all(&a.out).map_err(rt)?;
    let h = lp.run();
    fs::write(a.out.join("history.csv"), h.to_csv()).map_err(rt)?;
    let best: BTreeMap<usize, Expr> = (0..n)
        .filter_map(|id| lp.store.best(id).map(|e| (id, e.program.clone())))
        .collect();
    write_program_table(&a.out.join("programs.tsv"), &best)?;
    fs::write(a.out.join("store.txt"), lp.store.snapshot()).map_err(rt)?;
    save_cache(&a.out.join("cache.txt"), &lp.cache)?;
    if let Some(v) = h.final_val_objective() {
        emit(out, format!("final val objective {v:.6}"))?;
    }
    emit(out, format!("train objective {:.6}", lp.train_objective()))
}

fn cache_stats(a: CacheStatsArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let c = load_cache(&a.cache, None, seed)?;
    emit(out, "entries,capacity,threshold,mean_length,min_pairwise_distance")?;
    let min = c.min_pairwise_distance().map_or("-".to_string(), |d| d.to_string());
    emit(
        out,
        format!("{},{},{},{:.6},{}", c.len(), c.cfg.capacity, c.cfg.threshold, c.mean_length(), min),
    )
}
