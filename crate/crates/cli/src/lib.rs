//! Command-line driver: analytical bound reports, policy optimization,
//! simulation cross-checks, baseline comparisons, parameter sweeps and the
//! mean/tail tradeoff frontier. Every command is deterministic given
//! (config, seed) and writes CSV artifacts into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use stallbound::analysis::bound_report;
use stallbound::baselines::{make_baseline, PolicyKind};
use stallbound::model::{AccessMatrix, AuxVars, Placement, SystemConfig};
use stallbound::optimizer::{
    alternate, clamp_aux, feasible_init, tightest_aux, SolverSettings, Solution,
};
use stallbound::schema::read_config;
use stallbound::simulator::{run_simulation, SimSettings};
use stallbound::Error;

#[derive(Debug, Parser)]
#[command(
    name = "stallbound",
    about = "Stall-duration bounds, policy optimization and simulation for erasure-coded video clusters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Cluster/workload description (text schema).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for CSV artifacts (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the tradeoff weight from the config.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Override the tail threshold (seconds) from the config.
    #[arg(long)]
    pub x: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound report for the seeded default policy (random placement,
    /// projected equal access, tuned bound parameters).
    Analyze(CommonArgs),
    /// Full alternating optimization; writes the final policy and the
    /// objective trace.
    Optimize(CommonArgs),
    /// Simulate the seeded default policy and verify the analytical bounds
    /// against the empirical estimates.
    Simulate(SimulateArgs),
    /// The five restricted policies plus the full optimizer, side by side.
    Baselines(CommonArgs),
    /// Sweep one system parameter; each point reports the optimizer and all
    /// baselines.
    Sweep(SweepArgs),
    /// Tradeoff frontier over a grid of tradeoff weights.
    Tradeoff(TradeoffArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Total simulated requests.
    #[arg(long, default_value_t = 50_000)]
    pub horizon: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: u32,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Arrival-rate multipliers, e.g. 0.5,1.0,2.0
    #[arg(long, value_delimiter = ',')]
    pub arrival_scale: Vec<f64>,
    /// Catalog truncations (file counts).
    #[arg(long, value_delimiter = ',')]
    pub files: Vec<usize>,
    /// Cluster truncations (server counts).
    #[arg(long, value_delimiter = ',')]
    pub servers: Vec<usize>,
    /// Erasure codes n:k, e.g. 10:6,11:6
    #[arg(long, value_delimiter = ',')]
    pub code: Vec<String>,
    /// Parallel stream counts.
    #[arg(long, value_delimiter = ',')]
    pub streams: Vec<u32>,
    /// Tail thresholds (seconds).
    #[arg(long, value_delimiter = ',')]
    pub x_list: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TradeoffArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Grid size over [0, 1].
    #[arg(long, default_value_t = 11)]
    pub points: usize,
}

/// CLI failure: a stable category plus a one-line detail.
#[derive(Debug)]
pub struct CliError {
    pub category: String,
    pub detail: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error: {}: {}", self.category, self.detail)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            category: e.category().to_string(),
            detail: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            category: "io".into(),
            detail: e.to_string(),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Optimize(args) => optimize(args),
        Command::Simulate(args) => simulate(args),
        Command::Baselines(args) => baselines(args),
        Command::Sweep(args) => sweep(args),
        Command::Tradeoff(args) => tradeoff(args),
    }
}

fn load(common: &CommonArgs) -> Result<SystemConfig, CliError> {
    let mut cfg = read_config(&common.config)?;
    if let Some(theta) = common.theta {
        cfg.tradeoff = theta;
    }
    if let Some(x) = common.x {
        cfg.tail_threshold = x;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), content)?;
    Ok(())
}

/// Seeded default policy: uniform random placement, equal access projected
/// to feasibility, bound parameters tuned at fixed access.
fn default_policy(
    cfg: &SystemConfig,
    seed: u64,
) -> Result<(Placement, AccessMatrix, AuxVars), CliError> {
    let outcome = make_baseline(PolicyKind::RpPea, cfg, seed, &SolverSettings::default())?;
    Ok((outcome.placement, outcome.pi, outcome.aux))
}

/// Arrival-weighted mean-bound and tail-bound aggregates of a policy, at the
/// tightest per-metric bound parameters (the policy is (placement, access);
/// the bound parameters only control bound tightness).
fn weighted_terms(cfg: &SystemConfig, pi: &AccessMatrix) -> Result<(f64, f64), CliError> {
    let aux = tightest_aux(cfg, pi)?;
    let report = bound_report(cfg, pi, &aux)?;
    let total = cfg.total_arrival_rate();
    if total <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut mean = 0.0;
    let mut tail = 0.0;
    for (f, row) in cfg.files.iter().zip(&report.per_file) {
        let w = f.arrival_rate / total;
        mean += w * row.mean_bound;
        tail += w * row.tail_bound;
    }
    Ok((mean, tail))
}

fn analyze(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load(&args)?;
    let (_, pi, aux) = default_policy(&cfg, args.seed)?;
    let report = bound_report(&cfg, &pi, &aux)?;
    write_artifact(&args.out, "bounds.csv", &report.to_csv())
}

fn access_csv(pi: &AccessMatrix) -> String {
    let mut out = String::from("file,server,pi\n");
    for (i, row) in pi.pi.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            writeln!(out, "{i},{j},{p}").unwrap();
        }
    }
    out
}

fn placement_csv(placement: &Placement) -> String {
    let mut out = String::from("file,server\n");
    for (i, set) in placement.sets.iter().enumerate() {
        for j in set {
            writeln!(out, "{i},{j}").unwrap();
        }
    }
    out
}

fn aux_csv(aux: &AuxVars) -> String {
    let mut out = String::from("file,t_mean,t_tail\n");
    for i in 0..aux.t_mean.len() {
        writeln!(out, "{i},{},{}", aux.t_mean[i], aux.t_tail[i]).unwrap();
    }
    out
}

fn optimize(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load(&args)?;
    let settings = SolverSettings {
        seed: args.seed,
        ..SolverSettings::default()
    };
    let init = feasible_init(&cfg, args.seed)?;
    let (solution, trace) = alternate(&cfg, &init, &settings)?;
    let report = bound_report(&cfg, &solution.pi, &solution.aux)?;
    write_artifact(&args.out, "trace.csv", &trace.to_csv())?;
    write_artifact(&args.out, "access.csv", &access_csv(&solution.pi))?;
    write_artifact(&args.out, "placement.csv", &placement_csv(&solution.placement))?;
    write_artifact(&args.out, "aux.csv", &aux_csv(&solution.aux))?;
    write_artifact(&args.out, "bounds.csv", &report.to_csv())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = load(&args.common)?;
    let (placement, pi, aux) = default_policy(&cfg, args.common.seed)?;
    let report = bound_report(&cfg, &pi, &aux)?;
    let mut settings = SimSettings::requests(args.horizon, args.common.seed);
    settings.replications = args.replications;
    let sim = run_simulation(&cfg, &pi, &placement, &settings)?;
    write_artifact(&args.common.out, "sim.csv", &sim.to_csv())?;

    let mut cmp = String::from(
        "file,mean_bound,sim_mean,sim_se,mean_ok,x,tail_bound,sim_tail,sim_tail_se,tail_ok\n",
    );
    let mut violation: Option<String> = None;
    for (row, stats) in report.per_file.iter().zip(&sim.per_file) {
        if stats.samples < 2 {
            continue;
        }
        let mean_ok = stats.mean_stall <= row.mean_bound + 2.0 * stats.mean_stall_se;
        let tail = &stats.tails[0];
        let tail_ok = tail.probability <= row.tail_bound + 2.0 * tail.stderr;
        writeln!(
            cmp,
            "{},{},{},{},{},{},{},{},{},{}",
            row.file,
            row.mean_bound,
            stats.mean_stall,
            stats.mean_stall_se,
            mean_ok,
            tail.x,
            row.tail_bound,
            tail.probability,
            tail.stderr,
            tail_ok
        )
        .unwrap();
        if !mean_ok && violation.is_none() {
            violation = Some(format!(
                "file {}: simulated mean stall {} exceeds bound {} by more than 2 stderr",
                row.file, stats.mean_stall, row.mean_bound
            ));
        }
        if !tail_ok && violation.is_none() {
            violation = Some(format!(
                "file {}: empirical tail {} at x = {} exceeds bound {} by more than 2 stderr",
                row.file, tail.probability, tail.x, row.tail_bound
            ));
        }
    }
    write_artifact(&args.common.out, "compare.csv", &cmp)?;
    match violation {
        Some(detail) => Err(CliError {
            category: "bound-violation".into(),
            detail,
        }),
        None => Ok(()),
    }
}

/// One policy row: the optimizer or a baseline, with its weighted terms.
fn policy_rows(cfg: &SystemConfig, seed: u64) -> Result<Vec<(String, f64, f64, f64)>, CliError> {
    let settings = SolverSettings {
        seed,
        ..SolverSettings::default()
    };
    let mut rows = Vec::new();
    let init = feasible_init(cfg, seed)?;
    let (solution, _) = alternate(cfg, &init, &settings)?;
    let (mean, tail) = weighted_terms(cfg, &solution.pi)?;
    rows.push(("optimized".to_string(), solution.objective, mean, tail));
    for kind in PolicyKind::ALL {
        let outcome = make_baseline(kind, cfg, seed, &settings)?;
        let (mean, tail) = weighted_terms(cfg, &outcome.pi)?;
        rows.push((kind.to_string(), outcome.objective, mean, tail));
    }
    Ok(rows)
}

fn baselines(args: CommonArgs) -> Result<(), CliError> {
    let cfg = load(&args)?;
    let rows = policy_rows(&cfg, args.seed)?;
    let mut out = String::from("policy,objective,weighted_mean_bound,weighted_tail_bound\n");
    for (name, obj, mean, tail) in rows {
        writeln!(out, "{name},{obj},{mean},{tail}").unwrap();
    }
    write_artifact(&args.out, "baselines.csv", &out)
}

#[derive(Debug, Clone)]
enum SweepPoint {
    ArrivalScale(f64),
    Files(usize),
    Servers(usize),
    Code(u32, u32),
    Streams(u32),
    TailThreshold(f64),
}

impl SweepPoint {
    fn axis(&self) -> &'static str {
        match self {
            SweepPoint::ArrivalScale(_) => "arrival_scale",
            SweepPoint::Files(_) => "files",
            SweepPoint::Servers(_) => "servers",
            SweepPoint::Code(..) => "code",
            SweepPoint::Streams(_) => "streams",
            SweepPoint::TailThreshold(_) => "x",
        }
    }

    fn label(&self) -> String {
        match self {
            SweepPoint::ArrivalScale(v) => format!("{v}"),
            SweepPoint::Files(v) => format!("{v}"),
            SweepPoint::Servers(v) => format!("{v}"),
            SweepPoint::Code(n, k) => format!("{n}:{k}"),
            SweepPoint::Streams(v) => format!("{v}"),
            SweepPoint::TailThreshold(v) => format!("{v}"),
        }
    }

    fn apply(&self, base: &SystemConfig) -> Result<SystemConfig, CliError> {
        let mut cfg = base.clone();
        match *self {
            SweepPoint::ArrivalScale(s) => {
                for f in &mut cfg.files {
                    f.arrival_rate *= s;
                }
            }
            SweepPoint::Files(n) => {
                if n == 0 || n > cfg.files.len() {
                    return Err(CliError {
                        category: "config".into(),
                        detail: format!(
                            "sweep file count {n} outside 1..={}",
                            cfg.files.len()
                        ),
                    });
                }
                cfg.files.truncate(n);
            }
            SweepPoint::Servers(m) => {
                if m == 0 || m > cfg.servers.len() {
                    return Err(CliError {
                        category: "config".into(),
                        detail: format!(
                            "sweep server count {m} outside 1..={}",
                            cfg.servers.len()
                        ),
                    });
                }
                cfg.servers.truncate(m);
                for f in &mut cfg.files {
                    f.cached_prefix.retain(|&j, _| j < m);
                    if (f.coded_chunks as usize) > m {
                        return Err(CliError {
                            category: "config".into(),
                            detail: format!(
                                "file {} needs n = {} servers, sweep keeps {m}",
                                f.id, f.coded_chunks
                            ),
                        });
                    }
                }
            }
            SweepPoint::Code(n, k) => {
                for f in &mut cfg.files {
                    f.coded_chunks = n;
                    f.data_chunks = k;
                }
            }
            SweepPoint::Streams(y) => cfg.streams_per_server = y,
            SweepPoint::TailThreshold(x) => cfg.tail_threshold = x,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_code(raw: &str) -> Result<(u32, u32), CliError> {
    let (n, k) = raw.split_once(':').ok_or_else(|| CliError {
        category: "config".into(),
        detail: format!("code {raw:?} not in n:k form"),
    })?;
    let parse = |v: &str| {
        v.parse::<u32>().map_err(|_| CliError {
            category: "config".into(),
            detail: format!("cannot parse code component {v:?}"),
        })
    };
    Ok((parse(n)?, parse(k)?))
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let cfg = load(&args.common)?;
    let mut points: Vec<SweepPoint> = Vec::new();
    points.extend(args.arrival_scale.iter().map(|&v| SweepPoint::ArrivalScale(v)));
    points.extend(args.files.iter().map(|&v| SweepPoint::Files(v)));
    points.extend(args.servers.iter().map(|&v| SweepPoint::Servers(v)));
    for raw in &args.code {
        let (n, k) = parse_code(raw)?;
        points.push(SweepPoint::Code(n, k));
    }
    points.extend(args.streams.iter().map(|&v| SweepPoint::Streams(v)));
    points.extend(args.x_list.iter().map(|&v| SweepPoint::TailThreshold(v)));
    if points.is_empty() {
        return Err(CliError {
            category: "config".into(),
            detail: "sweep needs at least one selector (--arrival-scale, --files, --servers, --code, --streams, --x-list)".into(),
        });
    }
    let seed = args.common.seed;
    let results: Vec<Result<Vec<String>, CliError>> = points
        .par_iter()
        .map(|point| {
            let cfg = point.apply(&cfg)?;
            let rows = policy_rows(&cfg, seed).map_err(|e| CliError {
                category: e.category,
                detail: format!("{} {}: {}", point.axis(), point.label(), e.detail),
            })?;
            Ok(rows
                .into_iter()
                .map(|(name, obj, mean, tail)| {
                    format!(
                        "{},{},{name},{obj},{mean},{tail}",
                        point.axis(),
                        point.label()
                    )
                })
                .collect())
        })
        .collect();
    let mut out =
        String::from("param,value,policy,objective,weighted_mean_bound,weighted_tail_bound\n");
    for res in results {
        for line in res? {
            out.push_str(&line);
            out.push('\n');
        }
    }
    write_artifact(&args.common.out, "sweep.csv", &out)
}

fn tradeoff(args: TradeoffArgs) -> Result<(), CliError> {
    let cfg = load(&args.common)?;
    if args.points < 2 {
        return Err(CliError {
            category: "config".into(),
            detail: "tradeoff needs at least 2 grid points".into(),
        });
    }
    let seed = args.common.seed;
    let thetas: Vec<f64> = (0..args.points)
        .map(|i| i as f64 / (args.points - 1) as f64)
        .collect();
    let settings = SolverSettings {
        seed,
        ..SolverSettings::default()
    };
    let solve = |theta: f64, init: &stallbound::optimizer::Initialization| -> Result<Solution, CliError> {
        let mut cfg = cfg.clone();
        cfg.tradeoff = theta;
        Ok(alternate(&cfg, init, &settings)?.0)
    };
    let warm_start = |s: &Solution| -> Result<stallbound::optimizer::Initialization, CliError> {
        Ok(stallbound::optimizer::Initialization {
            placement: s.placement.clone(),
            pi: s.pi.clone(),
            aux: clamp_aux(&cfg, &s.pi, &s.aux)?,
        })
    };
    let fresh = feasible_init(&cfg, seed)?;
    // non-convex frontier: chain warm starts up and down the grid and keep
    // the best candidate at each point
    let mut solutions: Vec<Solution> = Vec::with_capacity(thetas.len());
    for (idx, &theta) in thetas.iter().enumerate() {
        let mut best = solve(theta, &fresh)?;
        if idx > 0 {
            let warm = solve(theta, &warm_start(&solutions[idx - 1])?)?;
            if warm.objective < best.objective {
                best = warm;
            }
        }
        solutions.push(best);
    }
    for idx in (0..thetas.len().saturating_sub(1)).rev() {
        let warm = solve(thetas[idx], &warm_start(&solutions[idx + 1])?)?;
        if warm.objective < solutions[idx].objective {
            solutions[idx] = warm;
        }
    }
    let mut out =
        String::from("theta,weighted_mean_bound,weighted_tail_bound,objective,converged\n");
    for (theta, solution) in thetas.iter().zip(&solutions) {
        let (mean, tail) = weighted_terms(&cfg, &solution.pi)?;
        writeln!(
            out,
            "{theta},{mean},{tail},{},{}",
            solution.objective, solution.converged
        )
        .unwrap();
    }
    write_artifact(&args.common.out, "tradeoff.csv", &out)
}
