//! `choifit` command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 nonconvergence or
//! infeasibility (including a written solution that fails re-verification).

mod bench;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use choifit::heuristics::rank_scan_with_start;
use choifit::instance_io::{read_instance, read_solution, write_instance, write_solution, InstanceFile, SolutionFile};
use choifit::{
    assemble_operator, certify, facial_reduction_min_rank, generate_from_seed, max_rank_search, solve, ChoiMatrix,
    Error, FeasibilityInstance, GeneratorSpec, HermitianMatrix, Method, RankSearchReport, SolverConfig, Tolerances,
    DEFAULT_SEED,
};
use serde::Serialize;

use crate::config::{BenchGrid, ConfigFile};

#[derive(Parser)]
#[command(name = "choifit", version, about = "Construct quantum channels between given density matrices")]
struct Cli {
    /// TOML file with a default `seed` and a `[solver]` table; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random feasible instance.
    Gen(GenArgs),
    /// Find a channel for an instance with MAP or DR.
    Solve(SolveArgs),
    /// Search for a solution of maximal rank.
    Maxrank(HeuristicArgs),
    /// Lower the rank of a solution by facial reduction.
    Minrank(HeuristicArgs),
    /// Rank-constrained solves with bounds rstart, rstart - 1, ...
    Rankscan(RankscanArgs),
    /// Run a grid of generated instances and write a CSV report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Output dimension; generated instances need m = n.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: usize,
    /// Number of unitaries in the generating channel.
    #[arg(long)]
    r: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave out the unital constraint.
    #[arg(long)]
    no_unital: bool,
    /// Store the generating Choi matrix as P_true.
    #[arg(long)]
    with_truth: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CommonSolverFlags {
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    toler: Option<f64>,
    #[arg(long)]
    iterlimit: Option<usize>,
}

impl CommonSolverFlags {
    fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(t) = self.toler {
            cfg.toler = t;
        }
        if let Some(l) = self.iterlimit {
            cfg.iterlimit = l;
        }
        cfg
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    solver: CommonSolverFlags,
    #[arg(long)]
    rank_bound: Option<usize>,
    /// Solution file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration trace (JSON).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct HeuristicArgs {
    instance: PathBuf,
    #[command(flatten)]
    solver: CommonSolverFlags,
    /// Report file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solution file for the final matrix (JSON).
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Args)]
struct RankscanArgs {
    #[command(flatten)]
    common: HeuristicArgs,
    #[arg(long)]
    rstart: usize,
    /// Start every bound from mn I instead of the previous solution.
    #[arg(long)]
    cold: bool,
}

#[derive(Args)]
struct BenchArgs {
    grid: PathBuf,
    /// CSV report; overrides the grid's `out`. Default: stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Outcome {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::InfeasibleOrHard(_) | Error::InfeasibleAtStart { .. } | Error::InconsistentAffine { .. }) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(args) => gen(&args, &config),
        Command::Solve(args) => solve_cmd(&args, &config),
        Command::Maxrank(args) => {
            let cfg = args.solver.apply(config.solver.clone());
            heuristic(&args, "maxrank", cfg, |op, cfg| max_rank_search(op, cfg))
        }
        Command::Minrank(args) => {
            let cfg = args.solver.apply(config.solver.clone());
            heuristic(&args, "minrank", cfg, |op, cfg| facial_reduction_min_rank(op, cfg))
        }
        Command::Rankscan(args) => {
            let cfg = args.common.solver.apply(config.solver.clone());
            let (rstart, warm) = (args.rstart, !args.cold);
            println!("rstart {rstart}");
            heuristic(&args.common, "rankscan", cfg, |op, cfg| rank_scan_with_start(op, rstart, cfg, warm))
        }
        Command::Bench(args) => {
            let grid = BenchGrid::load(&args.grid)?;
            let base = grid.solver.clone().unwrap_or(config.solver);
            bench::run(&grid, &base, args.out.as_deref().or(grid.out.as_deref()))?;
            Ok(Outcome::Done)
        }
    }
}

fn gen(args: &GenArgs, config: &ConfigFile) -> Result<Outcome> {
    let seed = args.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    let spec = GeneratorSpec {
        n: args.n,
        m: args.m.unwrap_or(args.n),
        k: args.k,
        r: args.r,
        unital: !args.no_unital,
        seed,
    };
    let (instance, p_true) = generate_from_seed(&spec)?;
    let file = InstanceFile { instance, seed: Some(seed), p_true: args.with_truth.then_some(p_true) };
    write_instance(&args.out, &file)?;
    println!("seed {seed}");
    println!("wrote {} (n={} m={} k={} r={})", args.out.display(), spec.n, spec.m, spec.k, spec.r);
    Ok(Outcome::Done)
}

fn load(path: &Path) -> Result<(FeasibilityInstance, choifit::AffineOperator)> {
    let file = read_instance(path)?;
    if let Some(seed) = file.seed {
        println!("seed {seed}");
    }
    let op = assemble_operator(&file.instance)?;
    Ok((file.instance, op))
}

fn solve_cmd(args: &SolveArgs, config: &ConfigFile) -> Result<Outcome> {
    let mut cfg = args.solver.apply(config.solver.clone());
    if args.rank_bound.is_some() {
        cfg.rank_bound = args.rank_bound;
    }
    let (inst, op) = load(&args.instance)?;
    let dim = op.dim();
    let clock = Instant::now();
    let trace = solve(&op, &HermitianMatrix::scaled_identity(dim, dim as f64), &cfg)?;
    let wall = clock.elapsed().as_secs_f64();
    println!("method          {}", cfg.method);
    println!("iterations      {}", trace.iterations);
    println!("converged       {}", trace.converged);
    println!("residual        {:.6e}", trace.final_residual);
    println!("max_cos         {:.6e}", trace.max_cos);
    println!("rank            {}", trace.final_rank);
    println!("psd_seconds     {:.3}", trace.psd_projection_seconds);
    println!("affine_seconds  {:.3}", trace.affine_projection_seconds);
    println!("wall_seconds    {wall:.3}");
    if let Some(path) = &args.trace {
        write_json(path, &trace)?;
    }
    let mut outcome = if trace.converged { Outcome::Done } else { Outcome::NotConverged };
    if let Some(out) = &args.out {
        let choi = trace.choi(inst.input_dim(), inst.output_dim())?;
        let sol = SolutionFile {
            certificate: Some(certify(&inst, &choi)?),
            p: choi,
            method: cfg.method.name().to_string(),
            converged: trace.converged,
            iterations: trace.iterations,
            residual: trace.final_residual,
            rank: trace.final_rank,
            max_cos: trace.max_cos,
            config: cfg,
        };
        write_solution(out, &sol)?;
        if !reverify(out, &args.instance, trace.converged)? {
            outcome = Outcome::NotConverged;
        }
    }
    Ok(outcome)
}

fn heuristic(
    args: &HeuristicArgs,
    name: &str,
    cfg: SolverConfig,
    run: impl FnOnce(&choifit::AffineOperator, &SolverConfig) -> choifit::Result<RankSearchReport>,
) -> Result<Outcome> {
    let (inst, op) = load(&args.instance)?;
    let report = run(&op, &cfg)?;
    println!("rank_steps      {}", report.rank_steps);
    println!("min_iters       {}", report.min_iters);
    println!("max_iters       {}", report.max_iters);
    println!("mean_iters      {:.1}", report.mean_iters);
    println!("max_cos         {:.6e}", report.max_cos);
    println!("achieved_rank   {}", report.achieved_rank);
    println!("rank_sequence   {:?}", report.rank_sequence);
    println!("residual        {:.6e}", report.residual);
    println!("converged       {}", report.converged);
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    let mut outcome = if report.converged { Outcome::Done } else { Outcome::NotConverged };
    if let Some(path) = &args.solution {
        let choi = ChoiMatrix::new(inst.input_dim(), inst.output_dim(), report.final_p.clone())?;
        let sol = SolutionFile {
            certificate: Some(certify(&inst, &choi)?),
            p: choi,
            method: name.to_string(),
            converged: report.converged,
            iterations: (report.mean_iters * report.rank_steps as f64).round() as usize,
            residual: report.residual,
            rank: report.achieved_rank,
            max_cos: report.max_cos,
            config: cfg,
        };
        write_solution(path, &sol)?;
        if !reverify(path, &args.instance, report.converged)? {
            outcome = Outcome::NotConverged;
        }
    }
    Ok(outcome)
}

/// Reloads a written solution and its instance from disk and certifies them
/// from scratch. False when a solution claimed as converged fails.
fn reverify(solution: &Path, instance: &Path, claimed: bool) -> Result<bool> {
    let sol = read_solution(solution)?;
    let inst = read_instance(instance)?.instance;
    let cert = certify(&inst, &sol.p)?;
    println!(
        "verified        residual {:.3e}, min eigenvalue {:.3e}, rank {}",
        cert.residual, cert.min_eigenvalue, cert.rank
    );
    let failures = cert.failures(&Tolerances::default());
    if claimed && !failures.is_empty() {
        eprintln!("{} fails re-verification: {}", solution.display(), failures.join(", "));
        return Ok(false);
    }
    Ok(true)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
