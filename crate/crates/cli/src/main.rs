//! `setmax` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use setmax::discovery::Method;
use setmax::experiment::{
    cmd_al_baseline, cmd_compare, cmd_discover, cmd_gridworld_gen, cmd_solve_w, ExperimentConfig,
};
use setmax::worst_case::SolverConfig;
use setmax::{Error, GridSpec};

#[derive(Parser)]
#[command(name = "setmax", version, about = "Discover policy sets that maximize worst-case value")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML (or .json) experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// worst_case, orthogonal or random
    #[arg(long)]
    method: Option<Method>,
    /// Restrict rewards to the zero-sum subspace
    #[arg(long)]
    zero_mean: bool,
    /// Keep only active policies after each iteration
    #[arg(long)]
    prune: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one discovery and write the policy set, logs and SF matrix
    Discover(Common),
    /// Compare worst-case discovery against the baselines over several seeds
    Compare(Common),
    /// Solve for the worst-case reward of the SFs in a CSV or JSON file
    SolveW {
        sf_file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        zero_mean: bool,
        /// Use the constrained reformulation instead of the subgradient solver
        #[arg(long)]
        qp: bool,
    },
    /// Generate a grid world and write its MDP and ASCII map
    GridworldGen {
        /// Grid spec (TOML or JSON); defaults are used when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the conditional-gradient apprenticeship baseline
    AlBaseline(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(method) = common.method {
        cfg.discovery.method = method;
    }
    if common.zero_mean {
        cfg.discovery.solver.zero_mean = true;
    }
    if common.prune {
        cfg.discovery.prune_inactive = true;
    }
    Ok(cfg)
}

fn solver_config(path: Option<&Path>) -> Result<SolverConfig, Error> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?.discovery.solver),
        None => Ok(SolverConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Discover(common) => {
            let cfg = load_config(&common)?;
            let outcome = cmd_discover(&cfg)?;
            println!(
                "{} policies, final v_bar {} ({:?}); wrote {} files to {}",
                outcome.set.len(),
                outcome.log.final_v_bar(),
                outcome.log.termination,
                outcome.files.len(),
                cfg.out_dir.display()
            );
        }
        Command::Compare(common) => {
            let cfg = load_config(&common)?;
            let cmp = cmd_compare(&cfg)?;
            println!(
                "{} runs up to {} policies; wrote {} files to {}",
                cmp.runs.len(),
                cmp.max_size,
                cmp.files.len(),
                cfg.out_dir.display()
            );
        }
        Command::SolveW {
            sf_file,
            config,
            out,
            zero_mean,
            qp,
        } => {
            let mut solver = solver_config(config.as_deref())?;
            solver.zero_mean |= zero_mean;
            let solution = cmd_solve_w(&sf_file, &solver, qp, out.as_deref())?;
            println!("{}", solution.to_json());
        }
        Command::GridworldGen { config, seed, out } => {
            let mut spec = match &config {
                Some(path) => GridSpec::load(path)?,
                None => GridSpec::default(),
            };
            if let Some(seed) = seed {
                spec.rng_seed = seed;
            }
            let grid = cmd_gridworld_gen(&spec, &out)?;
            print!("{}", grid.render_ascii());
        }
        Command::AlBaseline(common) => {
            let cfg = load_config(&common)?;
            let report = cmd_al_baseline(&cfg)?;
            println!(
                "CG worst-case value {} after {} iterations; discovery v_bar {} with {} policies",
                report.cg.worst_case_value,
                report.cg.iterations,
                report.discovery_v_bar,
                report.discovery_set_size
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
