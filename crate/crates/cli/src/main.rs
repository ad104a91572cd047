use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factored_rl::FmdpSpec;
use factored_rl_cli::config::{parse_seeds, read_json, ExperimentConfig, KnapsackConfig, SpecSource};
use factored_rl_cli::verify::{self, render_table, require_all, DEFAULT_INSTANCES, DEFAULT_TRIALS};
use factored_rl_cli::{experiment, knapsack, thread_pool, Failure};

/// Optimistic learners, oracles and verifiers for episodic factored MDPs.
#[derive(Parser)]
#[command(name = "factored-rl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a regret experiment and write per-run and summary CSVs.
    Run(RunArgs),
    /// Write a generated or loaded spec as JSON.
    Gen(GenArgs),
    /// Run the variance, total-variance and decomposition suites.
    Verify(CheckArgs),
    /// Check the variance identities on a spec or on random chains.
    CheckVariance(CheckArgs),
    /// Run the knapsack learner and write its CSVs.
    Rlwk(RunArgs),
    /// Run an experiment and dump the learners' final scope counts.
    Counts(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds overriding the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; defaults to the config's `out` or `results`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// A spec source JSON, such as `{"kind": "production-line", ...}`.
    #[arg(long)]
    config: PathBuf,
    /// Directory to write `spec.json` into; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// A spec JSON to check instead of random instances.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<String>,
    /// Trials for the randomized row-level suites.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
}

fn out_dir(flag: Option<PathBuf>, configured: Option<&Path>, base: &Path) -> PathBuf {
    flag.unwrap_or_else(|| base.join(configured.unwrap_or(Path::new("results"))))
}

fn seeds_or(flag: Option<&str>, default: Vec<u64>) -> Result<Vec<u64>, Failure> {
    flag.map_or(Ok(default), parse_seeds)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let (mut cfg, base): (ExperimentConfig, _) = read_json(&args.config)?;
    cfg.seeds = seeds_or(args.seeds.as_deref(), cfg.seeds)?;
    let spec = cfg.spec.load(&base)?;
    let out = out_dir(args.out, cfg.out.as_deref(), &base);
    let result = experiment::run_experiment(&spec, &cfg, &out)?;
    for r in &result.records {
        println!("{} seed {}: cumulative regret {}", r.algorithm, r.seed, r.cum_regret());
    }
    println!("wrote {} files to {}", result.files.len(), out.display());
    Ok(())
}

fn counts(args: RunArgs) -> Result<(), Failure> {
    let (mut cfg, base): (ExperimentConfig, _) = read_json(&args.config)?;
    cfg.seeds = seeds_or(args.seeds.as_deref(), cfg.seeds)?;
    let spec = cfg.spec.load(&base)?;
    let out = out_dir(args.out, cfg.out.as_deref(), &base);
    let files = experiment::write_counts(&spec, &cfg, &out)?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let (source, base): (SpecSource, _) = read_json(&args.config)?;
    let json = source.load(&base)?.to_json();
    match args.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
            let path = dir.join("spec.json");
            std::fs::write(&path, json + "\n").map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
        None => {
            // A closed pipe (`| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout().lock(), "{json}");
        }
    }
    Ok(())
}

fn rlwk(args: RunArgs) -> Result<(), Failure> {
    let (mut cfg, base): (KnapsackConfig, _) = read_json(&args.config)?;
    cfg.seeds = seeds_or(args.seeds.as_deref(), cfg.seeds)?;
    let aug = cfg.instance.load(&base)?;
    let out = out_dir(args.out, cfg.out.as_deref(), &base);
    let (records, files) = knapsack::run_knapsack(&aug, &cfg, &out)?;
    for r in &records {
        println!("seed {}: cumulative regret {}", r.seed, r.cum_regret());
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

/// Reads a spec without validating it, so `verify` can report violations.
fn raw_spec(path: Option<&Path>) -> Result<Option<FmdpSpec>, Failure> {
    path.map(|p| read_json::<FmdpSpec>(p).map(|(spec, _)| spec)).transpose()
}

fn check(args: CheckArgs, variance_only: bool) -> Result<(), Failure> {
    let seeds = seeds_or(args.seeds.as_deref(), (0..DEFAULT_INSTANCES).collect())?;
    let spec = raw_spec(args.config.as_deref())?;
    let report = if variance_only {
        let spec = spec.map(FmdpSpec::validated).transpose()?;
        verify::check_variance(spec.as_ref(), &seeds, args.trials)?
    } else {
        verify::verify(spec.as_ref(), &seeds, args.trials)?
    };
    print!("{}", render_table(&report));
    require_all(&report)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let pool = thread_pool()?;
    pool.install(|| match cli.command {
        Command::Run(args) => run(args),
        Command::Gen(args) => gen(args),
        Command::Verify(args) => check(args, false),
        Command::CheckVariance(args) => check(args, true),
        Command::Rlwk(args) => rlwk(args),
        Command::Counts(args) => counts(args),
    })
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
