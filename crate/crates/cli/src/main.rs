use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vcache::scenario::{Congestion, ScenarioConfig};
use vcache::{Error, Result, Snapshot};
use vcache_harness::verify::{run_suite, VerifyOptions};
use vcache_harness::{aggregate, run_experiment, ExperimentSpec, SolverKind, SummaryRow};

#[derive(Parser)]
#[command(name = "vcache", version, about = "Vehicular edge caching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a materialized scenario snapshot per seed.
    Generate(WorldArgs),
    /// Run solvers over seeds and congestion levels.
    Run(RunArgs),
    /// Run a grid of trade-off weights.
    Sweep(RunArgs),
    /// Check the invariant suite; exits nonzero on any failure.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct WorldArgs {
    /// TOML scenario config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// none, light, moderate or heavy; comma-separated for several.
    #[arg(long, value_delimiter = ',')]
    congestion: Vec<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// ocda-exact, bqpso-da, greedy or random; comma-separated for several.
    #[arg(long, value_delimiter = ',', default_value = "ocda-exact")]
    solver: Vec<String>,
    /// Trade-off weight; comma-separated for a grid.
    #[arg(long = "v-weight", value_delimiter = ',')]
    v_weight: Vec<f64>,
    /// Per-slot energy budget in joules.
    #[arg(long, default_value_t = 35.0)]
    budget: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 60)]
    horizon: usize,
}

const SWEEP_GRID: [f64; 5] = [1e-3, 2e-3, 4e-3, 8e-3, 1.5e-2];

fn load_config(path: Option<&Path>, horizon: Option<usize>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(h) = horizon {
        cfg.horizon_slots = h;
    }
    Ok(cfg)
}

fn congestion_list(names: &[String], cfg: &ScenarioConfig) -> Result<Vec<Congestion>> {
    if names.is_empty() {
        return Ok(vec![cfg.congestion]);
    }
    names.iter().map(|n| n.parse()).collect()
}

fn generate(args: &WorldArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), args.horizon)?;
    vcache_harness::output::prepare_dir(&args.out)?;
    for congestion in congestion_list(&args.congestion, &cfg)? {
        for &seed in &args.seeds {
            let snap = Snapshot::capture(ScenarioConfig { seed, congestion, ..cfg.clone() })?;
            let path = args.out.join(format!("scenario_{}_s{seed}.json", congestion.name()));
            std::fs::write(&path, snap.to_json())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn print_summary(rows: &[SummaryRow]) {
    println!(
        "{:<11} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7} {:>6}  ranking",
        "solver", "v", "congest", "energy", "value", "backlog", "maxdelay", "hit", "viol"
    );
    for r in rows {
        println!(
            "{:<11} {:>8.1e} {:>9} {:>9.3} {:>9.3} {:>9.3} {:>9.4} {:>7.4} {:>6.1}  {}",
            r.solver,
            r.v_weight,
            r.congestion,
            r.energy_mean,
            r.value_mean,
            r.backlog_mean,
            r.max_delay_mean,
            r.hit_ratio_mean,
            r.violation_slots_mean,
            r.ranking
        );
    }
}

fn run(args: &RunArgs, default_grid: &[f64]) -> Result<()> {
    let cfg = load_config(args.world.config.as_deref(), args.world.horizon)?;
    let solvers = args.solver.iter().map(|s| s.parse()).collect::<Result<Vec<SolverKind>>>()?;
    let v_weights = if args.v_weight.is_empty() { default_grid.to_vec() } else { args.v_weight.clone() };
    let spec = ExperimentSpec {
        congestion: congestion_list(&args.world.congestion, &cfg)?,
        scenario: cfg,
        solvers,
        v_weights,
        budget_j: args.budget,
        seeds: args.world.seeds.clone(),
        out_dir: Some(args.world.out.clone()),
        workers: args.workers,
    };
    let results = run_experiment(&spec)?;
    print_summary(&aggregate(&results)?);
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let cfg = load_config(args.config.as_deref(), Some(args.horizon))?;
    let checks = run_suite(&cfg, &args.seeds, &VerifyOptions::default())?;
    for c in &checks {
        println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<bool> = match &cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Run(a) => run(a, &[4e-3]).map(|_| true),
        Command::Sweep(a) => run(a, &SWEEP_GRID).map(|_| true),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Io(_)) {
                eprintln!("(check that the output directory is writable)");
            }
            ExitCode::FAILURE
        }
    }
}
