use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mgc_core::harness::{
    catalog, compare_files, evaluate_checkpoint, load_scenario_ref, replay_manifest, run_experiment,
};
use mgc_core::network::{
    solve_power_flow, total_loss, violation_report, NetworkFile, NetworkTopology, NodalInjection, PowerFlowOptions,
};
use mgc_core::trpo::{Algorithm, Checkpoint};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "mgc", version, about = "Risk-sensitive multi-agent dispatch for microgrid clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a scenario, or replay a manifest.
    Run(RunArgs),
    /// Evaluate a checkpoint with the deterministic policy.
    Evaluate(EvaluateArgs),
    /// Aggregate `report.json` files into summary tables.
    Compare(CompareArgs),
    /// Solve the base-case power flow and report voltage violations.
    PowerFlowCheck(PowerFlowArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Bundled scenario id or config file path.
    #[arg(long, required_unless_present = "manifest")]
    scenario: Option<String>,
    /// Replay this manifest instead of reading a scenario.
    #[arg(long, conflicts_with_all = ["scenario", "algorithm", "seed", "alpha", "iterations", "batch_size"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// May be repeated; replaces the config's seed list.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Report files or run directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PowerFlowArgs {
    /// Network file path or `builtin:ieee33`.
    #[arg(long, default_value = "builtin:ieee33")]
    network: String,
    #[arg(long, default_value_t = 1.0)]
    load_scale: f64,
    /// Writes `violations.csv` here when given.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<()> {
    let reports = if let Some(manifest) = &args.manifest {
        replay_manifest(manifest, &args.out_dir)?
    } else {
        let reference = args.scenario.as_deref().expect("clap requires --scenario");
        let (scenario, mut cfg, data) = load_scenario_ref(reference)?;
        if let Some(a) = args.algorithm {
            cfg.algorithm = a;
        }
        if let Some(a) = args.alpha {
            cfg.alpha = a;
        }
        if let Some(n) = args.iterations {
            cfg.iterations = n;
        }
        if let Some(d) = args.batch_size {
            cfg.batch_size = d;
        }
        if !args.seed.is_empty() {
            cfg.seeds = args.seed.clone();
        }
        run_experiment(&scenario, &cfg, &data, &args.out_dir)?
    };
    for r in &reports {
        println!(
            "seed {:>4}  {}  initial {:>10.2}  final {:>10.2}  cvar {:>10.2}  renewable {:.3}",
            r.seed,
            r.algorithm,
            r.initial_eval.mean_return,
            r.final_eval.mean_return,
            r.final_eval.cvar_return,
            r.final_eval.renewable_share
        );
    }
    println!("outputs in {}", args.out_dir.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (scenario, _, data) = load_scenario_ref(&args.scenario)?;
    let ckpt = Checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let eval = evaluate_checkpoint(&scenario, &data, &ckpt, args.episodes, &args.out_dir)?;
    println!(
        "episodes {}  mean {:.2}  cvar {:.2}  min {:.2}  renewable {:.3}  max voltage deviation {:.4}",
        eval.episodes, eval.mean_return, eval.cvar_return, eval.min_return, eval.renewable_share, eval.voltage_max_dev
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let cmp = compare_files(&args.inputs, &args.out_dir)?;
    for g in &cmp.groups {
        println!(
            "{:<24} runs {:>2}  mean {:>10.2}  cvar {:>10.2}  renewable {:.3}  voltage {:.4}",
            g.label(),
            g.runs,
            g.mean_return,
            g.cvar_return,
            g.renewable_share,
            g.voltage_max_dev
        );
    }
    for d in &cmp.pairwise {
        println!("{} vs {}: mean {:+.2}%  cvar {:+.2}%", d.a, d.b, d.mean_return_pct, d.cvar_return_pct);
    }
    Ok(())
}

fn power_flow_check(args: PowerFlowArgs) -> Result<()> {
    let file = match args.network.strip_prefix("builtin:") {
        Some(id) => match catalog::builtin_data(id) {
            Some(text) if id != "fleet" => NetworkFile::from_toml_str(text)?,
            _ => bail!("no bundled network `{id}`"),
        },
        None => NetworkFile::load(&PathBuf::from(&args.network))?,
    };
    let topology = NetworkTopology::new(file)?;
    let injections = NodalInjection::from_base_loads(&topology, args.load_scale);
    let started = Instant::now();
    let solution = solve_power_flow(&topology, &injections, &PowerFlowOptions::default())?;
    let elapsed = started.elapsed();
    let report = violation_report(&solution, &topology)?;
    println!(
        "{} buses  {} sweeps  residual {:.2e} p.u.  loss {:.4} MW  min voltage {:.4} p.u.  {:.3} ms",
        topology.n_buses(),
        solution.iterations,
        solution.residual,
        total_loss(&solution, &topology)?,
        solution.min_voltage(),
        elapsed.as_secs_f64() * 1e3
    );
    println!("{} buses outside the band, max deviation {:.4} p.u.", report.violations.len(), report.max_deviation);
    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("violations.csv");
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(file)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::PowerFlowCheck(a) => power_flow_check(a),
    }
}
