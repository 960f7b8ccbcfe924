use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqmem::checkpoint::GateCheckpoint;
use seqmem::config::{ExperimentId, RunConfig};
use seqmem::experiments::BackendKind;
use seqmem::harness;

#[derive(Parser)]
#[command(name = "seqmem", version, about = "Sequence memory experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment's arms across seeds and write the result bundle.
    Run(RunArgs),
    /// Parse a config file, apply defaults, and print the resolved form.
    ValidateConfig {
        /// TOML run configuration.
        config: PathBuf,
    },
    /// Print the contents of a gate checkpoint.
    Inspect {
        /// A `*_gate.json` file written by `run`.
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the result bundle (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Experiment to run; overrides the config's `experiment` field.
    #[arg(long)]
    exp: Option<ExperimentId>,
    /// Override the config's seed list (repeat or comma-separate).
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Override the config's backend.
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Run only these arms (repeat or comma-separate).
    #[arg(long = "arms", value_delimiter = ',')]
    arms: Vec<String>,
}

fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load_with(&args.config, args.exp)?;
    if !args.seeds.is_empty() {
        cfg.seeds = args.seeds.clone();
    }
    if let Some(backend) = args.backend {
        cfg.backend = backend;
    }
    if !args.arms.is_empty() {
        cfg.arms = args.arms.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_config(args)?;
    let report = harness::run(&cfg, &args.out)?;
    let s = &report.summary;
    println!(
        "{} on {:?} backend: {} arm(s), {} seed(s) -> {}",
        s.experiment,
        s.backend,
        s.arms.len(),
        cfg.seeds.len(),
        report.out_dir.display()
    );
    for (name, agg) in &s.arms {
        let epochs = agg
            .mean_epochs_to_threshold
            .map(|e| format!("{e:.1}"))
            .unwrap_or_else(|| "-".into());
        let final_acc = agg
            .mean_final_accuracy
            .map(|a| format!("{a:.3}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "  {name}: {}/{} seeds reached {:.2}; mean epochs-to-threshold {epochs}; mean final accuracy {final_acc}",
            agg.seeds_reaching_threshold,
            agg.seeds.len(),
            s.threshold,
        );
    }
    if s.partial {
        eprintln!("bundle is PARTIAL; failed jobs:");
        for e in &s.errors {
            eprintln!("  {e}");
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(config: &PathBuf) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load(config)?;
    let resolved = toml::to_string_pretty(&cfg)
        .map_err(|e| anyhow::anyhow!("render resolved config: {e}"))?;
    println!("# resolved configuration (defaults applied)");
    print!("{resolved}");
    let arms = harness::plan_arms(&cfg);
    println!("\n# arms");
    for arm in arms {
        println!("# - {}", arm.name);
    }
    println!("ok: {}", config.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(path: &PathBuf) -> anyhow::Result<ExitCode> {
    let ck = GateCheckpoint::load(path)?;
    println!("gate checkpoint v{}", ck.version);
    println!("vocab hash:          {}", ck.vocab_hash);
    println!("columns:             {}", ck.m_columns);
    println!("columns per item:    {}", ck.columns_per_item);
    println!("item edges:          {}", ck.edges.len());
    println!("column connections:  {}", ck.column_connections());
    for (a, b) in ck.edges.iter().take(10) {
        println!("  {a} -> {b}");
    }
    if ck.edges.len() > 10 {
        println!("  ... {} more", ck.edges.len() - 10);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::ValidateConfig { config } => cmd_validate(config),
        Command::Inspect { checkpoint } => cmd_inspect(checkpoint),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
