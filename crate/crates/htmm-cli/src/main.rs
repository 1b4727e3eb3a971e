//! Batch runner for the multiscale pipeline: stages are selected by name
//! (as subcommands or via --stages) and driven by a TOML config.

use clap::{Args, Parser, Subcommand};
use htmm_core::config::{load_config, validate_config, NormalizedConfig};
use htmm_core::mesh::Frac;
use htmm_core::pipeline::{run_pipeline, RunContext, StageOutcome};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "htmm",
    about = "Multiscale FEM pipeline for hygro-thermo-mechanical coupling in quasi-periodic composites",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to the TOML run configuration
    #[arg(short, long)]
    config: PathBuf,

    /// Output directory (defaults to the config's outputs.dir)
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Cell-cache directory (defaults to <out>/cache)
    #[arg(long)]
    cache: Option<PathBuf>,

    /// Comma-separated epsilon list for the convergence stage, e.g. 1/4,1/8,1/16
    #[arg(long)]
    eps: Option<String>,

    /// Worker threads (defaults to the number of cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a configuration, echoing the normalized form
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run the configured stage list (or --stages)
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated stage list overriding the config
        #[arg(long)]
        stages: Option<String>,
    },
    /// Offline stage: solve cell problems and fill the cache
    Cell(CommonArgs),
    /// Write homogenized tensors to CSV
    Homogenize(CommonArgs),
    /// Solve the coupled homogenized problem
    Macro(CommonArgs),
    /// Direct fine-scale reference solve
    Reference(CommonArgs),
    /// Evaluate multiscale reconstructions on the fine mesh
    Reconstruct(CommonArgs),
    /// Error report and residual diagnostics
    Compare(CommonArgs),
    /// Epsilon sweep with fitted convergence rates
    Convergence(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> htmm_core::Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = validate_config(load_config(&config)?)?;
            println!("configuration valid; normalized form:\n");
            println!("{}", cfg.echo());
            Ok(())
        }
        Command::Run { common, stages } => {
            let cfg = validate_config(load_config(&common.config)?)?;
            let list = match &stages {
                Some(s) => split_list(s),
                None => cfg.raw.pipeline.stages.clone(),
            };
            execute(cfg, common, &list)
        }
        Command::Cell(c) => run_single(c, "cell"),
        Command::Homogenize(c) => run_single(c, "homogenize"),
        Command::Macro(c) => run_single(c, "macro"),
        Command::Reference(c) => run_single(c, "reference"),
        Command::Reconstruct(c) => run_single(c, "reconstruct"),
        Command::Compare(c) => run_single(c, "compare"),
        Command::Convergence(c) => run_single(c, "convergence"),
    }
}

fn run_single(common: CommonArgs, stage: &str) -> htmm_core::Result<()> {
    let cfg = validate_config(load_config(&common.config)?)?;
    execute(cfg, common, &[stage.to_string()])
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

fn execute(cfg: NormalizedConfig, common: CommonArgs, stages: &[String]) -> htmm_core::Result<()> {
    let out_dir = common
        .out
        .unwrap_or_else(|| PathBuf::from(&cfg.raw.outputs.dir));
    let cache_root = common.cache.unwrap_or_else(|| out_dir.join("cache"));
    let mut cx = RunContext::new(cfg, &out_dir, &cache_root);
    if let Some(eps) = &common.eps {
        let parsed: htmm_core::Result<Vec<Frac>> =
            split_list(eps).iter().map(|e| Frac::parse(e)).collect();
        cx.eps_override = Some(parsed?);
    }

    let mut body = move || -> htmm_core::Result<()> {
        let report = run_pipeline(&mut cx, stages)?;
        for r in &report.records {
            let outcome = match r.outcome {
                StageOutcome::Computed => "computed",
                StageOutcome::CachedSkip => "cached, skipped",
            };
            println!(
                "stage {:<12} {:>8} nodes {:>8} elements  {:>9.3}s  [{outcome}]",
                r.name, r.nodes, r.elements, r.seconds
            );
        }
        println!(
            "artifacts in {}: {}",
            out_dir.display(),
            report.artifacts.join(", ")
        );
        Ok(())
    };

    match common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| htmm_core::Error::invalid(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}
