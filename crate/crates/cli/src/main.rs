//! Batch runner: `conflap --config run.json --out results/`.
//!
//! Exit status is 0 on success, 2 when a mathematical hypothesis of the
//! requested operation fails (the report names it), and 1 otherwise.

mod config;
mod report;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use config::{ExperimentConfig, Resolved};
use report::{Report, EXIT_ERROR};

#[derive(Debug, Parser)]
#[command(name = "conflap", version, about = "Conformal Laplacian experiments from a JSON config")]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for the report and sweep table; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Forces reproducible solves.
    #[arg(long)]
    reproducible: bool,
    /// Worker threads for independent solves (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn prepare(args: &Args) -> Result<Resolved> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.reproducible {
        cfg.tolerances.solver.reproducible = true;
    }
    Resolved::build(cfg)
}

fn main_inner(args: Args) -> Result<i32> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let resolved = prepare(&args)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    log::info!("running task {:?} on {} nodes", resolved.config.task, resolved.class.num_nodes());
    let outcome = run::execute(&resolved);
    let (value, rows) = match outcome {
        Ok(o) => (Ok(o.result), o.rows),
        Err(e) => (Err(e), None),
    };
    if let Some(rows) = &rows {
        let path = args.out.join(&resolved.config.output.table);
        sweep::write_csv(&path, rows).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = Report::new(resolved.config.clone(), resolved.class.checksum(), value);
    let path = args.out.join(&resolved.config.output.report);
    report.write(&path).with_context(|| format!("writing {}", path.display()))?;
    if let Some(err) = &report.error {
        eprintln!("conflap: {}", err.message);
    }
    println!("{}", path.display());
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let code = main_inner(args).unwrap_or_else(|e| {
        eprintln!("conflap: {e:#}");
        EXIT_ERROR
    });
    ExitCode::from(code as u8)
}
