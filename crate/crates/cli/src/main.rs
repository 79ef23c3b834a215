//! `maln`: noise-tolerance experiments for zeroth-order grid and restart methods.

mod args;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use maln_core::BoundClass;

use args::{ClassArgs, CoreArgs, MalnArgs, NoiseArgs, OutArgs, ProblemArgs, ScheduleArgs, Spec};
use output::{emit, is_usage, plot_csv, render, UsageError};
use run::BenchFile;

#[derive(Parser)]
#[command(name = "maln", version, about = "Zeroth-order optimization under bounded oracle noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form upper bound on the admissible noise level.
    Bounds {
        #[arg(long)]
        class: BoundClass,
        #[command(flatten)]
        core: CoreArgs,
        #[command(flatten)]
        constants: ClassArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// One run of an algorithm on a seeded instance.
    Solve {
        #[command(flatten)]
        core: CoreArgs,
        #[command(flatten)]
        constants: ClassArgs,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// JSON-lines log of every oracle call.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Empirical noise tolerance by bisection on δ.
    Maln {
        #[command(flatten)]
        core: CoreArgs,
        #[command(flatten)]
        constants: ClassArgs,
        #[command(flatten)]
        problem: ProblemArgs,
        /// Adversary: zero, uniform, sign or planted.
        #[arg(long, value_enum)]
        policy: Option<args::PolicyId>,
        #[command(flatten)]
        maln: MalnArgs,
        /// Class of the closed-form bound in the comparison.
        #[arg(long)]
        class: Option<BoundClass>,
        /// Writes (δ, success rate) pairs as CSV.
        #[arg(long = "emit-plot-data")]
        emit_plot_data: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-restart noise and iteration budgets.
    Schedule {
        #[command(flatten)]
        core: CoreArgs,
        #[command(flatten)]
        constants: ClassArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Parameter sweep read from a TOML file; flags override file values.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        core: CoreArgs,
        #[command(flatten)]
        constants: ClassArgs,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        maln: MalnArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long)]
        class: Option<BoundClass>,
        #[command(flatten)]
        out: OutArgs,
    },
}

/// Runs the command; `Ok(false)` means output was written but some part failed.
fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Bounds { class, core, constants, out } => {
            let spec = Spec { core, class: constants, class_id: Some(class), ..Default::default() };
            let o = run::bounds(spec)?;
            emit(out.out.as_deref(), &render("bounds", &o.spec, &o.result, &o.table, out.format)?)?;
        }
        Command::Solve { core, constants, problem, noise, schedule, log, out } => {
            let spec = Spec { core, class: constants, problem, noise, schedule, ..Default::default() };
            let o = run::solve(spec, log.as_deref())?;
            emit(out.out.as_deref(), &render("solve", &o.spec, &o.result, &o.table, out.format)?)?;
        }
        Command::Maln { core, constants, problem, policy, maln, class, emit_plot_data, out } => {
            let spec = Spec {
                core,
                class: constants,
                class_id: class,
                problem,
                noise: NoiseArgs { delta: None, policy },
                maln,
                ..Default::default()
            };
            let o = run::maln(spec)?;
            if let (Some(path), Some(pts)) = (emit_plot_data, &o.plot) {
                emit(Some(&path), &plot_csv(pts)?)?;
            }
            emit(out.out.as_deref(), &render("maln", &o.spec, &o.result, &o.table, out.format)?)?;
        }
        Command::Schedule { core, constants, schedule, out } => {
            let spec = Spec { core, class: constants, schedule, ..Default::default() };
            let o = run::schedule(spec)?;
            emit(out.out.as_deref(), &render("schedule", &o.spec, &o.result, &o.table, out.format)?)?;
        }
        Command::Bench { config, core, constants, problem, noise, maln, schedule, class, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let file: BenchFile = toml::from_str(&text)
                .map_err(|e| UsageError(format!("{}: {}", config.display(), e.message())))?;
            let overrides = Spec {
                core,
                class: constants,
                class_id: class,
                problem,
                noise,
                maln,
                schedule,
                ..Default::default()
            };
            let b = run::bench(file, overrides)?;
            let o = b.outcome;
            emit(out.out.as_deref(), &render("bench", &o.spec, &o.result, &o.table, out.format)?)?;
            return Ok(!b.failed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some sweep points failed; see the `error` entries");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
