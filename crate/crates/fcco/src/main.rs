use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fcco::checks::{run_suite, verdict, Suite};
use fcco::config::{effective_seeds, ExperimentConfig};
use fcco::experiment::{run_experiment, run_sweep, thread_pool};
use fcco::output::write_json;
use fcco::report::{build_report, render, Column};
use fcco::{HarnessError, Result};
use fcco_core::problem::{AucProblem, ProblemConfig};
use fcco_core::rng::{streams, RngStream};

/// Benchmarks and checks for multi-block variance-reduced compositional solvers.
#[derive(Parser)]
#[command(name = "fcco", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Single run seed; overrides FCCO_SEED and the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent replicas.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides run.out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted override, e.g. `--set solver.b1=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one config over its seeds.
    Run(RunArgs),
    /// Grid over (alpha, beta) for each method.
    Sweep(RunArgs),
    /// Run verification suites.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long)]
        jobs: Option<usize>,
        /// Write the outcomes as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Samples-to-threshold table over the CSVs in a directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "loss")]
        column: Column,
    },
    /// Write the generated AUC tasks of a config as CSV.
    DumpData {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn prepare(args: &RunArgs) -> Result<(ExperimentConfig, Vec<u64>, PathBuf)> {
    let cfg = ExperimentConfig::load(&args.config, &args.overrides)?;
    let env = std::env::var("FCCO_SEED").ok();
    let seeds = effective_seeds(&cfg, args.seed, env.as_deref())?;
    let out = args.out.clone().unwrap_or_else(|| cfg.run.out.clone());
    Ok((cfg, seeds, out))
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run(args) => {
            let (cfg, seeds, out) = prepare(&args)?;
            let s = run_experiment(&cfg, &seeds, &out, args.jobs)?;
            for r in &s.runs {
                println!(
                    "{} seed {}: loss {:.6e} |grad| {:.3e} samples {} ({:?})",
                    r.method.name(),
                    r.seed,
                    r.final_loss,
                    r.final_grad_norm,
                    r.ledger.samples,
                    r.stop
                );
            }
            Ok(())
        }
        Cmd::Sweep(args) => {
            let (cfg, seeds, out) = prepare(&args)?;
            let s = run_sweep(&cfg, &seeds, &out, args.jobs)?;
            println!("{} runs", s.cells.len());
            for b in &s.best {
                println!(
                    "{}: alpha {} beta {} eta {} median final loss {:.6e}",
                    b.method.name(),
                    b.alpha,
                    b.beta,
                    b.eta,
                    b.median_final_loss
                );
            }
            Ok(())
        }
        Cmd::Check { suite, jobs, out } => {
            let outcomes = thread_pool(jobs)?.install(|| run_suite(suite))?;
            for o in &outcomes {
                println!("{} {}", if o.passed { "PASS" } else { "FAIL" }, o.name);
            }
            if let Some(path) = out {
                write_json(&path, &outcomes)?;
            }
            verdict(&outcomes)
        }
        Cmd::Report { dir, threshold, column } => {
            let r = build_report(&dir, column, threshold)?;
            print!("{}", render(&r));
            write_json(&dir.join("report.json"), &r)
        }
        Cmd::DumpData { config, out, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let ProblemConfig::AucMultitask(a) = &cfg.problem else {
                return Err(HarnessError::Config("dump-data needs an auc-multitask problem".into()));
            };
            if let Some(path) = &cfg.data {
                let tasks = fcco::data::load_tasks(path)?;
                return fcco::data::dump_tasks(&out, &tasks);
            }
            let p = AucProblem::generate(a, &mut RngStream::new(cfg.problem_seed, streams::PROBLEM).rng())?;
            fcco::data::dump_tasks(&out, p.tasks())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
