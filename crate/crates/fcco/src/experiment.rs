//! Running configs: one replica per (method, seed), in parallel across
//! replicas and sequential inside each.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fcco_core::linalg::norm;
use fcco_core::problem::{make_problem, AucProblem, FccoProblem, ProblemConfig};
use fcco_core::rng::{streams, RngStream};
use fcco_core::schedule::{ClampCounts, Preset};
use fcco_core::solver::{
    run_stagewise, Clock, Ledger, Method, RunOutput, Solver, StageReport, StopReason, TraceRecord,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{write_json, write_trace};

/// Elapsed time since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ns(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Box<dyn FccoProblem>> {
    let stream = RngStream::new(cfg.problem_seed, streams::PROBLEM);
    match (&cfg.problem, &cfg.data) {
        (ProblemConfig::AucMultitask(a), Some(path)) => {
            let tasks = crate::data::load_tasks(path)?;
            let p = AucProblem::from_tasks(tasks, a.margin, a.probe_radius, a.probe_points, &mut stream.rng())?;
            Ok(Box::new(p))
        }
        _ => Ok(make_problem(&cfg.problem, stream)?),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    pub csv: String,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    /// `F(w) - F_*` when the optimum is known.
    pub final_gap: Option<f64>,
    pub tau: u64,
    pub tau_loss: f64,
    pub tau_grad_norm: f64,
    pub ledger: Ledger,
    pub clamps: ClampCounts,
    pub stop: StopReason,
    pub stages: Option<Vec<StageReport>>,
}

pub struct Replica {
    pub summary: RunSummary,
    pub trace: Vec<TraceRecord>,
    pub output: RunOutput,
}

pub fn csv_name(method: Method, seed: u64) -> String {
    format!("{}_seed{seed}.csv", method.name())
}

/// One replica. Stage-wise methods run through the restart driver.
pub fn run_replica<P: FccoProblem + ?Sized>(
    problem: &P,
    cfg: &ExperimentConfig,
    method: Method,
    seed: u64,
) -> Result<Replica> {
    let mut sc = cfg.solver_config(method, seed);
    if method.is_stagewise() {
        sc.schedule.preset = Preset::Stagewise;
    }
    let (output, stages) = if method.is_stagewise() {
        let out = run_stagewise(problem, sc, &cfg.solver.stagewise)?;
        (out.run, Some(out.stages))
    } else {
        let steps = sc.iterations;
        let mut solver = Solver::new(problem, sc)?;
        if cfg.run.wall_clock {
            solver.set_clock(Box::new(WallClock::new()));
        }
        let stop = solver.run_for(steps)?;
        (solver.finish(stop), None)
    };
    let final_loss = problem.exact_objective(&output.w_final)?;
    let summary = RunSummary {
        method,
        seed,
        csv: csv_name(method, seed),
        final_loss,
        final_grad_norm: norm(&problem.exact_gradient(&output.w_final)?),
        final_gap: problem.optimum().map(|f| final_loss - f),
        tau: output.tau,
        tau_loss: problem.exact_objective(&output.w_tau)?,
        tau_grad_norm: norm(&problem.exact_gradient(&output.w_tau)?),
        ledger: output.ledger,
        clamps: output.clamps,
        stop: output.stop,
        stages,
    };
    Ok(Replica {
        trace: output.trace.clone(),
        summary,
        output,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: serde_json::Value,
    pub problem: ProblemInfo,
    pub runs: Vec<RunSummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemInfo {
    pub kind: String,
    pub blocks: usize,
    pub dim: usize,
    pub inner_dim: usize,
    pub optimum: Option<f64>,
    pub constants: fcco_core::ProblemConstants,
}

pub fn problem_info(cfg: &ExperimentConfig, p: &dyn FccoProblem) -> ProblemInfo {
    ProblemInfo {
        kind: cfg.problem.kind().to_string(),
        blocks: p.num_blocks(),
        dim: p.dim(),
        inner_dim: p.inner_dim(),
        optimum: p.optimum(),
        constants: *p.constants(),
    }
}

pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(HarnessError::Config("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| HarnessError::Config(e.to_string()))
}

/// `fcco run`: one CSV per (method, seed) plus `summary.json` in `out`.
pub fn run_experiment(cfg: &ExperimentConfig, seeds: &[u64], out: &Path, jobs: Option<usize>) -> Result<ExperimentSummary> {
    let problem = build_problem(cfg)?;
    let problem: &dyn FccoProblem = &*problem;
    let jobs_list: Vec<(Method, u64)> = cfg
        .run_methods()
        .into_iter()
        .flat_map(|m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let pool = thread_pool(jobs)?;
    let runs: Vec<RunSummary> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(method, seed)| {
                let r = run_replica(problem, cfg, method, seed)?;
                write_trace(&out.join(&r.summary.csv), &r.trace)?;
                log::info!("{} seed {seed}: final loss {:.6e}", method.name(), r.summary.final_loss);
                Ok(r.summary)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut resolved = cfg.resolved();
    resolved["run"]["seeds"] = serde_json::json!(seeds);
    resolved["run"]["methods"] = serde_json::json!(cfg.run_methods());
    resolved["run"]["out"] = serde_json::json!(out);
    let summary = ExperimentSummary {
        config: resolved,
        problem: problem_info(cfg, problem),
        runs,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub method: Method,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub seed: u64,
    pub csv: PathBuf,
    /// `None` when the run aborted on a non-finite value.
    pub final_loss: Option<f64>,
    pub samples: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepBest {
    pub method: Method,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub median_final_loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: serde_json::Value,
    pub cells: Vec<SweepCell>,
    pub best: Vec<SweepBest>,
}

/// `fcco sweep`: every method over the `(alpha, beta)` grid with constant
/// parameters; the best cell per method is the lowest median final loss.
/// Diverged cells are logged and ranked last.
pub fn run_sweep(cfg: &ExperimentConfig, seeds: &[u64], out: &Path, jobs: Option<usize>) -> Result<SweepSummary> {
    let problem = build_problem(cfg)?;
    let problem: &dyn FccoProblem = &*problem;
    let methods = if cfg.sweep.methods.is_empty() {
        vec![cfg.solver.method]
    } else {
        cfg.sweep.methods.clone()
    };
    let etas = sweep_etas(cfg);
    let mut grid = Vec::new();
    for &method in &methods {
        for &alpha in &cfg.sweep.alphas {
            for &beta in &cfg.sweep.betas {
                for &eta in &etas {
                    for &seed in seeds {
                        grid.push((method, alpha, beta, eta, seed));
                    }
                }
            }
        }
    }
    let pool = thread_pool(jobs)?;
    let cells: Vec<SweepCell> = pool.install(|| {
        grid.par_iter()
            .map(|&(method, alpha, beta, eta, seed)| {
                let mut c = cfg.clone();
                let mut spec = cfg.schedule_for(method);
                spec.preset = Preset::Constant;
                spec.alpha = alpha;
                spec.beta = beta;
                spec.eta = eta;
                c.solver.method = method;
                c.solver.schedule = Some(spec);
                let name = if etas.len() == 1 {
                    format!("a{alpha}_b{beta}_seed{seed}.csv")
                } else {
                    format!("a{alpha}_b{beta}_e{eta}_seed{seed}.csv")
                };
                let rel = PathBuf::from(method.name()).join(name);
                match run_replica(problem, &c, method, seed) {
                    Ok(r) => {
                        write_trace(&out.join(&rel), &r.trace)?;
                        Ok(SweepCell {
                            method,
                            alpha,
                            beta,
                            eta,
                            seed,
                            csv: rel,
                            final_loss: Some(r.summary.final_loss),
                            samples: r.summary.ledger.samples,
                        })
                    }
                    Err(HarnessError::Core(fcco_core::Error::NonFinite { .. })) => {
                        log::warn!("{} alpha={alpha} beta={beta} eta={eta} seed={seed} diverged", method.name());
                        Ok(SweepCell {
                            method,
                            alpha,
                            beta,
                            eta,
                            seed,
                            csv: rel,
                            final_loss: None,
                            samples: 0,
                        })
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut best = Vec::new();
    for &method in &methods {
        let mut choice: Option<SweepBest> = None;
        for &alpha in &cfg.sweep.alphas {
            for &beta in &cfg.sweep.betas {
                for &eta in &etas {
                    let losses: Vec<f64> = cells
                        .iter()
                        .filter(|c| c.method == method && c.alpha == alpha && c.beta == beta && c.eta == eta)
                        .map(|c| c.final_loss.unwrap_or(f64::INFINITY))
                        .collect();
                    let med = median(&losses);
                    if choice.as_ref().is_none_or(|b| med < b.median_final_loss) {
                        choice = Some(SweepBest {
                            method,
                            alpha,
                            beta,
                            eta,
                            median_final_loss: med,
                        });
                    }
                }
            }
        }
        best.extend(choice);
    }
    let mut resolved = cfg.resolved();
    resolved["run"]["seeds"] = serde_json::json!(seeds);
    resolved["sweep"]["methods"] = serde_json::json!(methods);
    resolved["sweep"]["etas"] = serde_json::json!(etas);
    let summary = SweepSummary {
        config: resolved,
        cells,
        best,
    };
    write_json(&out.join("sweep.json"), &summary)?;
    Ok(summary)
}

fn sweep_etas(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.sweep.etas.is_empty() {
        vec![cfg.schedule_for(cfg.solver.method).eta]
    } else {
        cfg.sweep.etas.clone()
    }
}

/// Median with NaN and infinities sorted last.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
