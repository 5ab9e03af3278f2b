use alloc::vec::Vec;

use super::run::{RunOutput, Solver, StopReason};
use super::SolverConfig;
use crate::error::{Error, Result};
use crate::problem::FccoProblem;
use crate::schedule::{schedule_stagewise, HyperParams, Schedule};

/// Settings for stage-wise restarts.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StagewiseSpec {
    /// Defaults to the problem's declared `mu`.
    pub mu: Option<f64>,
    /// Initial target error. Defaults to `F(w_1) - F_*` when `F_*` is known.
    pub eps_1: Option<f64>,
    pub stages: usize,
    /// Cap on the length of any one stage.
    pub max_stage_steps: Option<usize>,
}

impl Default for StagewiseSpec {
    fn default() -> Self {
        StagewiseSpec {
            mu: None,
            eps_1: None,
            stages: 6,
            max_stage_steps: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageReport {
    pub stage: usize,
    pub steps: usize,
    /// Target `eps_1 2^{-(s-1)}`.
    pub eps: f64,
    pub hp: HyperParams,
    /// `F(w_s) - F_*`, if `F_*` is known.
    pub subopt: Option<f64>,
    pub samples: u64,
}

#[derive(Clone, Debug)]
pub struct StagewiseOutput {
    pub run: RunOutput,
    pub stages: Vec<StageReport>,
}

/// Runs `spec.stages` stages, each a constant-parameter run warm-started
/// from the previous stage's `w`, `u` and `z`. Reports the last iterate.
pub fn run_stagewise<P: FccoProblem + ?Sized>(
    problem: &P,
    config: SolverConfig,
    spec: &StagewiseSpec,
) -> Result<StagewiseOutput> {
    let mu = match spec.mu.or(problem.constants().mu) {
        Some(mu) if mu > 0.0 && mu.is_finite() => mu,
        Some(mu) => return Err(Error::Config(alloc::format!("mu must be positive, got {mu}"))),
        None => return Err(Error::Config("stage-wise runs need mu".into())),
    };
    if spec.stages == 0 {
        return Err(Error::Config("at least one stage is required".into()));
    }
    let fstar = problem.optimum();
    let eps_1 = match (spec.eps_1, fstar) {
        (Some(e), _) => e,
        (None, Some(f)) => problem.exact_objective(&problem.initial_point())? - f,
        (None, None) => return Err(Error::Config("stage-wise runs need eps_1 or a known F_*".into())),
    };
    let m = problem.num_blocks();
    let (b1, b2) = (config.b1, config.b2);
    let tracker = config.tracker;
    let finite_sum = if tracker.uses_snapshot() { problem.max_support() } else { None };
    let sched_spec = config.schedule.clone();
    let mut solver = Solver::new(problem, config)?;
    let mut stages = Vec::with_capacity(spec.stages);
    let mut stop = StopReason::Iterations;
    for s in 1..=spec.stages {
        let (t_s, hp) = schedule_stagewise(s, eps_1, mu, m, finite_sum, b1, b2, &sched_spec)?;
        let steps = spec.max_stage_steps.map_or(t_s, |cap| t_s.min(cap));
        let schedule = Schedule::fixed(hp, tracker, m, problem.max_support(), b1, b2)?;
        let hp = {
            let mut probe = schedule.clone();
            probe.at(1)?
        };
        solver.set_schedule(schedule);
        stop = solver.run_for(steps)?;
        let subopt = match fstar {
            Some(f) => Some(problem.exact_objective(solver.iterate())? - f),
            None => None,
        };
        stages.push(StageReport {
            stage: s,
            steps,
            eps: eps_1 * libm::pow(2.0, -((s - 1) as f64)),
            hp,
            subopt,
            samples: solver.ledger().samples,
        });
        if stop != StopReason::Iterations {
            break;
        }
    }
    let mut run = solver.finish(stop);
    run.w_tau = run.w_final.clone();
    run.tau = run.ledger.steps;
    Ok(StagewiseOutput { run, stages })
}
