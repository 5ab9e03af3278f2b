use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::adaptive::{adaptive_step, AdaptiveState, RadiusChoice};
use super::{Projection, SolverConfig};
use crate::error::{check_finite, Error, Result};
use crate::grad::{compute_snapshot, GradEstState, GradKind};
use crate::linalg::{axpy_into, dist_sq, norm, BlockMatrix, Jacobian, ParamVector};
use crate::problem::FccoProblem;
use crate::rng::{streams, RngStream, StreamRng};
use crate::sampling::{draw_batch, sample_blocks, BlockSample};
use crate::schedule::{ClampCounts, HyperParams, Schedule};
use crate::tracker::{Snapshot, TrackerInput, TrackerKind, TrackerState};

/// Source of wall-clock time for trace rows.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// Always zero, so traces stay byte-for-byte reproducible.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

/// One trace row.
///
/// After step `t`, `loss` and `grad_norm` are measured at the new iterate
/// `w_{t+1}`, while `u_err = |u_t - g(w_t)|^2` and `z_err` (the distance of
/// `z_t` from the compositional gradient at `w_t`) describe the estimators
/// formed during step `t`. Row 0 describes the initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub iter: u64,
    pub samples: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub u_err: f64,
    pub z_err: f64,
    pub wall_ns: u64,
}

/// Oracle cost bookkeeping.
///
/// `samples` counts distinct inner draws: `m B2` for the initial probe,
/// `B1 B2` per step and one full pass per snapshot. `evaluations` counts
/// per-sample oracle calls, where a value and a Jacobian at one point on one
/// sample are one call each.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ledger {
    pub steps: u64,
    pub samples: u64,
    pub evaluations: u64,
    pub snapshots: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum StopReason {
    Iterations,
    SampleBudget,
    GradTarget,
    GapTarget,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub w_final: ParamVector,
    /// The iterate `w_tau` for `tau` uniform over the visited steps.
    pub w_tau: ParamVector,
    pub tau: u64,
    pub trace: Vec<TraceRecord>,
    pub ledger: Ledger,
    pub clamps: ClampCounts,
    pub stop: StopReason,
}

/// A solver replica. Holds every piece of state so runs can be resumed with
/// a new schedule, which is how stage-wise restarts warm-start.
pub struct Solver<'p, P: FccoProblem + ?Sized> {
    problem: &'p P,
    config: SolverConfig,
    schedule: Schedule,
    w: ParamVector,
    w_prev: ParamVector,
    tracker: TrackerState,
    /// `u_{t-2}` while `tracker.u` holds `u_{t-1}`.
    u_lag: BlockMatrix,
    grad: GradEstState,
    adaptive: Option<AdaptiveState>,
    adaptive_radius: Option<f64>,
    rng_blocks: StreamRng,
    rng_inner: StreamRng,
    rng_output: StreamRng,
    t: u64,
    ledger: Ledger,
    w_tau: ParamVector,
    tau: u64,
    trace: Vec<TraceRecord>,
    clock: Box<dyn Clock>,
    start_ns: u64,
    last_z_err: f64,
    last_u_err: f64,
}

impl<'p, P: FccoProblem + ?Sized> Solver<'p, P> {
    pub fn new(problem: &'p P, config: SolverConfig) -> Result<Self> {
        let w0 = problem.initial_point();
        Self::with_start(problem, config, w0)
    }

    pub fn with_start(problem: &'p P, config: SolverConfig, w0: ParamVector) -> Result<Self> {
        config.validate(problem)?;
        crate::error::check_len("solver start", problem.dim(), w0.len())?;
        let m = problem.num_blocks();
        let p = problem.inner_dim();
        let schedule = if config.schedule.preset == crate::schedule::Preset::Stagewise {
            // Replaced stage by stage.
            Schedule::fixed(
                HyperParams {
                    alpha: 1.0,
                    beta: 0.5,
                    gamma: 0.5,
                    eta: 1e-3,
                    period: 1,
                },
                config.tracker,
                m,
                problem.max_support(),
                config.b1,
                config.b2,
            )?
        } else {
            Schedule::new(
                config.schedule.clone(),
                config.tracker,
                m,
                problem.max_support(),
                config.b1,
                config.b2,
            )?
        };
        let consts = problem.constants();
        let z_radius = match config.projection {
            Projection::Auto => Some(consts.c_big_f()),
            Projection::Unbounded => None,
            Projection::Radius(r) => Some(r),
        };
        let adaptive_radius = match config.adaptive.radius() {
            Some(RadiusChoice::CF) => z_radius,
            Some(RadiusChoice::LF) => Some(consts.l_f.max(f64::MIN_POSITIVE)),
            None => None,
        };
        let adaptive = AdaptiveState::new(&config.adaptive, problem.dim())?;
        let seed = config.seed;

        // u_0: one stochastic probe per block at w_1.
        let mut rng_init = RngStream::new(seed, streams::INIT).rng();
        let mut u0 = BlockMatrix::zeros(m, p);
        for i in 0..m {
            let batch = draw_batch(problem, i, config.b2, &mut rng_init)?;
            let g = problem.inner_value(i, &w0, &batch)?;
            u0.block_mut(i).copy_from_slice(&g);
        }
        let ledger = Ledger {
            steps: 0,
            samples: (m * config.b2) as u64,
            evaluations: (m * config.b2) as u64,
            snapshots: 0,
        };
        let grad = GradEstState::new(config.grad, problem.dim(), z_radius)?;
        let mut solver = Solver {
            problem,
            schedule,
            w_prev: w0.clone(),
            w_tau: w0.clone(),
            w: w0,
            tracker: TrackerState::new(config.tracker, u0.clone()),
            u_lag: u0,
            grad,
            adaptive,
            adaptive_radius,
            rng_blocks: RngStream::new(seed, streams::BLOCKS).rng(),
            rng_inner: RngStream::new(seed, streams::INNER).rng(),
            rng_output: RngStream::new(seed, streams::OUTPUT).rng(),
            t: 0,
            ledger,
            tau: 0,
            trace: Vec::new(),
            clock: Box::new(NullClock),
            start_ns: 0,
            last_z_err: f64::NAN,
            last_u_err: f64::NAN,
            config,
        };
        if !solver.config.skip_tracking_errors {
            let w = solver.w.clone();
            solver.last_u_err = solver.u_err_at(&w)?;
            let zc = problem.exact_compositional_gradient(&w)?;
            solver.last_z_err = dist_sq(&solver.grad.z, &zc);
        }
        Ok(solver)
    }

    /// Replaces the time source. Trace rows then carry elapsed nanoseconds.
    pub fn set_clock(&mut self, clock: Box<dyn Clock>) {
        self.start_ns = clock.now_ns();
        self.clock = clock;
    }

    /// Swaps in a new schedule, keeping every estimator state.
    pub fn set_schedule(&mut self, schedule: Schedule) {
        self.schedule = schedule;
    }

    pub fn iterate(&self) -> &ParamVector {
        &self.w
    }

    pub fn tracker(&self) -> &TrackerState {
        &self.tracker
    }

    pub fn grad_state(&self) -> &GradEstState {
        &self.grad
    }

    pub fn adaptive_state(&self) -> Option<&AdaptiveState> {
        self.adaptive.as_ref()
    }

    pub fn ledger(&self) -> Ledger {
        self.ledger
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn clamps(&self) -> ClampCounts {
        self.schedule.clamps
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn u_err_at(&self, w: &[f64]) -> Result<f64> {
        crate::tracker::tracking_error(&self.tracker, self.problem, w)
    }

    /// Appends a trace row for the current state.
    pub fn record(&mut self) -> Result<()> {
        let loss = self.problem.exact_objective(&self.w)?;
        let grad_norm = norm(&self.problem.exact_gradient(&self.w)?);
        self.trace.push(TraceRecord {
            iter: self.t,
            samples: self.ledger.samples,
            loss,
            grad_norm,
            u_err: self.last_u_err,
            z_err: self.last_z_err,
            wall_ns: self.clock.now_ns().saturating_sub(self.start_ns),
        });
        Ok(())
    }

    fn needs_snapshot(&self) -> bool {
        self.tracker.kind.uses_snapshot() || self.grad.kind == GradKind::FiniteSum
    }

    fn refresh_snapshot(&mut self, period: usize) -> Result<()> {
        let problem = self.problem;
        let m = problem.num_blocks();
        let mut values = BlockMatrix::zeros(m, problem.inner_dim());
        for i in 0..m {
            values.block_mut(i).copy_from_slice(&problem.exact_inner_value(i, &self.w)?);
        }
        if self.tracker.kind.uses_snapshot() {
            self.tracker.set_snapshot(Snapshot {
                point: self.w.clone(),
                values,
            })?;
        }
        if self.grad.kind == GradKind::FiniteSum {
            self.grad.snapshot = Some(compute_snapshot(problem, &self.w, &self.tracker.u, period)?);
        }
        let cost = problem
            .full_pass_cost()
            .ok_or(Error::Unsupported("snapshot of an infinite support"))?;
        self.ledger.samples += cost;
        // One value and one Jacobian per sample.
        self.ledger.evaluations += 2 * cost;
        self.ledger.snapshots += 1;
        Ok(())
    }

    /// Runs step `t + 1`.
    pub fn step(&mut self) -> Result<()> {
        let t = self.t + 1;
        let step_err = |e: Error| match e {
            Error::NonFinite { op, .. } => Error::NonFinite {
                op,
                step: Some(t as usize),
            },
            other => other,
        };
        self.step_inner(t).map_err(step_err)
    }

    fn step_inner(&mut self, t: u64) -> Result<()> {
        let problem = self.problem;
        let hp = self.schedule.at(t as usize)?;
        if self.needs_snapshot() && (t == 1 || t.is_multiple_of(hp.period as u64)) {
            self.refresh_snapshot(hp.period)?;
        }
        let blocks = sample_blocks(problem.num_blocks(), self.config.b1, &mut self.rng_blocks)?;
        let batches = blocks
            .iter()
            .map(|&i| draw_batch(problem, i, self.config.b2, &mut self.rng_inner))
            .collect::<Result<Vec<_>>>()?;
        let sample = BlockSample { blocks, batches };
        let first = t == 1;
        let kind = self.tracker.kind;
        let gkind = self.grad.kind;
        let need_prev_value = kind.needs_prev_value() && !first;
        let need_prev_grad = gkind != GradKind::MovingAverage && !first;
        let snap_point = self.tracker.snapshot.as_ref().map(|s| s.point.clone());
        let grad_snap_point = self.grad.snapshot.as_ref().map(|s| s.point.clone());

        let b1 = sample.blocks.len();
        let b2 = self.config.b2 as u64;
        let mut g_now = Vec::with_capacity(b1);
        let mut g_prev = Vec::with_capacity(b1);
        let mut g_snap = Vec::with_capacity(b1);
        let mut jacs = Vec::with_capacity(b1);
        let mut grads_now = Vec::with_capacity(b1);
        let mut grads_prev = Vec::with_capacity(b1);
        let mut grads_snap = Vec::with_capacity(b1);
        let mut direct = if problem.has_direct_term() {
            Some(vec![0.0; problem.dim()])
        } else {
            None
        };
        let mut evals = 0u64;

        for (&i, batch) in sample.blocks.iter().zip(&sample.batches) {
            let gn = problem.inner_value(i, &self.w, batch)?;
            evals += b2;
            if kind.needs_prev_value() {
                if need_prev_value {
                    g_prev.push(problem.inner_value(i, &self.w_prev, batch)?);
                    evals += b2;
                } else {
                    g_prev.push(gn.clone());
                }
            }
            if kind.uses_snapshot() {
                let sp = snap_point.as_ref().ok_or_else(|| Error::State("missing tracker snapshot".into()))?;
                g_snap.push(problem.inner_value(i, sp, batch)?);
                evals += b2;
            }
            g_now.push(gn);

            let jac: Jacobian = problem.inner_jacobian(i, &self.w, batch)?;
            evals += b2;
            let fg = problem.outer_grad(i, self.tracker.u.block(i));
            grads_now.push(jac.tr_mul(&fg)?);
            if need_prev_grad {
                let jp = problem.inner_jacobian(i, &self.w_prev, batch)?;
                evals += b2;
                let fgp = problem.outer_grad(i, self.u_lag.block(i));
                grads_prev.push(jp.tr_mul(&fgp)?);
            }
            if gkind == GradKind::FiniteSum {
                let gs = self.grad.snapshot.as_ref().ok_or_else(|| Error::State("missing gradient snapshot".into()))?;
                let sp = grad_snap_point.as_ref().expect("snapshot point");
                let js = problem.inner_jacobian(i, sp, batch)?;
                evals += b2;
                grads_snap.push(js.tr_mul(gs.outer_grads.block(i))?);
            }
            if let Some(d) = direct.as_mut() {
                axpy_into(1.0 / b1 as f64, &problem.direct_grad(i, &self.w, batch)?, d);
            }
            jacs.push(jac);
        }

        let dw: Vec<f64> = self.w.iter().zip(self.w_prev.iter()).map(|(a, b)| a - b).collect();
        let input = TrackerInput {
            blocks: &sample.blocks,
            g_now: &g_now,
            g_prev: kind.needs_prev_value().then_some(&g_prev[..]),
            g_snap: kind.uses_snapshot().then_some(&g_snap[..]),
            jac_now: (kind == TrackerKind::MsvrSp).then_some(&jacs[..]),
            dw: Some(&dw),
        };
        let u_before = self.tracker.u.clone();
        self.tracker.update(&input, &hp)?;
        self.u_lag = u_before;

        let prev = need_prev_grad.then_some(&grads_prev[..]);
        match gkind {
            GradKind::MovingAverage => self.grad.ma_update(&grads_now, &hp)?,
            GradKind::Storm => self.grad.storm_update(&grads_now, prev, &hp)?,
            GradKind::FiniteSum => self.grad.fs_update(&grads_now, prev, &grads_snap, &hp)?,
        }

        let w_t = self.w.clone();
        match self.adaptive.as_mut() {
            Some(state) => {
                adaptive_step(&mut self.w, &self.grad.z, direct.as_deref(), state, hp.eta, self.adaptive_radius)?;
            }
            None => {
                axpy_into(-hp.eta, &self.grad.z, &mut self.w);
                if let Some(d) = &direct {
                    axpy_into(-hp.eta, d, &mut self.w);
                }
            }
        }
        check_finite("parameter step", &self.w)?;
        self.w_prev = w_t;
        self.t = t;
        self.ledger.steps = t;
        self.ledger.samples += b1 as u64 * b2;
        self.ledger.evaluations += evals;

        // Reservoir choice of tau over the iterates w_1..w_t.
        if self.rng_output.random_range(0..t) == 0 {
            self.w_tau = self.w_prev.clone();
            self.tau = t;
        }
        if !self.config.skip_tracking_errors {
            let w_t = self.w_prev.clone();
            self.last_u_err = self.u_err_at(&w_t)?;
            let zc = problem.exact_compositional_gradient(&w_t)?;
            self.last_z_err = dist_sq(&self.grad.z, &zc);
        }
        Ok(())
    }

    /// Runs up to `steps` more steps, honouring the stop rules, and returns
    /// why it stopped.
    pub fn run_for(&mut self, steps: usize) -> Result<StopReason> {
        if self.trace.is_empty() {
            self.record()?;
        }
        let stride = self.config.trace_stride as u64;
        for _ in 0..steps {
            self.step()?;
            if let Some(reason) = self.check_stop()? {
                self.record_final()?;
                return Ok(reason);
            }
            if self.t.is_multiple_of(stride) {
                self.record()?;
            }
        }
        self.record_final()?;
        Ok(StopReason::Iterations)
    }

    fn record_final(&mut self) -> Result<()> {
        if self.trace.last().map(|r| r.iter) != Some(self.t) {
            self.record()?;
        }
        Ok(())
    }

    fn check_stop(&self) -> Result<Option<StopReason>> {
        if let Some(budget) = self.config.sample_budget {
            if self.ledger.samples >= budget {
                return Ok(Some(StopReason::SampleBudget));
            }
        }
        if let Some(target) = self.config.grad_target {
            if norm(&self.problem.exact_gradient(&self.w)?) <= target {
                return Ok(Some(StopReason::GradTarget));
            }
        }
        if let (Some(target), Some(fstar)) = (self.config.gap_target, self.problem.optimum()) {
            if self.problem.exact_objective(&self.w)? - fstar <= target {
                return Ok(Some(StopReason::GapTarget));
            }
        }
        Ok(None)
    }

    /// Consumes the solver and packages its results.
    pub fn finish(self, stop: StopReason) -> RunOutput {
        let clamps = self.schedule.clamps;
        RunOutput {
            w_final: self.w,
            w_tau: self.w_tau,
            tau: self.tau,
            trace: self.trace,
            ledger: self.ledger,
            clamps,
            stop,
        }
    }

    /// Runs `config.iterations` steps from the problem's initial point.
    pub fn run(problem: &'p P, config: SolverConfig) -> Result<RunOutput> {
        let steps = config.iterations;
        let mut solver = Solver::new(problem, config)?;
        let stop = solver.run_for(steps)?;
        Ok(solver.finish(stop))
    }
}
