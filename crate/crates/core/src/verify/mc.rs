use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm, BlockMatrix, ParamVector};
use crate::problem::{FccoProblem, Support};
use crate::rng::{streams, RngStream};
use crate::sampling::{draw_batch, sample_blocks};
use crate::schedule::{HyperParams, BETA_MAX};
use crate::tracker::{msvr_gamma, Snapshot, TrackerInput, TrackerKind, TrackerState};

/// Excess ignored as rounding when both sides are near zero.
const ROUNDING_FLOOR: f64 = 1e-20;

/// Which error recursion to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LemmaId {
    /// Two-point tracker:
    /// `e_t <= (1 - B1 b/m) e_{t-1} + 2 B1 b^2 s^2 / B2 + 8 m^2 C_g^2 / B1 |dw|^2`.
    TwoPoint,
    /// Single-point tracker, needs `eta <= sqrt(b)`:
    /// `... + (4 L_g^2 C_F^2 + 9 C_g^2 + 8 s^2 / B2) m^2 / B1 |dw|^2`.
    SinglePoint,
    /// Finite-sum tracker, needs `b I <= m / B1`:
    /// `e_t <= (1 - B1 b/m) e_{t-1} + 10 m^2 C_g^2 / B1 |dw|^2`.
    FiniteSum,
}

impl LemmaId {
    pub fn name(self) -> &'static str {
        match self {
            LemmaId::TwoPoint => "two-point",
            LemmaId::SinglePoint => "single-point",
            LemmaId::FiniteSum => "finite-sum",
        }
    }
}

/// Shape of the fixed trajectory. Every step has length `eta C_F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DriverPath {
    /// A fresh random direction each step.
    RandomWalk,
    /// One random direction for all steps.
    Straight,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct McConfig {
    pub lemma: LemmaId,
    pub tracker: TrackerKind,
    pub beta: f64,
    pub b1: usize,
    pub b2: usize,
    pub eta: f64,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub path: DriverPath,
    /// Snapshot period `I` for the finite-sum lemma. Defaults to `ceil(mn / (B1 B2))`.
    pub period: Option<usize>,
    /// `|u_0 - g(w_0)|`, spread evenly over all coordinates.
    pub init_error: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            lemma: LemmaId::TwoPoint,
            tracker: TrackerKind::Msvr,
            beta: 0.25,
            b1: 2,
            b2: 1,
            eta: 0.01,
            steps: 50,
            trials: 4000,
            seed: 0,
            path: DriverPath::RandomWalk,
            period: None,
            init_error: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McReport {
    pub lemma: LemmaId,
    pub tracker: TrackerKind,
    pub trials: usize,
    /// Mean of `|u_t - g(w_t)|^2` over trials, `t = 0..=steps`.
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Right-hand side for steps `1..=steps`, built from the previous mean.
    pub rhs: Vec<f64>,
    /// Allowed excess per step: `3 std / sqrt(trials) + 0.05 rhs`.
    pub slack: Vec<f64>,
    /// Steps (1-based) where the mean exceeded `rhs + slack`.
    pub violations: Vec<usize>,
}

impl McReport {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    pub fn violation_fraction(&self) -> f64 {
        self.violations.len() as f64 / self.rhs.len().max(1) as f64
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// A validated experiment: the trajectory, initial tracker and constants.
/// Trials are independent and may run in any order or in parallel.
pub struct McSetup<'p, P: FccoProblem + ?Sized> {
    problem: &'p P,
    cfg: McConfig,
    traj: Vec<ParamVector>,
    u0: BlockMatrix,
    hp: HyperParams,
    noise: f64,
    coef: f64,
}

impl<'p, P: FccoProblem + ?Sized> McSetup<'p, P> {
    pub fn new(problem: &'p P, cfg: McConfig) -> Result<Self> {
        let m = problem.num_blocks();
        let (b1, b2, beta) = (cfg.b1, cfg.b2, cfg.beta);
        if b1 == 0 || b1 > m || b2 == 0 {
            return Err(Error::Config(format!("need 1 <= B1 <= m and B2 >= 1 (m={m}, B1={b1}, B2={b2})")));
        }
        if !(beta > 0.0 && beta <= BETA_MAX) {
            return Err(Error::Config(format!("the recursions need 0 < beta <= 1/2, got {beta}")));
        }
        if !(cfg.eta >= 0.0 && cfg.eta.is_finite()) {
            return Err(Error::Config("eta must be finite and nonnegative".into()));
        }
        if cfg.trials < 2 || cfg.steps == 0 {
            return Err(Error::Config("need at least 2 trials and 1 step".into()));
        }
        let kind = cfg.tracker;
        let consts = problem.constants();
        let (mf, b1f, b2f) = (m as f64, b1 as f64, b2 as f64);
        let (cg, sigma) = (consts.c_g, consts.sigma);
        let mut period = 1;
        let (noise, coef) = match cfg.lemma {
            LemmaId::TwoPoint => {
                if kind.uses_snapshot() || kind.needs_jacobian() {
                    return Err(Error::Config(format!("{} is not a two-point tracker", kind.name())));
                }
                (2.0 * b1f * beta * beta * sigma * sigma / b2f, 8.0 * mf * mf * cg * cg / b1f)
            }
            LemmaId::SinglePoint => {
                if kind != TrackerKind::MsvrSp {
                    return Err(Error::Config("the single-point recursion needs the msvr-sp tracker".into()));
                }
                if cfg.eta > libm::sqrt(beta) {
                    return Err(Error::Config(format!(
                        "the single-point recursion needs eta <= sqrt(beta) ({} > {})",
                        cfg.eta,
                        libm::sqrt(beta)
                    )));
                }
                let cf = consts.c_big_f();
                let k = 4.0 * consts.l_g * consts.l_g * cf * cf + 9.0 * cg * cg + 8.0 * sigma * sigma / b2f;
                (2.0 * b1f * beta * beta * sigma * sigma / b2f, k * mf * mf / b1f)
            }
            LemmaId::FiniteSum => {
                if !kind.uses_snapshot() {
                    return Err(Error::Config(format!("{} keeps no snapshot", kind.name())));
                }
                let n = problem
                    .max_support()
                    .ok_or_else(|| Error::Config("the finite-sum recursion needs a finite support".into()))?;
                period = cfg.period.unwrap_or_else(|| (m * n).div_ceil(b1 * b2)).max(1);
                if beta * period as f64 > mf / b1f {
                    return Err(Error::Config(format!(
                        "the finite-sum recursion needs beta I <= m / B1 ({beta} * {period} > {})",
                        mf / b1f
                    )));
                }
                (0.0, 10.0 * mf * mf * cg * cg / b1f)
            }
        };
        for i in 0..m {
            if let Support::Finite(k) = problem.support(i)? {
                if b2 > k {
                    return Err(Error::Config(format!("B2={b2} exceeds the support {k} of block {i}")));
                }
            }
        }
        let gamma = if kind.is_msvr() { msvr_gamma(m, b1, beta)? } else { 1.0 - beta };
        let hp = HyperParams {
            alpha: 1.0,
            beta,
            gamma,
            eta: cfg.eta,
            period,
        };

        let traj = trajectory(problem, &cfg)?;
        let p = problem.inner_dim();
        let shift = cfg.init_error / libm::sqrt((m * p) as f64);
        let mut u0 = BlockMatrix::zeros(m, p);
        for i in 0..m {
            let g = problem.exact_inner_value(i, &traj[0])?;
            for (u, v) in u0.block_mut(i).iter_mut().zip(&g) {
                *u = v + shift;
            }
        }
        Ok(McSetup {
            problem,
            cfg,
            traj,
            u0,
            hp,
            noise,
            coef,
        })
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    pub fn trajectory(&self) -> &[ParamVector] {
        &self.traj
    }

    /// Tracking errors `e_0..=e_steps` of trial `k`.
    pub fn run_trial(&self, k: usize) -> Result<Vec<f64>> {
        let problem = self.problem;
        let cfg = &self.cfg;
        let m = problem.num_blocks();
        let base = streams::TRIALS + 2 * k as u64;
        let mut rng_blocks = RngStream::new(cfg.seed, base).rng();
        let mut rng_inner = RngStream::new(cfg.seed, base + 1).rng();
        let mut state = TrackerState::new(cfg.tracker, self.u0.clone());
        let mut errs = Vec::with_capacity(cfg.steps + 1);
        errs.push(crate::tracker::tracking_error(&state, problem, &self.traj[0])?);
        let kind = cfg.tracker;
        for t in 1..=cfg.steps {
            let (w, wp) = (&self.traj[t], &self.traj[t - 1]);
            if kind.uses_snapshot() && (t == 1 || t % self.hp.period == 0) {
                let mut values = BlockMatrix::zeros(m, problem.inner_dim());
                for i in 0..m {
                    values.block_mut(i).copy_from_slice(&problem.exact_inner_value(i, w)?);
                }
                state.set_snapshot(Snapshot {
                    point: w.clone(),
                    values,
                })?;
            }
            let blocks = sample_blocks(m, cfg.b1, &mut rng_blocks)?;
            let mut g_now = Vec::with_capacity(blocks.len());
            let mut g_prev = Vec::new();
            let mut g_snap = Vec::new();
            let mut jacs = Vec::new();
            for &i in &blocks {
                let batch = draw_batch(problem, i, cfg.b2, &mut rng_inner)?;
                g_now.push(problem.inner_value(i, w, &batch)?);
                if kind.needs_prev_value() {
                    g_prev.push(problem.inner_value(i, wp, &batch)?);
                }
                if let Some(s) = &state.snapshot {
                    g_snap.push(problem.inner_value(i, &s.point, &batch)?);
                }
                if kind.needs_jacobian() {
                    jacs.push(problem.inner_jacobian(i, w, &batch)?);
                }
            }
            let dw: Vec<f64> = w.iter().zip(wp.iter()).map(|(a, b)| a - b).collect();
            let input = TrackerInput {
                blocks: &blocks,
                g_now: &g_now,
                g_prev: kind.needs_prev_value().then_some(&g_prev[..]),
                g_snap: kind.uses_snapshot().then_some(&g_snap[..]),
                jac_now: kind.needs_jacobian().then_some(&jacs[..]),
                dw: Some(&dw),
            };
            state.update(&input, &self.hp)?;
            errs.push(crate::tracker::tracking_error(&state, problem, w)?);
        }
        Ok(errs)
    }

    /// Checks the recursion against accumulated trial statistics.
    pub fn report(&self, acc: &McAccumulator) -> Result<McReport> {
        let steps = self.cfg.steps;
        if acc.sum.len() != steps + 1 || acc.trials < 2 {
            return Err(Error::Input("accumulator does not match this setup".into()));
        }
        let nt = acc.trials as f64;
        let mean: Vec<f64> = acc.sum.iter().map(|s| s / nt).collect();
        let std: Vec<f64> = acc
            .sumsq
            .iter()
            .zip(&mean)
            .map(|(sq, mu)| libm::sqrt(((sq - nt * mu * mu) / (nt - 1.0)).max(0.0)))
            .collect();
        let contraction = 1.0 - self.cfg.b1 as f64 * self.cfg.beta / self.problem.num_blocks() as f64;
        let mut rhs = Vec::with_capacity(steps);
        let mut slack = Vec::with_capacity(steps);
        let mut violations = Vec::new();
        for t in 1..=steps {
            let dw = dist_sq(&self.traj[t], &self.traj[t - 1]);
            let r = contraction * mean[t - 1] + self.noise + self.coef * dw;
            let s = 3.0 * std[t] / libm::sqrt(nt) + 0.05 * r;
            if mean[t] > r + s + ROUNDING_FLOOR {
                violations.push(t);
            }
            rhs.push(r);
            slack.push(s);
        }
        Ok(McReport {
            lemma: self.cfg.lemma,
            tracker: self.cfg.tracker,
            trials: acc.trials,
            mean_error: mean,
            std_error: std,
            rhs,
            slack,
            violations,
        })
    }
}

/// Running sums of per-step errors. Merging is associative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct McAccumulator {
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub trials: usize,
}

impl McAccumulator {
    pub fn new(steps: usize) -> Self {
        McAccumulator {
            sum: vec![0.0; steps + 1],
            sumsq: vec![0.0; steps + 1],
            trials: 0,
        }
    }

    pub fn add(&mut self, errs: &[f64]) -> Result<()> {
        crate::error::check_len("mc accumulate", self.sum.len(), errs.len())?;
        for ((s, q), e) in self.sum.iter_mut().zip(self.sumsq.iter_mut()).zip(errs) {
            *s += e;
            *q += e * e;
        }
        self.trials += 1;
        Ok(())
    }

    pub fn merge(mut self, other: McAccumulator) -> Result<Self> {
        crate::error::check_len("mc merge", self.sum.len(), other.sum.len())?;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
        self.trials += other.trials;
        Ok(self)
    }
}

/// Runs every trial sequentially and checks the recursion.
pub fn mc_lemma_check<P: FccoProblem + ?Sized>(problem: &P, cfg: McConfig) -> Result<McReport> {
    let setup = McSetup::new(problem, cfg)?;
    let mut acc = McAccumulator::new(setup.cfg.steps);
    for k in 0..setup.cfg.trials {
        acc.add(&setup.run_trial(k)?)?;
    }
    setup.report(&acc)
}

fn trajectory<P: FccoProblem + ?Sized>(problem: &P, cfg: &McConfig) -> Result<Vec<ParamVector>> {
    let d = problem.dim();
    let len = cfg.eta * problem.constants().c_big_f();
    let mut rng = RngStream::new(cfg.seed, streams::DRIVER).rng();
    let mut unit = || -> Result<Vec<f64>> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if !(n > 0.0) {
            return Err(Error::State("degenerate driver direction".into()));
        }
        Ok(v.into_iter().map(|x| x / n).collect())
    };
    let fixed = unit()?;
    let mut traj = Vec::with_capacity(cfg.steps + 1);
    let mut w = problem.initial_point();
    traj.push(w.clone());
    for _ in 0..cfg.steps {
        let dir = match cfg.path {
            DriverPath::Straight => fixed.clone(),
            DriverPath::RandomWalk => unit()?,
        };
        for (x, v) in w.iter_mut().zip(&dir) {
            *x += len * v;
        }
        traj.push(w.clone());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{QuadraticConfig, QuadraticProblem};

    fn affine(sigma: f64, n: Option<usize>) -> QuadraticProblem {
        let cfg = QuadraticConfig {
            m: 8,
            d: 4,
            p: 2,
            n,
            sigma,
            ..QuadraticConfig::default()
        };
        QuadraticProblem::generate(&cfg, &mut RngStream::new(1, streams::PROBLEM).rng()).unwrap()
    }

    #[test]
    fn noiseless_fixed_point_contracts_exactly() {
        let p = affine(0.0, None);
        let cfg = McConfig {
            b1: 8,
            eta: 0.0,
            steps: 20,
            trials: 3,
            beta: 0.3,
            init_error: 2.0,
            ..McConfig::default()
        };
        let r = mc_lemma_check(&p, cfg).unwrap();
        for (t, e) in r.mean_error.iter().enumerate() {
            let want = 4.0 * libm::pow(0.7, 2.0 * t as f64);
            assert!((e - want).abs() <= 1e-12 * want.max(1e-300), "t={t}: {e} vs {want}");
        }
        assert!(r.passed());
    }

    #[test]
    fn preconditions_checked() {
        let p = affine(1.0, None);
        let bad_beta = McConfig {
            beta: 0.6,
            ..McConfig::default()
        };
        assert!(McSetup::new(&p, bad_beta).is_err());
        let bad_sp = McConfig {
            lemma: LemmaId::SinglePoint,
            tracker: TrackerKind::MsvrSp,
            beta: 0.01,
            eta: 0.2,
            ..McConfig::default()
        };
        assert!(McSetup::new(&p, bad_sp).is_err());
        let fs_infinite = McConfig {
            lemma: LemmaId::FiniteSum,
            tracker: TrackerKind::MsvrFs,
            ..McConfig::default()
        };
        assert!(McSetup::new(&p, fs_infinite).is_err());
        let fs = affine(1.0, Some(10));
        let fs_long_period = McConfig {
            lemma: LemmaId::FiniteSum,
            tracker: TrackerKind::MsvrFs,
            beta: 0.25,
            period: Some(100),
            ..McConfig::default()
        };
        assert!(McSetup::new(&fs, fs_long_period).is_err());
    }

    #[test]
    fn accumulators_merge() {
        let p = affine(1.0, None);
        let cfg = McConfig {
            steps: 5,
            trials: 10,
            ..McConfig::default()
        };
        let setup = McSetup::new(&p, cfg).unwrap();
        let mut whole = McAccumulator::new(5);
        let mut a = McAccumulator::new(5);
        let mut b = McAccumulator::new(5);
        for k in 0..10 {
            let e = setup.run_trial(k).unwrap();
            whole.add(&e).unwrap();
            if k < 4 { a.add(&e) } else { b.add(&e) }.unwrap();
        }
        let merged = a.merge(b).unwrap();
        assert_eq!(merged.trials, 10);
        for (x, y) in merged.sum.iter().zip(&whole.sum) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }
}
