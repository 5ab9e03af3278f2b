//! Hyperparameter schedules.
//!
//! The presets follow the step-size shapes that come with each algorithm's
//! guarantee; absolute constants are the multipliers `c_eta`, `c_alpha`,
//! `c_beta` (and `c0`, `c_t` for stage-wise runs).

use alloc::format;

use crate::error::{Error, Result};
use crate::tracker::{msvr_gamma, TrackerKind};

pub const BETA_MAX: f64 = 0.5;
pub const ALPHA_MAX: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Preset {
    V1,
    V2,
    V3,
    Stagewise,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScheduleSpec {
    pub preset: Preset,
    pub c_eta: f64,
    pub c_alpha: f64,
    pub c_beta: f64,
    /// Offset `a` in `(a + t)`.
    pub offset: f64,
    /// Stage-wise constant `c0`.
    pub c0: f64,
    /// Stage-wise multiplier on `T_s`.
    pub c_t: f64,
    /// Values for the constant preset.
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    /// Snapshot period override for finite-sum methods.
    pub period: Option<usize>,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            preset: Preset::Constant,
            c_eta: 1.0,
            c_alpha: 1.0,
            c_beta: 1.0,
            offset: 1.0,
            c0: 1.0,
            c_t: 1.0,
            alpha: 0.5,
            beta: 0.5,
            eta: 0.1,
            period: None,
        }
    }
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.c_eta, self.c_alpha, self.c_beta, self.c0, self.c_t];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("schedule multipliers must be positive".into()));
        }
        if !(self.offset.is_finite() && self.offset >= 0.0) {
            return Err(Error::Config("schedule offset must be nonnegative".into()));
        }
        if self.preset == Preset::Constant {
            if !(0.0..=ALPHA_MAX).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
                return Err(Error::Config("constant alpha and beta must lie in [0, 1]".into()));
            }
            if !(self.eta.is_finite() && self.eta > 0.0) {
                return Err(Error::Config("constant eta must be positive".into()));
            }
        }
        if self.period == Some(0) {
            return Err(Error::Config("snapshot period must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-step values of `alpha_t, beta_t, gamma_t, eta_t` and the snapshot
/// period `I`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub period: usize,
}

fn with_gamma(m: usize, b1: usize, alpha: f64, beta: f64, eta: f64) -> Result<HyperParams> {
    Ok(HyperParams {
        alpha,
        beta,
        gamma: msvr_gamma(m, b1, beta)?,
        eta,
        period: 1,
    })
}

fn check_batches(m: usize, b1: usize, b2: usize) -> Result<()> {
    if b1 == 0 || b1 > m || b2 == 0 {
        return Err(Error::Config(format!("need 1 <= B1 <= m and B2 >= 1 (m={m}, B1={b1}, B2={b2})")));
    }
    Ok(())
}

/// `eta = c_eta min{(B1 sqrt(B2)/m)^(2/3) (a+t)^(-1/3), sqrt(min(B1,B2)) (a+t)^(-1/2)}`,
/// `alpha = min(1, c_alpha eta)`, `beta = min(1/2, c_beta m^2 eta^2 / B1^2)`.
pub fn schedule_v1(t: usize, m: usize, b1: usize, b2: usize, spec: &ScheduleSpec) -> Result<HyperParams> {
    check_batches(m, b1, b2)?;
    let at = spec.offset + t as f64;
    if !(at > 0.0) {
        return Err(Error::Schedule("a + t must be positive".into()));
    }
    let ratio = b1 as f64 * libm::sqrt(b2 as f64) / m as f64;
    let first = libm::pow(ratio, 2.0 / 3.0) * libm::pow(at, -1.0 / 3.0);
    let second = libm::sqrt(b1.min(b2) as f64) * libm::pow(at, -0.5);
    let eta = spec.c_eta * first.min(second);
    let alpha = (spec.c_alpha * eta).min(ALPHA_MAX);
    let r = m as f64 * eta / b1 as f64;
    let beta = (spec.c_beta * r * r).min(BETA_MAX);
    with_gamma(m, b1, alpha, beta, eta)
}

/// `eta = c_eta (B1 sqrt(B2)/m)^(2/3) (a+t)^(-1/3)`,
/// `alpha = min(1, c_alpha m eta^2 / B1)`, `beta = min(1/2, c_beta m^2 eta^2 / B1^2)`.
pub fn schedule_v2(t: usize, m: usize, b1: usize, b2: usize, spec: &ScheduleSpec) -> Result<HyperParams> {
    check_batches(m, b1, b2)?;
    let at = spec.offset + t as f64;
    if !(at > 0.0) {
        return Err(Error::Schedule("a + t must be positive".into()));
    }
    let ratio = b1 as f64 * libm::sqrt(b2 as f64) / m as f64;
    let eta = spec.c_eta * libm::pow(ratio, 2.0 / 3.0) * libm::pow(at, -1.0 / 3.0);
    let alpha = (spec.c_alpha * m as f64 * eta * eta / b1 as f64).min(ALPHA_MAX);
    let r = m as f64 * eta / b1 as f64;
    let beta = (spec.c_beta * r * r).min(BETA_MAX);
    with_gamma(m, b1, alpha, beta, eta)
}

/// Constant finite-sum settings: `I = ceil(mn / (B1 B2))`,
/// `alpha = c_alpha B1 B2 / (mn)`, `beta = c_beta B2 / n`,
/// `eta = c_eta B1 sqrt(B2) / (m sqrt(n))`, with `beta`, `alpha` reduced if
/// needed so that `beta I <= m / B1` and `alpha I <= 1`.
pub fn schedule_v3(m: usize, n: usize, b1: usize, b2: usize, spec: &ScheduleSpec) -> Result<HyperParams> {
    check_batches(m, b1, b2)?;
    if n == 0 || b2 > n {
        return Err(Error::Config(format!("need 1 <= B2 <= n (B2={b2}, n={n})")));
    }
    let (mf, nf, b1f, b2f) = (m as f64, n as f64, b1 as f64, b2 as f64);
    let period = spec.period.unwrap_or_else(|| (m * n).div_ceil(b1 * b2)).max(1);
    let mut alpha = (spec.c_alpha * b1f * b2f / (mf * nf)).min(ALPHA_MAX);
    let mut beta = (spec.c_beta * b2f / nf).min(BETA_MAX);
    let eta = spec.c_eta * b1f * libm::sqrt(b2f) / (mf * libm::sqrt(nf));
    let beta_cap = mf / b1f / period as f64;
    if beta > beta_cap {
        log::warn!("reducing beta from {beta} to {beta_cap} so that beta * I <= m / B1");
        beta = beta_cap;
    }
    let alpha_cap = 1.0 / period as f64;
    if alpha > alpha_cap {
        log::warn!("reducing alpha from {alpha} to {alpha_cap} so that alpha * I <= 1");
        alpha = alpha_cap;
    }
    let mut hp = with_gamma(m, b1, alpha, beta, eta)?;
    hp.period = period;
    Ok(hp)
}

/// Stage `s` (1-based) of the stage-wise method: returns `(T_s, params)`.
///
/// With `finite_sum = Some(n)` the finite-sum variant is used, whose
/// settings do not change across stages.
#[allow(clippy::too_many_arguments)]
pub fn schedule_stagewise(
    s: usize,
    eps_1: f64,
    mu: f64,
    m: usize,
    finite_sum: Option<usize>,
    b1: usize,
    b2: usize,
    spec: &ScheduleSpec,
) -> Result<(usize, HyperParams)> {
    check_batches(m, b1, b2)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Config("stage-wise schedules need mu > 0".into()));
    }
    if !(eps_1 > 0.0 && eps_1.is_finite()) {
        return Err(Error::Config("stage-wise schedules need eps_1 > 0".into()));
    }
    if s == 0 {
        return Err(Error::Config("stages are numbered from 1".into()));
    }
    let (mf, b1f, b2f) = (m as f64, b1 as f64, b2 as f64);
    if let Some(n) = finite_sum {
        let mut hp = schedule_v3(m, n, b1, b2, spec)?;
        let nf = n as f64;
        let t = spec.c_t * (mf * nf / (b1f * b2f)).max(mf * libm::sqrt(nf) / (mu * b1f * libm::sqrt(b2f)));
        hp.period = hp.period.max(1);
        return Ok((ceil_steps(t)?, hp));
    }
    let eps = eps_1 * libm::pow(2.0, -((s - 1) as f64));
    let c0 = spec.c0;
    let root = libm::sqrt(b2f * mu * eps);
    let eta = spec.c_eta * 8.0 * b1f * root / (mf * c0 * c0);
    let beta = (spec.c_beta * b2f * mu * eps).min(BETA_MAX);
    let alpha = (b1f * beta / mf).min(ALPHA_MAX);
    let t = spec.c_t * (mf * c0 * c0 / (b1f * mu * root)).max(mf * c0 * c0 * c0 * c0 / (b1f * b2f * mu * eps));
    Ok((ceil_steps(t)?, with_gamma(m, b1, alpha, beta, eta)?))
}

fn ceil_steps(t: f64) -> Result<usize> {
    if !t.is_finite() || t > 1e12 {
        return Err(Error::Schedule(format!("stage length {t} is not usable")));
    }
    Ok((libm::ceil(t) as usize).max(1))
}

/// Counts of adjustments the driver made to scheduled values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClampCounts {
    pub beta: u64,
    pub eta_sqrt_beta: u64,
    pub beta_period: u64,
}

/// Turns a spec into per-step parameters for one tracker kind.
#[derive(Clone, Debug)]
pub struct Schedule {
    spec: ScheduleSpec,
    tracker: TrackerKind,
    m: usize,
    n: Option<usize>,
    b1: usize,
    b2: usize,
    /// Finite-sum base, computed once.
    fixed: Option<HyperParams>,
    pub clamps: ClampCounts,
}

impl Schedule {
    pub fn new(spec: ScheduleSpec, tracker: TrackerKind, m: usize, n: Option<usize>, b1: usize, b2: usize) -> Result<Self> {
        spec.validate()?;
        check_batches(m, b1, b2)?;
        let fixed = match spec.preset {
            Preset::V3 => {
                let n = n.ok_or_else(|| Error::Config("the v3 schedule needs a finite-sum problem".into()))?;
                Some(schedule_v3(m, n, b1, b2, &spec)?)
            }
            Preset::Constant => {
                let period = match (spec.period, n) {
                    (Some(p), _) => p,
                    (None, Some(n)) if tracker.uses_snapshot() => (m * n).div_ceil(b1 * b2),
                    _ => 1,
                };
                Some(HyperParams {
                    alpha: spec.alpha,
                    beta: spec.beta,
                    gamma: 0.0,
                    eta: spec.eta,
                    period: period.max(1),
                })
            }
            Preset::Stagewise => {
                return Err(Error::Config(
                    "the stage-wise preset is driven stage by stage, not per step".into(),
                ))
            }
            Preset::V1 | Preset::V2 => None,
        };
        Ok(Schedule {
            spec,
            tracker,
            m,
            n,
            b1,
            b2,
            fixed,
            clamps: ClampCounts::default(),
        })
    }

    /// A schedule that always returns `hp` (after the same safety checks).
    pub fn fixed(hp: HyperParams, tracker: TrackerKind, m: usize, n: Option<usize>, b1: usize, b2: usize) -> Result<Self> {
        check_batches(m, b1, b2)?;
        Ok(Schedule {
            spec: ScheduleSpec::default(),
            tracker,
            m,
            n,
            b1,
            b2,
            fixed: Some(hp),
            clamps: ClampCounts::default(),
        })
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn support(&self) -> Option<usize> {
        self.n
    }

    /// Parameters for step `t` (1-based).
    pub fn at(&mut self, t: usize) -> Result<HyperParams> {
        let mut hp = match self.fixed {
            Some(hp) => hp,
            None => match self.spec.preset {
                Preset::V1 => schedule_v1(t, self.m, self.b1, self.b2, &self.spec)?,
                Preset::V2 => schedule_v2(t, self.m, self.b1, self.b2, &self.spec)?,
                _ => unreachable!("fixed presets are precomputed"),
            },
        };
        self.finalize(&mut hp)?;
        Ok(hp)
    }

    fn finalize(&mut self, hp: &mut HyperParams) -> Result<()> {
        if !(hp.eta > 0.0 && hp.eta.is_finite()) {
            return Err(Error::Schedule(format!("eta must be positive, got {}", hp.eta)));
        }
        if !(0.0..=ALPHA_MAX).contains(&hp.alpha) {
            return Err(Error::Schedule(format!("alpha must lie in [0, 1], got {}", hp.alpha)));
        }
        if self.tracker.is_msvr() {
            if hp.beta > BETA_MAX {
                if self.clamps.beta == 0 {
                    log::warn!("clamping beta {} to {BETA_MAX}", hp.beta);
                }
                self.clamps.beta += 1;
                hp.beta = BETA_MAX;
            }
            if self.tracker == TrackerKind::MsvrFs {
                let cap = self.m as f64 / self.b1 as f64 / hp.period as f64;
                if hp.beta > cap {
                    if self.clamps.beta_period == 0 {
                        log::warn!("reducing beta {} to {cap} so that beta * I <= m / B1", hp.beta);
                    }
                    self.clamps.beta_period += 1;
                    hp.beta = cap;
                }
            }
            hp.gamma = msvr_gamma(self.m, self.b1, hp.beta)?;
        } else {
            if !(0.0..=1.0).contains(&hp.beta) {
                return Err(Error::Schedule(format!("beta must lie in [0, 1], got {}", hp.beta)));
            }
            hp.gamma = 1.0 - hp.beta;
        }
        if self.tracker == TrackerKind::MsvrSp {
            let cap = libm::sqrt(hp.beta);
            if hp.eta > cap {
                self.clamps.eta_sqrt_beta += 1;
                hp.eta = cap;
            }
        }
        Ok(())
    }
}
