//! Optimization loops: the two-point/single-point methods with moving
//! average or STORM directions, the finite-sum method with periodic
//! snapshots, stage-wise restarts and the adaptive step rule.

mod adaptive;
mod run;
mod stagewise;

use alloc::format;

pub use adaptive::{adaptive_step, AdaptiveMode, AdaptiveState, RadiusChoice};
pub use run::{Clock, Ledger, NullClock, RunOutput, Solver, StopReason, TraceRecord};
pub use stagewise::{run_stagewise, StageReport, StagewiseOutput, StagewiseSpec};

use crate::error::{Error, Result};
use crate::grad::GradKind;
use crate::problem::FccoProblem;
use crate::schedule::{Preset, ScheduleSpec};
use crate::tracker::TrackerKind;

/// Named algorithm configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    Sox,
    MsvrV1,
    MsvrV2,
    MsvrV3,
    VariantV1,
    VariantV2,
    VariantV3,
    StagewiseV1,
    StagewiseV2,
    StagewiseV3,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Sox,
        Method::MsvrV1,
        Method::MsvrV2,
        Method::MsvrV3,
        Method::VariantV1,
        Method::VariantV2,
        Method::VariantV3,
        Method::StagewiseV1,
        Method::StagewiseV2,
        Method::StagewiseV3,
    ];

    /// Tracker and gradient estimator. `single_point` selects the
    /// Jacobian-based tracker where one exists.
    pub fn pair(self, single_point: bool) -> (TrackerKind, GradKind) {
        let msvr = if single_point { TrackerKind::MsvrSp } else { TrackerKind::Msvr };
        match self {
            Method::Sox => (TrackerKind::SoxEma, GradKind::MovingAverage),
            Method::MsvrV1 | Method::StagewiseV1 => (msvr, GradKind::MovingAverage),
            Method::MsvrV2 | Method::StagewiseV2 => (msvr, GradKind::Storm),
            Method::MsvrV3 | Method::StagewiseV3 => (TrackerKind::MsvrFs, GradKind::FiniteSum),
            Method::VariantV1 => (TrackerKind::AblationV, GradKind::MovingAverage),
            Method::VariantV2 => (TrackerKind::AblationV, GradKind::Storm),
            Method::VariantV3 => (TrackerKind::AblationFs, GradKind::FiniteSum),
        }
    }

    pub fn default_preset(self) -> Preset {
        match self {
            Method::MsvrV1 => Preset::V1,
            Method::MsvrV2 => Preset::V2,
            Method::MsvrV3 => Preset::V3,
            Method::StagewiseV1 | Method::StagewiseV2 | Method::StagewiseV3 => Preset::Stagewise,
            _ => Preset::Constant,
        }
    }

    pub fn is_stagewise(self) -> bool {
        matches!(self, Method::StagewiseV1 | Method::StagewiseV2 | Method::StagewiseV3)
    }

    pub fn needs_finite_sum(self) -> bool {
        matches!(self, Method::MsvrV3 | Method::VariantV3 | Method::StagewiseV3)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Sox => "sox",
            Method::MsvrV1 => "msvr-v1",
            Method::MsvrV2 => "msvr-v2",
            Method::MsvrV3 => "msvr-v3",
            Method::VariantV1 => "variant-v1",
            Method::VariantV2 => "variant-v2",
            Method::VariantV3 => "variant-v3",
            Method::StagewiseV1 => "stagewise-v1",
            Method::StagewiseV2 => "stagewise-v2",
            Method::StagewiseV3 => "stagewise-v3",
        }
    }
}

/// Projection radius for `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Projection {
    /// `C_F` from the problem constants.
    Auto,
    Unbounded,
    Radius(f64),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SolverConfig {
    pub tracker: TrackerKind,
    pub grad: GradKind,
    pub schedule: ScheduleSpec,
    /// Maximum number of steps `T`.
    pub iterations: usize,
    pub b1: usize,
    pub b2: usize,
    pub seed: u64,
    /// A trace row is written every `trace_stride` steps (and at the end).
    pub trace_stride: usize,
    pub adaptive: AdaptiveMode,
    pub projection: Projection,
    /// Stop once this many inner samples have been drawn.
    pub sample_budget: Option<u64>,
    /// Stop once the exact gradient norm reaches this value.
    pub grad_target: Option<f64>,
    /// Stop once `F(w) - F_*` reaches this value (needs a known `F_*`).
    pub gap_target: Option<f64>,
    /// Skip the exact `u_err` and `z_err` columns (written as NaN).
    pub skip_tracking_errors: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let (tracker, grad) = Method::MsvrV2.pair(false);
        SolverConfig {
            tracker,
            grad,
            schedule: ScheduleSpec::default(),
            iterations: 1000,
            b1: 2,
            b2: 4,
            seed: 0,
            trace_stride: 10,
            adaptive: AdaptiveMode::Off,
            projection: Projection::Auto,
            sample_budget: None,
            grad_target: None,
            gap_target: None,
            skip_tracking_errors: false,
        }
    }
}

impl SolverConfig {
    pub fn for_method(method: Method, single_point: bool) -> Self {
        let (tracker, grad) = method.pair(single_point);
        SolverConfig {
            tracker,
            grad,
            schedule: ScheduleSpec {
                preset: method.default_preset(),
                ..ScheduleSpec::default()
            },
            ..SolverConfig::default()
        }
    }

    pub fn validate<P: FccoProblem + ?Sized>(&self, problem: &P) -> Result<()> {
        check_pair(self.tracker, self.grad)?;
        self.schedule.validate()?;
        self.adaptive.validate()?;
        let m = problem.num_blocks();
        if self.b1 == 0 || self.b1 > m {
            return Err(Error::Config(format!("B1={} must satisfy 1 <= B1 <= m={m}", self.b1)));
        }
        if self.b2 == 0 {
            return Err(Error::Config("B2 must be at least 1".into()));
        }
        if self.trace_stride == 0 {
            return Err(Error::Config("trace stride must be at least 1".into()));
        }
        if let Projection::Radius(r) = self.projection {
            if !(r > 0.0) {
                return Err(Error::Config("projection radius must be positive".into()));
            }
        }
        let finite = problem.max_support();
        if (self.tracker.uses_snapshot() || self.grad == GradKind::FiniteSum)
            && finite.is_none() {
                return Err(Error::Config(format!(
                    "{}/{} needs a finite-sum problem",
                    self.tracker.name(),
                    self.grad.name()
                )));
            }
        if let Some(n) = finite {
            for i in 0..m {
                if let crate::problem::Support::Finite(k) = problem.support(i)? {
                    if self.b2 > k {
                        return Err(Error::Config(format!(
                            "B2={} exceeds the support size {k} of block {i} (max {n})",
                            self.b2
                        )));
                    }
                }
            }
        }
        if self.gap_target.is_some() && problem.optimum().is_none() {
            return Err(Error::Config("gap_target needs a problem with known F_*".into()));
        }
        Ok(())
    }
}

/// Accepted (tracker, gradient) pairings.
pub fn check_pair(tracker: TrackerKind, grad: GradKind) -> Result<()> {
    use GradKind::*;
    use TrackerKind::*;
    let ok = match tracker {
        Msvr | MsvrSp | SoxEma | NaiveStorm | AblationV => matches!(grad, MovingAverage | Storm),
        MsvrFs | AblationFs => grad == FiniteSum,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "tracker {} cannot be paired with gradient estimator {}",
            tracker.name(),
            grad.name()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_pairs_are_valid() {
        for m in Method::ALL {
            for sp in [false, true] {
                let (t, g) = m.pair(sp);
                check_pair(t, g).unwrap();
            }
        }
    }

    #[test]
    fn rejects_mixed_pairs() {
        assert!(check_pair(TrackerKind::Msvr, GradKind::FiniteSum).is_err());
        assert!(check_pair(TrackerKind::MsvrFs, GradKind::Storm).is_err());
        assert!(check_pair(TrackerKind::AblationFs, GradKind::MovingAverage).is_err());
    }
}
