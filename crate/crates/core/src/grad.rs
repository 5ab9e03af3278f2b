//! Gradient-direction estimators `z_t`.
//!
//! Each update consumes per-block summands `grad g_i(w; xi)^T grad f_i(u^i)`
//! computed by the solver, so the estimators never see the problem itself
//! (except at a snapshot refresh).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy_into, norm, BlockMatrix, ParamVector};
use crate::problem::FccoProblem;
use crate::schedule::HyperParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GradKind {
    #[cfg_attr(feature = "serde", serde(rename = "ma"))]
    MovingAverage,
    #[cfg_attr(feature = "serde", serde(rename = "storm"))]
    Storm,
    #[cfg_attr(feature = "serde", serde(rename = "fs"))]
    FiniteSum,
}

impl GradKind {
    pub fn name(self) -> &'static str {
        match self {
            GradKind::MovingAverage => "ma",
            GradKind::Storm => "storm",
            GradKind::FiniteSum => "fs",
        }
    }

    pub fn projects(self) -> bool {
        self != GradKind::FiniteSum
    }
}

/// `v` if `|v| <= radius`, else `v radius / |v|`.
pub fn project_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let len = norm(v);
    if len <= radius {
        v.to_vec()
    } else {
        let s = radius / len;
        v.iter().map(|x| x * s).collect()
    }
}

/// Snapshot quantities of the finite-sum estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSnapshot {
    pub point: ParamVector,
    /// `grad f_i(u_{tau-1}^i)` for every block.
    pub outer_grads: BlockMatrix,
    /// `G_tau = (1/m) sum_i grad g_i(w_tau)^T grad f_i(u_{tau-1}^i)`
    pub full_mean: Vec<f64>,
    /// Updates applied since the refresh.
    pub age: usize,
    pub period: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradEstState {
    pub z: Vec<f64>,
    pub kind: GradKind,
    /// `None` means unbounded.
    pub radius: Option<f64>,
    pub snapshot: Option<GradSnapshot>,
    updates: usize,
}

impl GradEstState {
    pub fn new(kind: GradKind, dim: usize, radius: Option<f64>) -> Result<Self> {
        if let Some(r) = radius {
            if !(r > 0.0) {
                return Err(Error::Config("projection radius must be positive".into()));
            }
        }
        Ok(GradEstState {
            z: vec![0.0; dim],
            kind,
            radius,
            snapshot: None,
            updates: 0,
        })
    }

    /// Number of updates applied so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// The first update has no history, so it uses `alpha = 1`.
    fn effective_alpha(&self, hp: &HyperParams) -> f64 {
        if self.updates == 0 {
            1.0
        } else {
            hp.alpha
        }
    }

    /// `z <- P[(1 - a) z + (a / B1) sum now]`
    pub fn ma_update(&mut self, grads_now: &[Vec<f64>], hp: &HyperParams) -> Result<()> {
        let alpha = self.effective_alpha(hp);
        check_alpha(alpha)?;
        let mean = self.mean(grads_now)?;
        for (z, g) in self.z.iter_mut().zip(&mean) {
            *z = (1.0 - alpha) * *z + alpha * g;
        }
        self.finish()
    }

    /// `z <- P[(1 - a) z + (a / B1) sum now + (1 - a)(1 / B1) sum (now - prev)]`
    ///
    /// Without `grads_prev` the step falls back to the moving average with
    /// `alpha = 1`.
    pub fn storm_update(&mut self, grads_now: &[Vec<f64>], grads_prev: Option<&[Vec<f64>]>, hp: &HyperParams) -> Result<()> {
        let Some(prev) = grads_prev else {
            let mut h = *hp;
            h.alpha = 1.0;
            return self.ma_update(grads_now, &h);
        };
        let alpha = self.effective_alpha(hp);
        check_alpha(alpha)?;
        let now = self.mean(grads_now)?;
        let before = self.mean(prev)?;
        for ((z, g), gp) in self.z.iter_mut().zip(&now).zip(&before) {
            *z = (1.0 - alpha) * *z + alpha * g + (1.0 - alpha) * (g - gp);
        }
        self.finish()
    }

    /// `h = (1/B1) sum (now - snap) + G_tau`,
    /// `z <- (1 - a) z + a h + (1 - a)(1/B1) sum (now - prev)`, unprojected.
    pub fn fs_update(
        &mut self,
        grads_now: &[Vec<f64>],
        grads_prev: Option<&[Vec<f64>]>,
        grads_snap: &[Vec<f64>],
        hp: &HyperParams,
    ) -> Result<()> {
        let snap = self
            .snapshot
            .as_ref()
            .ok_or_else(|| Error::State("finite-sum estimator has no snapshot".into()))?;
        if snap.age > snap.period {
            return Err(Error::State(format!(
                "snapshot is stale: {} updates since refresh, period {}",
                snap.age, snap.period
            )));
        }
        let alpha = if grads_prev.is_none() { 1.0 } else { self.effective_alpha(hp) };
        check_alpha(alpha)?;
        let now = self.mean(grads_now)?;
        let at_snap = self.mean(grads_snap)?;
        let mut h = self.snapshot.as_ref().map(|s| s.full_mean.clone()).unwrap_or_default();
        check_len("fs_update", self.z.len(), h.len())?;
        for ((hk, g), gs) in h.iter_mut().zip(&now).zip(&at_snap) {
            *hk += g - gs;
        }
        match grads_prev {
            Some(prev) => {
                let before = self.mean(prev)?;
                for (((z, hk), g), gp) in self.z.iter_mut().zip(&h).zip(&now).zip(&before) {
                    *z = (1.0 - alpha) * *z + alpha * hk + (1.0 - alpha) * (g - gp);
                }
            }
            None => self.z.copy_from_slice(&h),
        }
        if let Some(s) = self.snapshot.as_mut() {
            s.age += 1;
        }
        self.finish()
    }

    /// Recomputes the snapshot at `w_tau` using the tracker state `u_prev`
    /// from before the current step.
    pub fn refresh_snapshot<P: FccoProblem + ?Sized>(
        &mut self,
        problem: &P,
        w_tau: &[f64],
        u_prev: &BlockMatrix,
        period: usize,
    ) -> Result<()> {
        self.snapshot = Some(compute_snapshot(problem, w_tau, u_prev, period)?);
        Ok(())
    }

    fn mean(&self, summands: &[Vec<f64>]) -> Result<Vec<f64>> {
        if summands.is_empty() {
            return Err(Error::Input("gradient update needs at least one summand".into()));
        }
        let mut out = vec![0.0; self.z.len()];
        let k = summands.len() as f64;
        for s in summands {
            if s.len() != self.z.len() {
                return Err(Error::Input(format!(
                    "summand has length {}, expected {}",
                    s.len(),
                    self.z.len()
                )));
            }
            axpy_into(1.0 / k, s, &mut out);
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<()> {
        self.updates += 1;
        if self.kind.projects() {
            if let Some(r) = self.radius {
                self.z = project_ball(&self.z, r);
            }
        }
        if self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "gradient update",
                step: None,
            });
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Schedule(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// Exact snapshot terms at `w_tau`.
pub fn compute_snapshot<P: FccoProblem + ?Sized>(
    problem: &P,
    w_tau: &[f64],
    u_prev: &BlockMatrix,
    period: usize,
) -> Result<GradSnapshot> {
    let m = problem.num_blocks();
    check_len("refresh_snapshot", m, u_prev.num_blocks())?;
    let mut outer = Vec::with_capacity(m);
    let mut full = vec![0.0; problem.dim()];
    for i in 0..m {
        let fg = problem.outer_grad(i, u_prev.block(i));
        let jac = problem.exact_inner_jacobian(i, w_tau)?;
        axpy_into(1.0 / m as f64, &jac.tr_mul(&fg)?, &mut full);
        outer.push(fg);
    }
    Ok(GradSnapshot {
        point: ParamVector::from_vec(w_tau.to_vec()),
        outer_grads: BlockMatrix::from_blocks(&outer)?,
        full_mean: full,
        age: 0,
        period: period.max(1),
    })
}
