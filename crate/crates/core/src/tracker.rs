//! Inner-value trackers `u_t = (u_t^1, ..., u_t^m)`.
//!
//! Every update touches only the sampled blocks, except the ablation kinds,
//! which also decay unsampled blocks by `1 - beta`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dist_sq, BlockMatrix, InnerTracker, Jacobian, ParamVector};
use crate::problem::FccoProblem;
use crate::schedule::HyperParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TrackerKind {
    Msvr,
    MsvrSp,
    MsvrFs,
    SoxEma,
    NaiveStorm,
    AblationV,
    AblationFs,
}

impl TrackerKind {
    /// Kinds whose correction uses the MSVR coefficient and so need
    /// `beta <= 1/2`.
    pub fn is_msvr(self) -> bool {
        matches!(self, TrackerKind::Msvr | TrackerKind::MsvrSp | TrackerKind::MsvrFs)
    }

    pub fn uses_snapshot(self) -> bool {
        matches!(self, TrackerKind::MsvrFs | TrackerKind::AblationFs)
    }

    /// Kinds that re-evaluate the previous iterate on the current batch.
    pub fn needs_prev_value(self) -> bool {
        !matches!(self, TrackerKind::MsvrSp | TrackerKind::SoxEma)
    }

    pub fn needs_jacobian(self) -> bool {
        self == TrackerKind::MsvrSp
    }

    pub fn name(self) -> &'static str {
        match self {
            TrackerKind::Msvr => "msvr",
            TrackerKind::MsvrSp => "msvr-sp",
            TrackerKind::MsvrFs => "msvr-fs",
            TrackerKind::SoxEma => "sox-ema",
            TrackerKind::NaiveStorm => "naive-storm",
            TrackerKind::AblationV => "ablation-v",
            TrackerKind::AblationFs => "ablation-fs",
        }
    }
}

/// `gamma = (m - B1) / (B1 (1 - beta)) + (1 - beta)`
pub fn msvr_gamma(m: usize, b1: usize, beta: f64) -> Result<f64> {
    if b1 == 0 || b1 > m {
        return Err(Error::Config(format!("B1={b1} must satisfy 1 <= B1 <= m={m}")));
    }
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::Schedule(format!("MSVR needs beta in (0, 1/2], got {beta}")));
    }
    Ok((m - b1) as f64 / (b1 as f64 * (1.0 - beta)) + (1.0 - beta))
}

/// Exact inner values at the last snapshot point.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub point: ParamVector,
    pub values: BlockMatrix,
}

/// Everything an update may read, aligned with `blocks`.
#[derive(Clone, Copy, Debug)]
pub struct TrackerInput<'a> {
    pub blocks: &'a [usize],
    /// `g_i(w_t; xi_t^i)`
    pub g_now: &'a [Vec<f64>],
    /// `g_i(w_{t-1}; xi_t^i)` on the same batch.
    pub g_prev: Option<&'a [Vec<f64>]>,
    /// `g_i(w_tau; xi_t^i)` on the same batch.
    pub g_snap: Option<&'a [Vec<f64>]>,
    /// `grad g_i(w_t; xi_t^i)`
    pub jac_now: Option<&'a [Jacobian]>,
    /// `w_t - w_{t-1}`
    pub dw: Option<&'a [f64]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub u: InnerTracker,
    pub kind: TrackerKind,
    pub snapshot: Option<Snapshot>,
    /// Optional per-coordinate interval every stored block is kept inside.
    pub clamp: Option<(f64, f64)>,
}

impl TrackerState {
    pub fn new(kind: TrackerKind, u: InnerTracker) -> Self {
        TrackerState {
            u,
            kind,
            snapshot: None,
            clamp: None,
        }
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Config("clamp interval needs lo <= hi".into()));
        }
        self.clamp = Some((lo, hi));
        self.apply_clamp_all();
        Ok(self)
    }

    pub fn num_blocks(&self) -> usize {
        self.u.num_blocks()
    }

    pub fn set_snapshot(&mut self, snapshot: Snapshot) -> Result<()> {
        if !self.kind.uses_snapshot() {
            return Err(Error::State(format!("{} trackers keep no snapshot", self.kind.name())));
        }
        check_len("set_snapshot", self.u.num_blocks(), snapshot.values.num_blocks())?;
        check_len("set_snapshot", self.u.width(), snapshot.values.width())?;
        self.snapshot = Some(snapshot);
        Ok(())
    }

    /// Dispatches to the update rule of `self.kind`.
    pub fn update(&mut self, input: &TrackerInput<'_>, hp: &HyperParams) -> Result<()> {
        let kind = self.kind;
        fn need<'a>(kind: TrackerKind, v: Option<&'a [Vec<f64>]>, what: &str) -> Result<&'a [Vec<f64>]> {
            v.ok_or_else(|| Error::Input(format!("{} update needs {what}", kind.name())))
        }
        match self.kind {
            TrackerKind::Msvr => self.msvr_update(input.blocks, input.g_now, need(kind, input.g_prev, "g_prev")?, hp),
            TrackerKind::MsvrSp => {
                let jac = input
                    .jac_now
                    .ok_or_else(|| Error::Input("msvr-sp update needs Jacobians".into()))?;
                let dw = input.dw.ok_or_else(|| Error::Input("msvr-sp update needs dw".into()))?;
                self.msvr_sp_update(input.blocks, input.g_now, jac, dw, hp)
            }
            TrackerKind::MsvrFs => self.msvr_fs_update(
                input.blocks,
                input.g_now,
                need(kind, input.g_prev, "g_prev")?,
                need(kind, input.g_snap, "g_snap")?,
                hp,
            ),
            TrackerKind::SoxEma => self.sox_ema_update(input.blocks, input.g_now, hp),
            TrackerKind::NaiveStorm => {
                self.naive_storm_update(input.blocks, input.g_now, need(kind, input.g_prev, "g_prev")?, hp)
            }
            TrackerKind::AblationV => {
                self.ablation_update(input.blocks, input.g_now, need(kind, input.g_prev, "g_prev")?, hp)
            }
            TrackerKind::AblationFs => self.ablation_fs_update(
                input.blocks,
                input.g_now,
                need(kind, input.g_prev, "g_prev")?,
                need(kind, input.g_snap, "g_snap")?,
                hp,
            ),
        }
    }

    /// `u^i <- (1-b) u^i + b g_now + gamma (g_now - g_prev)` on sampled blocks.
    pub fn msvr_update(&mut self, blocks: &[usize], g_now: &[Vec<f64>], g_prev: &[Vec<f64>], hp: &HyperParams) -> Result<()> {
        let gamma = self.checked_gamma(blocks.len(), hp)?;
        self.check_values(blocks, &[g_now, g_prev])?;
        let beta = hp.beta;
        for (k, &i) in blocks.iter().enumerate() {
            for ((u, g), gp) in self.u.block_mut(i).iter_mut().zip(&g_now[k]).zip(&g_prev[k]) {
                *u = (1.0 - beta) * *u + beta * g + gamma * (g - gp);
            }
        }
        self.finish(blocks)
    }

    /// Single-point variant: the value difference becomes `J_now dw`.
    pub fn msvr_sp_update(
        &mut self,
        blocks: &[usize],
        g_now: &[Vec<f64>],
        jac_now: &[Jacobian],
        dw: &[f64],
        hp: &HyperParams,
    ) -> Result<()> {
        let gamma = self.checked_gamma(blocks.len(), hp)?;
        self.check_values(blocks, &[g_now])?;
        if jac_now.len() != blocks.len() {
            return Err(Error::Input(format!(
                "expected {} Jacobians, got {}",
                blocks.len(),
                jac_now.len()
            )));
        }
        let beta = hp.beta;
        for (k, &i) in blocks.iter().enumerate() {
            let drift = jac_now[k].mul(dw)?;
            check_len("msvr_sp_update", self.u.width(), drift.len())?;
            for ((u, g), dj) in self.u.block_mut(i).iter_mut().zip(&g_now[k]).zip(&drift) {
                *u = (1.0 - beta) * *u + beta * g + gamma * dj;
            }
        }
        self.finish(blocks)
    }

    /// Finite-sum variant with `g_hat = g_now - g_snap + g(w_tau)`.
    pub fn msvr_fs_update(
        &mut self,
        blocks: &[usize],
        g_now: &[Vec<f64>],
        g_prev: &[Vec<f64>],
        g_snap: &[Vec<f64>],
        hp: &HyperParams,
    ) -> Result<()> {
        let gamma = self.checked_gamma(blocks.len(), hp)?;
        let m = self.u.num_blocks() as f64;
        if hp.beta * hp.period as f64 > m / blocks.len() as f64 * (1.0 + 1e-12) {
            return Err(Error::Schedule(format!(
                "finite-sum tracker needs beta * I <= m / B1, got {} * {} > {}",
                hp.beta,
                hp.period,
                m / blocks.len() as f64
            )));
        }
        self.check_values(blocks, &[g_now, g_prev, g_snap])?;
        let snap = self
            .snapshot
            .as_ref()
            .ok_or_else(|| Error::State("finite-sum tracker has no snapshot".into()))?;
        let beta = hp.beta;
        for (k, &i) in blocks.iter().enumerate() {
            let full = snap.values.block(i);
            let row = self.u.block_mut(i);
            for c in 0..row.len() {
                let g = g_now[k][c];
                let g_hat = g - g_snap[k][c] + full[c];
                row[c] = (1.0 - beta) * row[c] + beta * g_hat + gamma * (g - g_prev[k][c]);
            }
        }
        self.finish(blocks)
    }

    /// Exponential moving average on sampled blocks.
    pub fn sox_ema_update(&mut self, blocks: &[usize], g_now: &[Vec<f64>], hp: &HyperParams) -> Result<()> {
        check_unit("sox-ema", hp.beta)?;
        self.check_values(blocks, &[g_now])?;
        let beta = hp.beta;
        for (k, &i) in blocks.iter().enumerate() {
            for (u, g) in self.u.block_mut(i).iter_mut().zip(&g_now[k]) {
                *u = (1.0 - beta) * *u + beta * g;
            }
        }
        self.finish(blocks)
    }

    /// STORM applied blockwise with momentum `1 - beta`, ignoring which
    /// blocks were sampled.
    pub fn naive_storm_update(
        &mut self,
        blocks: &[usize],
        g_now: &[Vec<f64>],
        g_prev: &[Vec<f64>],
        hp: &HyperParams,
    ) -> Result<()> {
        check_unit("naive-storm", hp.beta)?;
        self.check_values(blocks, &[g_now, g_prev])?;
        let beta = hp.beta;
        for (k, &i) in blocks.iter().enumerate() {
            for ((u, g), gp) in self.u.block_mut(i).iter_mut().zip(&g_now[k]).zip(&g_prev[k]) {
                *u = (1.0 - beta) * *u + beta * g + (1.0 - beta) * (g - gp);
            }
        }
        self.finish(blocks)
    }

    /// Importance-weighted STORM over all blocks; unsampled blocks decay.
    pub fn ablation_update(&mut self, blocks: &[usize], g_now: &[Vec<f64>], g_prev: &[Vec<f64>], hp: &HyperParams) -> Result<()> {
        check_unit("ablation-v", hp.beta)?;
        self.check_values(blocks, &[g_now, g_prev])?;
        let beta = hp.beta;
        let scale = self.u.num_blocks() as f64 / blocks.len() as f64;
        self.decay_unselected(blocks, beta);
        for (k, &i) in blocks.iter().enumerate() {
            for ((u, g), gp) in self.u.block_mut(i).iter_mut().zip(&g_now[k]).zip(&g_prev[k]) {
                *u = (1.0 - beta) * *u + beta * scale * g + (1.0 - beta) * scale * (g - gp);
            }
        }
        self.finish_all()
    }

    /// `ablation_update` with the snapshot-corrected value `g_hat`.
    pub fn ablation_fs_update(
        &mut self,
        blocks: &[usize],
        g_now: &[Vec<f64>],
        g_prev: &[Vec<f64>],
        g_snap: &[Vec<f64>],
        hp: &HyperParams,
    ) -> Result<()> {
        check_unit("ablation-fs", hp.beta)?;
        self.check_values(blocks, &[g_now, g_prev, g_snap])?;
        let snap = self
            .snapshot
            .as_ref()
            .ok_or_else(|| Error::State("finite-sum tracker has no snapshot".into()))?
            .values
            .clone();
        let beta = hp.beta;
        let scale = self.u.num_blocks() as f64 / blocks.len() as f64;
        self.decay_unselected(blocks, beta);
        for (k, &i) in blocks.iter().enumerate() {
            let full = snap.block(i);
            let row = self.u.block_mut(i);
            for c in 0..row.len() {
                let g = g_now[k][c];
                let g_hat = g - g_snap[k][c] + full[c];
                row[c] = (1.0 - beta) * row[c] + beta * scale * g_hat + (1.0 - beta) * scale * (g - g_prev[k][c]);
            }
        }
        self.finish_all()
    }

    fn checked_gamma(&self, b1: usize, hp: &HyperParams) -> Result<f64> {
        let gamma = msvr_gamma(self.u.num_blocks(), b1, hp.beta)?;
        if (hp.gamma - gamma).abs() > 1e-12 * gamma.abs().max(1.0) {
            return Err(Error::Schedule(format!(
                "gamma {} is inconsistent with msvr_gamma = {gamma}",
                hp.gamma
            )));
        }
        Ok(gamma)
    }

    fn check_values(&self, blocks: &[usize], sets: &[&[Vec<f64>]]) -> Result<()> {
        let m = self.u.num_blocks();
        let p = self.u.width();
        if blocks.is_empty() {
            return Err(Error::Input("no sampled blocks".into()));
        }
        for (k, &i) in blocks.iter().enumerate() {
            crate::linalg::block_index("tracker update", i, m)?;
            if k > 0 && blocks[k - 1] >= i {
                return Err(Error::Input("block ids must be sorted and distinct".into()));
            }
        }
        for set in sets {
            if set.len() != blocks.len() {
                return Err(Error::Input(format!(
                    "expected values for {} blocks, got {}",
                    blocks.len(),
                    set.len()
                )));
            }
            for v in set.iter() {
                check_len("tracker update", p, v.len())?;
            }
        }
        Ok(())
    }

    fn decay_unselected(&mut self, blocks: &[usize], beta: f64) {
        let mut next = 0;
        for i in 0..self.u.num_blocks() {
            if next < blocks.len() && blocks[next] == i {
                next += 1;
                continue;
            }
            self.u.block_mut(i).iter_mut().for_each(|u| *u *= 1.0 - beta);
        }
    }

    fn finish(&mut self, blocks: &[usize]) -> Result<()> {
        if let Some((lo, hi)) = self.clamp {
            for &i in blocks {
                self.u.block_mut(i).iter_mut().for_each(|u| *u = u.clamp(lo, hi));
            }
        }
        for &i in blocks {
            if self.u.block(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: "tracker update",
                    step: None,
                });
            }
        }
        Ok(())
    }

    fn finish_all(&mut self) -> Result<()> {
        self.apply_clamp_all();
        if !self.u.is_finite() {
            return Err(Error::NonFinite {
                op: "tracker update",
                step: None,
            });
        }
        Ok(())
    }

    fn apply_clamp_all(&mut self) {
        if let Some((lo, hi)) = self.clamp {
            for i in 0..self.u.num_blocks() {
                self.u.block_mut(i).iter_mut().for_each(|u| *u = u.clamp(lo, hi));
            }
        }
    }
}

fn check_unit(kind: &str, beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::Schedule(format!("{kind} needs beta in [0, 1], got {beta}")))
    }
}

/// `sum_i |u^i - g_i(w)|^2`
pub fn tracking_error<P: FccoProblem + ?Sized>(state: &TrackerState, problem: &P, w: &[f64]) -> Result<f64> {
    check_len("tracking_error", problem.num_blocks(), state.u.num_blocks())?;
    let mut total = 0.0;
    for i in 0..problem.num_blocks() {
        let g = problem.exact_inner_value(i, w)?;
        check_len("tracking_error", state.u.width(), g.len())?;
        total += dist_sq(state.u.block(i), &g);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn hp(beta: f64, gamma: f64) -> HyperParams {
        HyperParams {
            alpha: 0.5,
            beta,
            gamma,
            eta: 0.1,
            period: 1,
        }
    }

    fn scalar(kind: TrackerKind, vals: &[f64]) -> TrackerState {
        let rows: Vec<Vec<f64>> = vals.iter().map(|v| vec![*v]).collect();
        TrackerState::new(kind, BlockMatrix::from_blocks(&rows).unwrap())
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(msvr_gamma(4, 1, 0.5).unwrap(), 6.5);
        assert_eq!(msvr_gamma(2, 1, 0.5).unwrap(), 2.5);
        for &beta in &[0.01, 0.25, 0.5] {
            assert_eq!(msvr_gamma(7, 7, beta).unwrap(), 1.0 - beta);
        }
        assert!(matches!(msvr_gamma(2, 1, 0.6), Err(Error::Schedule(_))));
        assert!(matches!(msvr_gamma(2, 1, 0.0), Err(Error::Schedule(_))));
    }

    #[test]
    fn msvr_examples() {
        let mut s = scalar(TrackerKind::Msvr, &[2.0, 9.0]);
        s.msvr_update(&[0], &[vec![1.0]], &[vec![1.5]], &hp(0.5, 2.5)).unwrap();
        assert_eq!(s.u.block(0), &[0.25]);
        assert_eq!(s.u.block(1), &[9.0]);

        let mut s = scalar(TrackerKind::Msvr, &[3.0, 1.0, 1.0, 1.0]);
        let g = msvr_gamma(4, 1, 0.25).unwrap();
        s.msvr_update(&[0], &[vec![5.0]], &[vec![5.0]], &hp(0.25, g)).unwrap();
        assert_eq!(s.u.block(0), &[0.75 * 3.0 + 0.25 * 5.0]);
    }

    #[test]
    fn msvr_rejects_inconsistent_gamma() {
        let mut s = scalar(TrackerKind::Msvr, &[0.0, 0.0]);
        let err = s.msvr_update(&[0], &[vec![1.0]], &[vec![1.0]], &hp(0.5, 0.5));
        assert!(matches!(err, Err(Error::Schedule(_))));
    }

    #[test]
    fn msvr_rejects_missing_values() {
        let mut s = scalar(TrackerKind::Msvr, &[0.0, 0.0]);
        let err = s.msvr_update(&[0, 1], &[vec![1.0]], &[vec![1.0]], &hp(0.5, 0.5));
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn msvr_sp_example() {
        let mut s = TrackerState::new(TrackerKind::MsvrSp, BlockMatrix::zeros(2, 1));
        let jac = Jacobian::from_row_major(1, 2, vec![2.0, 0.0]).unwrap();
        s.msvr_sp_update(&[0], &[vec![1.0]], &[jac], &[0.5, 9.0], &hp(0.5, 2.5)).unwrap();
        assert_eq!(s.u.block(0), &[3.0]);
    }

    #[test]
    fn msvr_sp_zero_step_is_ema() {
        let mut s = scalar(TrackerKind::MsvrSp, &[4.0, 2.0]);
        let jac = Jacobian::from_row_major(1, 2, vec![2.0, 7.0]).unwrap();
        s.msvr_sp_update(&[1], &[vec![0.0]], &[jac], &[0.0, 0.0], &hp(0.5, 2.5)).unwrap();
        assert_eq!(s.u.block(1), &[1.0]);
    }

    #[test]
    fn msvr_fs_example() {
        let mut s = TrackerState::new(TrackerKind::MsvrFs, BlockMatrix::zeros(2, 1));
        s.set_snapshot(Snapshot {
            point: ParamVector::zeros(1),
            values: BlockMatrix::from_blocks(&[vec![0.9], vec![0.0]]).unwrap(),
        })
        .unwrap();
        let mut h = hp(0.5, 2.5);
        h.period = 2;
        s.msvr_fs_update(&[0], &[vec![1.2]], &[vec![1.1]], &[vec![1.0]], &h).unwrap();
        assert!((s.u.block(0)[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn msvr_fs_preconditions() {
        let mut s = TrackerState::new(TrackerKind::MsvrFs, BlockMatrix::zeros(2, 1));
        let err = s.msvr_fs_update(&[0], &[vec![1.0]], &[vec![1.0]], &[vec![1.0]], &hp(0.5, 2.5));
        assert!(matches!(err, Err(Error::State(_))));
        let mut h = hp(0.5, 2.5);
        h.period = 5;
        let err = s.msvr_fs_update(&[0], &[vec![1.0]], &[vec![1.0]], &[vec![1.0]], &h);
        assert!(matches!(err, Err(Error::Schedule(_))));
    }

    #[test]
    fn sox_examples() {
        let mut s = scalar(TrackerKind::SoxEma, &[4.0, 3.0]);
        s.sox_ema_update(&[0], &[vec![0.0]], &hp(0.5, 0.0)).unwrap();
        assert_eq!(s.u.block(0), &[2.0]);
        s.sox_ema_update(&[0, 1], &[vec![7.0], vec![8.0]], &hp(1.0, 0.0)).unwrap();
        assert_eq!(s.u.as_slice(), &[7.0, 8.0]);
        s.sox_ema_update(&[0, 1], &[vec![1.0], vec![1.0]], &hp(0.0, 0.0)).unwrap();
        assert_eq!(s.u.as_slice(), &[7.0, 8.0]);
    }

    #[test]
    fn naive_storm_example() {
        let mut s = scalar(TrackerKind::NaiveStorm, &[2.0]);
        s.naive_storm_update(&[0], &[vec![1.0]], &[vec![1.5]], &hp(0.5, 0.0)).unwrap();
        assert_eq!(s.u.block(0), &[1.25]);
    }

    #[test]
    fn ablation_examples() {
        let mut s = scalar(TrackerKind::AblationV, &[0.0, 2.0, 0.0, 0.0]);
        s.ablation_update(&[0, 2], &[vec![1.0], vec![1.0]], &[vec![1.0], vec![1.0]], &hp(0.5, 0.0))
            .unwrap();
        assert_eq!(s.u.block(0), &[1.0]);
        assert_eq!(s.u.block(1), &[1.0]);
    }

    #[test]
    fn clamp_holds_after_update() {
        let mut s = scalar(TrackerKind::SoxEma, &[0.0, 0.0]).with_clamp(-1.0, 1.0).unwrap();
        s.sox_ema_update(&[1], &[vec![10.0]], &hp(0.5, 0.0)).unwrap();
        assert_eq!(s.u.block(1), &[1.0]);
    }

    #[test]
    fn snapshot_only_for_finite_sum_kinds() {
        let mut s = scalar(TrackerKind::Msvr, &[0.0]);
        let snap = Snapshot {
            point: ParamVector::zeros(1),
            values: BlockMatrix::zeros(1, 1),
        };
        assert!(matches!(s.set_snapshot(snap), Err(Error::State(_))));
    }
}
