use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grad::{compute_snapshot, GradEstState, GradKind};
use crate::linalg::{axpy_into, BlockMatrix};
use crate::problem::FccoProblem;
use crate::sampling::full_batch;
use crate::schedule::HyperParams;

/// Largest coordinate gap between each estimator's `z` (plus the direct
/// term, if any) and `exact_gradient(w)`, with every block and every sample
/// probed, `u = g(w)` and `alpha = 1`. The update also sees a previous
/// point `w_prev` and, for `fs`, a snapshot at `w_snap`; neither may leak
/// into the result.
pub fn estimator_gap<P: FccoProblem + ?Sized>(
    problem: &P,
    kind: GradKind,
    w: &[f64],
    w_prev: &[f64],
    w_snap: &[f64],
) -> Result<f64> {
    let m = problem.num_blocks();
    let mut u = BlockMatrix::zeros(m, problem.inner_dim());
    let mut u_prev = u.clone();
    for i in 0..m {
        u.block_mut(i).copy_from_slice(&problem.exact_inner_value(i, w)?);
        u_prev.block_mut(i).copy_from_slice(&problem.exact_inner_value(i, w_prev)?);
    }
    let hp = HyperParams {
        alpha: 1.0,
        beta: 0.5,
        gamma: 0.5,
        eta: 1.0,
        period: 1,
    };
    let mut now = Vec::with_capacity(m);
    let mut before = Vec::with_capacity(m);
    let mut at_snap = Vec::with_capacity(m);
    let mut direct = alloc::vec![0.0; problem.dim()];
    let snap = compute_snapshot(problem, w_snap, &u_prev, 1)?;
    for i in 0..m {
        let batch = full_batch(problem, i)?;
        let fg = problem.outer_grad(i, u.block(i));
        now.push(problem.inner_jacobian(i, w, &batch)?.tr_mul(&fg)?);
        let fgp = problem.outer_grad(i, u_prev.block(i));
        before.push(problem.inner_jacobian(i, w_prev, &batch)?.tr_mul(&fgp)?);
        at_snap.push(problem.inner_jacobian(i, w_snap, &batch)?.tr_mul(snap.outer_grads.block(i))?);
        if problem.has_direct_term() {
            axpy_into(1.0 / m as f64, &problem.direct_grad(i, w, &batch)?, &mut direct);
        }
    }
    let mut est = GradEstState::new(kind, problem.dim(), None)?;
    // A first update so that the one under test is not the bootstrap.
    match kind {
        GradKind::MovingAverage => est.ma_update(&before, &hp)?,
        GradKind::Storm => est.storm_update(&before, None, &hp)?,
        GradKind::FiniteSum => {
            est.snapshot = Some(snap.clone());
            est.fs_update(&before, None, &before, &hp)?
        }
    }
    match kind {
        GradKind::MovingAverage => est.ma_update(&now, &hp)?,
        GradKind::Storm => est.storm_update(&now, Some(&before), &hp)?,
        GradKind::FiniteSum => est.fs_update(&now, Some(&before), &at_snap, &hp)?,
    }
    let exact = problem.exact_gradient(w)?;
    if exact.len() != est.z.len() {
        return Err(Error::Dimension {
            op: "estimator_gap",
            expected: exact.len(),
            found: est.z.len(),
        });
    }
    Ok(est
        .z
        .iter()
        .zip(&direct)
        .zip(&exact)
        .map(|((z, d), e)| (z + d - e).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{QuadraticConfig, QuadraticProblem};
    use crate::rng::RngStream;

    #[test]
    fn all_estimators_exact_on_noiseless_quadratic() {
        let cfg = QuadraticConfig {
            m: 4,
            d: 3,
            n: Some(6),
            sigma: 0.0,
            ..QuadraticConfig::default()
        };
        let p = QuadraticProblem::generate(&cfg, &mut RngStream::new(2, 5).rng()).unwrap();
        let w = [0.3, -0.1, 0.8];
        let wp = [0.0, 0.2, 0.5];
        let ws = [1.0, 1.0, -1.0];
        for kind in [GradKind::MovingAverage, GradKind::Storm, GradKind::FiniteSum] {
            assert!(estimator_gap(&p, kind, &w, &wp, &ws).unwrap() <= 1e-12);
        }
    }
}
