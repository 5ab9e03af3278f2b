use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::BlockMatrix;
use crate::rng::RngStream;
use crate::schedule::HyperParams;
use crate::tracker::{msvr_gamma, TrackerKind, TrackerState};

/// One randomized comparison case.
#[derive(Clone, Debug, PartialEq)]
pub struct StormCase {
    pub m: usize,
    pub b1: usize,
    pub beta: f64,
    pub u: Vec<Vec<f64>>,
    pub g_now: Vec<Vec<f64>>,
    pub g_prev: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EquivReport {
    pub cases: usize,
    pub mismatches: usize,
}

impl EquivReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Per-block STORM: `u <- (1 - b) u + b g + (1 - b)(g - g_prev)`.
pub fn reference_storm_update(u: &[f64], g: &[f64], g_prev: &[f64], beta: f64) -> Vec<f64> {
    let keep = 1.0 - beta;
    let mut out = vec![0.0; u.len()];
    for k in 0..u.len() {
        out[k] = keep * u[k] + beta * g[k] + keep * (g[k] - g_prev[k]);
    }
    out
}

/// Runs `msvr_update` on every block and compares with the reference
/// bit for bit. Only defined when every block is sampled.
pub fn check_storm_case(case: &StormCase) -> Result<bool> {
    if case.b1 != case.m {
        return Err(Error::Config(alloc::format!(
            "STORM equivalence needs B1 = m (got B1={}, m={})",
            case.b1,
            case.m
        )));
    }
    let hp = HyperParams {
        alpha: 1.0,
        beta: case.beta,
        gamma: msvr_gamma(case.m, case.b1, case.beta)?,
        eta: 1.0,
        period: 1,
    };
    let blocks: Vec<usize> = (0..case.m).collect();
    let mut state = TrackerState::new(TrackerKind::Msvr, BlockMatrix::from_blocks(&case.u)?);
    state.msvr_update(&blocks, &case.g_now, &case.g_prev, &hp)?;
    for i in 0..case.m {
        let want = reference_storm_update(&case.u[i], &case.g_now[i], &case.g_prev[i], case.beta);
        let got = state.u.block(i);
        if want.iter().zip(got).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `instances` random cases with `B1 = m`; every tenth case sits on the
/// `beta = 1/2` boundary.
pub fn reference_storm_equiv(seed: u64, instances: usize) -> Result<EquivReport> {
    let mut rng = RngStream::new(seed, crate::rng::streams::DRIVER).rng();
    let mut mismatches = 0;
    for k in 0..instances {
        let m = rng.random_range(1..=16);
        let p = rng.random_range(1..=4);
        let beta = if k % 10 == 0 { 0.5 } else { rng.random_range(1e-4..=0.5) };
        let mut mat = |scale: f64| -> Vec<Vec<f64>> {
            (0..m)
                .map(|_| (0..p).map(|_| scale * (rng.random::<f64>() - 0.5)).collect())
                .collect()
        };
        let case = StormCase {
            m,
            b1: m,
            beta,
            u: mat(20.0),
            g_now: mat(20.0),
            g_prev: mat(20.0),
        };
        if !check_storm_case(&case)? {
            mismatches += 1;
        }
    }
    Ok(EquivReport {
        cases: instances,
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_cases_agree() {
        let r = reference_storm_equiv(3, 100).unwrap();
        assert_eq!(r.mismatches, 0);
    }

    #[test]
    fn partial_sampling_rejected() {
        let case = StormCase {
            m: 4,
            b1: 2,
            beta: 0.3,
            u: vec![vec![0.0]; 4],
            g_now: vec![vec![1.0]; 4],
            g_prev: vec![vec![1.0]; 4],
        };
        assert!(check_storm_case(&case).is_err());
    }

    #[test]
    fn boundary_beta() {
        let case = StormCase {
            m: 2,
            b1: 2,
            beta: 0.5,
            u: vec![vec![1.0, -3.0], vec![0.25, 7.0]],
            g_now: vec![vec![2.0, 1.0], vec![-1.0, 0.5]],
            g_prev: vec![vec![1.5, 1.0], vec![0.0, 0.0]],
        };
        assert!(check_storm_case(&case).unwrap());
    }
}
