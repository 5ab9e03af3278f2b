//! A non-convex composition that satisfies the PL condition.
//!
//! With residuals `r_i = a_i^T w - b_i` and planted `b_i = a_i^T w*`,
//! `g_i(w) = (r_i, sin r_i)` and `f(u) = 1/2 u_1^2 + 3/2 u_2^2`, so
//! `F(w) = (1/2m) sum_i psi(r_i)` with `psi(x) = x^2 + 3 sin^2 x`.
//! `psi` is non-convex but `psi'(x)^2 >= k psi(x)` with `k ~ 0.351`, which
//! together with `m <= d` gives PL with `mu = k sigma_min(A)^2 / (4m)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_batch_nonempty, check_block, check_w, FccoProblem, OuterMap, ProblemConstants, Support};
use crate::error::{Error, Result};
use crate::linalg::{axpy_into, dot, min_singular_wide, norm, Jacobian, ParamVector};
use crate::sampling::InnerBatch;

/// A lower bound on `min_x psi'(x)^2 / psi(x)`.
const PSI_RATIO: f64 = 0.35;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PlConfig {
    pub m: usize,
    pub d: usize,
    /// Support size per block; `None` means Gaussian noise.
    pub n: Option<usize>,
    /// Root-mean-square norm of the additive value noise.
    pub sigma: f64,
    pub scale: f64,
    /// Norm of the planted minimizer.
    pub target_norm: f64,
    pub radius: Option<f64>,
}

impl Default for PlConfig {
    fn default() -> Self {
        PlConfig {
            m: 10,
            d: 20,
            n: Some(50),
            sigma: 0.5,
            scale: 1.0,
            target_norm: 1.0,
            radius: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlProblem {
    m: usize,
    d: usize,
    n: Option<usize>,
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    w_star: ParamVector,
    val_noise: Vec<Vec<[f64; 2]>>,
    noise_sd: f64,
    outer: OuterMap,
    constants: ProblemConstants,
}

impl PlProblem {
    pub fn generate<R: Rng + ?Sized>(cfg: &PlConfig, rng: &mut R) -> Result<Self> {
        if cfg.m == 0 || cfg.d == 0 {
            return Err(Error::Config("m and d must be positive".into()));
        }
        if cfg.m > cfg.d {
            return Err(Error::Config("the PL construction needs m <= d".into()));
        }
        if cfg.n == Some(0) {
            return Err(Error::Config("support size n must be positive".into()));
        }
        if !(cfg.scale > 0.0) || !(cfg.sigma >= 0.0) || !(cfg.target_norm >= 0.0) {
            return Err(Error::Config("scale must be positive and sigma nonnegative".into()));
        }
        let (m, d) = (cfg.m, cfg.d);
        let sd = cfg.scale / libm::sqrt(d as f64);
        let rows: Vec<Vec<f64>> = (0..m).map(|_| normal_vec(d, sd, rng)).collect();
        let mut w_star = normal_vec(d, 1.0, rng);
        let wn = norm(&w_star);
        w_star.iter_mut().for_each(|v| *v *= cfg.target_norm / wn);
        let targets: Vec<f64> = rows.iter().map(|a| dot(a, &w_star)).collect();

        let noise_sd = cfg.sigma / libm::sqrt(2.0);
        let val_noise = match cfg.n {
            Some(n) => (0..m)
                .map(|_| {
                    let mut draws: Vec<[f64; 2]> =
                        (0..n).map(|_| [noise_sd * std_normal(rng), noise_sd * std_normal(rng)]).collect();
                    let mean = draws.iter().fold([0.0; 2], |acc, e| [acc[0] + e[0], acc[1] + e[1]]);
                    for e in &mut draws {
                        e[0] -= mean[0] / n as f64;
                        e[1] -= mean[1] / n as f64;
                    }
                    draws
                })
                .collect(),
            None => Vec::new(),
        };

        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        let s_min = min_singular_wide(m, d, &flat);
        if s_min <= 1e-10 {
            return Err(Error::Config("rows of A are linearly dependent".into()));
        }
        let mu = PSI_RATIO * s_min * s_min / (4.0 * m as f64);
        let a_max = rows.iter().map(|a| norm(a)).fold(0.0, f64::max);
        let radius = cfg.radius.unwrap_or(2.0 * cfg.target_norm + 1.0);
        let r_max = a_max * (radius + cfg.target_norm);
        let sigma = match cfg.n {
            Some(n) => libm::sqrt(
                val_noise
                    .iter()
                    .map(|v: &Vec<[f64; 2]>| v.iter().map(|e| e[0] * e[0] + e[1] * e[1]).sum::<f64>() / n as f64)
                    .fold(0.0, f64::max),
            ),
            None => cfg.sigma,
        };
        let constants = ProblemConstants::new(
            libm::sqrt(r_max * r_max + 9.0),
            libm::sqrt(2.0) * a_max,
            3.0,
            a_max * a_max,
            sigma,
            Some(mu),
        )?;
        Ok(PlProblem {
            m,
            d,
            n: cfg.n,
            rows,
            targets,
            w_star: ParamVector::from_vec(w_star),
            val_noise,
            noise_sd,
            outer: OuterMap::WeightedSquare(vec![1.0, 3.0]),
            constants,
        })
    }

    fn residual(&self, block: usize, w: &[f64]) -> f64 {
        dot(&self.rows[block], w) - self.targets[block]
    }
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn normal_vec<R: Rng + ?Sized>(len: usize, sd: f64, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| sd * std_normal(rng)).collect()
}

impl FccoProblem for PlProblem {
    fn num_blocks(&self) -> usize {
        self.m
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn inner_dim(&self) -> usize {
        2
    }

    fn support(&self, block: usize) -> Result<Support> {
        check_block(self, "support", block)?;
        Ok(match self.n {
            Some(n) => Support::Finite(n),
            None => Support::Infinite,
        })
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn inner_value(&self, block: usize, w: &[f64], batch: &InnerBatch) -> Result<Vec<f64>> {
        check_batch_nonempty("inner_value", batch)?;
        let mut g = self.exact_inner_value(block, w)?;
        match (batch, self.n) {
            (InnerBatch::Indices(ix), Some(n)) => {
                let k = ix.len() as f64;
                for &j in ix {
                    crate::linalg::block_index("inner_value", j, n)?;
                    axpy_into(1.0 / k, &self.val_noise[block][j], &mut g);
                }
            }
            (InnerBatch::Noise { dim: 2, .. }, None) => {
                let k = batch.len();
                for s in 0..k {
                    axpy_into(self.noise_sd / k as f64, batch.noise(s), &mut g);
                }
            }
            _ => return Err(Error::Input("inner batch does not match the problem's support".into())),
        }
        Ok(g)
    }

    fn inner_jacobian(&self, block: usize, w: &[f64], batch: &InnerBatch) -> Result<Jacobian> {
        check_batch_nonempty("inner_jacobian", batch)?;
        self.exact_inner_jacobian(block, w)
    }

    fn exact_inner_value(&self, block: usize, w: &[f64]) -> Result<Vec<f64>> {
        check_block(self, "exact_inner_value", block)?;
        check_w(self, "exact_inner_value", w)?;
        let r = self.residual(block, w);
        Ok(vec![r, libm::sin(r)])
    }

    fn exact_inner_jacobian(&self, block: usize, w: &[f64]) -> Result<Jacobian> {
        check_block(self, "exact_inner_jacobian", block)?;
        check_w(self, "exact_inner_jacobian", w)?;
        let a = &self.rows[block];
        let c = libm::cos(self.residual(block, w));
        let mut data = a.clone();
        data.extend(a.iter().map(|v| c * v));
        Jacobian::from_row_major(2, self.d, data)
    }

    fn outer_value(&self, _block: usize, u: &[f64]) -> f64 {
        self.outer.value(u)
    }

    fn outer_grad(&self, _block: usize, u: &[f64]) -> Vec<f64> {
        self.outer.grad(u)
    }

    fn optimum(&self) -> Option<f64> {
        Some(0.0)
    }

    fn minimizer(&self) -> Option<ParamVector> {
        Some(self.w_star.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn psi_ratio_is_a_lower_bound() {
        let mut x = 1e-4;
        while x < 60.0 {
            let s = libm::sin(x);
            let psi = x * x + 3.0 * s * s;
            let dpsi = 2.0 * x + 3.0 * libm::sin(2.0 * x);
            assert!(dpsi * dpsi >= PSI_RATIO * psi, "x = {x}");
            x += 1e-3;
        }
    }

    #[test]
    fn pl_inequality_at_random_points() {
        let cfg = PlConfig::default();
        let prob = PlProblem::generate(&cfg, &mut RngStream::new(8, 0).rng()).unwrap();
        let mu = prob.constants().mu.unwrap();
        let mut rng = RngStream::new(8, 1).rng();
        for k in 0..1000 {
            let spread = 0.1 + 5.0 * (k % 10) as f64;
            let w = normal_vec(cfg.d, spread, &mut rng);
            let f = prob.exact_objective(&w).unwrap();
            let g = prob.exact_gradient(&w).unwrap();
            assert!(2.0 * mu * f <= dot(&g, &g) * (1.0 + 1e-12), "PL fails at sample {k}");
        }
    }

    #[test]
    fn planted_minimizer() {
        let prob = PlProblem::generate(&PlConfig::default(), &mut RngStream::new(9, 0).rng()).unwrap();
        let w = prob.minimizer().unwrap();
        assert!(prob.exact_objective(&w).unwrap().abs() < 1e-20);
        assert!(norm(&prob.exact_gradient(&w).unwrap()) < 1e-12);
    }

    #[test]
    fn needs_wide_design() {
        let cfg = PlConfig { m: 5, d: 3, ..Default::default() };
        assert!(PlProblem::generate(&cfg, &mut RngStream::new(0, 0).rng()).is_err());
    }
}
