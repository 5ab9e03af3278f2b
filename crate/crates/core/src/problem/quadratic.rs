//! Affine inner maps under a half-square (or identity) outer map.
//!
//! `g_i(w; xi) = (A_i + E_xi) w + b_i + e_xi`, `f_i(u) = 1/2 |u|^2`, so
//! `F(w) = (1/2m) sum_i |A_i w + b_i|^2` is a strongly convex least-squares
//! objective whenever `sum_i A_i^T A_i` is nonsingular.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_batch_nonempty, check_block, check_w, FccoProblem, OuterMap, ProblemConstants, Support};
use crate::error::{Error, Result};
use crate::linalg::{
    axpy_into, dot, gram, norm, random_orthogonal, solve_spd, spectral_norm, sym_eig_extremes, Jacobian,
    ParamVector,
};
use crate::sampling::InnerBatch;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum QuadraticOuter {
    HalfSquare,
    /// Requires `p = 1`; the objective is then linear.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Design {
    /// Entries i.i.d. `N(0, scale^2 / d)`.
    Gaussian,
    /// Rows of random orthogonal matrices times `scale`. When `m p` is a
    /// multiple of `d` the Hessian is `scale^2 (p/d) I`.
    Orthogonal,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct QuadraticConfig {
    pub m: usize,
    pub d: usize,
    pub p: usize,
    /// Support size per block; `None` means Gaussian noise with infinite support.
    pub n: Option<usize>,
    /// Root-mean-square norm of the additive value noise.
    pub sigma: f64,
    /// Per-sample Jacobian perturbation scale (finite support only).
    pub jacobian_noise: f64,
    pub outer: QuadraticOuter,
    pub design: Design,
    pub scale: f64,
    /// Scale of the offsets `b_i`.
    pub offset: f64,
    /// Radius of the ball around the origin over which `C_f` and `sigma` are
    /// bounded. Defaults to `2 |w*| + 1`.
    pub radius: Option<f64>,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        QuadraticConfig {
            m: 20,
            d: 10,
            p: 2,
            n: Some(50),
            sigma: 1.0,
            jacobian_noise: 0.0,
            outer: QuadraticOuter::HalfSquare,
            design: Design::Gaussian,
            scale: 1.0,
            offset: 1.0,
            radius: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    m: usize,
    d: usize,
    p: usize,
    n: Option<usize>,
    a: Vec<Jacobian>,
    b: Vec<Vec<f64>>,
    /// `jac_noise[i][j]`, centered over `j`; empty when disabled.
    jac_noise: Vec<Vec<Jacobian>>,
    /// `val_noise[i][j]`, centered over `j`; empty for infinite support.
    val_noise: Vec<Vec<Vec<f64>>>,
    /// Per-coordinate standard deviation of infinite-support noise.
    noise_sd: f64,
    outer: OuterMap,
    constants: ProblemConstants,
    minimizer: Option<ParamVector>,
    optimum: Option<f64>,
    radius: f64,
}

impl QuadraticProblem {
    pub fn generate<R: Rng + ?Sized>(cfg: &QuadraticConfig, rng: &mut R) -> Result<Self> {
        validate(cfg)?;
        let (m, d, p) = (cfg.m, cfg.d, cfg.p);
        let a = design(cfg, rng);
        let b = (0..m)
            .map(|_| gaussian_vec(p, cfg.offset / libm::sqrt(p as f64), rng))
            .collect();
        let (jac_noise, val_noise) = match cfg.n {
            Some(n) => {
                let jn = if cfg.jacobian_noise > 0.0 {
                    let sd = cfg.jacobian_noise / libm::sqrt((p * d) as f64);
                    (0..m)
                        .map(|_| {
                            let draws: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(p * d, sd, rng)).collect();
                            center(draws)
                                .into_iter()
                                .map(|v| Jacobian::from_row_major(p, d, v))
                                .collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                let sd = cfg.sigma / libm::sqrt(p as f64);
                let vn = (0..m)
                    .map(|_| center((0..n).map(|_| gaussian_vec(p, sd, rng)).collect()))
                    .collect();
                (jn, vn)
            }
            None => (Vec::new(), Vec::new()),
        };
        Self::from_parts(cfg, a, b, jac_noise, val_noise)
    }

    /// Builds an instance from explicit matrices. `jac_noise` and `val_noise`
    /// must be centered over their sample index.
    pub fn from_parts(
        cfg: &QuadraticConfig,
        a: Vec<Jacobian>,
        b: Vec<Vec<f64>>,
        jac_noise: Vec<Vec<Jacobian>>,
        val_noise: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        validate(cfg)?;
        let (m, d, p) = (cfg.m, cfg.d, cfg.p);
        if a.len() != m || b.len() != m {
            return Err(Error::Config("need one A_i and one b_i per block".into()));
        }
        if a.iter().any(|ai| ai.rows() != p || ai.cols() != d) || b.iter().any(|bi| bi.len() != p) {
            return Err(Error::Config("A_i must be p x d and b_i length p".into()));
        }
        if let Some(n) = cfg.n {
            if val_noise.len() != m || val_noise.iter().any(|v| v.len() != n || v.iter().any(|e| e.len() != p)) {
                return Err(Error::Config("value noise must be m x n vectors of length p".into()));
            }
            if !jac_noise.is_empty() && (jac_noise.len() != m || jac_noise.iter().any(|v| v.len() != n)) {
                return Err(Error::Config("Jacobian noise must be m x n matrices".into()));
            }
        }
        let outer = match cfg.outer {
            QuadraticOuter::HalfSquare => OuterMap::WeightedSquare(vec![1.0; p]),
            QuadraticOuter::Identity => OuterMap::Identity,
        };

        let (minimizer, optimum, mu) = match cfg.outer {
            QuadraticOuter::HalfSquare => {
                let mut h = vec![0.0; d * d];
                let mut rhs = vec![0.0; d];
                for (ai, bi) in a.iter().zip(&b) {
                    axpy_into(1.0 / m as f64, &gram(ai), &mut h);
                    axpy_into(-1.0 / m as f64, &ai.tr_mul(bi)?, &mut rhs);
                }
                let (lo, _) = sym_eig_extremes(d, &h);
                if lo <= 1e-12 {
                    return Err(Error::Config(
                        "design is rank deficient; the objective is not strongly convex".into(),
                    ));
                }
                let w = solve_spd(d, &h, &rhs)
                    .ok_or_else(|| Error::Config("normal equations are not positive definite".into()))?;
                let f = objective(&a, &b, &w);
                (Some(ParamVector::from_vec(w)), Some(f), Some(lo))
            }
            QuadraticOuter::Identity => (None, None, None),
        };

        let radius = match cfg.radius {
            Some(r) => r,
            None => 2.0 * minimizer.as_ref().map_or(0.0, |w| w.norm()) + 1.0,
        };

        let mut c_g: f64 = 0.0;
        let mut c_f: f64 = 0.0;
        let mut sigma_sq: f64 = 0.0;
        for i in 0..m {
            let mut g = gram(&a[i]);
            if let Some(n) = cfg.n {
                if !jac_noise.is_empty() {
                    for e in &jac_noise[i] {
                        axpy_into(1.0 / n as f64, &gram(e), &mut g);
                    }
                }
                // E|E w + e|^2 <= lmax(M) R^2 + 2 |q| R + c over the ball.
                let mut mm = vec![0.0; d * d];
                let mut q = vec![0.0; d];
                let mut c = 0.0;
                for j in 0..n {
                    let ej = &val_noise[i][j];
                    c += dot(ej, ej) / n as f64;
                    if !jac_noise.is_empty() {
                        axpy_into(1.0 / n as f64, &gram(&jac_noise[i][j]), &mut mm);
                        axpy_into(1.0 / n as f64, &jac_noise[i][j].tr_mul(ej)?, &mut q);
                    }
                }
                let lmax = if jac_noise.is_empty() { 0.0 } else { sym_eig_extremes(d, &mm).1 };
                sigma_sq = sigma_sq.max(lmax * radius * radius + 2.0 * norm(&q) * radius + c);
            }
            c_g = c_g.max(libm::sqrt(sym_eig_extremes(d, &g).1.max(0.0)));
            c_f = c_f.max(spectral_norm(&a[i]) * radius + norm(&b[i]));
        }
        let sigma = match cfg.n {
            Some(_) => libm::sqrt(sigma_sq),
            None => cfg.sigma,
        };
        let (c_f, l_f) = match cfg.outer {
            QuadraticOuter::HalfSquare => (c_f.max(1e-12), 1.0),
            QuadraticOuter::Identity => (1.0, 0.0),
        };
        let constants = ProblemConstants::new(c_f, c_g.max(1e-12), l_f, 0.0, sigma, mu)?;

        Ok(QuadraticProblem {
            m,
            d,
            p,
            n: cfg.n,
            a,
            b,
            jac_noise,
            val_noise,
            noise_sd: cfg.sigma / libm::sqrt(p as f64),
            outer,
            constants,
            minimizer,
            optimum,
            radius,
        })
    }

    pub fn matrix(&self, block: usize) -> &Jacobian {
        &self.a[block]
    }

    pub fn offset(&self, block: usize) -> &[f64] {
        &self.b[block]
    }

    pub fn domain_radius(&self) -> f64 {
        self.radius
    }

    /// Per-sample value `g_i(w; xi_j)` for finite supports.
    pub fn sample_value(&self, block: usize, w: &[f64], j: usize) -> Result<Vec<f64>> {
        let n = self.n.ok_or(Error::Unsupported("per-sample values of an infinite support"))?;
        crate::linalg::block_index("sample_value", j, n)?;
        let mut g = self.exact_inner_value(block, w)?;
        if !self.jac_noise.is_empty() {
            axpy_into(1.0, &self.jac_noise[block][j].mul(w)?, &mut g);
        }
        axpy_into(1.0, &self.val_noise[block][j], &mut g);
        Ok(g)
    }
}

fn validate(cfg: &QuadraticConfig) -> Result<()> {
    if cfg.m == 0 || cfg.d == 0 || cfg.p == 0 {
        return Err(Error::Config("m, d and p must be positive".into()));
    }
    if cfg.n == Some(0) {
        return Err(Error::Config("support size n must be positive".into()));
    }
    if cfg.outer == QuadraticOuter::Identity && cfg.p != 1 {
        return Err(Error::Config("identity outer map needs p = 1".into()));
    }
    let reals = [cfg.sigma, cfg.jacobian_noise, cfg.scale, cfg.offset];
    if reals.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Config("noise, scale and offset must be finite and nonnegative".into()));
    }
    if cfg.scale == 0.0 {
        return Err(Error::Config("scale must be positive".into()));
    }
    if cfg.n.is_none() && cfg.jacobian_noise > 0.0 {
        return Err(Error::Config("Jacobian noise needs a finite support".into()));
    }
    if let Some(r) = cfg.radius {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config("radius must be positive".into()));
        }
    }
    Ok(())
}

fn design<R: Rng + ?Sized>(cfg: &QuadraticConfig, rng: &mut R) -> Vec<Jacobian> {
    let (m, d, p) = (cfg.m, cfg.d, cfg.p);
    match cfg.design {
        Design::Gaussian => {
            let sd = cfg.scale / libm::sqrt(d as f64);
            (0..m)
                .map(|_| Jacobian::from_row_major(p, d, gaussian_vec(p * d, sd, rng)).expect("shape"))
                .collect()
        }
        Design::Orthogonal => {
            let total = m * p;
            let mut rows: Vec<f64> = Vec::with_capacity(total * d);
            while rows.len() < total * d {
                rows.extend(random_orthogonal(d, rng).into_iter().map(|v| v * cfg.scale));
            }
            (0..m)
                .map(|i| {
                    Jacobian::from_row_major(p, d, rows[i * p * d..(i + 1) * p * d].to_vec()).expect("shape")
                })
                .collect()
        }
    }
}

fn gaussian_vec<R: Rng + ?Sized>(len: usize, sd: f64, rng: &mut R) -> Vec<f64> {
    (0..len)
        .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn center(mut draws: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    if draws.is_empty() {
        return draws;
    }
    let mean = crate::linalg::mean_of(&draws, draws[0].len());
    for v in &mut draws {
        axpy_into(-1.0, &mean, v);
    }
    draws
}

fn objective(a: &[Jacobian], b: &[Vec<f64>], w: &[f64]) -> f64 {
    let m = a.len() as f64;
    a.iter()
        .zip(b)
        .map(|(ai, bi)| {
            let mut r = ai.mul(w).expect("shape");
            axpy_into(1.0, bi, &mut r);
            0.5 * dot(&r, &r)
        })
        .sum::<f64>()
        / m
}

impl FccoProblem for QuadraticProblem {
    fn num_blocks(&self) -> usize {
        self.m
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn inner_dim(&self) -> usize {
        self.p
    }

    fn support(&self, block: usize) -> Result<Support> {
        check_block(self, "support", block)?;
        Ok(match self.n {
            Some(n) => Support::Finite(n),
            None => Support::Infinite,
        })
    }

    fn noise_dim(&self) -> usize {
        self.p
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
                    if !self.jac_noise.is_empty() {
                        axpy_into(1.0 / k, &self.jac_noise[block][j].mul(w)?, &mut g);
                    }
                    axpy_into(1.0 / k, &self.val_noise[block][j], &mut g);
                }
            }
            (InnerBatch::Noise { dim, .. }, None) if *dim == self.p => {
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
        let mut jac = self.exact_inner_jacobian(block, w)?;
        match (batch, self.n) {
            (InnerBatch::Indices(ix), Some(n)) => {
                if !self.jac_noise.is_empty() {
                    let k = ix.len() as f64;
                    for &j in ix {
                        crate::linalg::block_index("inner_jacobian", j, n)?;
                        jac.add_scaled(1.0 / k, &self.jac_noise[block][j])?;
                    }
                }
            }
            (InnerBatch::Noise { .. }, None) => {}
            _ => return Err(Error::Input("inner batch does not match the problem's support".into())),
        }
        Ok(jac)
    }

    fn exact_inner_value(&self, block: usize, w: &[f64]) -> Result<Vec<f64>> {
        check_block(self, "exact_inner_value", block)?;
        check_w(self, "exact_inner_value", w)?;
        let mut g = self.a[block].mul(w)?;
        axpy_into(1.0, &self.b[block], &mut g);
        Ok(g)
    }

    fn exact_inner_jacobian(&self, block: usize, w: &[f64]) -> Result<Jacobian> {
        check_block(self, "exact_inner_jacobian", block)?;
        check_w(self, "exact_inner_jacobian", w)?;
        Ok(self.a[block].clone())
    }

    fn outer_value(&self, _block: usize, u: &[f64]) -> f64 {
        self.outer.value(u)
    }

    fn outer_grad(&self, _block: usize, u: &[f64]) -> Vec<f64> {
        self.outer.grad(u)
    }

    fn optimum(&self) -> Option<f64> {
        self.optimum
    }

    fn minimizer(&self) -> Option<ParamVector> {
        self.minimizer.clone()
    }
}
