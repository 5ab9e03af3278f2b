//! The FCCO problem interface and the built-in problem suite.
//!
//! A problem is `F(w) = (1/m) sum_i f_i(g_i(w))`, optionally plus a direct
//! (non-nested) stochastic term. Inner maps are reached only through
//! minibatch oracles; the `exact_*` methods exist for tracing and
//! verification, and inside a solver step only for the full-pass snapshots.

mod auc;
mod pl;
mod quadratic;

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

pub use auc::{AucConfig, AucProblem, AucTask};
pub use pl::{PlConfig, PlProblem};
pub use quadratic::{Design, QuadraticConfig, QuadraticOuter, QuadraticProblem};

use crate::error::{Error, Result};
use crate::linalg::{axpy_into, Jacobian, ParamVector};
use crate::rng::RngStream;
use crate::sampling::InnerBatch;

/// Lipschitz, smoothness and noise constants of a problem.
///
/// `C_F` and `L_F` are always derived, never stored.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProblemConstants {
    pub c_f: f64,
    pub c_g: f64,
    pub l_f: f64,
    pub l_g: f64,
    pub sigma: f64,
    pub mu: Option<f64>,
}

impl ProblemConstants {
    pub fn new(c_f: f64, c_g: f64, l_f: f64, l_g: f64, sigma: f64, mu: Option<f64>) -> Result<Self> {
        let c = ProblemConstants {
            c_f,
            c_g,
            l_f,
            l_g,
            sigma,
            mu,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let base = [self.c_f, self.c_g, self.l_f, self.l_g, self.sigma];
        if base.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("problem constants must be finite and nonnegative".into()));
        }
        if self.c_f <= 0.0 || self.c_g <= 0.0 {
            return Err(Error::Config("C_f and C_g must be positive".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::Config("mu must be positive when present".into()));
            }
        }
        Ok(())
    }

    /// `C_F = C_f C_g`
    pub fn c_big_f(&self) -> f64 {
        self.c_f * self.c_g
    }

    /// `L_F = C_f^2 L_g + C_g^2 L_f`
    pub fn l_big_f(&self) -> f64 {
        self.c_f * self.c_f * self.l_g + self.c_g * self.c_g * self.l_f
    }
}

/// Size of a block's inner sample space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Finite(usize),
    Infinite,
}

pub trait FccoProblem: Send + Sync {
    /// Number of blocks `m`.
    fn num_blocks(&self) -> usize;
    /// Length of `w`, including auxiliary scalars.
    fn dim(&self) -> usize;
    /// Output dimension `p` of every `g_i`.
    fn inner_dim(&self) -> usize;
    fn support(&self, block: usize) -> Result<Support>;
    /// Length of one standard-normal draw for infinite supports.
    fn noise_dim(&self) -> usize {
        0
    }
    fn constants(&self) -> &ProblemConstants;

    /// Minibatch mean of `g_i(w; xi)`.
    fn inner_value(&self, block: usize, w: &[f64], batch: &InnerBatch) -> Result<Vec<f64>>;
    /// Minibatch mean of the `p x d` Jacobian of `g_i(w; xi)`.
    fn inner_jacobian(&self, block: usize, w: &[f64], batch: &InnerBatch) -> Result<Jacobian>;
    fn exact_inner_value(&self, block: usize, w: &[f64]) -> Result<Vec<f64>>;
    fn exact_inner_jacobian(&self, block: usize, w: &[f64]) -> Result<Jacobian>;

    fn outer_value(&self, block: usize, u: &[f64]) -> f64;
    fn outer_grad(&self, block: usize, u: &[f64]) -> Vec<f64>;

    fn has_direct_term(&self) -> bool {
        false
    }
    /// Exact direct term of block `i`, averaged into `F` with weight `1/m`.
    fn direct_value(&self, _block: usize, _w: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
    /// Minibatch gradient of block `i`'s direct term.
    fn direct_grad(&self, _block: usize, w: &[f64], _batch: &InnerBatch) -> Result<Vec<f64>> {
        Ok(vec![0.0; w.len()])
    }
    fn exact_direct_grad(&self, _block: usize, w: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; w.len()])
    }

    /// `F_*` when known in closed form.
    fn optimum(&self) -> Option<f64> {
        None
    }
    fn minimizer(&self) -> Option<ParamVector> {
        None
    }
    /// Starting point used by solvers unless one is supplied.
    fn initial_point(&self) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    fn exact_objective(&self, w: &[f64]) -> Result<f64> {
        let m = self.num_blocks();
        let mut total = 0.0;
        for i in 0..m {
            let g = self.exact_inner_value(i, w)?;
            total += self.outer_value(i, &g);
            if self.has_direct_term() {
                total += self.direct_value(i, w)?;
            }
        }
        Ok(total / m as f64)
    }

    fn exact_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let m = self.num_blocks();
        let mut grad = vec![0.0; self.dim()];
        for i in 0..m {
            let g = self.exact_inner_value(i, w)?;
            let jac = self.exact_inner_jacobian(i, w)?;
            let term = jac.tr_mul(&self.outer_grad(i, &g))?;
            axpy_into(1.0, &term, &mut grad);
            if self.has_direct_term() {
                axpy_into(1.0, &self.exact_direct_grad(i, w)?, &mut grad);
            }
        }
        grad.iter_mut().for_each(|v| *v /= m as f64);
        Ok(grad)
    }

    /// The compositional part of the gradient only,
    /// `(1/m) sum_i grad g_i(w)^T grad f_i(g_i(w))`.
    fn exact_compositional_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let m = self.num_blocks();
        let mut grad = vec![0.0; self.dim()];
        for i in 0..m {
            let g = self.exact_inner_value(i, w)?;
            let jac = self.exact_inner_jacobian(i, w)?;
            axpy_into(1.0, &jac.tr_mul(&self.outer_grad(i, &g))?, &mut grad);
        }
        grad.iter_mut().for_each(|v| *v /= m as f64);
        Ok(grad)
    }

    /// All exact inner values, block by block.
    fn exact_inner_values(&self, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.num_blocks())
            .map(|i| self.exact_inner_value(i, w))
            .collect()
    }

    /// Size of the largest finite support, or `None` if any block is infinite.
    fn max_support(&self) -> Option<usize> {
        let mut n = 0;
        for i in 0..self.num_blocks() {
            match self.support(i).ok()? {
                Support::Finite(k) => n = n.max(k),
                Support::Infinite => return None,
            }
        }
        Some(n)
    }

    /// Inner samples consumed by one exact pass over every block.
    fn full_pass_cost(&self) -> Option<u64> {
        let mut total = 0u64;
        for i in 0..self.num_blocks() {
            match self.support(i).ok()? {
                Support::Finite(k) => total += k as u64,
                Support::Infinite => return None,
            }
        }
        Some(total)
    }
}

/// Outer maps `f_i` shared by the synthetic problems.
#[derive(Clone, Debug, PartialEq)]
pub enum OuterMap {
    /// `f(u) = u`, scalar only.
    Identity,
    /// `f(u) = 1/2 sum_k c_k u_k^2`
    WeightedSquare(Vec<f64>),
    /// `f(u) = 1/2 max(c + u, 0)^2`, scalar only.
    SquaredHinge { margin: f64 },
}

impl OuterMap {
    pub fn value(&self, u: &[f64]) -> f64 {
        match self {
            OuterMap::Identity => u[0],
            OuterMap::WeightedSquare(c) => 0.5 * c.iter().zip(u).map(|(ck, uk)| ck * uk * uk).sum::<f64>(),
            OuterMap::SquaredHinge { margin } => {
                let r = (margin + u[0]).max(0.0);
                0.5 * r * r
            }
        }
    }

    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        match self {
            OuterMap::Identity => vec![1.0],
            OuterMap::WeightedSquare(c) => c.iter().zip(u).map(|(ck, uk)| ck * uk).collect(),
            OuterMap::SquaredHinge { margin } => vec![(margin + u[0]).max(0.0)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum ProblemConfig {
    QuadraticSc(QuadraticConfig),
    PlComposition(PlConfig),
    AucMultitask(AucConfig),
}

impl ProblemConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemConfig::QuadraticSc(_) => "quadratic-sc",
            ProblemConfig::PlComposition(_) => "pl-composition",
            ProblemConfig::AucMultitask(_) => "auc-multitask",
        }
    }
}

/// Builds a problem; all randomness in the instance comes from `stream`.
pub fn make_problem(config: &ProblemConfig, stream: RngStream) -> Result<Box<dyn FccoProblem>> {
    let mut rng = stream.rng();
    Ok(match config {
        ProblemConfig::QuadraticSc(c) => Box::new(QuadraticProblem::generate(c, &mut rng)?),
        ProblemConfig::PlComposition(c) => Box::new(PlProblem::generate(c, &mut rng)?),
        ProblemConfig::AucMultitask(c) => Box::new(AucProblem::generate(c, &mut rng)?),
    })
}

pub(crate) fn check_block<P: FccoProblem + ?Sized>(p: &P, op: &'static str, block: usize) -> Result<()> {
    crate::linalg::block_index(op, block, p.num_blocks())
}

pub(crate) fn check_w<P: FccoProblem + ?Sized>(p: &P, op: &'static str, w: &[f64]) -> Result<()> {
    crate::error::check_len(op, p.dim(), w.len())
}

pub(crate) fn check_batch_nonempty(op: &'static str, batch: &InnerBatch) -> Result<()> {
    if batch.is_empty() {
        Err(Error::Input(alloc::format!("{op}: empty inner batch")))
    } else {
        Ok(())
    }
}
