//! Multi-task AUC maximization with a shared linear scorer.
//!
//! For task `i` with positives `D+` and negatives `D-`, the loss is
//! `E+[(h(x) - a_i)^2] + E-[(h(x) - b_i)^2] + l(g_i(w))` where
//! `g_i(w) = E+[h(x)] - E-[h(x)]`, `h(x) = v^T x` and `l` is the squared
//! hinge with margin `c`. Only `l(g_i)` is nested; the two mean-square terms
//! are exposed as the direct term.
//!
//! `w = (v, a_1, b_1, ..., a_m, b_m)`. A sample of block `i` is an index into
//! the concatenation of positives then negatives, weighted so that every
//! minibatch mean is unbiased.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_batch_nonempty, check_block, check_w, FccoProblem, OuterMap, ProblemConstants, Support};
use crate::error::{Error, Result};
use crate::linalg::{axpy_into, dot, norm_sq, Jacobian};
use crate::sampling::InnerBatch;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AucConfig {
    pub m: usize,
    pub model_dim: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Distance between the class means of each task.
    pub separation: f64,
    /// Per-coordinate standard deviation of each class blob.
    pub spread: f64,
    pub margin: f64,
    /// Ball radius for the sampled constant estimates.
    pub probe_radius: f64,
    pub probe_points: usize,
}

impl Default for AucConfig {
    fn default() -> Self {
        AucConfig {
            m: 5,
            model_dim: 20,
            n_pos: 200,
            n_neg: 200,
            separation: 2.0,
            spread: 1.0,
            margin: 1.0,
            probe_radius: 2.0,
            probe_points: 200,
        }
    }
}

/// Raw examples of one task.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AucTask {
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct AucProblem {
    model_dim: usize,
    tasks: Vec<AucTask>,
    outer: OuterMap,
    margin: f64,
    constants: ProblemConstants,
}

impl AucProblem {
    /// Two Gaussian blobs per task at `+-separation/2` along a random unit
    /// direction.
    pub fn generate<R: Rng + ?Sized>(cfg: &AucConfig, rng: &mut R) -> Result<Self> {
        if cfg.model_dim == 0 || cfg.m == 0 {
            return Err(Error::Config("m and model_dim must be positive".into()));
        }
        if !(cfg.spread >= 0.0) || !(cfg.separation >= 0.0) {
            return Err(Error::Config("spread and separation must be nonnegative".into()));
        }
        let dim = cfg.model_dim;
        let mut tasks = Vec::with_capacity(cfg.m);
        for _ in 0..cfg.m {
            let mut dir: Vec<f64> = (0..dim).map(|_| std_normal(rng)).collect();
            let len = libm::sqrt(norm_sq(&dir));
            dir.iter_mut().for_each(|v| *v /= len);
            let blob = |sign: f64, count: usize, rng: &mut R| -> Vec<Vec<f64>> {
                (0..count)
                    .map(|_| {
                        dir.iter()
                            .map(|c| sign * 0.5 * cfg.separation * c + cfg.spread * std_normal(rng))
                            .collect()
                    })
                    .collect()
            };
            let positives = blob(1.0, cfg.n_pos, rng);
            let negatives = blob(-1.0, cfg.n_neg, rng);
            tasks.push(AucTask { positives, negatives });
        }
        Self::from_tasks(tasks, cfg.margin, cfg.probe_radius, cfg.probe_points, rng)
    }

    /// Builds a problem from explicit task data. Constants are estimated at
    /// `probe_points` random scorers in a ball of radius `probe_radius`.
    pub fn from_tasks<R: Rng + ?Sized>(
        tasks: Vec<AucTask>,
        margin: f64,
        probe_radius: f64,
        probe_points: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("need at least one task".into()));
        }
        if !(margin > 0.0) {
            return Err(Error::Config("margin must be positive".into()));
        }
        let dim = tasks[0].positives.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Config("task 0 has no positive examples".into()));
        }
        for (i, t) in tasks.iter().enumerate() {
            if t.positives.is_empty() || t.negatives.is_empty() {
                return Err(Error::Config(alloc::format!(
                    "task {i} needs at least one positive and one negative example"
                )));
            }
            if t.positives.iter().chain(&t.negatives).any(|x| x.len() != dim) {
                return Err(Error::Config(alloc::format!("task {i} has inconsistent feature length")));
            }
        }
        let mut prob = AucProblem {
            model_dim: dim,
            tasks,
            outer: OuterMap::SquaredHinge { margin },
            margin,
            // Placeholder until the estimates below are in.
            constants: ProblemConstants::new(1.0, 1.0, 1.0, 0.0, 0.0, None)?,
        };
        prob.constants = prob.estimate_constants(probe_radius, probe_points.max(1), rng)?;
        Ok(prob)
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn tasks(&self) -> &[AucTask] {
        &self.tasks
    }

    fn example(&self, block: usize, k: usize) -> (&[f64], bool) {
        let t = &self.tasks[block];
        if k < t.positives.len() {
            (&t.positives[k], true)
        } else {
            (&t.negatives[k - t.positives.len()], false)
        }
    }

    /// Importance weight of sample `k` in `g_i`, signed by class.
    fn weight(&self, block: usize, positive: bool) -> f64 {
        let t = &self.tasks[block];
        let total = (t.positives.len() + t.negatives.len()) as f64;
        if positive {
            total / t.positives.len() as f64
        } else {
            -total / t.negatives.len() as f64
        }
    }

    fn score(&self, w: &[f64], x: &[f64]) -> f64 {
        dot(&w[..self.model_dim], x)
    }

    fn aux_index(&self, block: usize) -> usize {
        self.model_dim + 2 * block
    }

    fn indices<'a>(&self, block: usize, batch: &'a InnerBatch) -> Result<&'a [usize]> {
        let InnerBatch::Indices(ix) = batch else {
            return Err(Error::Input("AUC batches are sample indices".into()));
        };
        let t = &self.tasks[block];
        let n = t.positives.len() + t.negatives.len();
        for &k in ix {
            crate::linalg::block_index("auc sample", k, n)?;
        }
        Ok(ix)
    }

    fn estimate_constants<R: Rng + ?Sized>(&self, radius: f64, points: usize, rng: &mut R) -> Result<ProblemConstants> {
        const INFLATE: f64 = 1.5;
        let mut c_g_sq: f64 = 0.0;
        for i in 0..self.tasks.len() {
            let n = self.support_size(i);
            let mut s = 0.0;
            for k in 0..n {
                let (x, pos) = self.example(i, k);
                let wt = self.weight(i, pos);
                s += wt * wt * norm_sq(x);
            }
            c_g_sq = c_g_sq.max(s / n as f64);
        }
        let mut c_f: f64 = 0.0;
        let mut var: f64 = 0.0;
        let d = self.dim();
        for _ in 0..points {
            let mut w: Vec<f64> = (0..d).map(|_| std_normal(rng)).collect();
            let len = libm::sqrt(norm_sq(&w[..self.model_dim]));
            let r = radius * rng.random::<f64>();
            w.iter_mut().for_each(|v| *v *= r / len);
            for i in 0..self.tasks.len() {
                let g = self.exact_inner_value(i, &w)?[0];
                c_f = c_f.max((self.margin + g).max(0.0));
                let n = self.support_size(i);
                let mut s = 0.0;
                for k in 0..n {
                    let (x, pos) = self.example(i, k);
                    let gk = self.weight(i, pos) * self.score(&w, x);
                    s += (gk - g) * (gk - g);
                }
                var = var.max(s / n as f64);
            }
        }
        ProblemConstants::new(
            INFLATE * c_f.max(self.margin),
            INFLATE * libm::sqrt(c_g_sq),
            1.0,
            0.0,
            INFLATE * libm::sqrt(var),
            None,
        )
    }

    fn support_size(&self, block: usize) -> usize {
        let t = &self.tasks[block];
        t.positives.len() + t.negatives.len()
    }
}

fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

impl FccoProblem for AucProblem {
    fn num_blocks(&self) -> usize {
        self.tasks.len()
    }

    fn dim(&self) -> usize {
        self.model_dim + 2 * self.tasks.len()
    }

    fn inner_dim(&self) -> usize {
        1
    }

    fn support(&self, block: usize) -> Result<Support> {
        check_block(self, "support", block)?;
        Ok(Support::Finite(self.support_size(block)))
    }

    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }

    fn inner_value(&self, block: usize, w: &[f64], batch: &InnerBatch) -> Result<Vec<f64>> {
        check_block(self, "inner_value", block)?;
        check_w(self, "inner_value", w)?;
        check_batch_nonempty("inner_value", batch)?;
        let ix = self.indices(block, batch)?;
        let mut s = 0.0;
        for &k in ix {
            let (x, pos) = self.example(block, k);
            s += self.weight(block, pos) * self.score(w, x);
        }
        Ok(vec![s / ix.len() as f64])
    }

    fn inner_jacobian(&self, block: usize, w: &[f64], batch: &InnerBatch) -> Result<Jacobian> {
        check_block(self, "inner_jacobian", block)?;
        check_w(self, "inner_jacobian", w)?;
        check_batch_nonempty("inner_jacobian", batch)?;
        let ix = self.indices(block, batch)?;
        let mut jac = Jacobian::zeros(1, self.dim());
        let row = &mut jac.row_mut(0)[..self.model_dim];
        for &k in ix {
            let (x, pos) = self.example(block, k);
            axpy_into(self.weight(block, pos) / ix.len() as f64, x, row);
        }
        Ok(jac)
    }

    fn exact_inner_value(&self, block: usize, w: &[f64]) -> Result<Vec<f64>> {
        check_block(self, "exact_inner_value", block)?;
        check_w(self, "exact_inner_value", w)?;
        let t = &self.tasks[block];
        let mean = |xs: &[Vec<f64>]| xs.iter().map(|x| self.score(w, x)).sum::<f64>() / xs.len() as f64;
        Ok(vec![mean(&t.positives) - mean(&t.negatives)])
    }

    fn exact_inner_jacobian(&self, block: usize, w: &[f64]) -> Result<Jacobian> {
        check_block(self, "exact_inner_jacobian", block)?;
        check_w(self, "exact_inner_jacobian", w)?;
        let t = &self.tasks[block];
        let mut jac = Jacobian::zeros(1, self.dim());
        let row = &mut jac.row_mut(0)[..self.model_dim];
        for x in &t.positives {
            axpy_into(1.0 / t.positives.len() as f64, x, row);
        }
        for x in &t.negatives {
            axpy_into(-1.0 / t.negatives.len() as f64, x, row);
        }
        Ok(jac)
    }

    fn outer_value(&self, _block: usize, u: &[f64]) -> f64 {
        self.outer.value(u)
    }

    fn outer_grad(&self, _block: usize, u: &[f64]) -> Vec<f64> {
        self.outer.grad(u)
    }

    fn has_direct_term(&self) -> bool {
        true
    }

    fn direct_value(&self, block: usize, w: &[f64]) -> Result<f64> {
        check_block(self, "direct_value", block)?;
        check_w(self, "direct_value", w)?;
        let t = &self.tasks[block];
        let j = self.aux_index(block);
        let (a, b) = (w[j], w[j + 1]);
        let msq = |xs: &[Vec<f64>], c: f64| {
            xs.iter()
                .map(|x| {
                    let r = self.score(w, x) - c;
                    r * r
                })
                .sum::<f64>()
                / xs.len() as f64
        };
        Ok(msq(&t.positives, a) + msq(&t.negatives, b))
    }

    fn direct_grad(&self, block: usize, w: &[f64], batch: &InnerBatch) -> Result<Vec<f64>> {
        check_block(self, "direct_grad", block)?;
        check_w(self, "direct_grad", w)?;
        check_batch_nonempty("direct_grad", batch)?;
        let ix = self.indices(block, batch)?;
        let j = self.aux_index(block);
        let mut grad = vec![0.0; self.dim()];
        let k_inv = 1.0 / ix.len() as f64;
        for &k in ix {
            let (x, pos) = self.example(block, k);
            let c = self.weight(block, pos).abs();
            let slot = if pos { j } else { j + 1 };
            let r = self.score(w, x) - w[slot];
            axpy_into(2.0 * c * r * k_inv, x, &mut grad[..self.model_dim]);
            grad[slot] -= 2.0 * c * r * k_inv;
        }
        Ok(grad)
    }

    fn exact_direct_grad(&self, block: usize, w: &[f64]) -> Result<Vec<f64>> {
        let n = self.support_size(block);
        self.direct_grad(block, w, &InnerBatch::Indices((0..n).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn separated_tasks_have_zero_outer_loss() {
        let mut tasks = Vec::new();
        let mut rng = RngStream::new(1, 0).rng();
        for _ in 0..3 {
            let mk = |s: f64, rng: &mut crate::rng::StreamRng| {
                (0..20)
                    .map(|_| vec![s + 0.1 * std_normal(rng), std_normal(rng)])
                    .collect::<Vec<_>>()
            };
            let positives = mk(1.0, &mut rng);
            let negatives = mk(-1.0, &mut rng);
            tasks.push(AucTask { positives, negatives });
        }
        let prob = AucProblem::from_tasks(tasks, 1.0, 2.0, 10, &mut rng).unwrap();
        let mut w = vec![0.0; prob.dim()];
        w[0] = -1.0;
        for i in 0..3 {
            let g = prob.exact_inner_value(i, &w).unwrap();
            assert!(g[0] <= -1.0);
            assert_eq!(prob.outer_value(i, &g), 0.0);
            assert_eq!(prob.outer_grad(i, &g), vec![0.0]);
        }
    }

    #[test]
    fn rejects_degenerate_task() {
        let tasks = vec![AucTask {
            positives: vec![vec![1.0]],
            negatives: vec![],
        }];
        let mut rng = RngStream::new(0, 0).rng();
        assert!(matches!(
            AucProblem::from_tasks(tasks, 1.0, 1.0, 1, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn full_batch_matches_exact() {
        let cfg = AucConfig {
            m: 2,
            model_dim: 3,
            n_pos: 5,
            n_neg: 7,
            probe_points: 5,
            ..Default::default()
        };
        let prob = AucProblem::generate(&cfg, &mut RngStream::new(2, 0).rng()).unwrap();
        let w: Vec<f64> = (0..prob.dim()).map(|k| 0.3 - 0.1 * k as f64).collect();
        let full = InnerBatch::Indices((0..12).collect());
        for i in 0..2 {
            let g = prob.inner_value(i, &w, &full).unwrap()[0];
            assert!((g - prob.exact_inner_value(i, &w).unwrap()[0]).abs() < 1e-12);
            let j = prob.inner_jacobian(i, &w, &full).unwrap();
            let je = prob.exact_inner_jacobian(i, &w).unwrap();
            for (x, y) in j.as_slice().iter().zip(je.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_includes_aux_scalars() {
        let cfg = AucConfig {
            probe_points: 3,
            ..Default::default()
        };
        let prob = AucProblem::generate(&cfg, &mut RngStream::new(3, 0).rng()).unwrap();
        assert_eq!(prob.dim(), 20 + 2 * 5);
    }
}
