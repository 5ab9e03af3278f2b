//! Block and inner-batch sampling.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::problem::{FccoProblem, Support};

/// Draws `b1` distinct block ids uniformly from `0..m`, returned sorted.
///
/// Ids are zero-based.
pub fn sample_blocks<R: Rng + ?Sized>(m: usize, b1: usize, rng: &mut R) -> Result<Vec<usize>> {
    if b1 == 0 || b1 > m {
        return Err(Error::Config(alloc::format!(
            "outer batch B1={b1} must satisfy 1 <= B1 <= m={m}"
        )));
    }
    if b1 == m {
        return Ok((0..m).collect());
    }
    let mut ids = index::sample(rng, m, b1).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// The randomness behind one inner minibatch of a single block.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerBatch {
    /// Distinct sample indices into a finite support.
    Indices(Vec<usize>),
    /// `draws.len() / dim` standard-normal vectors of length `dim`.
    Noise { dim: usize, draws: Vec<f64> },
}

impl InnerBatch {
    pub fn len(&self) -> usize {
        match self {
            InnerBatch::Indices(ix) => ix.len(),
            InnerBatch::Noise { dim, draws } => {
                if *dim == 0 {
                    0
                } else {
                    draws.len() / dim
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `k`-th noise vector of a `Noise` batch.
    pub fn noise(&self, k: usize) -> &[f64] {
        match self {
            InnerBatch::Noise { dim, draws } => &draws[k * dim..(k + 1) * dim],
            InnerBatch::Indices(_) => &[],
        }
    }
}

/// Sampled blocks together with one inner batch per block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSample {
    pub blocks: Vec<usize>,
    pub batches: Vec<InnerBatch>,
}

/// Draws a size-`b2` inner batch for `block`.
///
/// Finite supports are sampled without replacement, so `b2` may not exceed
/// the support size.
pub fn draw_batch<P, R>(problem: &P, block: usize, b2: usize, rng: &mut R) -> Result<InnerBatch>
where
    P: FccoProblem + ?Sized,
    R: Rng + ?Sized,
{
    if b2 == 0 {
        return Err(Error::Config("inner batch B2 must be at least 1".into()));
    }
    match problem.support(block)? {
        Support::Finite(n) => {
            if b2 > n {
                return Err(Error::Config(alloc::format!(
                    "inner batch B2={b2} exceeds support size n={n} of block {block}"
                )));
            }
            let ix = if b2 == n {
                (0..n).collect()
            } else {
                index::sample(rng, n, b2).into_vec()
            };
            Ok(InnerBatch::Indices(ix))
        }
        Support::Infinite => {
            let dim = problem.noise_dim();
            let draws = (0..dim * b2).map(|_| StandardNormal.sample(rng)).collect();
            Ok(InnerBatch::Noise { dim, draws })
        }
    }
}

/// Samples `b1` blocks and a batch of size `b2` for each.
pub fn sample_step<P, R>(problem: &P, b1: usize, b2: usize, rng: &mut R) -> Result<BlockSample>
where
    P: FccoProblem + ?Sized,
    R: Rng + ?Sized,
{
    let blocks = sample_blocks(problem.num_blocks(), b1, rng)?;
    let batches = blocks
        .iter()
        .map(|&i| draw_batch(problem, i, b2, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockSample { blocks, batches })
}

/// Every index of a finite support, for exact evaluation through the
/// stochastic oracle.
pub fn full_batch<P: FccoProblem + ?Sized>(problem: &P, block: usize) -> Result<InnerBatch> {
    match problem.support(block)? {
        Support::Finite(n) => Ok(InnerBatch::Indices((0..n).collect())),
        Support::Infinite => Err(Error::Unsupported("full batch of an infinite support")),
    }
}
