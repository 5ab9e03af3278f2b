//! Dense vectors and block matrices used throughout the solvers.
//!
//! Everything is `f64` and row-major. Shapes are small (tens to a few
//! hundred entries) so the types favour clarity over blocking or SIMD.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{check_len, Error, Result};

/// The decision variable `w`, including any auxiliary scalars a problem
/// appends after the model coordinates.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        ParamVector(data)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(data: Vec<f64>) -> Self {
        ParamVector(data)
    }
}

/// Returns `alpha * x + y`.
pub fn vec_axpy(alpha: f64, x: &[f64], y: &[f64]) -> Result<ParamVector> {
    check_len("vec_axpy", x.len(), y.len())?;
    Ok(ParamVector(
        x.iter().zip(y).map(|(xi, yi)| alpha * xi + yi).collect(),
    ))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(norm_sq(a))
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `out += alpha * x`
pub fn axpy_into(alpha: f64, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, xi) in out.iter_mut().zip(x) {
        *o += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// An `m x p` matrix stored as `m` contiguous blocks of length `p`.
///
/// Block `i` holds the tracker's estimate of `g_i(w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    blocks: usize,
    width: usize,
    data: Vec<f64>,
}

/// The block tracker `u = (u^1, ..., u^m)`.
pub type InnerTracker = BlockMatrix;

impl BlockMatrix {
    pub fn zeros(blocks: usize, width: usize) -> Self {
        BlockMatrix {
            blocks,
            width,
            data: vec![0.0; blocks * width],
        }
    }

    pub fn from_blocks(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            check_len("BlockMatrix::from_blocks", width, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(BlockMatrix {
            blocks: rows.len(),
            width,
            data,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width.max(1)).take(self.blocks)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Sum of squared block distances `sum_i |a_i - b_i|^2`.
pub fn frob_sq(a: &BlockMatrix, b: &BlockMatrix) -> Result<f64> {
    check_len("frob_sq", a.blocks, b.blocks)?;
    check_len("frob_sq", a.width, b.width)?;
    Ok(dist_sq(&a.data, &b.data))
}

/// A `rows x cols` Jacobian, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Jacobian {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_len("Jacobian::from_row_major", rows * cols, data.len())?;
        Ok(Jacobian { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `J x`, a vector of length `rows`.
    pub fn mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("Jacobian::mul", self.cols, x.len())?;
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `J^T v`, a vector of length `cols`.
    pub fn tr_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("Jacobian::tr_mul", self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, vr) in v.iter().enumerate() {
            axpy_into(*vr, self.row(r), &mut out);
        }
        Ok(out)
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Jacobian) -> Result<()> {
        check_len("Jacobian::add_scaled", self.data.len(), other.data.len())?;
        axpy_into(alpha, &other.data, &mut self.data);
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }
}

pub(crate) fn mean_of(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    if rows.is_empty() {
        return out;
    }
    for r in rows {
        axpy_into(1.0, r, &mut out);
    }
    let k = rows.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    out
}

pub(crate) fn block_index(op: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Range { op, index, len })
    }
}

/// Extreme eigenvalues `(min, max)` of a symmetric `n x n` row-major matrix.
pub(crate) fn sym_eig_extremes(n: usize, data: &[f64]) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let mat = nalgebra::DMatrix::from_row_slice(n, n, data);
    let eig = nalgebra::SymmetricEigen::new(mat);
    let vals = eig.eigenvalues;
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `J^T J`, `cols x cols` row-major.
pub(crate) fn gram(j: &Jacobian) -> Vec<f64> {
    let c = j.cols;
    let mut out = vec![0.0; c * c];
    for r in 0..j.rows {
        let row = j.row(r);
        for a in 0..c {
            if row[a] == 0.0 {
                continue;
            }
            for b in 0..c {
                out[a * c + b] += row[a] * row[b];
            }
        }
    }
    out
}

/// Largest singular value.
pub(crate) fn spectral_norm(j: &Jacobian) -> f64 {
    // The smaller Gram matrix has the same nonzero spectrum.
    let (n, g) = if j.rows <= j.cols {
        let mut g = vec![0.0; j.rows * j.rows];
        for a in 0..j.rows {
            for b in 0..j.rows {
                g[a * j.rows + b] = dot(j.row(a), j.row(b));
            }
        }
        (j.rows, g)
    } else {
        (j.cols, gram(j))
    };
    libm::sqrt(sym_eig_extremes(n, &g).1.max(0.0))
}

/// Solves `H x = rhs` for symmetric positive definite `H`.
pub(crate) fn solve_spd(n: usize, h: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let mat = nalgebra::DMatrix::from_row_slice(n, n, h);
    let chol = nalgebra::Cholesky::new(mat)?;
    let x = chol.solve(&nalgebra::DVector::from_column_slice(rhs));
    Some(x.iter().cloned().collect())
}

/// Smallest singular value of an `rows x cols` matrix with `rows <= cols`.
pub(crate) fn min_singular_wide(rows: usize, cols: usize, data: &[f64]) -> f64 {
    let j = Jacobian {
        rows,
        cols,
        data: data.to_vec(),
    };
    let mut g = vec![0.0; rows * rows];
    for a in 0..rows {
        for b in 0..rows {
            g[a * rows + b] = dot(j.row(a), j.row(b));
        }
    }
    libm::sqrt(sym_eig_extremes(rows, &g).0.max(0.0))
}

/// A Haar-random orthogonal `n x n` matrix, row-major.
pub(crate) fn random_orthogonal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let raw: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
    let qr = nalgebra::DMatrix::from_row_slice(n, n, &raw).qr();
    let q = qr.q();
    let r = qr.r();
    // Fix column signs so the distribution is uniform.
    let mut out = vec![0.0; n * n];
    for c in 0..n {
        let s = if r[(c, c)] < 0.0 { -1.0 } else { 1.0 };
        for row in 0..n {
            out[row * n + c] = s * q[(row, c)];
        }
    }
    out
}
