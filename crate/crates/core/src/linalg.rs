//! Dense complex matrices and a Hermitian eigendecomposition on top of faer.

use std::ops::{Index, IndexMut};

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance on `|a_ij - conj(a_ji)|` accepted by [`eig_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Square dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries; fails unless `data.len()` is a perfect square.
    pub fn from_row_major(data: Vec<Complex64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim * dim != data.len() {
            return Err(Error::Domain(format!(
                "{} entries do not form a square matrix",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matmul");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let row = self.row(i);
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let other_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.dim, v.len(), "dimension mismatch in apply");
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|a_ij - conj(a_ji)|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Largest `|(M M†)_ij - δ_ij|`.
    pub fn unitarity_deviation(&self) -> f64 {
        self.matmul(&self.adjoint())
            .max_abs_diff(&Self::identity(self.dim))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Spectral decomposition `A = V Λ V†` of a Hermitian matrix.
///
/// Eigenvalues are sorted in descending order; each eigenvector column is
/// phased so its first component of non-negligible magnitude is real positive.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, m: usize) -> Vec<Complex64> {
        self.eigenvectors.column(m)
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = self.dim();
        ComplexMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|m| v[(i, m)] * self.eigenvalues[m] * v[(j, m)].conj())
                .sum()
        })
    }

    /// Largest `|<v_i|v_j> - δ_ij|`.
    pub fn orthonormality_deviation(&self) -> f64 {
        self.eigenvectors
            .adjoint()
            .matmul(&self.eigenvectors)
            .max_abs_diff(&ComplexMatrix::identity(self.dim()))
    }
}

/// Diagonalizes a Hermitian matrix.
///
/// Fails with a domain error when the input deviates from Hermiticity by more
/// than [`HERMITIAN_TOL`].
pub fn eig_hermitian(matrix: &ComplexMatrix) -> Result<EigenDecomposition> {
    let dev = matrix.hermiticity_deviation();
    if !(dev <= HERMITIAN_TOL) {
        return Err(Error::Domain(format!(
            "matrix is not Hermitian (deviation {dev:e})"
        )));
    }
    let n = matrix.dim();
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0),
        });
    }

    let a = Mat::<Complex64>::from_fn(n, n, |i, j| 0.5 * (matrix[(i, j)] + matrix[(j, i)].conj()));
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NoConvergence { dim: n })?;
    let values: Vec<f64> = (0..n).map(|i| evd.S()[i].re).collect();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let mut vectors = ComplexMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = u[(r, src)];
        }
        fix_phase(&mut vectors, col);
    }

    Ok(EigenDecomposition {
        eigenvalues: order.iter().map(|&i| values[i]).collect(),
        eigenvectors: vectors,
    })
}

/// `exp(i t H)` for Hermitian `H`, via its spectral decomposition.
pub fn exp_i_hermitian(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(h)?;
    let v = &eig.eigenvectors;
    let n = eig.dim();
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|&l| Complex64::from_polar(1.0, t * l))
        .collect();
    Ok(ComplexMatrix::from_fn(n, |i, j| {
        (0..n).map(|m| v[(i, m)] * phases[m] * v[(j, m)].conj()).sum()
    }))
}

fn fix_phase(v: &mut ComplexMatrix, col: usize) {
    let n = v.dim();
    let largest = (0..n).map(|r| v[(r, col)].norm()).fold(0.0, f64::max);
    if largest == 0.0 {
        return;
    }
    let Some(pivot) = (0..n).find(|&r| v[(r, col)].norm() > 1e-8 * largest) else {
        return;
    };
    let p = v[(pivot, col)];
    let rot = p.conj() / p.norm();
    for r in 0..n {
        v[(r, col)] *= rot;
    }
    v[(pivot, col)] = Complex64::new(v[(pivot, col)].re, 0.0);
}
