//! Direct solution of the assembled operators.
//!
//! In lexicographic order (radial index outer, fiber index inner) every
//! operator built by [`crate::operator`] is block tridiagonal with dense
//! `fc x fc` blocks, `fc` the number of fiber nodes per leaf. Radial coupling
//! is diagonal within a block edge, fiber coupling stays inside a block, so a
//! block Thomas sweep with partially pivoted LU factorizations of the pivot
//! blocks solves the system in `O(n_r fc^3)` time. That is exact (up to
//! rounding) and fast for the leaf counts used here, and it is reused
//! unchanged by the Newton loop and the inverse-iteration eigensolver.

use crate::error::{Error, Result};
use crate::grid::DiscreteField;
use crate::operator::{Csr, LinearOperator};
use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};

/// Block-tridiagonal view of a sparse matrix, ready for shifting and
/// factoring.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    n_r: usize,
    fc: usize,
    /// `lower[i]` couples block row `i + 1` to block column `i`.
    lower: Vec<DMatrix<f64>>,
    diag: Vec<DMatrix<f64>>,
    /// `upper[i]` couples block row `i` to block column `i + 1`.
    upper: Vec<DMatrix<f64>>,
}

impl BlockTridiag {
    /// Reinterpret a CSR matrix as block tridiagonal with block size `fc`.
    ///
    /// # Errors
    /// [`Error::Shape`] if the matrix size is not a multiple of `fc` or an
    /// entry falls outside the block band.
    pub fn from_csr(csr: &Csr, fc: usize) -> Result<BlockTridiag> {
        if fc == 0 || csr.n() % fc != 0 {
            return Err(Error::Shape(format!(
                "matrix size {} is not a multiple of block size {fc}",
                csr.n()
            )));
        }
        let n_r = csr.n() / fc;
        let zeros = || DMatrix::<f64>::zeros(fc, fc);
        let mut lower = vec![zeros(); n_r.saturating_sub(1)];
        let mut diag = vec![zeros(); n_r];
        let mut upper = vec![zeros(); n_r.saturating_sub(1)];
        for row in 0..csr.n() {
            let (bi, li) = (row / fc, row % fc);
            let (cols, vals) = csr.row(row);
            for (col, v) in cols.iter().zip(vals) {
                let (bj, lj) = (col / fc, col % fc);
                if bj + 1 == bi {
                    lower[bj][(li, lj)] = *v;
                } else if bj == bi {
                    diag[bi][(li, lj)] = *v;
                } else if bj == bi + 1 {
                    upper[bi][(li, lj)] = *v;
                } else {
                    return Err(Error::Shape(format!(
                        "entry ({row}, {col}) lies outside the tridiagonal band for block size {fc}"
                    )));
                }
            }
        }
        Ok(BlockTridiag {
            n_r,
            fc,
            lower,
            diag,
            upper,
        })
    }

    /// Build directly from block lists (sizes must be consistent).
    pub fn from_blocks(
        lower: Vec<DMatrix<f64>>,
        diag: Vec<DMatrix<f64>>,
        upper: Vec<DMatrix<f64>>,
    ) -> Result<BlockTridiag> {
        let n_r = diag.len();
        if n_r == 0 {
            return Err(Error::Shape("empty block diagonal".into()));
        }
        let fc = diag[0].nrows();
        let square = |m: &DMatrix<f64>| m.nrows() == fc && m.ncols() == fc;
        if lower.len() + 1 != n_r
            || upper.len() + 1 != n_r
            || !diag.iter().all(square)
            || !lower.iter().all(square)
            || !upper.iter().all(square)
        {
            return Err(Error::Shape("inconsistent block shapes".into()));
        }
        Ok(BlockTridiag {
            n_r,
            fc,
            lower,
            diag,
            upper,
        })
    }

    pub fn n(&self) -> usize {
        self.n_r * self.fc
    }

    /// Add `s` to every diagonal entry (`M + s I`).
    pub fn shift(&mut self, s: f64) {
        for d in &mut self.diag {
            for k in 0..self.fc {
                d[(k, k)] += s;
            }
        }
    }

    /// Add `d` to the matrix diagonal entrywise (`M + diag(d)`).
    pub fn add_diagonal(&mut self, d: &[f64]) -> Result<()> {
        if d.len() != self.n() {
            return Err(Error::Shape(format!(
                "diagonal length {} vs matrix size {}",
                d.len(),
                self.n()
            )));
        }
        for (bi, block) in self.diag.iter_mut().enumerate() {
            for k in 0..self.fc {
                block[(k, k)] += d[bi * self.fc + k];
            }
        }
        Ok(())
    }

    /// Dense block matvec, mainly for cross-checking factorizations.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::Shape(format!(
                "vector length {} vs matrix size {}",
                x.len(),
                self.n()
            )));
        }
        let fc = self.fc;
        let xv: Vec<DVector<f64>> = (0..self.n_r)
            .map(|i| DVector::from_column_slice(&x[i * fc..(i + 1) * fc]))
            .collect();
        let mut out = Vec::with_capacity(self.n());
        for i in 0..self.n_r {
            let mut y = &self.diag[i] * &xv[i];
            if i > 0 {
                y += &self.lower[i - 1] * &xv[i - 1];
            }
            if i + 1 < self.n_r {
                y += &self.upper[i] * &xv[i + 1];
            }
            out.extend_from_slice(y.as_slice());
        }
        Ok(out)
    }

    /// Block Thomas factorization.
    ///
    /// # Errors
    /// [`Error::LinearSolve`] if a pivot block is singular.
    pub fn factor(self) -> Result<BlockLu> {
        let fc = self.fc;
        let mut lus: Vec<LU<f64, Dyn, Dyn>> = Vec::with_capacity(self.n_r);
        let mut gains: Vec<DMatrix<f64>> = Vec::with_capacity(self.n_r.saturating_sub(1));
        let mut pivot = self.diag[0].clone();
        for i in 0..self.n_r {
            if i > 0 {
                let s = &gains[i - 1];
                pivot = &self.diag[i] - &self.lower[i - 1] * s;
            }
            if pivot.iter().any(|v| !v.is_finite()) {
                return Err(Error::LinearSolve(format!(
                    "non-finite pivot block at radial index {i}"
                )));
            }
            let lu = pivot.clone().lu();
            if i + 1 < self.n_r {
                let s = lu.solve(&self.upper[i]).ok_or_else(|| {
                    Error::LinearSolve(format!("singular pivot block at radial index {i}"))
                })?;
                gains.push(s);
            } else if lu.solve(&DMatrix::<f64>::identity(fc, fc).column(0).into_owned()).is_none() {
                return Err(Error::LinearSolve(format!(
                    "singular pivot block at radial index {i}"
                )));
            }
            lus.push(lu);
        }
        Ok(BlockLu {
            n_r: self.n_r,
            fc,
            lower: self.lower,
            lus,
            gains,
        })
    }
}

/// Factored block-tridiagonal matrix; supports repeated solves.
pub struct BlockLu {
    n_r: usize,
    fc: usize,
    lower: Vec<DMatrix<f64>>,
    lus: Vec<LU<f64, Dyn, Dyn>>,
    /// `gains[i] = pivot_i^{-1} upper_i`, applied during back substitution.
    gains: Vec<DMatrix<f64>>,
}

impl BlockLu {
    pub fn n(&self) -> usize {
        self.n_r * self.fc
    }

    /// Solve `M x = b`.
    ///
    /// # Errors
    /// [`Error::Shape`] on length mismatch, [`Error::LinearSolve`] if the
    /// sweep produces non-finite values.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n() {
            return Err(Error::Shape(format!(
                "rhs length {} vs matrix size {}",
                b.len(),
                self.n()
            )));
        }
        let fc = self.fc;
        let mut z: Vec<DVector<f64>> = Vec::with_capacity(self.n_r);
        for i in 0..self.n_r {
            let mut rhs = DVector::from_column_slice(&b[i * fc..(i + 1) * fc]);
            if i > 0 {
                rhs -= &self.lower[i - 1] * &z[i - 1];
            }
            let zi = self.lus[i].solve(&rhs).ok_or_else(|| {
                Error::LinearSolve(format!("singular pivot block at radial index {i}"))
            })?;
            z.push(zi);
        }
        for i in (0..self.n_r - 1).rev() {
            let correction = &self.gains[i] * &z[i + 1];
            z[i] -= correction;
        }
        let mut out = Vec::with_capacity(self.n());
        for zi in z {
            out.extend_from_slice(zi.as_slice());
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve(
                "non-finite solution from block solve".into(),
            ));
        }
        Ok(out)
    }
}

/// Solve the Dirichlet problem `L u = f` with boundary values `(c1, c2)`:
/// the interior system is `A u = f - c1 lift1 - c2 lift2`.
pub fn solve_linear(
    op: &LinearOperator,
    f: &[f64],
    c1: f64,
    c2: f64,
) -> Result<DiscreteField> {
    if f.len() != op.n() {
        return Err(Error::Shape(format!(
            "rhs length {} vs operator size {}",
            f.len(),
            op.n()
        )));
    }
    let rhs: Vec<f64> = (0..op.n())
        .map(|i| f[i] - c1 * op.lift1()[i] - c2 * op.lift2()[i])
        .collect();
    let bt = BlockTridiag::from_csr(op.csr(), op.grid().fiber_count())?;
    let x = bt.factor()?.solve(&rhs)?;
    DiscreteField::from_values(op.grid(), x, c1, c2)
}
