//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Operator 2-norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// `‖M − Mᵀ‖ ≤ tol · max(1, ‖M‖)` in Frobenius norm.
pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let asym = (m - m.transpose()).norm();
    asym <= tol * m.norm().max(1.0)
}

/// Solves `H x = b` for symmetric positive definite `H` by Cholesky, with one
/// round of iterative refinement.
pub fn spd_solve(h: &Matrix, b: &Vector) -> Result<Vector> {
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    let mut x = chol.solve(b);
    let residual = b - h * &x;
    x += chol.solve(&residual);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    Ok(x)
}

/// Neumaier-compensated running sum of scalars.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Element-wise compensated sum of vectors of a fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedVecSum {
    parts: Vec<CompensatedSum>,
}

impl CompensatedVecSum {
    pub fn zeros(n: usize) -> Self {
        Self {
            parts: vec![CompensatedSum::default(); n],
        }
    }

    pub fn add(&mut self, v: &Vector) {
        debug_assert_eq!(v.len(), self.parts.len());
        for (p, &x) in self.parts.iter_mut().zip(v.iter()) {
            p.add(x);
        }
    }

    pub fn value(&self) -> Vector {
        Vector::from_iterator(self.parts.len(), self.parts.iter().map(|p| p.value()))
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}
