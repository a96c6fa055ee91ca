//! Cholesky-backed helpers for the small SPD design matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// An SPD matrix together with its lower Cholesky factor `L L^T = A`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::<f64, Dyn>::new(matrix.clone())
            .ok_or_else(|| Error::Numerical(format!("matrix of size {} is not positive definite", matrix.nrows())))?;
        Ok(Self { lower: chol.unpack() })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `v^T A^{-1} v`, via one triangular solve.
    pub fn inv_quad(&self, v: &DVector<f64>) -> f64 {
        self.lower.solve_lower_triangular(v).expect("Cholesky factor has a positive diagonal").norm_squared()
    }

    /// `||v||_{A^{-1}}`.
    pub fn inv_norm(&self, v: &DVector<f64>) -> f64 {
        self.inv_quad(v).sqrt()
    }

    /// `A^{-1} v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let y = self.lower.solve_lower_triangular(v).expect("positive diagonal");
        self.lower.tr_solve_lower_triangular(&y).expect("positive diagonal")
    }

    /// `L^{-T} xi`; for `xi ~ N(0, I)` this has covariance `A^{-1}`.
    pub fn whiten_transpose(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.lower.tr_solve_lower_triangular(xi).expect("positive diagonal")
    }
}

/// `||v||_A = sqrt(v^T A v)`.
pub fn quad_norm(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a * v)).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
    }

    #[test]
    fn log_det_matches_determinant() {
        let a = spd();
        let f = SpdFactor::new(&a).unwrap();
        assert!((f.log_det() - a.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn inverse_quadratic_form() {
        let a = spd();
        let f = SpdFactor::new(&a).unwrap();
        let v = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let inv = a.clone().try_inverse().unwrap();
        assert!((f.inv_quad(&v) - v.dot(&(&inv * &v))).abs() < 1e-12);
        assert!((f.solve(&v) - &inv * &v).norm() < 1e-12);
    }

    #[test]
    fn whitening_covariance() {
        let a = spd();
        let f = SpdFactor::new(&a).unwrap();
        // Columns of L^{-T} reproduce A^{-1} = L^{-T} L^{-1}.
        let m = DMatrix::from_columns(
            &(0..3).map(|k| f.whiten_transpose(&DVector::from_fn(3, |i, _| (i == k) as u8 as f64))).collect::<Vec<_>>(),
        );
        let cov = &m * m.transpose();
        assert!((cov - a.try_inverse().unwrap()).norm() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(SpdFactor::new(&a), Err(Error::Numerical(_))));
    }
}
