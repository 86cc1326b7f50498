//! Low-rank inverse application through the Sherman–Morrison–Woodbury
//! expansion
//!
//! ```text
//! (C + K K^T)^{-1} x = C^{-1} x - C^{-1} K (I + K^T C^{-1} K)^{-1} K^T C^{-1} x
//! ```
//!
//! Only `C` (d×d) and the small capacitance matrix `I + K^T C^{-1} K` (B×B)
//! are ever factored.

use super::cholesky::SpdFactor;
use super::dense::{matmul, DenseMatrix, DenseVector};
use crate::error::{Error, Result};

/// Pre-factored operator for `(C + K K^T)^{-1}`.
#[derive(Clone, Debug)]
pub struct Woodbury {
    c: SpdFactor,
    k: DenseMatrix,
    cinv_k: DenseMatrix,
    capacitance: Option<SpdFactor>,
}

impl Woodbury {
    pub fn new(c: &DenseMatrix, k: &DenseMatrix) -> Result<Self> {
        let c = SpdFactor::new(c)?;
        Self::with_factor(c, k)
    }

    pub fn with_factor(c: SpdFactor, k: &DenseMatrix) -> Result<Self> {
        if k.rows() != c.dim() {
            return Err(Error::shape(
                "smw_apply",
                format!("keys have {} rows, C is {}x{}", k.rows(), c.dim(), c.dim()),
            ));
        }
        let cinv_k = c.solve_matrix(k)?;
        let capacitance = if k.cols() == 0 {
            None
        } else {
            let inner = matmul(&k.transpose(), &cinv_k)?;
            let inner = DenseMatrix::identity(k.cols()).add(&inner.symmetrized())?;
            Some(SpdFactor::new(&inner)?)
        };
        Ok(Self {
            c,
            k: k.clone(),
            cinv_k,
            capacitance,
        })
    }

    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        let cinv_x = self.c.solve(x)?;
        let Some(cap) = &self.capacitance else {
            return Ok(cinv_x);
        };
        let kt_cinv_x = self.k.matvec_t(&cinv_x)?;
        let coeffs = cap.solve(&kt_cinv_x)?;
        let correction = self.cinv_k.matvec(&coeffs)?;
        cinv_x.sub(&correction)
    }
}

/// `(C + K K^T)^{-1} x` computed via the Woodbury expansion.
pub fn smw_apply(c: &DenseMatrix, k: &DenseMatrix, x: &DenseVector) -> Result<DenseVector> {
    if x.dim() != c.rows() {
        return Err(Error::shape(
            "smw_apply",
            format!("x of dim {} for C {}x{}", x.dim(), c.rows(), c.cols()),
        ));
    }
    Woodbury::new(c, k)?.apply(x)
}
