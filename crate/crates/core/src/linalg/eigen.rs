use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::cholesky::DEFINITENESS_RATIO;
use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Full symmetric eigendecomposition, eigenvalues ascending.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`; the first
/// component of each column that is clearly nonzero is positive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl SymEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Q diag(λ) Q^T`
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim();
        let q = &self.eigenvectors;
        DenseMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| q.get(i, k) * self.eigenvalues[k] * q.get(j, k))
                .sum()
        })
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }
}

/// Deterministic symmetric eigendecomposition (Householder tridiagonalization
/// followed by implicit QR, via nalgebra).
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen> {
    a.check_symmetric("sym_eigen")?;
    let n = a.rows();
    let sym = a.symmetrized();
    let m = DMatrix::from_row_slice(n, n, sym.as_slice());
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut q = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        let pivot = v.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for row in 0..n {
            q.set(row, col, sign * v[row]);
        }
    }
    if let Some(i) = eigenvalues.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors: q,
    })
}

/// `λ_max / λ_min` of an SPD matrix.
pub fn condition_number_spd(a: &DenseMatrix) -> Result<f64> {
    let eig = sym_eigen(a)?;
    let (lo, hi) = (eig.lambda_min(), eig.lambda_max());
    if hi <= 0.0 || lo <= DEFINITENESS_RATIO * hi {
        return Err(Error::NotPositiveDefinite(format!(
            "eigenvalues span [{lo:e}, {hi:e}]"
        )));
    }
    Ok(hi / lo)
}
