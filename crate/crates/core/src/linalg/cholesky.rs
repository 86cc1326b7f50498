use super::dense::{dot, DenseMatrix, DenseVector};
use crate::error::{Error, Result};

/// Eigenvalues at or below this fraction of `λ_max` count as singular.
pub const DEFINITENESS_RATIO: f64 = 1e-12;

const SPECTRAL_ITERS: usize = 40;

/// Cholesky factorization `A = L L^T` of a symmetrized SPD matrix.
///
/// The factor keeps the symmetrized input to run one step of iterative
/// refinement per solve.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    a: DenseMatrix,
    l: DenseMatrix,
}

impl SpdFactor {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        a.check_symmetric("solve_spd")?;
        let a = a.symmetrized();
        let n = a.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let d = a.get(j, j) - dot(&l.row(j)[..j], &l.row(j)[..j]);
            if d.is_nan() || d <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!(
                    "non-positive pivot {d:e} at column {j}"
                )));
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in (j + 1)..n {
                let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l.set(i, j, s / djj);
            }
        }
        let factor = Self { a, l };
        if n > 0 {
            let (lo, hi) = factor.extreme_eigenvalues();
            if lo <= DEFINITENESS_RATIO * hi {
                return Err(Error::NotPositiveDefinite(format!(
                    "eigenvalue {lo:e} below {DEFINITENESS_RATIO:e} x {hi:e}"
                )));
            }
        }
        Ok(factor)
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DenseVector) -> Result<DenseVector> {
        if b.dim() != self.dim() {
            return Err(Error::shape(
                "solve_spd",
                format!("rhs of dim {} for {}x{}", b.dim(), self.dim(), self.dim()),
            ));
        }
        let mut x = self.substitute(b.as_slice());
        // one refinement step: x += A^{-1}(b - A x)
        let ax = self.a.matvec(&DenseVector::from_vec(x.clone()))?;
        let r: Vec<f64> = b
            .as_slice()
            .iter()
            .zip(ax.as_slice())
            .map(|(b, ax)| b - ax)
            .collect();
        let dx = self.substitute(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        Ok(DenseVector::from_vec(x))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let cols = b
            .columns()
            .iter()
            .map(|c| self.solve(c))
            .collect::<Result<Vec<_>>>()?;
        DenseMatrix::from_columns(self.dim(), &cols)
    }

    fn substitute(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = (b[i] - dot(&self.l.row(i)[..i], &y[..i])) / self.l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|k| self.l.get(k, i) * x[k]).sum();
            x[i] = (y[i] - s) / self.l.get(i, i);
        }
        x
    }

    /// Power iteration for `λ_max` and inverse iteration for `λ_min`.
    fn extreme_eigenvalues(&self) -> (f64, f64) {
        let n = self.dim();
        let start: Vec<f64> = (0..n)
            .map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract())
            .collect();
        let normalize = |v: &mut Vec<f64>| {
            let nv = dot(v, v).sqrt();
            if nv > 0.0 {
                v.iter_mut().for_each(|x| *x /= nv);
            }
        };
        let mut v = start.clone();
        normalize(&mut v);
        let mut hi = 0.0;
        for _ in 0..SPECTRAL_ITERS {
            let w: Vec<f64> = (0..n).map(|i| dot(self.a.row(i), &v)).collect();
            hi = dot(&v, &w);
            v = w;
            normalize(&mut v);
        }
        let mut u = start;
        normalize(&mut u);
        let mut inv_hi = 0.0;
        for _ in 0..SPECTRAL_ITERS {
            let w = self.substitute(&u);
            inv_hi = dot(&u, &w);
            u = w;
            normalize(&mut u);
        }
        let lo = if inv_hi > 0.0 { 1.0 / inv_hi } else { 0.0 };
        (lo, hi)
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    SpdFactor::new(a)?.solve(b)
}
