//! Dense f64 linear algebra used by the editors and diagnostics.

mod cholesky;
mod dense;
mod eigen;
mod smw;

pub use cholesky::{solve_spd, SpdFactor, DEFINITENESS_RATIO};
pub use dense::{cosine, matmul, DenseMatrix, DenseVector};
pub use eigen::{condition_number_spd, sym_eigen, SymEigen};
pub use smw::{smw_apply, Woodbury};

/// Median of a slice (mean of the middle pair for even lengths); NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}
