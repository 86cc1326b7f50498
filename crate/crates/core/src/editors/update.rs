use super::{EditOutcome, UpdateRule};
use crate::error::{Error, Result};
use crate::linalg::{matmul, sym_eigen, DenseMatrix, SpdFactor, Woodbury};
use crate::memory::AssociativeMemory;

/// The Woodbury path is taken while `B ≤ d_k · SMW_MAX_BATCH_FRACTION`.
pub const SMW_MAX_BATCH_FRACTION: f64 = 0.25;

/// `U U^T` over the eigenvectors of `c` whose eigenvalue is at most
/// `eigen_cutoff · λ_max`. A cutoff of 1 or more keeps every direction.
pub fn null_space_projector(c: &DenseMatrix, eigen_cutoff: f64) -> Result<DenseMatrix> {
    if !(eigen_cutoff >= 0.0) {
        return Err(Error::config("eigen_cutoff", "must be non-negative"));
    }
    c.check_symmetric("null_space_projector")?;
    let n = c.rows();
    if eigen_cutoff >= 1.0 {
        return Ok(DenseMatrix::identity(n));
    }
    let eig = sym_eigen(c)?;
    let threshold = eigen_cutoff * eig.lambda_max();
    let kept: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= threshold)
        .collect();
    let u = DenseMatrix::from_fn(n, kept.len(), |i, j| eig.eigenvectors.get(i, kept[j]));
    Ok(matmul(&u, &u.transpose())?.symmetrized())
}

/// `X = (C_rule + K K^T)^{-1} K`, one column per key.
fn regularized_inverse_keys(c_rule: &DenseMatrix, keys: &DenseMatrix) -> Result<DenseMatrix> {
    let (d_k, b) = keys.shape();
    if (b as f64) <= SMW_MAX_BATCH_FRACTION * d_k as f64 {
        let op = Woodbury::new(c_rule, keys)?;
        let cols = keys
            .columns()
            .iter()
            .map(|k| op.apply(k))
            .collect::<Result<Vec<_>>>()?;
        DenseMatrix::from_columns(d_k, &cols)
    } else {
        // surfaces a definiteness failure of C itself, not only of C + K K^T
        SpdFactor::new(c_rule)?;
        let m = c_rule.add(&keys.gram_outer())?;
        SpdFactor::new(&m)?.solve_matrix(keys)
    }
}

/// Closed-form `ΔW = (V - W₀K) K^T (C_rule + K K^T)^{-1}`; the null-space
/// rule right-multiplies the covariance update by its projector.
pub fn compute_update(
    m: &AssociativeMemory,
    keys: &DenseMatrix,
    values: &DenseMatrix,
    rule: &UpdateRule,
) -> Result<EditOutcome> {
    let (d_k, b) = keys.shape();
    if d_k != m.d_k() || values.rows() != m.d_v() {
        return Err(Error::shape(
            "compute_update",
            format!(
                "K is {d_k}x{b} and V is {:?} for a {}x{} memory",
                values.shape(),
                m.d_v(),
                m.d_k()
            ),
        ));
    }
    if values.cols() != b {
        return Err(Error::shape(
            "compute_update",
            format!("K has {b} columns, V has {}", values.cols()),
        ));
    }
    if b == 0 {
        return Err(Error::Degenerate(
            "compute_update needs at least one key".into(),
        ));
    }
    let c_rule = rule.regularizer(d_k)?;
    let residual = values.sub(&matmul(m.weights(), keys)?)?;
    let x = regularized_inverse_keys(&c_rule, keys)?;
    let mut delta_w = matmul(&residual, &x.transpose())?;
    if let UpdateRule::NullSpace { c, eigen_cutoff } = rule {
        delta_w = matmul(&delta_w, &null_space_projector(c, *eigen_cutoff)?)?;
    }
    if let Some(i) = delta_w.as_slice().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(EditOutcome {
        delta_w,
        optimized_values: values.clone(),
        keys: keys.clone(),
        residual,
        converged: Vec::new(),
        final_losses: Vec::new(),
    })
}

/// `W₀ + ΔW` as a new memory.
pub fn apply_edit(m: &AssociativeMemory, outcome: &EditOutcome) -> Result<AssociativeMemory> {
    m.with_delta(&outcome.delta_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseVector;

    fn e1_setup() -> (AssociativeMemory, DenseMatrix, DenseMatrix) {
        let m = AssociativeMemory::new(DenseMatrix::zeros(2, 2));
        let k = DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap();
        (m, k, v)
    }

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let diff = a.sub(b).unwrap().max_abs();
        assert!(diff <= tol, "diff {diff:e}\n{a:?}\n{b:?}");
    }

    #[test]
    fn identity_rule_halves_raw_edit() {
        let (m, k, v) = e1_setup();
        let out = compute_update(&m, &k, &v, &UpdateRule::Identity).unwrap();
        let want = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_close(&out.delta_w, &want, 1e-15);
        let edited = apply_edit(&m, &out).unwrap();
        let y = edited.forward(&DenseVector::basis(2, 0)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn covariance_two_identity() {
        // (2I + e1 e1^T)^{-1} = diag(1/3, 1/2); residual column (2, 0)
        let (m, k, v) = e1_setup();
        let rule = UpdateRule::Covariance {
            c: DenseMatrix::identity(2).scaled(2.0),
        };
        let out = compute_update(&m, &k, &v, &rule).unwrap();
        let want = DenseMatrix::from_rows(&[vec![2.0 / 3.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_close(&out.delta_w, &want, 1e-15);
    }

    #[test]
    fn zero_residual_is_zero_update() {
        let w = DenseMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let m = AssociativeMemory::new(w.clone());
        let k = DenseMatrix::from_fn(4, 2, |i, j| ((i + 3 * j) as f64).cos());
        let v = matmul(&w, &k).unwrap();
        let out = compute_update(&m, &k, &v, &UpdateRule::Identity).unwrap();
        assert_eq!(out.delta_w.max_abs(), 0.0);
        let again = apply_edit(&apply_edit(&m, &out).unwrap(), &out).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn covariance_of_identity_is_identity_rule() {
        let m = AssociativeMemory::new(DenseMatrix::from_fn(3, 8, |i, j| {
            ((i * 8 + j) as f64).sin()
        }));
        let k = DenseMatrix::from_fn(8, 2, |i, j| ((i * 2 + j) as f64 * 0.7).cos());
        let v = DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let a = compute_update(&m, &k, &v, &UpdateRule::Identity).unwrap();
        let rule = UpdateRule::Covariance {
            c: DenseMatrix::identity(8),
        };
        let b = compute_update(&m, &k, &v, &rule).unwrap();
        assert_eq!(a.delta_w, b.delta_w);
    }

    #[test]
    fn smw_and_direct_paths_agree() {
        let d = 8;
        let c = DenseMatrix::from_fn(d, d, |i, j| if i == j { 2.0 + i as f64 } else { 0.1 });
        let m = AssociativeMemory::new(DenseMatrix::from_fn(2, d, |i, j| (i + j) as f64 * 0.1));
        let small = DenseMatrix::from_fn(d, 2, |i, j| ((i + 5 * j) as f64).sin());
        let large = DenseMatrix::from_fn(d, 4, |i, j| ((i + 5 * j) as f64).sin());
        let rule = UpdateRule::Covariance { c };
        for k in [small, large] {
            let v = DenseMatrix::from_fn(2, k.cols(), |i, j| (i * 3 + j) as f64);
            let out = compute_update(&m, &k, &v, &rule).unwrap();
            let UpdateRule::Covariance { c } = &rule else {
                unreachable!()
            };
            let mm = c.add(&k.gram_outer()).unwrap();
            let f = SpdFactor::new(&mm).unwrap();
            let xt = f.solve_matrix(&k).unwrap().transpose();
            let want = matmul(&out.residual, &xt).unwrap();
            assert_close(&out.delta_w, &want, 1e-12);
        }
    }

    #[test]
    fn projector_examples() {
        let c = DenseMatrix::diagonal(&[1.0, 0.0]);
        let p = null_space_projector(&c, 1e-6).unwrap();
        assert_close(&p, &DenseMatrix::diagonal(&[0.0, 1.0]), 1e-12);
        assert_eq!(
            null_space_projector(&c, 1.0).unwrap(),
            DenseMatrix::identity(2)
        );
        assert!(null_space_projector(&c, -1.0).is_err());
    }

    #[test]
    fn shape_and_definiteness_errors() {
        let (m, k, v) = e1_setup();
        let bad = UpdateRule::Covariance {
            c: DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap(),
        };
        assert!(matches!(
            compute_update(&m, &k, &v, &bad),
            Err(Error::NotPositiveDefinite(_))
        ));
        let v3 = DenseMatrix::zeros(3, 1);
        assert!(compute_update(&m, &k, &v3, &UpdateRule::Identity).is_err());
        let wrong = UpdateRule::Covariance {
            c: DenseMatrix::identity(3),
        };
        assert!(compute_update(&m, &k, &v, &wrong).is_err());
    }
}
