//! Random fixtures and reference computations shared by the test targets.
#![allow(dead_code)]

use kedit::editors::{Fact, SubjectGroup};
use kedit::linalg::{DenseMatrix, DenseVector};
use kedit::memory::{AssociativeMemory, RelationReadout};
use kedit::seed::rng_for;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64, tag: &str) -> ChaCha8Rng {
    rng_for(seed, tag, 0)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::new(gaussian(rng, n)).unwrap()
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = gaussian(rng, rows * cols)
        .into_iter()
        .map(|x| x * scale)
        .collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

/// SPD matrix `A Aᵀ / d + shift·I`.
pub fn spd(rng: &mut ChaCha8Rng, d: usize, shift: f64) -> DenseMatrix {
    let a = matrix(rng, d, d, 1.0);
    let aat = kedit::linalg::matmul(&a, &a.transpose())
        .unwrap()
        .scaled(1.0 / d as f64);
    aat.add(&DenseMatrix::identity(d).scaled(shift))
        .unwrap()
        .symmetrized()
}

pub fn to_na(m: &DenseMatrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn vec_to_na(v: &DenseVector) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(v.as_slice())
}

pub fn na_to_vec(v: &nalgebra::DVector<f64>) -> DenseVector {
    DenseVector::new(v.iter().copied().collect()).unwrap()
}

pub fn na_to_mat(m: &nalgebra::DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn dist(a: &DenseVector, b: &DenseVector) -> f64 {
    a.sub(b).unwrap().norm()
}

/// Gradient of `-log softmax(E v)[t]`, computed directly from the logits.
pub fn reference_gradient(e: &DenseMatrix, v: &DenseVector, t: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..e.rows())
        .map(|i| e.row(i).iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let mut g = vec![0.0; e.cols()];
    for (i, l) in logits.iter().enumerate() {
        let p = (l - max).exp() / z - if i == t { 1.0 } else { 0.0 };
        for (j, gj) in g.iter_mut().enumerate() {
            *gj += p * e.get(i, j);
        }
    }
    g
}

pub fn reference_loss(e: &DenseMatrix, v: &DenseVector, t: usize) -> f64 {
    let logits: Vec<f64> = (0..e.rows())
        .map(|i| e.row(i).iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[t]
}

/// Random memory plus one subject with `relations` facts and no variants.
pub fn random_instance(
    seed: u64,
    d_k: usize,
    d_v: usize,
    vocab: usize,
    relations: usize,
) -> (AssociativeMemory, SubjectGroup) {
    let mut r = rng(seed, "instance");
    let w0 = matrix(&mut r, d_v, d_k, 1.0 / (d_k as f64).sqrt());
    let key = vector(&mut r, d_k);
    let facts = (0..relations)
        .map(|i| Fact {
            readout: RelationReadout::new(
                format!("r{i}"),
                matrix(&mut r, vocab, d_v, 3.0 / (d_v as f64).sqrt()),
            )
            .unwrap(),
            target: (seed as usize + 3 * i) % vocab,
            variants: vec![],
        })
        .collect();
    let group = SubjectGroup::new("s", key, facts).unwrap();
    (AssociativeMemory::new(w0), group)
}

/// Key-channel centroid: mean over variants of the gradient at the shifted value.
pub fn reference_centroid(
    mem: &AssociativeMemory,
    key: &DenseVector,
    fact: &Fact,
    x: &DenseVector,
) -> Vec<f64> {
    let mut acc = vec![0.0; x.dim()];
    for var in &fact.variants {
        let shift = mem.forward(&var.key.sub(key).unwrap()).unwrap();
        let g = reference_gradient(fact.readout.matrix(), &x.add(&shift).unwrap(), fact.target);
        for (a, gi) in acc.iter_mut().zip(g) {
            *a += gi / fact.variants.len() as f64;
        }
    }
    acc
}
