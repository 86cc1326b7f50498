//! Linear associative memory and the per-relation readouts that turn an
//! output value into token probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, DenseMatrix, DenseVector};
use crate::seed;

/// Weight matrix `W` (d_v × d_k) mapping keys to values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociativeMemory {
    weights: DenseMatrix,
}

impl AssociativeMemory {
    pub fn new(weights: DenseMatrix) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn d_k(&self) -> usize {
        self.weights.cols()
    }

    pub fn d_v(&self) -> usize {
        self.weights.rows()
    }

    /// `W k`
    pub fn forward(&self, key: &DenseVector) -> Result<DenseVector> {
        if key.dim() != self.d_k() {
            return Err(Error::shape(
                "forward",
                format!("key of dim {} for d_k = {}", key.dim(), self.d_k()),
            ));
        }
        self.weights.matvec(key)
    }

    /// Memory with `W + ΔW`; `self` is left unchanged.
    pub fn with_delta(&self, delta: &DenseMatrix) -> Result<AssociativeMemory> {
        Ok(Self {
            weights: self.weights.add(delta)?,
        })
    }
}

/// Logit map `E` (vocab × d_v) for one relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationReadout {
    pub relation_id: String,
    e: DenseMatrix,
}

impl RelationReadout {
    pub fn new(relation_id: impl Into<String>, e: DenseMatrix) -> Result<Self> {
        if e.rows() < 2 {
            return Err(Error::shape("RelationReadout", "vocab must be at least 2"));
        }
        Ok(Self {
            relation_id: relation_id.into(),
            e,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.e
    }

    pub fn vocab(&self) -> usize {
        self.e.rows()
    }

    pub fn d_v(&self) -> usize {
        self.e.cols()
    }

    pub fn logits(&self, value: &DenseVector) -> Result<DenseVector> {
        if value.dim() != self.d_v() {
            return Err(Error::shape(
                "readout",
                format!("value of dim {} for d_v = {}", value.dim(), self.d_v()),
            ));
        }
        self.e.matvec(value)
    }

    fn check_target(&self, target: usize) -> Result<()> {
        if target >= self.vocab() {
            return Err(Error::Index {
                index: target,
                len: self.vocab(),
            });
        }
        Ok(())
    }
}

/// A rephrasing of a fact: its key plus the seed of its downstream
/// perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub key: DenseVector,
    pub readout_perturbation_seed: u64,
    /// Cosine to the canonical key at generation time.
    pub recorded_cosine: f64,
}

/// One requested fact edit `(subject, relation, target)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub subject_id: String,
    pub relation_id: String,
    pub key: DenseVector,
    pub target_token: usize,
    pub variants: Vec<PromptVariant>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub argmax: usize,
}

impl Prediction {
    pub fn prob(&self, token: usize) -> f64 {
        self.probs[token]
    }
}

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Lowest index among the maximal entries.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Token distribution `softmax(E v)` and its argmax.
pub fn predict(r: &RelationReadout, value: &DenseVector) -> Result<Prediction> {
    let logits = r.logits(value)?;
    let probs = stable_softmax(logits.as_slice());
    let argmax = argmax(logits.as_slice());
    Ok(Prediction { probs, argmax })
}

/// `-log softmax(E v)[target]`
pub fn nll_loss(r: &RelationReadout, value: &DenseVector, target: usize) -> Result<f64> {
    r.check_target(target)?;
    let logits = r.logits(value)?;
    Ok((log_sum_exp(logits.as_slice()) - logits.get(target)).max(0.0))
}

/// `E^T (softmax(E v) - onehot(target))`
pub fn value_gradient(
    r: &RelationReadout,
    value: &DenseVector,
    target: usize,
) -> Result<DenseVector> {
    r.check_target(target)?;
    let mut residual = predict(r, value)?.probs;
    residual[target] -= 1.0;
    r.e.matvec_t(&DenseVector::from_vec(residual))
}

/// Loss, gradient and target probability in one pass.
pub(crate) fn loss_and_gradient(
    r: &RelationReadout,
    value: &DenseVector,
    target: usize,
) -> Result<(f64, DenseVector, f64)> {
    r.check_target(target)?;
    let logits = r.logits(value)?;
    let lse = log_sum_exp(logits.as_slice());
    let loss = (lse - logits.get(target)).max(0.0);
    let mut residual = stable_softmax(logits.as_slice());
    let p_target = residual[target];
    residual[target] -= 1.0;
    let grad = r.e.matvec_t(&DenseVector::from_vec(residual))?;
    Ok((loss, grad, p_target))
}

/// Readout seen through a prompt variant: `E (I + strength·M)`, where `M`
/// has i.i.d. N(0, 1/d_v) entries drawn from the variant's seed.
pub fn perturbed_readout(
    r: &RelationReadout,
    variant: &PromptVariant,
    strength: f64,
) -> Result<RelationReadout> {
    if !strength.is_finite() {
        return Err(Error::Degenerate(
            "perturbation strength must be finite".into(),
        ));
    }
    if strength == 0.0 {
        return Ok(r.clone());
    }
    let d = r.d_v();
    let mut rng = seed::rng_for(variant.readout_perturbation_seed, "readout-perturbation", 0);
    let noise = seed::gaussian_vec(&mut rng, d * d);
    let scale = strength / (d as f64).sqrt();
    let mix = DenseMatrix::from_fn(d, d, |i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + scale * noise[i * d + j]
    });
    RelationReadout::new(r.relation_id.clone(), matmul(&r.e, &mix)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(a: &[f64]) -> DenseVector {
        DenseVector::new(a.to_vec()).unwrap()
    }

    fn readout(rows: &[Vec<f64>]) -> RelationReadout {
        RelationReadout::new("r", DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn forward_examples() {
        let m = AssociativeMemory::new(DenseMatrix::identity(2));
        assert_eq!(m.forward(&v(&[1.0, 2.0])).unwrap().as_slice(), &[1.0, 2.0]);
        let m = AssociativeMemory::new(DenseMatrix::zeros(3, 2));
        assert_eq!(m.forward(&v(&[1.0, 2.0])).unwrap().as_slice(), &[0.0; 3]);
        let m = AssociativeMemory::new(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
        );
        assert_eq!(m.forward(&v(&[1.0, 1.0])).unwrap().as_slice(), &[3.0, 7.0]);
        assert!(m.forward(&v(&[1.0])).is_err());
    }

    #[test]
    fn uniform_logits_tie_break() {
        let r = RelationReadout::new("r", DenseMatrix::zeros(4, 2)).unwrap();
        let p = predict(&r, &v(&[0.3, -2.0])).unwrap();
        assert_eq!(p.argmax, 0);
        assert!(p.probs.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!((nll_loss(&r, &v(&[0.3, -2.0]), 2).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_softmax() {
        let r = readout(&[vec![1.0], vec![-1.0]]);
        let p = predict(&r, &v(&[50.0])).unwrap();
        assert!((p.probs[0] - 1.0).abs() < 1e-12 && p.probs[1] < 1e-12);
        assert!(nll_loss(&r, &v(&[50.0]), 0).unwrap() <= 1e-12);
        let g = value_gradient(&r, &v(&[50.0]), 0).unwrap();
        assert!(g.norm() <= 1e-10);
    }

    #[test]
    fn closed_form_softmax() {
        let r = readout(&[vec![2f64.ln()], vec![0.0]]);
        let p = predict(&r, &v(&[1.0])).unwrap();
        assert!((p.probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.probs[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((nll_loss(&r, &v(&[1.0]), 1).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_at_uniform() {
        let r = readout(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let g = value_gradient(&r, &v(&[0.0, 0.0]), 0).unwrap();
        assert!((g.get(0) + 0.5).abs() < 1e-15 && (g.get(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn target_out_of_range() {
        let r = readout(&[vec![1.0], vec![0.0]]);
        assert!(matches!(
            nll_loss(&r, &v(&[1.0]), 2),
            Err(Error::Index { .. })
        ));
        assert!(value_gradient(&r, &v(&[1.0]), 5).is_err());
    }

    #[test]
    fn perturbation_zero_and_deterministic() {
        let e = DenseMatrix::from_fn(5, 4, |i, j| (i as f64 - j as f64) * 0.3);
        let r = RelationReadout::new("r", e).unwrap();
        let var = PromptVariant {
            key: v(&[1.0]),
            readout_perturbation_seed: 99,
            recorded_cosine: 1.0,
        };
        assert_eq!(perturbed_readout(&r, &var, 0.0).unwrap(), r);
        let a = perturbed_readout(&r, &var, 0.1).unwrap();
        let b = perturbed_readout(&r, &var, 0.1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, r);
    }

    #[test]
    fn perturbation_relative_change() {
        let d_v = 64;
        let mut rng = seed::rng_for(3, "test-readout", 0);
        let e = DenseMatrix::from_vec(50, d_v, seed::gaussian_vec(&mut rng, 50 * d_v));
        let r = RelationReadout::new("r", e.clone()).unwrap();
        for s in 0..100u64 {
            let var = PromptVariant {
                key: v(&[1.0]),
                readout_perturbation_seed: s,
                recorded_cosine: 1.0,
            };
            let p = perturbed_readout(&r, &var, 0.05).unwrap();
            let rel = p.matrix().sub(&e).unwrap().frobenius_norm() / e.frobenius_norm();
            assert!((0.01..=0.25).contains(&rel), "seed {s}: {rel}");
        }
    }
}
