//! Diagnostics on edited memories: tolerance radius, activation deviation,
//! gradient conflict, key similarity, locality and covariance amplification.

mod radius;

use serde::{Deserialize, Serialize};

use crate::editors::SubjectGroup;
use crate::error::{Error, Result};
use crate::linalg::{self, cosine, sym_eigen, DenseMatrix, DenseVector, Woodbury};
use crate::memory::{value_gradient, AssociativeMemory};

pub use radius::{tolerance_radius, RadiusMeasurement, RadiusStep, ToleranceConfig};

/// `||ΔW (k̃ - k_o)||`
pub fn activation_deviation(
    delta_w: &DenseMatrix,
    k_o: &DenseVector,
    k_tilde: &DenseVector,
) -> Result<f64> {
    Ok(delta_w.matvec(&k_tilde.sub(k_o)?)?.norm())
}

/// `||ΔW k_old||`
pub fn locality_deviation(delta_w: &DenseMatrix, k_old: &DenseVector) -> Result<f64> {
    Ok(delta_w.matvec(k_old)?.norm())
}

/// `1 - cos(g1, g2)`, in `[0, 2]`.
pub fn gradient_conflict(g1: &DenseVector, g2: &DenseVector) -> Result<f64> {
    Ok(1.0 - cosine(g1, g2)?)
}

/// Pairwise conflict scores among one subject's relations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectConflict {
    pub subject_id: String,
    pub relation_ids: Vec<String>,
    /// Symmetric with a zero diagonal.
    pub scores: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictDistribution {
    pub subjects: Vec<SubjectConflict>,
    /// Upper-triangle scores of every subject, in order.
    pub pair_scores: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

/// Relation gradients at the shared initial value `W₀ k`, scored pairwise.
pub fn conflict_distribution(
    m: &AssociativeMemory,
    groups: &[SubjectGroup],
) -> Result<ConflictDistribution> {
    let mut subjects = Vec::with_capacity(groups.len());
    let mut pair_scores = Vec::new();
    for g in groups {
        let n = g.facts.len();
        if n < 2 {
            return Err(Error::Degenerate(format!(
                "subject {} has {n} fact(s); conflict needs pairs",
                g.subject_id
            )));
        }
        let v = m.forward(&g.key)?;
        let grads = g
            .facts
            .iter()
            .map(|f| value_gradient(&f.readout, &v, f.target))
            .collect::<Result<Vec<_>>>()?;
        let mut scores = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let s = gradient_conflict(&grads[i], &grads[j])?;
                scores.set(i, j, s);
                scores.set(j, i, s);
                pair_scores.push(s);
            }
        }
        subjects.push(SubjectConflict {
            subject_id: g.subject_id.clone(),
            relation_ids: g
                .facts
                .iter()
                .map(|f| f.relation_id().to_string())
                .collect(),
            scores,
        });
    }
    if pair_scores.is_empty() {
        return Err(Error::Degenerate("no subject groups to score".into()));
    }
    Ok(ConflictDistribution {
        mean: linalg::mean(&pair_scores),
        std_dev: linalg::std_dev(&pair_scores),
        min: pair_scores.iter().copied().fold(f64::INFINITY, f64::min),
        max: pair_scores
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        subjects,
        pair_scores,
    })
}

/// Mean pairwise cosine between labeled key groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBlocks {
    pub labels: Vec<String>,
    pub means: DenseMatrix,
}

/// Entry `(a, b)` averages the cosine over all cross pairs; a diagonal entry
/// skips self-pairs, and a singleton group's diagonal is 1.
pub fn key_similarity_blocks(groups: &[(String, Vec<DenseVector>)]) -> Result<SimilarityBlocks> {
    let mut units: Vec<Vec<DenseVector>> = Vec::with_capacity(groups.len());
    for (label, keys) in groups {
        if keys.is_empty() {
            return Err(Error::Degenerate(format!("key group {label} is empty")));
        }
        let normalized = keys
            .iter()
            .map(|k| {
                let n = k.norm();
                if n == 0.0 {
                    Err(Error::Degenerate(format!("zero key in group {label}")))
                } else {
                    Ok(k.scaled(1.0 / n))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        units.push(normalized);
    }
    let n = groups.len();
    let mut means = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let mut total = 0.0;
            let mut count = 0usize;
            for (i, x) in units[a].iter().enumerate() {
                for (j, y) in units[b].iter().enumerate() {
                    if a == b && i == j {
                        continue;
                    }
                    total += x.dot(y).clamp(-1.0, 1.0);
                    count += 1;
                }
            }
            let value = if count == 0 {
                1.0
            } else {
                total / count as f64
            };
            means.set(a, b, value);
            means.set(b, a, value);
        }
    }
    Ok(SimilarityBlocks {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        means,
    })
}

/// Spectral quantities of `C` that bound the covariance amplification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// `λ_max(C^{-1}) = 1 / λ_min(C)`
    pub lambda_max_cinv: f64,
    pub condition_number: f64,
    /// `|δ · u|` with `u` the eigenvector of `C`'s smallest eigenvalue.
    pub delta_proj: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationAnalysis {
    /// `||(C + K K^T)^{-1} δ|| / ||δ||`
    pub r_cov: Vec<f64>,
    /// `||(I + K K^T)^{-1} δ|| / ||δ||`
    pub r_id: Vec<f64>,
    pub median_r_cov: f64,
    pub median_r_id: f64,
    /// Number of δ with `r_cov > r_id`.
    pub cov_exceeds_id: usize,
    pub spectral: SpectralSummary,
}

pub fn amplification_analysis(
    c: &DenseMatrix,
    keys: &DenseMatrix,
    deltas: &[DenseVector],
) -> Result<AmplificationAnalysis> {
    let d = c.rows();
    let cov = Woodbury::new(c, keys)?;
    let id = Woodbury::new(&DenseMatrix::identity(d), keys)?;
    let eig = sym_eigen(c)?;
    let minor = eig.eigenvectors.column(0);

    let mut r_cov = Vec::with_capacity(deltas.len());
    let mut r_id = Vec::with_capacity(deltas.len());
    let mut delta_proj = Vec::with_capacity(deltas.len());
    for delta in deltas {
        let n = delta.norm();
        if n == 0.0 {
            return Err(Error::Degenerate("zero deviation vector".into()));
        }
        r_cov.push(cov.apply(delta)?.norm() / n);
        r_id.push(id.apply(delta)?.norm() / n);
        delta_proj.push(delta.dot(&minor).abs());
    }
    let cov_exceeds_id = r_cov.iter().zip(&r_id).filter(|(a, b)| a > b).count();
    Ok(AmplificationAnalysis {
        median_r_cov: linalg::median(&r_cov),
        median_r_id: linalg::median(&r_id),
        cov_exceeds_id,
        r_cov,
        r_id,
        spectral: SpectralSummary {
            lambda_max_cinv: 1.0 / eig.lambda_min(),
            condition_number: eig.lambda_max() / eig.lambda_min(),
            delta_proj,
        },
    })
}

/// One tolerance radius, labeled by the arm that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEntry {
    pub arm: String,
    /// Subject id, or `subject/relation` for single-fact measurements.
    pub subject_id: String,
    pub radius: f64,
    pub capped: bool,
    /// Success rate at the radius that ended the search.
    pub failing_success_rate: Option<f64>,
}

impl RadiusEntry {
    pub fn new(arm: &str, subject_id: impl Into<String>, m: &RadiusMeasurement) -> Self {
        Self {
            arm: arm.to_string(),
            subject_id: subject_id.into(),
            radius: m.radius,
            capped: m.capped,
            failing_success_rate: m.failing_success_rate,
        }
    }
}

/// One activation deviation for one prompt form of one fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub arm: String,
    pub fact_id: String,
    pub form: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityEntry {
    pub arm: String,
    pub probe: String,
    pub value: f64,
}

/// Collected measurements of one run; every section may be empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub radii: Vec<RadiusEntry>,
    pub deviations: Vec<DeviationEntry>,
    pub locality: Vec<LocalityEntry>,
    pub conflict: Option<ConflictDistribution>,
    pub similarity_blocks: Option<SimilarityBlocks>,
    pub amplification: Option<AmplificationAnalysis>,
}
