//! Value optimization and closed-form weight updates.

mod pipeline;
mod update;
mod value;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::memory::{PromptVariant, RelationReadout};

pub use pipeline::{edit_subject_groups, ColumnOptimization, EditResult, FactEfficacy};
pub use update::{apply_edit, compute_update, null_space_projector, SMW_MAX_BATCH_FRACTION};
pub use value::{
    hki_centroid, optimize_value_hki, optimize_value_isolated, optimize_value_joint, PromptSet,
    ValueOptimization,
};

/// Regularizer in `ΔW = (V - W₀K) K^T (C_rule + K K^T)^{-1}`.
#[derive(Clone, Debug, PartialEq)]
pub enum UpdateRule {
    Covariance {
        c: DenseMatrix,
    },
    Identity,
    /// Covariance update right-multiplied by the projector onto the
    /// eigendirections of `c` with eigenvalue ≤ `eigen_cutoff · λ_max`.
    NullSpace {
        c: DenseMatrix,
        eigen_cutoff: f64,
    },
}

impl UpdateRule {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Covariance { .. } => "covariance",
            UpdateRule::Identity => "identity",
            UpdateRule::NullSpace { .. } => "null-space",
        }
    }

    pub(crate) fn regularizer(&self, d_k: usize) -> Result<DenseMatrix> {
        let c = match self {
            UpdateRule::Identity => return Ok(DenseMatrix::identity(d_k)),
            UpdateRule::Covariance { c } => c,
            UpdateRule::NullSpace { c, eigen_cutoff } => {
                if !(*eigen_cutoff >= 0.0) {
                    return Err(Error::config("eigen_cutoff", "must be non-negative"));
                }
                c
            }
        };
        if c.shape() != (d_k, d_k) {
            return Err(Error::shape(
                "compute_update",
                format!("covariance is {:?}, expected {d_k}x{d_k}", c.shape()),
            ));
        }
        Ok(c.clone())
    }
}

/// Gradient-descent settings for value optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub convergence_prob: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 35,
            learning_rate: 0.5,
            weight_decay: 0.5,
            convergence_prob: 0.99,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::config("optimizer.steps", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("optimizer.learning_rate", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config(
                "optimizer.weight_decay",
                "must be non-negative",
            ));
        }
        if !(self.convergence_prob > 0.0 && self.convergence_prob < 1.0) {
            return Err(Error::config(
                "optimizer.convergence_prob",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// How many keys to pack into `K` and which objective produces each value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// One column per fact (same-subject facts collide on the key).
    Isolated,
    /// One column per subject, summed relation losses.
    Joint,
    /// One column per subject, relation gradients averaged over prompt variants.
    Hki,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Isolated => "isolated",
            Strategy::Joint => "joint",
            Strategy::Hki => "hki",
        }
    }
}

/// Where a prompt variant acts in the toy model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantChannel {
    /// The variant changes the key; its value is shifted by `W₀(k̃ - k_o)`.
    #[default]
    Key,
    /// The variant perturbs the readout.
    Readout,
    Both,
}

impl VariantChannel {
    pub fn uses_key(self) -> bool {
        matches!(self, VariantChannel::Key | VariantChannel::Both)
    }

    pub fn uses_readout(self) -> bool {
        matches!(self, VariantChannel::Readout | VariantChannel::Both)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub strength: f64,
    pub channel: VariantChannel,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self {
            strength: 0.05,
            channel: VariantChannel::Key,
        }
    }
}

/// One relation of a subject: readout, target token and prompt variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub readout: RelationReadout,
    pub target: usize,
    pub variants: Vec<PromptVariant>,
}

impl Fact {
    pub fn relation_id(&self) -> &str {
        &self.readout.relation_id
    }
}

/// All facts sharing one subject key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectGroup {
    pub subject_id: String,
    pub key: DenseVector,
    pub facts: Vec<Fact>,
}

impl SubjectGroup {
    pub fn new(subject_id: impl Into<String>, key: DenseVector, facts: Vec<Fact>) -> Result<Self> {
        let g = Self {
            subject_id: subject_id.into(),
            key,
            facts,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.facts.is_empty() {
            return Err(Error::Degenerate(format!(
                "subject {} has no facts",
                self.subject_id
            )));
        }
        if self.key.norm() == 0.0 {
            return Err(Error::Degenerate(format!(
                "subject {} has a zero key",
                self.subject_id
            )));
        }
        for f in &self.facts {
            if f.target >= f.readout.vocab() {
                return Err(Error::Index {
                    index: f.target,
                    len: f.readout.vocab(),
                });
            }
        }
        Ok(())
    }

    /// Groups requests by subject, preserving first-seen order. `readout`
    /// resolves a relation id to its readout.
    pub fn from_requests<'a>(
        requests: &[crate::memory::EditRequest],
        mut readout: impl FnMut(&str) -> Option<&'a RelationReadout>,
    ) -> Result<Vec<SubjectGroup>> {
        let mut groups: Vec<SubjectGroup> = Vec::new();
        for req in requests {
            let r = readout(&req.relation_id).ok_or_else(|| {
                Error::Degenerate(format!("no readout for relation {}", req.relation_id))
            })?;
            let fact = Fact {
                readout: r.clone(),
                target: req.target_token,
                variants: req.variants.clone(),
            };
            match groups.iter_mut().find(|g| g.subject_id == req.subject_id) {
                Some(g) => {
                    if g.key != req.key {
                        return Err(Error::Degenerate(format!(
                            "subject {} appears with two different keys",
                            req.subject_id
                        )));
                    }
                    g.facts.push(fact);
                }
                None => groups.push(SubjectGroup {
                    subject_id: req.subject_id.clone(),
                    key: req.key.clone(),
                    facts: vec![fact],
                }),
            }
        }
        for g in &groups {
            g.validate()?;
        }
        Ok(groups)
    }
}

/// Result of a closed-form update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub delta_w: DenseMatrix,
    pub optimized_values: DenseMatrix,
    pub keys: DenseMatrix,
    /// `V - W₀K`
    pub residual: DenseMatrix,
    /// Per column; filled by the pipeline, empty from `compute_update`.
    pub converged: Vec<bool>,
    pub final_losses: Vec<f64>,
}
