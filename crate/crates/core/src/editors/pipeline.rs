use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::value::{optimize_value_hki, optimize_value_isolated, optimize_value_joint};
use super::{
    apply_edit, compute_update, EditOutcome, OptimizerConfig, Strategy, SubjectGroup, UpdateRule,
    ValueOptimization, VariantConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::memory::{perturbed_readout, predict, AssociativeMemory};

/// Post-edit predictions for one fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactEfficacy {
    pub subject_id: String,
    pub relation_id: String,
    pub target: usize,
    pub canonical_success: bool,
    pub canonical_prob: f64,
    pub variant_successes: usize,
    pub variant_total: usize,
}

impl FactEfficacy {
    /// Fraction of variant keys whose argmax is the target; 0 with no variants.
    pub fn variant_rate(&self) -> f64 {
        if self.variant_total == 0 {
            0.0
        } else {
            self.variant_successes as f64 / self.variant_total as f64
        }
    }
}

/// One optimized column of `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnOptimization {
    pub subject_id: String,
    /// The relation for isolated columns; `None` for a whole-subject column.
    pub relation_id: Option<String>,
    pub optimization: ValueOptimization,
}

#[derive(Clone, Debug)]
pub struct EditResult {
    pub memory: AssociativeMemory,
    /// `None` when there was nothing to edit.
    pub outcome: Option<EditOutcome>,
    pub efficacy: Vec<FactEfficacy>,
    pub columns: Vec<ColumnOptimization>,
}

fn check_distinct_keys(groups: &[SubjectGroup]) -> Result<()> {
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            if a.key == b.key {
                return Err(Error::Degenerate(format!(
                    "subjects {} and {} share a key",
                    a.subject_id, b.subject_id
                )));
            }
        }
    }
    Ok(())
}

fn optimize_group(
    m: &AssociativeMemory,
    g: &SubjectGroup,
    cfg: &OptimizerConfig,
    strategy: Strategy,
    variants: &VariantConfig,
) -> Result<Vec<ColumnOptimization>> {
    let whole = |optimization| {
        vec![ColumnOptimization {
            subject_id: g.subject_id.clone(),
            relation_id: None,
            optimization,
        }]
    };
    match strategy {
        Strategy::Joint => Ok(whole(optimize_value_joint(m, g, cfg)?)),
        Strategy::Hki => Ok(whole(optimize_value_hki(m, g, cfg, variants)?)),
        Strategy::Isolated => g
            .facts
            .iter()
            .map(|f| {
                Ok(ColumnOptimization {
                    subject_id: g.subject_id.clone(),
                    relation_id: Some(f.relation_id().to_string()),
                    optimization: optimize_value_isolated(m, &f.readout, &g.key, f.target, cfg)?,
                })
            })
            .collect(),
    }
}

fn evaluate(
    m: &AssociativeMemory,
    g: &SubjectGroup,
    variants: &VariantConfig,
) -> Result<Vec<FactEfficacy>> {
    let canonical = m.forward(&g.key)?;
    g.facts
        .iter()
        .map(|f| {
            let p = predict(&f.readout, &canonical)?;
            let mut hits = 0;
            for var in &f.variants {
                let value: DenseVector = m.forward(&var.key)?;
                let hit = if variants.channel.uses_readout() {
                    predict(
                        &perturbed_readout(&f.readout, var, variants.strength)?,
                        &value,
                    )?
                } else {
                    predict(&f.readout, &value)?
                }
                .argmax
                    == f.target;
                hits += usize::from(hit);
            }
            Ok(FactEfficacy {
                subject_id: g.subject_id.clone(),
                relation_id: f.relation_id().to_string(),
                target: f.target,
                canonical_success: p.argmax == f.target,
                canonical_prob: p.prob(f.target),
                variant_successes: hits,
                variant_total: f.variants.len(),
            })
        })
        .collect()
}

/// Optimizes values per the strategy, applies one batched update, and
/// re-evaluates every fact at its canonical and variant keys.
pub fn edit_subject_groups(
    m: &AssociativeMemory,
    groups: &[SubjectGroup],
    rule: &UpdateRule,
    cfg: &OptimizerConfig,
    strategy: Strategy,
    variants: &VariantConfig,
) -> Result<EditResult> {
    if groups.is_empty() {
        return Ok(EditResult {
            memory: m.clone(),
            outcome: None,
            efficacy: Vec::new(),
            columns: Vec::new(),
        });
    }
    for g in groups {
        g.validate()?;
    }
    check_distinct_keys(groups)?;

    let per_group = groups
        .par_iter()
        .map(|g| optimize_group(m, g, cfg, strategy, variants))
        .collect::<Result<Vec<_>>>()?;

    let mut key_cols = Vec::new();
    for (g, cols) in groups.iter().zip(&per_group) {
        key_cols.extend(std::iter::repeat_n(g.key.clone(), cols.len()));
    }
    let columns: Vec<ColumnOptimization> = per_group.into_iter().flatten().collect();
    let value_cols: Vec<DenseVector> = columns
        .iter()
        .map(|c| c.optimization.v_star.clone())
        .collect();
    let keys = DenseMatrix::from_columns(m.d_k(), &key_cols)?;
    let values = DenseMatrix::from_columns(m.d_v(), &value_cols)?;

    let mut outcome = compute_update(m, &keys, &values, rule)?;
    outcome.converged = columns
        .iter()
        .map(|c| c.optimization.all_converged())
        .collect();
    outcome.final_losses = columns
        .iter()
        .map(|c| c.optimization.final_loss())
        .collect();
    let memory = apply_edit(m, &outcome)?;

    let efficacy = groups
        .par_iter()
        .map(|g| evaluate(&memory, g, variants))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(EditResult {
        memory,
        outcome: Some(outcome),
        efficacy,
        columns,
    })
}
