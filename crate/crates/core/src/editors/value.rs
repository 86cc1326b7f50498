use serde::{Deserialize, Serialize};

use super::{Fact, OptimizerConfig, SubjectGroup, VariantConfig};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::memory::{self, perturbed_readout, AssociativeMemory, RelationReadout};

/// Trajectory summary of one value optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueOptimization {
    pub v_star: DenseVector,
    pub v_init: DenseVector,
    /// One flag per relation.
    pub converged: Vec<bool>,
    /// Objective at every visited iterate, starting with the initial value.
    pub loss_trace: Vec<f64>,
    /// Number of steps whose objective went up.
    pub nonmonotone_steps: usize,
    pub steps_taken: usize,
}

impl ValueOptimization {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Per-iterate objective evaluation: loss, gradient, per-relation
/// convergence.
type Evaluation = (f64, DenseVector, Vec<bool>);

/// Plain full-batch gradient descent from `v_init` with weight decay on
/// `v - v_init`, stopping once every relation has converged.
///
/// The decay term is `wd · ||v - v_init||² / max(||v_init||², 1)`.
fn descend(
    v_init: DenseVector,
    cfg: &OptimizerConfig,
    mut objective: impl FnMut(&DenseVector) -> Result<Evaluation>,
) -> Result<ValueOptimization> {
    let decay_scale = 2.0 * cfg.weight_decay / v_init.dot(&v_init).max(1.0);
    let mut v = v_init.clone();
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut nonmonotone = 0;
    let mut steps_taken = 0;
    let converged = loop {
        let (loss, grad, converged) = objective(&v)?;
        let offset = v.sub(&v_init)?;
        let total = loss + 0.5 * decay_scale * offset.dot(&offset);
        if trace.last().is_some_and(|&prev| total > prev) {
            nonmonotone += 1;
        }
        trace.push(total);
        if converged.iter().all(|&c| c) || steps_taken == cfg.steps {
            break converged;
        }
        let mut step = offset.scaled(decay_scale);
        step.axpy(1.0, &grad);
        v.axpy(-cfg.learning_rate, &step);
        steps_taken += 1;
    };
    Ok(ValueOptimization {
        v_star: v,
        v_init,
        converged,
        loss_trace: trace,
        nonmonotone_steps: nonmonotone,
        steps_taken,
    })
}

fn summed_objective<'a>(
    terms: &'a [(&'a RelationReadout, usize)],
    cfg: &'a OptimizerConfig,
) -> impl FnMut(&DenseVector) -> Result<Evaluation> + 'a {
    move |v| {
        let mut loss = 0.0;
        let mut grad = DenseVector::zeros(v.dim());
        let mut conv = Vec::with_capacity(terms.len());
        for &(r, target) in terms {
            let (l, g, p) = memory::loss_and_gradient(r, v, target)?;
            loss += l;
            grad.axpy(1.0, &g);
            conv.push(p >= cfg.convergence_prob);
        }
        Ok((loss, grad, conv))
    }
}

/// Single-fact value optimization.
pub fn optimize_value_isolated(
    m: &AssociativeMemory,
    r: &RelationReadout,
    key: &DenseVector,
    target: usize,
    cfg: &OptimizerConfig,
) -> Result<ValueOptimization> {
    let v_init = m.forward(key)?;
    let terms = [(r, target)];
    descend(v_init, cfg, summed_objective(&terms, cfg))
}

/// Shared value for every relation of a subject, minimizing the summed loss.
pub fn optimize_value_joint(
    m: &AssociativeMemory,
    group: &SubjectGroup,
    cfg: &OptimizerConfig,
) -> Result<ValueOptimization> {
    if group.facts.is_empty() {
        return Err(Error::Degenerate(
            "joint optimization of an empty group".into(),
        ));
    }
    let v_init = m.forward(&group.key)?;
    let terms: Vec<(&RelationReadout, usize)> =
        group.facts.iter().map(|f| (&f.readout, f.target)).collect();
    descend(v_init, cfg, summed_objective(&terms, cfg))
}

/// The prompt views of one fact: per variant, the value offset it induces
/// and the readout it is read through.
#[derive(Clone, Debug)]
pub struct PromptSet {
    pub target: usize,
    views: Vec<(DenseVector, RelationReadout)>,
}

impl PromptSet {
    pub fn build(
        m: &AssociativeMemory,
        key: &DenseVector,
        fact: &Fact,
        variants: &VariantConfig,
    ) -> Result<Self> {
        if fact.variants.is_empty() {
            return Err(Error::Degenerate(format!(
                "relation {} has no prompt variants",
                fact.relation_id()
            )));
        }
        let views = fact
            .variants
            .iter()
            .map(|var| {
                let shift = if variants.channel.uses_key() {
                    m.forward(&var.key.sub(key)?)?
                } else {
                    DenseVector::zeros(m.d_v())
                };
                let readout = if variants.channel.uses_readout() {
                    perturbed_readout(&fact.readout, var, variants.strength)?
                } else {
                    fact.readout.clone()
                };
                Ok((shift, readout))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            target: fact.target,
            views,
        })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Mean loss, centroid gradient and mean target probability at `v`.
    fn centroid(&self, v: &DenseVector) -> Result<(f64, DenseVector, f64)> {
        let mut loss = 0.0;
        let mut total = DenseVector::zeros(v.dim());
        let mut prob = 0.0;
        for (shift, readout) in &self.views {
            let at = v.add(shift)?;
            let (l, g, p) = memory::loss_and_gradient(readout, &at, self.target)?;
            loss += l;
            total.axpy(1.0, &g);
            prob += p;
        }
        let n = self.views.len() as f64;
        Ok((loss / n, total.scaled(1.0 / n), prob / n))
    }
}

/// Robust centroid: mean value gradient over the fact's prompt variants.
pub fn hki_centroid(
    m: &AssociativeMemory,
    key: &DenseVector,
    fact: &Fact,
    v: &DenseVector,
    variants: &VariantConfig,
) -> Result<DenseVector> {
    Ok(PromptSet::build(m, key, fact, variants)?.centroid(v)?.1)
}

/// Joint descent where each relation contributes its robust centroid. A
/// relation counts as converged when its mean target probability over the
/// prompt set clears `convergence_prob`.
pub fn optimize_value_hki(
    m: &AssociativeMemory,
    group: &SubjectGroup,
    cfg: &OptimizerConfig,
    variants: &VariantConfig,
) -> Result<ValueOptimization> {
    if group.facts.is_empty() {
        return Err(Error::Degenerate(
            "HKI optimization of an empty group".into(),
        ));
    }
    let sets = group
        .facts
        .iter()
        .map(|f| PromptSet::build(m, &group.key, f, variants))
        .collect::<Result<Vec<_>>>()?;
    let v_init = m.forward(&group.key)?;
    descend(v_init, cfg, |v| {
        let mut loss = 0.0;
        let mut grad = DenseVector::zeros(v.dim());
        let mut conv = Vec::with_capacity(sets.len());
        for set in &sets {
            let (l, g, p) = set.centroid(v)?;
            loss += l;
            grad.axpy(1.0, &g);
            conv.push(p >= cfg.convergence_prob);
        }
        Ok((loss, grad, conv))
    })
}
