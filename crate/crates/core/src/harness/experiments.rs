use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{unknown_experiment, ExperimentConfig, RuleKind};
use super::report::{EfficacyEntry, RunReport};
use crate::editors::{
    compute_update, edit_subject_groups, null_space_projector, optimize_value_hki,
    optimize_value_isolated, optimize_value_joint, Strategy, SubjectGroup, UpdateRule,
    ValueOptimization,
};
use crate::error::{Error, Result};
use crate::geometry::{
    activation_deviation, amplification_analysis, conflict_distribution, key_similarity_blocks,
    locality_deviation, tolerance_radius, DeviationEntry, GeometryReport, LocalityEntry,
    RadiusEntry, RadiusMeasurement, ToleranceConfig,
};
use crate::linalg::{cosine, matmul, median, sym_eigen, DenseMatrix, DenseVector};
use crate::seed::{derive_seed, gaussian_vec, rng_for};
use crate::synth::{gen_isotropic_deltas, gen_subject_keys, gen_suite, KeyMode, Suite};

/// Registered experiment names, in listing order.
pub const EXPERIMENTS: [&str; 8] = [
    "radius-collapse",
    "covariance-trap",
    "conflict-distribution",
    "key-orthogonality",
    "locality-check",
    "editor-compare",
    "nullspace-equivalence",
    "d-le-r-restoration",
];

#[derive(Default)]
struct Output {
    metrics: BTreeMap<String, f64>,
    geometry: GeometryReport,
    efficacy: Vec<EfficacyEntry>,
    timings: BTreeMap<String, f64>,
}

impl Output {
    /// Non-finite values are dropped so the report stays valid JSON.
    fn metric(&mut self, name: impl Into<String>, value: f64) {
        if value.is_finite() {
            self.metrics.insert(name.into(), value);
        }
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

/// Runs the configured experiment on a freshly generated suite.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Output::default();
    let suite = out.timed("generate", || gen_suite(&cfg.synth))?;
    match cfg.experiment.as_str() {
        "radius-collapse" => radius_collapse(cfg, &suite, &mut out)?,
        "covariance-trap" => covariance_trap(cfg, &suite, &mut out)?,
        "conflict-distribution" => conflict(&suite, &mut out)?,
        "key-orthogonality" => key_orthogonality(&suite, &mut out)?,
        "locality-check" => locality_check(cfg, &suite, &mut out)?,
        "editor-compare" => editor_compare(cfg, &suite, &mut out)?,
        "nullspace-equivalence" => nullspace_equivalence(cfg, &suite, &mut out)?,
        "d-le-r-restoration" => d_le_r_restoration(cfg, &suite, &mut out)?,
        other => return Err(unknown_experiment(other)),
    }
    out.timings
        .insert("total".into(), start.elapsed().as_secs_f64());
    Ok(RunReport::new(
        cfg.clone(),
        out.metrics,
        out.geometry,
        out.efficacy,
        out.timings,
    ))
}

/// The tolerance config for subject `index`; arms share it, so their noise
/// draws coincide.
fn subject_tolerance(cfg: &ToleranceConfig, index: usize) -> ToleranceConfig {
    ToleranceConfig {
        seed: derive_seed(cfg.seed, "subject", index as u64),
        ..cfg.clone()
    }
}

fn subject_values(
    cfg: &ExperimentConfig,
    suite: &Suite,
    strategy: Strategy,
) -> Result<Vec<ValueOptimization>> {
    let variants = cfg.synth.variant_config();
    suite
        .groups
        .par_iter()
        .map(|g| match strategy {
            Strategy::Joint => optimize_value_joint(&suite.memory, g, &cfg.optimizer),
            Strategy::Hki => optimize_value_hki(&suite.memory, g, &cfg.optimizer, &variants),
            Strategy::Isolated => Err(Error::Usage("isolated values are per fact".into())),
        })
        .collect()
}

fn subject_radii(
    cfg: &ExperimentConfig,
    groups: &[SubjectGroup],
    values: &[ValueOptimization],
) -> Result<Vec<RadiusMeasurement>> {
    groups
        .par_iter()
        .zip(values)
        .enumerate()
        .map(|(i, (g, v))| tolerance_radius(g, &v.v_star, &subject_tolerance(&cfg.tolerance, i)))
        .collect()
}

fn converged_fraction<'a>(values: impl IntoIterator<Item = &'a ValueOptimization>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for v in values {
        hit += v.converged.iter().filter(|&&c| c).count();
        n += v.converged.len();
    }
    hit as f64 / n.max(1) as f64
}

fn keys_matrix(suite: &Suite) -> Result<DenseMatrix> {
    let keys: Vec<DenseVector> = suite.groups.iter().map(|g| g.key.clone()).collect();
    DenseMatrix::from_columns(suite.memory.d_k(), &keys)
}

fn values_matrix(d_v: usize, values: &[ValueOptimization]) -> Result<DenseMatrix> {
    let cols: Vec<DenseVector> = values.iter().map(|v| v.v_star.clone()).collect();
    DenseMatrix::from_columns(d_v, &cols)
}

fn push_radii(out: &mut Output, arm: &str, groups: &[SubjectGroup], radii: &[RadiusMeasurement]) {
    for (g, r) in groups.iter().zip(radii) {
        out.geometry
            .radii
            .push(RadiusEntry::new(arm, g.subject_id.clone(), r));
    }
}

fn radius_values(radii: &[RadiusMeasurement]) -> Vec<f64> {
    radii.iter().map(|r| r.radius).collect()
}

fn radius_collapse(cfg: &ExperimentConfig, suite: &Suite, out: &mut Output) -> Result<()> {
    let groups = &suite.groups;
    let (joint, hki) = out.timed("optimize", || {
        Ok((
            subject_values(cfg, suite, Strategy::Joint)?,
            subject_values(cfg, suite, Strategy::Hki)?,
        ))
    })?;
    let isolated: Vec<Vec<(SubjectGroup, ValueOptimization)>> = out.timed("optimize", || {
        groups
            .par_iter()
            .map(|g| {
                g.facts
                    .iter()
                    .map(|f| {
                        let single = SubjectGroup::new(
                            format!("{}/{}", g.subject_id, f.relation_id()),
                            g.key.clone(),
                            vec![f.clone()],
                        )?;
                        let v = optimize_value_isolated(
                            &suite.memory,
                            &f.readout,
                            &g.key,
                            f.target,
                            &cfg.optimizer,
                        )?;
                        Ok((single, v))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let (r_joint, r_hki, r_iso) = out.timed("measure", || {
        let r_iso = isolated
            .par_iter()
            .enumerate()
            .map(|(i, facts)| {
                let tol = subject_tolerance(&cfg.tolerance, i);
                facts
                    .iter()
                    .map(|(g, v)| tolerance_radius(g, &v.v_star, &tol))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            subject_radii(cfg, groups, &joint)?,
            subject_radii(cfg, groups, &hki)?,
            r_iso,
        ))
    })?;

    let mut iso_values = Vec::new();
    for (facts, radii) in isolated.iter().zip(&r_iso) {
        for ((g, _), r) in facts.iter().zip(radii) {
            out.geometry
                .radii
                .push(RadiusEntry::new("isolated", g.subject_id.clone(), r));
            iso_values.push(r.radius);
        }
    }
    push_radii(out, "joint", groups, &r_joint);
    push_radii(out, "hki", groups, &r_hki);

    let m_iso = median(&iso_values);
    let m_joint = median(&radius_values(&r_joint));
    out.metric("median_r.isolated", m_iso);
    out.metric("median_r.joint", m_joint);
    out.metric("median_r.hki", median(&radius_values(&r_hki)));
    out.metric("collapse_ratio", m_joint / m_iso);
    out.metric(
        "converged.isolated",
        converged_fraction(isolated.iter().flatten().map(|(_, v)| v)),
    );
    out.metric("converged.joint", converged_fraction(&joint));
    out.metric("converged.hki", converged_fraction(&hki));
    Ok(())
}

fn deviations(
    out: &mut Output,
    arm: &str,
    delta_w: &DenseMatrix,
    groups: &[SubjectGroup],
) -> Result<Vec<Vec<f64>>> {
    let mut per_subject = Vec::with_capacity(groups.len());
    for g in groups {
        let mut ds = Vec::new();
        for f in &g.facts {
            for (p, var) in f.variants.iter().enumerate() {
                let d = activation_deviation(delta_w, &g.key, &var.key)?;
                out.geometry.deviations.push(DeviationEntry {
                    arm: arm.to_string(),
                    fact_id: format!("{}/{}", g.subject_id, f.relation_id()),
                    form: format!("v{p}"),
                    value: d,
                });
                ds.push(d);
            }
        }
        per_subject.push(ds);
    }
    Ok(per_subject)
}

fn covariance_trap(cfg: &ExperimentConfig, suite: &Suite, out: &mut Output) -> Result<()> {
    let c = &suite.covariance;
    let d = c.rows();
    let keys = keys_matrix(suite)?;
    let deltas = gen_isotropic_deltas(
        cfg.probes.deltas,
        d,
        1.0,
        derive_seed(cfg.seed, "deltas", 0),
    );
    let analysis = out.timed("measure", || amplification_analysis(c, &keys, &deltas))?;

    // δ along C's minor eigenvector with no keys: r_cov = 1 / λ_min exactly
    let eig = sym_eigen(c)?;
    let minor = eig.eigenvectors.column(0);
    let aligned = amplification_analysis(c, &DenseMatrix::zeros(d, 0), &[minor])?;

    let joint = out.timed("optimize", || subject_values(cfg, suite, Strategy::Joint))?;
    let values = values_matrix(suite.memory.d_v(), &joint)?;
    for (arm, rule) in [
        ("covariance", UpdateRule::Covariance { c: c.clone() }),
        ("identity", UpdateRule::Identity),
    ] {
        let outcome = out.timed("update", || {
            compute_update(&suite.memory, &keys, &values, &rule)
        })?;
        let ds: Vec<f64> = deviations(out, arm, &outcome.delta_w, &suite.groups)?
            .into_iter()
            .flatten()
            .collect();
        out.metric(format!("median_d.{arm}"), median(&ds));
    }

    out.metric("median_r_cov", analysis.median_r_cov);
    out.metric("median_r_id", analysis.median_r_id);
    out.metric(
        "amplification_ratio",
        analysis.median_r_cov / analysis.median_r_id,
    );
    out.metric(
        "max_r_id",
        analysis.r_id.iter().copied().fold(0.0, f64::max),
    );
    out.metric(
        "cov_exceeds_id_fraction",
        analysis.cov_exceeds_id as f64 / deltas.len() as f64,
    );
    out.metric("lambda_max_cinv", analysis.spectral.lambda_max_cinv);
    out.metric("condition_number", analysis.spectral.condition_number);
    out.metric("median_delta_proj", median(&analysis.spectral.delta_proj));
    out.metric("aligned.r_cov", aligned.r_cov[0]);
    out.metric("aligned.expected", 1.0 / eig.lambda_min());
    out.metric("aligned.r_id", aligned.r_id[0]);
    out.geometry.amplification = Some(analysis);
    Ok(())
}

fn conflict(suite: &Suite, out: &mut Output) -> Result<()> {
    let dist = out.timed("measure", || {
        conflict_distribution(&suite.memory, &suite.groups)
    })?;
    out.metric("mean_conflict", dist.mean);
    out.metric("std_conflict", dist.std_dev);
    out.metric("min_conflict", dist.min);
    out.metric("max_conflict", dist.max);
    out.metric("pairs", dist.pair_scores.len() as f64);
    out.geometry.conflict = Some(dist);
    Ok(())
}

fn key_orthogonality(suite: &Suite, out: &mut Output) -> Result<()> {
    let mut labeled = Vec::with_capacity(2 * suite.groups.len());
    for g in &suite.groups {
        labeled.push((format!("{}:canonical", g.subject_id), vec![g.key.clone()]));
        let variants = g
            .facts
            .iter()
            .flat_map(|f| f.variants.iter().map(|v| v.key.clone()))
            .collect();
        labeled.push((format!("{}:variants", g.subject_id), variants));
    }
    let blocks = out.timed("measure", || key_similarity_blocks(&labeled))?;
    let n = suite.groups.len();
    let m = &blocks.means;
    let (mut within, mut among, mut cross) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..n {
        within.push(m.get(2 * s, 2 * s + 1));
        among.push(m.get(2 * s + 1, 2 * s + 1));
        for t in s + 1..n {
            for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                cross.push(m.get(2 * s + a, 2 * t + b));
            }
        }
    }
    let mean = |v: &[f64]| crate::linalg::mean(v);
    out.metric("within_subject.canonical_variant", mean(&within));
    out.metric("within_subject.variant_variant", mean(&among));
    out.metric("cross_subject.mean", mean(&cross));
    out.metric(
        "cross_subject.mean_abs",
        cross.iter().map(|x| x.abs()).sum::<f64>() / cross.len().max(1) as f64,
    );
    out.metric(
        "cross_subject.max_abs",
        cross.iter().fold(0.0f64, |a, x| a.max(x.abs())),
    );
    out.metric(
        "cross_subject.bound",
        3.0 / (suite.memory.d_k() as f64).sqrt(),
    );
    out.geometry.similarity_blocks = Some(blocks);
    Ok(())
}

fn locality_check(cfg: &ExperimentConfig, suite: &Suite, out: &mut Output) -> Result<()> {
    let d_k = suite.memory.d_k();
    let d_v = suite.memory.d_v();
    let b = cfg.probes.exact_locality_batch;

    // exactly orthogonal probes under the identity rule
    let exact = out.timed("measure", || {
        (0..cfg.probes.exact_locality_instances)
            .into_par_iter()
            .map(|i| {
                let inst = derive_seed(cfg.seed, "exact-locality", i as u64);
                let mut keys = gen_subject_keys(b + 1, d_k, KeyMode::Orthogonalized, inst)?;
                let k_old = keys.pop().expect("b + 1 keys");
                let k = DenseMatrix::from_columns(d_k, &keys)?;
                let mut rng = rng_for(inst, "residual", 0);
                let noise = DenseMatrix::new(d_v, b, gaussian_vec(&mut rng, d_v * b))?;
                let v = matmul(suite.memory.weights(), &k)?.add(&noise)?;
                let dw = compute_update(&suite.memory, &k, &v, &UpdateRule::Identity)?.delta_w;
                let dev = locality_deviation(&dw, &k_old)?;
                Ok(dev / (dw.frobenius_norm() * k_old.norm()))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    for (i, r) in exact.iter().enumerate() {
        out.geometry.locality.push(LocalityEntry {
            arm: "exact".into(),
            probe: format!("instance{i:03}"),
            value: *r,
        });
    }
    out.metric(
        "exact.max_relative",
        exact.iter().copied().fold(0.0, f64::max),
    );

    let joint = out.timed("optimize", || subject_values(cfg, suite, Strategy::Joint))?;
    let rule = cfg.rule.build(&suite.covariance);

    // one single-column edit per subject, probed at weakly correlated holdouts
    let single = out.timed("measure", || {
        suite
            .groups
            .par_iter()
            .zip(&joint)
            .map(|(g, v)| {
                let k = DenseMatrix::from_columns(d_k, std::slice::from_ref(&g.key))?;
                let vm = DenseMatrix::from_columns(d_v, std::slice::from_ref(&v.v_star))?;
                let dw = compute_update(&suite.memory, &k, &vm, &rule)?.delta_w;
                let at_key = locality_deviation(&dw, &g.key)?;
                let mut probes = Vec::new();
                for (h, key) in suite.holdout_keys.iter().enumerate() {
                    if cosine(key, &g.key)?.abs() <= cfg.probes.locality_max_cosine {
                        probes.push((h, locality_deviation(&dw, key)?));
                    }
                }
                Ok((at_key, probes))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut at_keys = Vec::new();
    let mut probes = Vec::new();
    for (g, (at_key, ps)) in suite.groups.iter().zip(&single) {
        at_keys.push(*at_key);
        for &(h, dev) in ps {
            probes.push(dev);
            out.geometry.locality.push(LocalityEntry {
                arm: "single".into(),
                probe: format!("{}~h{h:03}", g.subject_id),
                value: dev,
            });
        }
    }
    out.metric("single.median_at_key", median(&at_keys));
    out.metric("single.median_probe", median(&probes));
    out.metric("single.probes", probes.len() as f64);
    out.metric("locality_ratio", median(&probes) / median(&at_keys));

    // all subjects in one batch, probed at every holdout
    let keys = keys_matrix(suite)?;
    let values = values_matrix(d_v, &joint)?;
    let dw = out
        .timed("update", || {
            compute_update(&suite.memory, &keys, &values, &rule)
        })?
        .delta_w;
    let batch_at: Vec<f64> = suite
        .groups
        .iter()
        .map(|g| locality_deviation(&dw, &g.key))
        .collect::<Result<_>>()?;
    let mut batch_probe = Vec::new();
    for (h, key) in suite.holdout_keys.iter().enumerate() {
        let dev = locality_deviation(&dw, key)?;
        batch_probe.push(dev);
        out.geometry.locality.push(LocalityEntry {
            arm: "batch".into(),
            probe: format!("h{h:03}"),
            value: dev,
        });
    }
    out.metric("batch.median_at_key", median(&batch_at));
    out.metric("batch.median_probe", median(&batch_probe));
    out.metric(
        "locality_ratio_batch",
        median(&batch_probe) / median(&batch_at),
    );
    Ok(())
}

fn rule_named(cfg: &ExperimentConfig, kind: RuleKind, c: &DenseMatrix) -> UpdateRule {
    super::config::RuleConfig {
        kind,
        eigen_cutoff: cfg.rule.eigen_cutoff,
    }
    .build(c)
}

fn kind_name(kind: RuleKind) -> &'static str {
    match kind {
        RuleKind::Covariance => "covariance",
        RuleKind::Identity => "identity",
        RuleKind::NullSpace => "null-space",
    }
}

fn record_efficacy(out: &mut Output, arm: &str, facts: Vec<crate::editors::FactEfficacy>) {
    let n = facts.len().max(1) as f64;
    let canonical = facts.iter().filter(|f| f.canonical_success).count() as f64 / n;
    let hits: usize = facts.iter().map(|f| f.variant_successes).sum();
    let total: usize = facts.iter().map(|f| f.variant_total).sum();
    out.metric(format!("canonical_rate.{arm}"), canonical);
    if total > 0 {
        out.metric(format!("variant_rate.{arm}"), hits as f64 / total as f64);
    }
    out.efficacy
        .extend(facts.into_iter().map(|fact| EfficacyEntry {
            arm: arm.to_string(),
            fact,
        }));
}

fn editor_compare(cfg: &ExperimentConfig, suite: &Suite, out: &mut Output) -> Result<()> {
    let variants = cfg.synth.variant_config();
    let mut arms = Vec::new();
    for strategy in [Strategy::Joint, Strategy::Hki] {
        for kind in [
            RuleKind::Covariance,
            RuleKind::Identity,
            RuleKind::NullSpace,
        ] {
            arms.push((kind, strategy));
        }
    }
    arms.push((RuleKind::Identity, Strategy::Isolated));
    for (kind, strategy) in arms {
        let arm = format!("{}+{}", kind_name(kind), strategy.name());
        let rule = rule_named(cfg, kind, &suite.covariance);
        let res = out.timed("edit", || {
            edit_subject_groups(
                &suite.memory,
                &suite.groups,
                &rule,
                &cfg.optimizer,
                strategy,
                &variants,
            )
        })?;
        out.metric(
            format!("converged.{arm}"),
            converged_fraction(res.columns.iter().map(|c| &c.optimization)),
        );
        record_efficacy(out, &arm, res.efficacy);
    }
    Ok(())
}

fn relative_difference(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm() / b.frobenius_norm())
}

fn nullspace_equivalence(cfg: &ExperimentConfig, suite: &Suite, out: &mut Output) -> Result<()> {
    let c = &suite.covariance;
    let d_k = c.rows();
    let p = out.timed("measure", || null_space_projector(c, cfg.rule.eigen_cutoff))?;
    let p2 = matmul(&p, &p)?;
    out.metric("projector.idempotence", p2.sub(&p)?.frobenius_norm());
    out.metric("projector.rank", (0..d_k).map(|i| p.get(i, i)).sum::<f64>());

    // the same subjects with their keys projected into the kept eigenspace
    let inside: Vec<SubjectGroup> = suite
        .groups
        .iter()
        .map(|g| {
            let k = p.matvec(&g.key)?;
            let k = k.scaled((d_k as f64).sqrt() / k.norm());
            SubjectGroup::new(g.subject_id.clone(), k, g.facts.clone())
        })
        .collect::<Result<_>>()?;
    let variants = cfg.synth.variant_config();
    let cov = UpdateRule::Covariance { c: c.clone() };
    let ns = UpdateRule::NullSpace {
        c: c.clone(),
        eigen_cutoff: cfg.rule.eigen_cutoff,
    };
    for (label, groups) in [
        ("inside", inside.as_slice()),
        ("suite", suite.groups.as_slice()),
    ] {
        let mut deltas = Vec::new();
        for (name, rule) in [("covariance", &cov), ("null-space", &ns)] {
            let res = out.timed("edit", || {
                edit_subject_groups(
                    &suite.memory,
                    groups,
                    rule,
                    &cfg.optimizer,
                    Strategy::Joint,
                    &variants,
                )
            })?;
            deltas.push(res.outcome.expect("nonempty groups").delta_w);
            record_efficacy(out, &format!("{name}@{label}"), res.efficacy);
        }
        out.metric(
            format!("relative_difference.{label}"),
            relative_difference(&deltas[1], &deltas[0])?,
        );
    }
    Ok(())
}

fn d_le_r_restoration(cfg: &ExperimentConfig, suite: &Suite, out: &mut Output) -> Result<()> {
    let groups = &suite.groups;
    let joint = out.timed("optimize", || subject_values(cfg, suite, Strategy::Joint))?;
    let hki = out.timed("optimize", || subject_values(cfg, suite, Strategy::Hki))?;
    let r_joint = out.timed("measure", || subject_radii(cfg, groups, &joint))?;
    let r_hki = out.timed("measure", || subject_radii(cfg, groups, &hki))?;
    push_radii(out, "joint", groups, &r_joint);
    push_radii(out, "hki", groups, &r_hki);
    out.metric("median_r.joint", median(&radius_values(&r_joint)));
    out.metric("median_r.hki", median(&radius_values(&r_hki)));
    out.metric("converged.joint", converged_fraction(&joint));
    out.metric("converged.hki", converged_fraction(&hki));

    let keys = keys_matrix(suite)?;
    let d_v = suite.memory.d_v();
    let arms = [
        (RuleKind::Covariance, Strategy::Joint),
        (RuleKind::Identity, Strategy::Hki),
        (RuleKind::Identity, Strategy::Joint),
        (RuleKind::Covariance, Strategy::Hki),
    ];
    for (kind, strategy) in arms {
        let arm = format!("{}+{}", kind_name(kind), strategy.name());
        let (values, radii) = match strategy {
            Strategy::Hki => (&hki, &r_hki),
            _ => (&joint, &r_joint),
        };
        let rule = rule_named(cfg, kind, &suite.covariance);
        let v = values_matrix(d_v, values)?;
        let dw = out
            .timed("update", || compute_update(&suite.memory, &keys, &v, &rule))?
            .delta_w;
        let per_subject = deviations(out, &arm, &dw, groups)?;
        let (mut inside, mut total) = (0usize, 0usize);
        for (ds, r) in per_subject.iter().zip(radii) {
            inside += ds.iter().filter(|&&d| d <= r.radius).count();
            total += ds.len();
        }
        let all: Vec<f64> = per_subject.into_iter().flatten().collect();
        out.metric(format!("d_le_r.{arm}"), inside as f64 / total.max(1) as f64);
        out.metric(format!("median_d.{arm}"), median(&all));
    }
    Ok(())
}
