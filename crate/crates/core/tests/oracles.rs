//! Worked examples checked against independent reference computations.

mod common;

use common::*;
use kedit::editors::{
    apply_edit, compute_update, edit_subject_groups, hki_centroid, null_space_projector,
    optimize_value_hki, optimize_value_isolated, optimize_value_joint, Fact, OptimizerConfig,
    Strategy, SubjectGroup, UpdateRule, VariantChannel, VariantConfig,
};
use kedit::geometry::{
    activation_deviation, conflict_distribution, gradient_conflict, tolerance_radius, RadiusStep,
    ToleranceConfig,
};
use kedit::linalg::{
    condition_number_spd, cosine, matmul, smw_apply, solve_spd, sym_eigen, DenseMatrix, DenseVector,
};
use kedit::memory::{nll_loss, predict, value_gradient, AssociativeMemory, RelationReadout};
use kedit::synth::{gen_anisotropic_covariance, gen_suite, SpectrumSpec, SynthConfig};

fn v(a: &[f64]) -> DenseVector {
    DenseVector::new(a.to_vec()).unwrap()
}

fn m(rows: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_rows(rows).unwrap()
}

#[test]
fn hilbert_solve_matches_lu() {
    let n = 6;
    let h = DenseMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64);
    let b = DenseVector::from_fn(n, |i| (i + 1) as f64);
    let x = solve_spd(&h, &b).unwrap();
    let reference = to_na(&h).lu().solve(&vec_to_na(&b)).unwrap();
    let rel = dist(&x, &na_to_vec(&reference)) / reference.norm();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn woodbury_matches_explicit_inverse() {
    let mut r = rng(11, "woodbury");
    for d in [4, 17, 64] {
        let c = spd(&mut r, d, 0.1);
        let k = matrix(&mut r, d, 3, 1.0);
        let x = vector(&mut r, d);
        let kkt = matmul(&k, &k.transpose()).unwrap();
        let inv = to_na(&c.add(&kkt).unwrap()).try_inverse().unwrap();
        let reference = na_to_vec(&(inv * vec_to_na(&x)));
        let got = smw_apply(&c, &k, &x).unwrap();
        assert!(dist(&got, &reference) <= 1e-9 * reference.norm());
    }
}

#[test]
fn eigen_recovers_planted_spectrum() {
    let spec = SpectrumSpec {
        d: 40,
        lambda_max: 1.0,
        decay: 2.5,
        condition_cap: 1e4,
    };
    let c = gen_anisotropic_covariance(&spec, 5).unwrap();
    let eig = sym_eigen(&c).unwrap();
    let mut planted = spec.eigenvalues();
    planted.sort_by(f64::total_cmp);
    for (got, want) in eig.eigenvalues.iter().zip(&planted) {
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
    let kappa = condition_number_spd(&c).unwrap();
    assert!((kappa / 1e4 - 1.0).abs() < 0.01, "{kappa}");
}

#[test]
fn readout_examples() {
    let r = RelationReadout::new("r", DenseMatrix::identity(2)).unwrap();
    let p = predict(&r, &v(&[2.0, 0.0])).unwrap();
    let e2 = 2f64.exp();
    assert!((p.prob(0) - e2 / (e2 + 1.0)).abs() < 1e-15);
    assert_eq!(p.argmax, 0);
    let loss = nll_loss(&r, &v(&[2.0, 0.0]), 0).unwrap();
    assert!((loss - (1.0 + (-2f64).exp()).ln()).abs() < 1e-15);
}

#[test]
fn gradient_matches_reference_formula() {
    let mut rr = rng(3, "grad");
    for t in 0..5 {
        let e = matrix(&mut rr, 13, 7, 1.5);
        let x = vector(&mut rr, 7);
        let r = RelationReadout::new("r", e.clone()).unwrap();
        let g = value_gradient(&r, &x, t).unwrap();
        let reference = reference_gradient(&e, &x, t);
        for (a, b) in g.as_slice().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!((nll_loss(&r, &x, t).unwrap() - reference_loss(&e, &x, t)).abs() < 1e-12);
    }
}

/// Plain gradient descent written out by hand.
fn reference_descent(
    e: &DenseMatrix,
    v0: &DenseVector,
    t: usize,
    cfg: &OptimizerConfig,
) -> (Vec<f64>, usize) {
    let mut x = v0.as_slice().to_vec();
    let scale = 2.0 * cfg.weight_decay / v0.dot(v0).max(1.0);
    let mut steps = 0;
    loop {
        let cur = DenseVector::new(x.clone()).unwrap();
        let logit = |i: usize| -> f64 { e.row(i).iter().zip(&x).map(|(a, b)| a * b).sum() };
        let logits: Vec<f64> = (0..e.rows()).map(logit).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let p = (logits[t] - max).exp() / z;
        if p >= cfg.convergence_prob || steps == cfg.steps {
            return (x, steps);
        }
        let g = reference_gradient(e, &cur, t);
        for j in 0..x.len() {
            x[j] -= cfg.learning_rate * (g[j] + scale * (x[j] - v0.get(j)));
        }
        steps += 1;
    }
}

#[test]
fn isolated_descent_matches_reference_trajectory() {
    for seed in 0..6u64 {
        let (mem, group) = random_instance(seed, 24, 12, 9, 1);
        let fact = &group.facts[0];
        let cfg = OptimizerConfig {
            steps: 3 + seed as usize * 7,
            learning_rate: 0.1 + 0.05 * seed as f64,
            ..Default::default()
        };
        let opt =
            optimize_value_isolated(&mem, &fact.readout, &group.key, fact.target, &cfg).unwrap();
        let v0 = mem.forward(&group.key).unwrap();
        let (x, steps) = reference_descent(fact.readout.matrix(), &v0, fact.target, &cfg);
        assert_eq!(opt.steps_taken, steps);
        for (a, b) in opt.v_star.as_slice().iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn two_token_readout_converges() {
    let mem = AssociativeMemory::new(DenseMatrix::identity(2));
    let r = RelationReadout::new("r", DenseMatrix::identity(2).scaled(10.0)).unwrap();
    let opt =
        optimize_value_isolated(&mem, &r, &v(&[0.0, 1.0]), 0, &OptimizerConfig::default()).unwrap();
    assert!(opt.all_converged());
    assert!(predict(&r, &opt.v_star).unwrap().prob(0) >= 0.99);
}

#[test]
fn joint_update_is_sum_of_gradients() {
    let (mem, group) = random_instance(4, 16, 8, 11, 3);
    let cfg = OptimizerConfig {
        steps: 1,
        learning_rate: 0.3,
        ..Default::default()
    };
    let opt = optimize_value_joint(&mem, &group, &cfg).unwrap();
    let v0 = mem.forward(&group.key).unwrap();
    let mut want = v0.as_slice().to_vec();
    for f in &group.facts {
        for (w, g) in want
            .iter_mut()
            .zip(reference_gradient(f.readout.matrix(), &v0, f.target))
        {
            *w -= 0.3 * g;
        }
    }
    for (a, b) in opt.v_star.as_slice().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn small_suite(seed: u64) -> kedit::synth::Suite {
    gen_suite(&SynthConfig {
        d_k: 64,
        d_v: 16,
        vocab: 20,
        n_subjects: 3,
        relations_per_subject: 3,
        holdout_keys: 4,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn hki_centroid_is_mean_of_variant_gradients() {
    let suite = small_suite(8);
    let g = &suite.groups[0];
    let x = suite.memory.forward(&g.key).unwrap();
    let cfg = VariantConfig::default();
    for fact in &g.facts {
        let got = hki_centroid(&suite.memory, &g.key, fact, &x, &cfg).unwrap();
        let want = reference_centroid(&suite.memory, &g.key, fact, &x);
        for (a, b) in got.as_slice().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn hki_step_is_sum_of_centroids() {
    let suite = small_suite(9);
    let g = &suite.groups[1];
    let cfg = OptimizerConfig {
        steps: 1,
        learning_rate: 0.2,
        ..Default::default()
    };
    let opt = optimize_value_hki(&suite.memory, g, &cfg, &VariantConfig::default()).unwrap();
    let v0 = suite.memory.forward(&g.key).unwrap();
    let mut want = v0.as_slice().to_vec();
    for fact in &g.facts {
        for (w, c) in want
            .iter_mut()
            .zip(reference_centroid(&suite.memory, &g.key, fact, &v0))
        {
            *w -= 0.2 * c;
        }
    }
    for (a, b) in opt.v_star.as_slice().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn update_examples() {
    let mem = AssociativeMemory::new(DenseMatrix::zeros(2, 2));
    let keys = m(&[vec![1.0], vec![0.0]]);
    let values = m(&[vec![2.0], vec![0.0]]);
    let id = compute_update(&mem, &keys, &values, &UpdateRule::Identity).unwrap();
    assert_eq!(id.delta_w, m(&[vec![1.0, 0.0], vec![0.0, 0.0]]));
    // (2)(1)/(2 + 1)
    let rule = UpdateRule::Covariance {
        c: DenseMatrix::identity(2).scaled(2.0),
    };
    let cov = compute_update(&mem, &keys, &values, &rule).unwrap();
    assert!((cov.delta_w.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(cov.delta_w.get(1, 1), 0.0);
}

#[test]
fn updated_memory_matches_explicit_formula() {
    let mut r = rng(30, "apply");
    let (dk, dv, b) = (20, 6, 4);
    let w0 = matrix(&mut r, dv, dk, 0.3);
    let mem = AssociativeMemory::new(w0.clone());
    let keys = matrix(&mut r, dk, b, 1.0);
    let values = matrix(&mut r, dv, b, 1.0);
    let c = spd(&mut r, dk, 0.5);
    let outcome = compute_update(
        &mem,
        &keys,
        &values,
        &UpdateRule::Covariance { c: c.clone() },
    )
    .unwrap();
    let edited = apply_edit(&mem, &outcome).unwrap();
    let (kn, w0n) = (to_na(&keys), to_na(&w0));
    let inv = (to_na(&c) + &kn * kn.transpose()).try_inverse().unwrap();
    let dw = (to_na(&values) - &w0n * &kn) * kn.transpose() * inv;
    let want = na_to_mat(&(w0n + dw));
    assert!(edited.weights().sub(&want).unwrap().max_abs() < 1e-12);
    // the regularized solution lands between W₀K and V
    let out = matmul(edited.weights(), &keys).unwrap();
    let before = matmul(&w0, &keys)
        .unwrap()
        .sub(&values)
        .unwrap()
        .frobenius_norm();
    let after = out.sub(&values).unwrap().frobenius_norm();
    assert!(after < before);
}

#[test]
fn projector_examples() {
    let c = DenseMatrix::diagonal(&[1.0, 1e-3]);
    let p = null_space_projector(&c, 0.01).unwrap();
    assert!(
        p.sub(&DenseMatrix::diagonal(&[0.0, 1.0]))
            .unwrap()
            .max_abs()
            < 1e-12
    );
    let p = null_space_projector(&c, 1.0).unwrap();
    assert_eq!(p, DenseMatrix::identity(2));
}

#[test]
fn deviation_and_conflict_examples() {
    let dw = DenseMatrix::identity(2);
    let d = activation_deviation(&dw, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
    assert!((d - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(
        gradient_conflict(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap(),
        2.0
    );
    assert_eq!(
        gradient_conflict(&v(&[1.0, 0.0]), &v(&[0.0, 3.0])).unwrap(),
        1.0
    );
}

#[test]
fn conflict_distribution_matches_direct_cosines() {
    let suite = small_suite(12);
    let dist = conflict_distribution(&suite.memory, &suite.groups).unwrap();
    let mut want = Vec::new();
    for g in &suite.groups {
        let x = suite.memory.forward(&g.key).unwrap();
        let grads: Vec<DenseVector> = g
            .facts
            .iter()
            .map(|f| {
                DenseVector::new(reference_gradient(f.readout.matrix(), &x, f.target)).unwrap()
            })
            .collect();
        for i in 0..grads.len() {
            for j in i + 1..grads.len() {
                want.push(1.0 - cosine(&grads[i], &grads[j]).unwrap());
            }
        }
    }
    assert_eq!(dist.pair_scores.len(), want.len());
    for (a, b) in dist.pair_scores.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Success probability of one trial for `E = 2I`, `v* = (3, 0)`, target 0 at
/// radius `rho`: the fact holds iff `2(x - y) ≥ ln(τ / (1 - τ))`.
fn planar_success(rho: f64, tau: f64) -> f64 {
    let margin = (tau / (1.0 - tau)).ln() / 2.0;
    let a = (3.0 - margin) / (rho * 2f64.sqrt());
    if a >= 1.0 {
        1.0
    } else {
        (-a).acos() / std::f64::consts::PI
    }
}

#[test]
fn planar_radius_matches_closed_form() {
    let fact = Fact {
        readout: RelationReadout::new("r", DenseMatrix::identity(2).scaled(2.0)).unwrap(),
        target: 0,
        variants: vec![],
    };
    let group = SubjectGroup::new("s", v(&[1.0, 0.0]), vec![fact]).unwrap();
    let eps = 0.05;
    let cfg = ToleranceConfig {
        step: RadiusStep::Fixed(eps),
        trials_per_radius: 100,
        ..Default::default()
    };
    let got = tolerance_radius(&group, &v(&[3.0, 0.0]), &cfg).unwrap();
    // dense-grid threshold of the exact success curve
    let mut exact = 0.0;
    let mut rho = 0.0;
    while planar_success(rho + 1e-4, 0.9) >= 0.9 {
        rho += 1e-4;
        exact = rho;
    }
    assert!(
        (got.radius - exact).abs() <= 2.0 * eps,
        "{} vs {exact}",
        got.radius
    );
    assert!(!got.capped);
}

#[test]
fn single_fact_end_to_end() {
    let mut r = rng(41, "e2e");
    let (dk, dv, vocab) = (256, 256, 100);
    let w0 = matrix(&mut r, dv, dk, 1.0 / (dk as f64).sqrt());
    let mem = AssociativeMemory::new(w0);
    let key = vector(&mut r, dk);
    let e = matrix(&mut r, vocab, dv, 1.0 / (dv as f64).sqrt());
    let readout = RelationReadout::new("r", e).unwrap();
    let base = predict(&readout, &mem.forward(&key).unwrap()).unwrap();
    let target = (base.argmax + 1) % vocab;
    let group = SubjectGroup::new(
        "s",
        key.clone(),
        vec![Fact {
            readout: readout.clone(),
            target,
            variants: vec![],
        }],
    )
    .unwrap();
    let result = edit_subject_groups(
        &mem,
        &[group],
        &UpdateRule::Identity,
        &OptimizerConfig {
            steps: 200,
            ..Default::default()
        },
        Strategy::Joint,
        &VariantConfig {
            strength: 0.0,
            channel: VariantChannel::Key,
        },
    )
    .unwrap();
    let after = predict(&readout, &result.memory.forward(&key).unwrap()).unwrap();
    assert_eq!(after.argmax, target);
    assert!(result.efficacy[0].canonical_success);
}
