//! Config and report serialization through the library.

use kedit::harness::{
    config_to_toml, emit_report, load_config, load_report, run_experiment, ExperimentConfig,
    RuleKind, EXPERIMENTS,
};
use kedit::synth::KeyMode;

fn small(name: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::named(name);
    cfg.synth.d_k = 64;
    cfg.synth.d_v = 16;
    cfg.synth.vocab = 20;
    cfg.synth.n_subjects = 6;
    cfg.synth.holdout_keys = 6;
    cfg.probes.deltas = 20;
    cfg.probes.exact_locality_instances = 5;
    cfg
}

#[test]
fn config_survives_toml_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("editor-compare").with_seed(u64::MAX);
    cfg.rule.kind = RuleKind::Covariance;
    cfg.synth.key_mode = KeyMode::Orthogonalized;
    let toml_path = dir.path().join("c.toml");
    std::fs::write(&toml_path, config_to_toml(&cfg).unwrap()).unwrap();
    assert_eq!(load_config(&toml_path).unwrap(), cfg);
    let json_path = dir.path().join("c.json");
    std::fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(load_config(&json_path).unwrap(), cfg);
}

#[test]
fn every_experiment_runs_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for name in EXPERIMENTS {
        let report = run_experiment(&small(name)).unwrap();
        assert!(!report.metrics.is_empty(), "{name}");
        assert!(report.metrics.values().all(|v| v.is_finite()), "{name}");
        let out = dir.path().join(name);
        let files = emit_report(&report, &out).unwrap();
        assert_eq!(files.len(), 9);
        let back = load_report(&out.join("report.json")).unwrap();
        assert_eq!(
            back.deterministic_body().unwrap(),
            report.deterministic_body().unwrap()
        );
        let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), report.metrics.len() + 1);
    }
}

#[test]
fn runs_repeat_exactly() {
    for name in ["radius-collapse", "covariance-trap"] {
        let a = run_experiment(&small(name)).unwrap();
        let b = run_experiment(&small(name)).unwrap();
        assert_eq!(
            a.deterministic_body().unwrap(),
            b.deterministic_body().unwrap()
        );
        let c = run_experiment(&small(name).with_seed(1)).unwrap();
        assert_ne!(
            a.deterministic_body().unwrap(),
            c.deterministic_body().unwrap()
        );
    }
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut cfg = small("locality-check");
    cfg.probes.exact_locality_batch = 64;
    assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 2);
}
