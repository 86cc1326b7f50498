//! Experiment registry, configuration files and report emission.

mod config;
mod experiments;
mod report;

pub use config::{
    config_to_toml, load_config, ExperimentConfig, ProbeConfig, RuleConfig, RuleKind,
};
pub use experiments::{run_experiment, EXPERIMENTS};
pub use report::{
    emit_report, load_report, load_similarity_csv, EfficacyEntry, RunReport, SCHEMA_VERSION,
};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "KEDIT_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`]; one thread when unset.
/// Results do not depend on the count.
pub fn configure_threads() -> crate::Result<usize> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| crate::Error::config(THREADS_ENV, "must be a positive integer"))?,
        Err(_) => 1,
    };
    // a pool that is already built keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(threads)
}
