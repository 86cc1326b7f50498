use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiments::EXPERIMENTS;
use crate::editors::{OptimizerConfig, UpdateRule};
use crate::error::{Error, Result};
use crate::geometry::ToleranceConfig;
use crate::linalg::DenseMatrix;
use crate::seed::derive_seed;
use crate::synth::SynthConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Covariance,
    #[default]
    Identity,
    NullSpace,
}

/// Update-rule selector; the covariance itself comes from the suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub kind: RuleKind,
    pub eigen_cutoff: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            kind: RuleKind::Identity,
            eigen_cutoff: 1e-2,
        }
    }
}

impl RuleConfig {
    pub fn build(&self, c: &DenseMatrix) -> UpdateRule {
        match self.kind {
            RuleKind::Covariance => UpdateRule::Covariance { c: c.clone() },
            RuleKind::Identity => UpdateRule::Identity,
            RuleKind::NullSpace => UpdateRule::NullSpace {
                c: c.clone(),
                eigen_cutoff: self.eigen_cutoff,
            },
        }
    }
}

/// Sample sizes of the probe experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Isotropic deviations in the amplification experiment.
    pub deltas: usize,
    /// Instances of the exactly orthogonal locality check.
    pub exact_locality_instances: usize,
    /// Columns per exact locality instance.
    pub exact_locality_batch: usize,
    /// Holdout keys farther than this |cosine| from the edited key are skipped.
    pub locality_max_cosine: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            deltas: 200,
            exact_locality_instances: 100,
            exact_locality_batch: 8,
            locality_max_cosine: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Root of every random stream; the nested `synth.seed` and
    /// `tolerance.seed` are derived from it during resolution.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub synth: SynthConfig,
    pub rule: RuleConfig,
    pub optimizer: OptimizerConfig,
    pub tolerance: ToleranceConfig,
    pub probes: ProbeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            synth: SynthConfig::default(),
            rule: RuleConfig::default(),
            optimizer: OptimizerConfig::default(),
            tolerance: ToleranceConfig::synthetic(),
            probes: ProbeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn named(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            ..Self::default()
        }
        .resolved()
    }

    /// Copy with the nested seeds derived from `seed`. Derived seeds keep
    /// 53 bits so that they survive TOML integers and JSON doubles.
    pub fn resolved(mut self) -> Self {
        self.synth.seed = derive_seed(self.seed, "synth", 0) >> 11;
        self.tolerance.seed = derive_seed(self.seed, "tolerance", 0) >> 11;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.resolved()
    }

    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(unknown_experiment(&self.experiment));
        }
        self.synth.validate()?;
        self.optimizer.validate()?;
        self.tolerance.validate()?;
        if !(self.rule.eigen_cutoff >= 0.0) {
            return Err(Error::config("rule.eigen_cutoff", "must be non-negative"));
        }
        let p = &self.probes;
        if p.deltas < 1 || p.exact_locality_instances < 1 || p.exact_locality_batch < 1 {
            return Err(Error::config("probes", "counts must be at least 1"));
        }
        if p.exact_locality_batch >= self.synth.d_k {
            return Err(Error::config(
                "probes.exact_locality_batch",
                "must leave room for an orthogonal probe key",
            ));
        }
        if !(p.locality_max_cosine > 0.0 && p.locality_max_cosine <= 1.0) {
            return Err(Error::config(
                "probes.locality_max_cosine",
                "must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}

pub(crate) fn unknown_experiment(name: &str) -> Error {
    Error::Usage(format!(
        "unknown experiment `{name}`; registered: {}",
        EXPERIMENTS.join(", ")
    ))
}

/// Parses a TOML file, or JSON when the extension is `.json`. Unknown keys
/// are rejected; missing keys take their defaults. The result is resolved
/// but not validated.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

pub(crate) fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed: ExperimentConfig = if is_json {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
    };
    Ok(parsed.resolved())
}

/// TOML rendering of a config, loadable by [`load_config`].
pub fn config_to_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })
}
