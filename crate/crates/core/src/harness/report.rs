use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::editors::FactEfficacy;
use crate::error::{Error, Result};
use crate::geometry::{GeometryReport, SimilarityBlocks};
use crate::linalg::DenseMatrix;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficacyEntry {
    pub arm: String,
    #[serde(flatten)]
    pub fact: FactEfficacy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    /// Fully resolved configuration.
    pub config: ExperimentConfig,
    pub metrics: BTreeMap<String, f64>,
    pub geometry: GeometryReport,
    pub efficacy: Vec<EfficacyEntry>,
    /// Wall-clock seconds per phase; not covered by determinism.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(
        config: ExperimentConfig,
        metrics: BTreeMap<String, f64>,
        geometry: GeometryReport,
        efficacy: Vec<EfficacyEntry>,
        timings: BTreeMap<String, f64>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: config.experiment.clone(),
            seed: config.seed,
            config,
            metrics,
            geometry,
            efficacy,
            timings,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Pretty JSON with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(json_error)?;
        serde_json::to_string_pretty(&value).map_err(json_error)
    }

    /// The JSON body without `timings`, for determinism comparisons.
    pub fn deterministic_body(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(json_error)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("timings");
        }
        serde_json::to_string_pretty(&value).map_err(json_error)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>")
            .to_string();
        if major(&found) != major(SCHEMA_VERSION) {
            return Err(Error::Schema {
                found,
                expected: SCHEMA_VERSION.to_string(),
            });
        }
        serde_json::from_value(value).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn major(version: &str) -> Option<&str> {
    version.split('.').next().filter(|m| !m.is_empty())
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        path: PathBuf::from("<report>"),
        message: e.to_string(),
    }
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// Labels are written verbatim; the generators never emit commas or quotes.
fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn matrix_csv(labels: &[String], m: Option<&DenseMatrix>) -> String {
    let mut s = String::from("label");
    for l in labels {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    if let Some(m) = m {
        for (i, l) in labels.iter().enumerate() {
            s.push_str(l);
            for j in 0..m.cols() {
                let _ = write!(s, ",{}", float(m.get(i, j)));
            }
            s.push('\n');
        }
    }
    s
}

fn series(report: &RunReport) -> Vec<(&'static str, String)> {
    let g = &report.geometry;
    let radii = csv(
        &[
            "arm",
            "subject_id",
            "radius",
            "capped",
            "failing_success_rate",
        ],
        g.radii.iter().map(|r| {
            vec![
                r.arm.clone(),
                r.subject_id.clone(),
                float(r.radius),
                r.capped.to_string(),
                opt_float(r.failing_success_rate),
            ]
        }),
    );
    let deviations = csv(
        &["arm", "fact_id", "form", "deviation"],
        g.deviations.iter().map(|d| {
            vec![
                d.arm.clone(),
                d.fact_id.clone(),
                d.form.clone(),
                float(d.value),
            ]
        }),
    );
    let locality = csv(
        &["arm", "probe", "deviation"],
        g.locality
            .iter()
            .map(|l| vec![l.arm.clone(), l.probe.clone(), float(l.value)]),
    );
    let conflict = csv(
        &["subject_id", "relation_a", "relation_b", "score"],
        g.conflict.iter().flat_map(|c| &c.subjects).flat_map(|s| {
            let n = s.relation_ids.len();
            (0..n).flat_map(move |i| {
                (i + 1..n).map(move |j| {
                    vec![
                        s.subject_id.clone(),
                        s.relation_ids[i].clone(),
                        s.relation_ids[j].clone(),
                        float(s.scores.get(i, j)),
                    ]
                })
            })
        }),
    );
    let similarity = match &g.similarity_blocks {
        Some(b) => matrix_csv(&b.labels, Some(&b.means)),
        None => matrix_csv(&[], None),
    };
    let amplification = csv(
        &["index", "r_cov", "r_id", "delta_proj"],
        g.amplification.iter().flat_map(|a| {
            (0..a.r_cov.len()).map(move |i| {
                vec![
                    i.to_string(),
                    float(a.r_cov[i]),
                    float(a.r_id[i]),
                    float(a.spectral.delta_proj[i]),
                ]
            })
        }),
    );
    let efficacy = csv(
        &[
            "arm",
            "subject_id",
            "relation_id",
            "target",
            "canonical_success",
            "canonical_prob",
            "variant_successes",
            "variant_total",
        ],
        report.efficacy.iter().map(|e| {
            let f = &e.fact;
            vec![
                e.arm.clone(),
                f.subject_id.clone(),
                f.relation_id.clone(),
                f.target.to_string(),
                f.canonical_success.to_string(),
                float(f.canonical_prob),
                f.variant_successes.to_string(),
                f.variant_total.to_string(),
            ]
        }),
    );
    let metrics = csv(
        &["metric", "value"],
        report
            .metrics
            .iter()
            .map(|(k, v)| vec![k.clone(), float(*v)]),
    );
    vec![
        ("radii.csv", radii),
        ("deviations.csv", deviations),
        ("locality.csv", locality),
        ("conflict.csv", conflict),
        ("similarity.csv", similarity),
        ("amplification.csv", amplification),
        ("efficacy.csv", efficacy),
        ("metrics.csv", metrics),
    ]
}

/// Writes `path` through a temporary sibling and a rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes `report.json` and one CSV per series; returns the written paths.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    write_atomic(&json, &report.to_json()?)?;
    written.push(json);
    for (name, body) in series(report) {
        let path = dir.join(name);
        write_atomic(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunReport::from_json(&text, path)
}

/// Reads a similarity CSV written by [`emit_report`].
pub fn load_similarity_csv(path: &Path) -> Result<SimilarityBlocks> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err("missing header".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("label") {
        return Err(parse_err("header must start with `label`".into()));
    }
    let labels: Vec<String> = cols.map(str::to_string).collect();
    let n = labels.len();
    let mut data = Vec::with_capacity(n * n);
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default();
        if labels.get(i).map(String::as_str) != Some(label) {
            return Err(parse_err(format!(
                "line {}: unexpected row label `{label}`",
                i + 2
            )));
        }
        let row = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| parse_err(format!("line {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != n {
            return Err(parse_err(format!(
                "line {}: {} values for {n} labels",
                i + 2,
                row.len()
            )));
        }
        data.extend(row);
    }
    if data.len() != n * n {
        return Err(parse_err(format!("expected {n} rows")));
    }
    Ok(SimilarityBlocks {
        labels,
        means: DenseMatrix::new(n, n, data)?,
    })
}
