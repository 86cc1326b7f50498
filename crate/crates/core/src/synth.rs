//! Seeded generators for synthetic edit suites.
//!
//! Seed tree, all children of `SynthConfig::seed` via [`seed::derive_seed`]:
//!
//! | tag | index |
//! |---|---|
//! | `w0` | 0 |
//! | `subject-keys` | 0, then one stream per key inside [`gen_subject_keys`] |
//! | `readout` | `subject · relations + relation` |
//! | `target` | same as `readout` |
//! | `variant` | `(subject · relations + relation) · variants + variant` |
//! | `readout-perturbation-seed` | same as `variant` |
//! | `covariance` | 0 |
//! | `alignment` | same as `variant` |

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::editors::{Fact, SubjectGroup, VariantChannel, VariantConfig};
use crate::error::{Error, Result};
use crate::linalg::{matmul, sym_eigen, DenseMatrix, DenseVector};
use crate::memory::{AssociativeMemory, PromptVariant, RelationReadout};
use crate::seed::{self, derive_seed, gaussian_vec, rng_for};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyMode {
    #[default]
    Gaussian,
    Orthogonalized,
}

/// Power-law spectrum `λ_i = λ_max · i^{-α}` floored at `λ_max / κ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub d: usize,
    pub lambda_max: f64,
    pub decay: f64,
    pub condition_cap: f64,
}

impl SpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::config("spectrum.d", "must be at least 1"));
        }
        SpectrumParams {
            lambda_max: self.lambda_max,
            decay: self.decay,
            condition_cap: self.condition_cap,
        }
        .validate()
    }

    /// Non-increasing eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let floor = self.lambda_max / self.condition_cap;
        (1..=self.d)
            .map(|i| (self.lambda_max * (i as f64).powf(-self.decay)).max(floor))
            .collect()
    }
}

/// The dimension-free part of a [`SpectrumSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub lambda_max: f64,
    pub decay: f64,
    pub condition_cap: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            lambda_max: 1.0,
            decay: 2.0,
            condition_cap: 1e4,
        }
    }
}

impl SpectrumParams {
    pub fn with_dim(&self, d: usize) -> SpectrumSpec {
        SpectrumSpec {
            d,
            lambda_max: self.lambda_max,
            decay: self.decay,
            condition_cap: self.condition_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(Error::config(
                "spectrum.lambda_max",
                "must be positive and finite",
            ));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::config("spectrum.decay", "must be non-negative"));
        }
        if !(self.condition_cap >= 1.0 && self.condition_cap < 1e12) {
            return Err(Error::config(
                "spectrum.condition_cap",
                "must lie in [1, 1e12)",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d_k: usize,
    pub d_v: usize,
    pub vocab: usize,
    pub n_subjects: usize,
    pub relations_per_subject: usize,
    pub variants_per_fact: usize,
    pub variant_cosine: f64,
    pub key_mode: KeyMode,
    pub spectrum: SpectrumParams,
    pub variant_strength: f64,
    pub variant_channel: VariantChannel,
    /// Row scale of the readouts: entries are `N(0, 1) · readout_scale / √d_v`.
    pub readout_scale: f64,
    /// Unedited keys generated after the subject keys, for locality probes.
    pub holdout_keys: usize,
    /// Fraction in `[0, 1]` of each variant's offset direction drawn from
    /// the minor eigenspace of the covariance; 0 is isotropic.
    pub delta_alignment: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d_k: 512,
            d_v: 64,
            vocab: 50,
            n_subjects: 50,
            relations_per_subject: 4,
            variants_per_fact: 8,
            variant_cosine: 0.9,
            key_mode: KeyMode::Gaussian,
            spectrum: SpectrumParams::default(),
            variant_strength: 0.05,
            variant_channel: VariantChannel::Key,
            readout_scale: 8.0,
            holdout_keys: 50,
            delta_alignment: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("synth.d_k", self.d_k),
            ("synth.d_v", self.d_v),
            ("synth.n_subjects", self.n_subjects),
            ("synth.relations_per_subject", self.relations_per_subject),
            ("synth.variants_per_fact", self.variants_per_fact),
        ];
        for (field, n) in counts {
            if n < 1 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.vocab < 2 {
            return Err(Error::config("synth.vocab", "must be at least 2"));
        }
        if !(self.variant_cosine > -1.0 && self.variant_cosine <= 1.0) {
            return Err(Error::config("synth.variant_cosine", "must lie in (-1, 1]"));
        }
        if !(self.variant_strength >= 0.0 && self.variant_strength.is_finite()) {
            return Err(Error::config(
                "synth.variant_strength",
                "must be non-negative",
            ));
        }
        if !(self.readout_scale > 0.0 && self.readout_scale.is_finite()) {
            return Err(Error::config("synth.readout_scale", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.delta_alignment) {
            return Err(Error::config("synth.delta_alignment", "must lie in [0, 1]"));
        }
        self.spectrum.validate()?;
        if self.key_mode == KeyMode::Orthogonalized
            && self.n_subjects + self.holdout_keys > self.d_k
        {
            return Err(Error::Capacity(format!(
                "{} subject and {} holdout keys cannot be orthogonal in d_k = {}",
                self.n_subjects, self.holdout_keys, self.d_k
            )));
        }
        Ok(())
    }

    pub fn variant_config(&self) -> VariantConfig {
        VariantConfig {
            strength: self.variant_strength,
            channel: self.variant_channel,
        }
    }
}

fn normalized_to(v: Vec<f64>, norm: f64) -> Result<DenseVector> {
    let v = DenseVector::new(v)?;
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::Degenerate("zero direction".into()));
    }
    Ok(v.scaled(norm / n))
}

/// Keys of norm `√d`; orthogonalized mode makes them pairwise orthogonal.
///
/// Key `i` depends only on `(seed, i)` and, when orthogonalized, on keys
/// `0..i`, so a longer list extends a shorter one.
pub fn gen_subject_keys(n: usize, d: usize, mode: KeyMode, seed: u64) -> Result<Vec<DenseVector>> {
    if d == 0 {
        return Err(Error::config("d", "must be at least 1"));
    }
    if mode == KeyMode::Orthogonalized && n > d {
        return Err(Error::Capacity(format!(
            "{n} orthogonal keys in dimension {d}"
        )));
    }
    let norm = (d as f64).sqrt();
    let mut keys: Vec<DenseVector> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng_for(seed, "subject-key", i as u64);
        let mut g = DenseVector::from_vec(gaussian_vec(&mut rng, d));
        if mode == KeyMode::Orthogonalized {
            // two Gram-Schmidt passes keep the residual inner products at rounding level
            for _ in 0..2 {
                for k in &keys {
                    let coef = g.dot(k) / k.dot(k);
                    g.axpy(-coef, k);
                }
            }
        }
        keys.push(normalized_to(g.into_vec(), norm)?);
    }
    Ok(keys)
}

/// `cos θ · ||k_o|| · k̂_o + sin θ · ||k_o|| · u`, with `u` the unit part of
/// `direction` orthogonal to `k_o`.
fn variant_along(
    k_o: &DenseVector,
    target_cos: f64,
    direction: DenseVector,
) -> Result<DenseVector> {
    if !(target_cos > -1.0 && target_cos <= 1.0) {
        return Err(Error::config("variant_cosine", "must lie in (-1, 1]"));
    }
    let norm = k_o.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("variant of a zero key".into()));
    }
    if target_cos == 1.0 {
        return Ok(k_o.clone());
    }
    let k_hat = k_o.scaled(1.0 / norm);
    let mut u = direction;
    for _ in 0..2 {
        let c = u.dot(&k_hat);
        u.axpy(-c, &k_hat);
    }
    let u_norm = u.norm();
    if u_norm == 0.0 {
        return Err(Error::Degenerate(
            "variant direction parallel to the key".into(),
        ));
    }
    let sin = (1.0 - target_cos * target_cos).max(0.0).sqrt();
    let mut out = k_hat.scaled(target_cos * norm);
    out.axpy(sin * norm / u_norm, &u);
    Ok(out)
}

/// Key at cosine `target_cos` to `k_o` with the same norm, rotated towards a
/// seeded random direction.
pub fn gen_prompt_variant_key(
    k_o: &DenseVector,
    target_cos: f64,
    seed: u64,
) -> Result<DenseVector> {
    let mut rng = rng_for(seed, "variant-direction", 0);
    let g = DenseVector::from_vec(gaussian_vec(&mut rng, k_o.dim()));
    variant_along(k_o, target_cos, g)
}

/// Seeded random orthogonal matrix: QR of a gaussian matrix with the signs
/// of `R`'s diagonal folded into `Q`.
fn random_orthogonal(d: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_for(seed, "orthogonal", 0);
    let g = DMatrix::from_row_slice(d, d, &gaussian_vec(&mut rng, d * d));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    DenseMatrix::from_fn(d, d, |i, j| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        s * q[(i, j)]
    })
}

/// `C = Q diag(λ) Q^T` with the spectrum of `spec`.
pub fn gen_anisotropic_covariance(spec: &SpectrumSpec, seed: u64) -> Result<DenseMatrix> {
    spec.validate()?;
    let d = spec.d;
    let lambda = spec.eigenvalues();
    let q = random_orthogonal(d, seed);
    let q_scaled = DenseMatrix::from_fn(d, d, |i, j| q.get(i, j) * lambda[j]);
    Ok(matmul(&q_scaled, &q.transpose())?.symmetrized())
}

/// A generated editing problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub memory: AssociativeMemory,
    pub groups: Vec<SubjectGroup>,
    pub covariance: DenseMatrix,
    pub holdout_keys: Vec<DenseVector>,
}

/// Unit vectors spanning the bottom tenth of `c`'s spectrum, as columns.
fn minor_basis(c: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = sym_eigen(c)?;
    let d = c.rows();
    let m = (d / 10).max(1);
    Ok(DenseMatrix::from_fn(d, m, |i, j| {
        eig.eigenvectors.get(i, j)
    }))
}

pub fn gen_suite(cfg: &SynthConfig) -> Result<Suite> {
    cfg.validate()?;
    let (d_k, d_v) = (cfg.d_k, cfg.d_v);
    let root = cfg.seed;

    let mut rng = rng_for(root, "w0", 0);
    let w0 = DenseMatrix::from_vec(d_v, d_k, gaussian_vec(&mut rng, d_v * d_k))
        .scaled(1.0 / (d_k as f64).sqrt());

    let mut keys = gen_subject_keys(
        cfg.n_subjects + cfg.holdout_keys,
        d_k,
        cfg.key_mode,
        derive_seed(root, "subject-keys", 0),
    )?;
    let holdout_keys = keys.split_off(cfg.n_subjects);

    let covariance = gen_anisotropic_covariance(
        &cfg.spectrum.with_dim(d_k),
        derive_seed(root, "covariance", 0),
    )?;
    let minor = if cfg.delta_alignment > 0.0 {
        Some(minor_basis(&covariance)?)
    } else {
        None
    };

    let readout_scale = cfg.readout_scale / (d_v as f64).sqrt();
    let rels = cfg.relations_per_subject;
    let vars = cfg.variants_per_fact;
    let mut groups = Vec::with_capacity(cfg.n_subjects);
    for (s, key) in keys.into_iter().enumerate() {
        let mut facts = Vec::with_capacity(rels);
        for r in 0..rels {
            let fact_index = (s * rels + r) as u64;
            let mut rng = rng_for(root, "readout", fact_index);
            let e = DenseMatrix::from_vec(cfg.vocab, d_v, gaussian_vec(&mut rng, cfg.vocab * d_v))
                .scaled(readout_scale);
            let target = rng_for(root, "target", fact_index).random_range(0..cfg.vocab);
            let mut variants = Vec::with_capacity(vars);
            for p in 0..vars {
                // addressed by (fact, p) so that adding variants keeps the old ones
                let vseed =
                    derive_seed(derive_seed(root, "variant", fact_index), "prompt", p as u64);
                let k_tilde = match &minor {
                    None => gen_prompt_variant_key(&key, cfg.variant_cosine, vseed)?,
                    Some(basis) => {
                        let mut rng = rng_for(vseed, "variant-direction", 0);
                        let iso = DenseVector::from_vec(gaussian_vec(&mut rng, d_k));
                        let mut arng = rng_for(vseed, "alignment", 0);
                        let coeffs = DenseVector::from_vec(gaussian_vec(&mut arng, basis.cols()));
                        let aligned = basis.matvec(&coeffs)?;
                        let aligned = aligned.scaled((d_k as f64).sqrt() / aligned.norm());
                        let mut dir = iso.scaled(1.0 - cfg.delta_alignment);
                        dir.axpy(cfg.delta_alignment, &aligned);
                        variant_along(&key, cfg.variant_cosine, dir)?
                    }
                };
                let recorded_cosine = crate::linalg::cosine(&key, &k_tilde)?;
                variants.push(PromptVariant {
                    key: k_tilde,
                    readout_perturbation_seed: derive_seed(vseed, "readout-perturbation-seed", 0),
                    recorded_cosine,
                });
            }
            facts.push(Fact {
                readout: RelationReadout::new(format!("r{r}"), e)?,
                target,
                variants,
            });
        }
        groups.push(SubjectGroup::new(format!("s{s:03}"), key, facts)?);
    }

    Ok(Suite {
        memory: AssociativeMemory::new(w0),
        groups,
        covariance,
        holdout_keys,
    })
}

/// Seeded noise vectors of whole-vector norm `norm`, used as isotropic
/// deviations.
pub fn gen_isotropic_deltas(n: usize, d: usize, norm: f64, seed: u64) -> Vec<DenseVector> {
    (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, "delta", i as u64);
            seed::sphere_sample(&mut rng, d, norm)
        })
        .collect()
}
