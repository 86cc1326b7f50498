use serde::{Deserialize, Serialize};

use crate::editors::SubjectGroup;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::memory::predict;
use crate::seed;

/// Radius increment of the search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusStep {
    /// Absolute ε.
    Fixed(f64),
    /// ε as a fraction of `||v*||`.
    Relative(f64),
}

impl RadiusStep {
    pub fn resolve(self, v_star: &DenseVector) -> f64 {
        match self {
            RadiusStep::Fixed(eps) => eps,
            RadiusStep::Relative(frac) => frac * v_star.norm(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub tau: f64,
    pub step: RadiusStep,
    pub trials_per_radius: usize,
    pub success_rate: f64,
    pub rho_max: f64,
    pub seed: u64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            step: RadiusStep::Fixed(1.0),
            trials_per_radius: 10,
            success_rate: 0.9,
            rho_max: 1e4,
            seed: 0,
        }
    }
}

impl ToleranceConfig {
    /// Preset for synthetic suites: ε = 0.05·||v*||.
    pub fn synthetic() -> Self {
        Self {
            step: RadiusStep::Relative(0.05),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config("tolerance.tau", "must lie in (0, 1)"));
        }
        let (RadiusStep::Fixed(eps) | RadiusStep::Relative(eps)) = self.step;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config(
                "tolerance.step",
                "must be positive and finite",
            ));
        }
        if self.trials_per_radius < 1 {
            return Err(Error::config(
                "tolerance.trials_per_radius",
                "must be at least 1",
            ));
        }
        if !(self.success_rate > 0.0 && self.success_rate <= 1.0) {
            return Err(Error::config(
                "tolerance.success_rate",
                "must lie in (0, 1]",
            ));
        }
        if !(self.rho_max > 0.0) {
            return Err(Error::config("tolerance.rho_max", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusMeasurement {
    pub radius: f64,
    /// Resolved ε.
    pub step: f64,
    /// Radii sampled before the search stopped.
    pub steps_evaluated: usize,
    /// Success rate at the radius that ended the search; `None` when capped
    /// or when the unperturbed value already fails.
    pub failing_success_rate: Option<f64>,
    pub capped: bool,
}

fn all_clear(group: &SubjectGroup, value: &DenseVector, tau: f64) -> Result<bool> {
    for f in &group.facts {
        if predict(&f.readout, value)?.prob(f.target) < tau {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest `ρ = iε` at which a trial (noise uniform on the sphere of radius
/// ρ, every fact at probability ≥ τ) succeeds at least `success_rate` of the
/// time. The search stops at the first failing radius.
///
/// Trial `t` at radius index `i` draws from a stream addressed by
/// `(seed, i, t)`, so the same noise directions recur across instances.
pub fn tolerance_radius(
    group: &SubjectGroup,
    v_star: &DenseVector,
    cfg: &ToleranceConfig,
) -> Result<RadiusMeasurement> {
    cfg.validate()?;
    group.validate()?;
    let eps = cfg.step.resolve(v_star);
    if !(eps > 0.0) {
        return Err(Error::Degenerate("radius step resolved to zero".into()));
    }
    let done = |radius, steps_evaluated, failing_success_rate, capped| RadiusMeasurement {
        radius,
        step: eps,
        steps_evaluated,
        failing_success_rate,
        capped,
    };
    if !all_clear(group, v_star, cfg.tau)? {
        return Ok(done(0.0, 0, None, false));
    }
    let needed = cfg.success_rate * cfg.trials_per_radius as f64;
    let mut last = 0.0;
    for i in 1u64.. {
        let rho = i as f64 * eps;
        if rho > cfg.rho_max {
            return Ok(done(cfg.rho_max, (i - 1) as usize, None, true));
        }
        let radius_seed = seed::derive_seed(cfg.seed, "tolerance-radius", i);
        let mut hits = 0usize;
        for t in 0..cfg.trials_per_radius {
            let mut rng = seed::rng_for(radius_seed, "trial", t as u64);
            let xi = seed::sphere_sample(&mut rng, v_star.dim(), rho);
            hits += usize::from(all_clear(group, &v_star.add(&xi)?, cfg.tau)?);
        }
        if (hits as f64) < needed - 1e-9 {
            let rate = hits as f64 / cfg.trials_per_radius as f64;
            return Ok(done(last, i as usize, Some(rate), false));
        }
        last = rho;
    }
    unreachable!("radius loop exits through the cap")
}
