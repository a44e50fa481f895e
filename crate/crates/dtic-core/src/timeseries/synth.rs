//! Synthetic cohort generation with planted phenotypes.
//!
//! Each archetype is a deterministic per-variable trajectory (linear drift
//! plus optional sinusoid) observed at homogeneous-Poisson times with
//! Gaussian measurement noise. Generation is per-encounter deterministic:
//! encounter `i` draws only from the sub-stream `synth/<i>`, so cohorts are
//! reproducible and insensitive to generation order.

use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::timeseries::types::{Encounter, Variable, HORIZON_MIN, MODEL_WINDOW_MIN, N_VARS};

/// Deterministic mean trajectory for one variable, native units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Mean at t = 0.
    pub start: f64,
    /// Mean at the end of the horizon; linear in between.
    pub end: f64,
    #[serde(default)]
    pub wave_amp: f64,
    #[serde(default = "default_wave_period")]
    pub wave_period_min: f64,
}

fn default_wave_period() -> f64 {
    180.0
}

impl TrajectorySpec {
    pub fn flat(level: f64) -> Self {
        TrajectorySpec { start: level, end: level, wave_amp: 0.0, wave_period_min: 180.0 }
    }

    pub fn ramp(start: f64, end: f64) -> Self {
        TrajectorySpec { start, end, wave_amp: 0.0, wave_period_min: 180.0 }
    }

    pub fn mean_at(&self, t: f64, horizon: f64) -> f64 {
        let frac = (t / horizon).clamp(0.0, 1.0);
        let base = self.start + (self.end - self.start) * frac;
        base + self.wave_amp * (2.0 * std::f64::consts::PI * t / self.wave_period_min).sin()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeSpec {
    pub name: String,
    /// Canonical variable order: SBP, DBP, HR, TEMP, SPO2, RR.
    pub trajectories: [TrajectorySpec; N_VARS],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub archetypes: Vec<ArchetypeSpec>,
    pub per_archetype: usize,
    /// Observation rate per hour, shared by all variables.
    pub rate_per_hour: f64,
    /// Measurement noise standard deviation per variable, native units.
    pub noise_sd: [f64; N_VARS],
    /// Between-encounter baseline standard deviation per variable: each
    /// encounter shifts its whole trajectory by one draw (random intercept).
    #[serde(default)]
    pub baseline_sd: [f64; N_VARS],
    /// Total span of generated observations; must be at most 420.
    pub horizon_min: f64,
}

impl Default for SynthSpec {
    /// Four well-separated bedside archetypes: a stable course, progressive
    /// hypotension with compensatory tachycardia, a febrile tachycardic
    /// course, and worsening hypoxia with rising respiratory rate.
    fn default() -> Self {
        let stable = ArchetypeSpec {
            name: "stable".into(),
            trajectories: [
                TrajectorySpec { start: 122.0, end: 118.0, wave_amp: 2.0, wave_period_min: 200.0 },
                TrajectorySpec::ramp(71.0, 69.0),
                TrajectorySpec { start: 74.0, end: 78.0, wave_amp: 3.0, wave_period_min: 180.0 },
                TrajectorySpec::flat(36.8),
                TrajectorySpec::flat(97.5),
                TrajectorySpec::ramp(14.0, 15.0),
            ],
        };
        let hypotensive = ArchetypeSpec {
            name: "hypotensive".into(),
            trajectories: [
                TrajectorySpec::ramp(112.0, 88.0),
                TrajectorySpec::ramp(62.0, 48.0),
                TrajectorySpec::ramp(88.0, 110.0),
                TrajectorySpec::ramp(36.5, 36.1),
                TrajectorySpec::ramp(96.5, 95.0),
                TrajectorySpec::ramp(16.0, 21.0),
            ],
        };
        let febrile = ArchetypeSpec {
            name: "febrile_tachycardic".into(),
            trajectories: [
                TrajectorySpec::ramp(118.0, 104.0),
                TrajectorySpec::ramp(68.0, 60.0),
                TrajectorySpec::ramp(96.0, 126.0),
                TrajectorySpec::ramp(37.6, 39.3),
                TrajectorySpec::ramp(96.0, 94.5),
                TrajectorySpec::ramp(18.0, 24.0),
            ],
        };
        let hypoxic = ArchetypeSpec {
            name: "hypoxic_respiratory".into(),
            trajectories: [
                TrajectorySpec::ramp(126.0, 131.0),
                TrajectorySpec::ramp(72.0, 75.0),
                TrajectorySpec::ramp(88.0, 104.0),
                TrajectorySpec::flat(36.9),
                TrajectorySpec::ramp(95.0, 86.0),
                TrajectorySpec::ramp(20.0, 30.0),
            ],
        };
        SynthSpec {
            archetypes: vec![stable, hypotensive, febrile, hypoxic],
            per_archetype: 500,
            rate_per_hour: 2.0,
            noise_sd: [4.0, 3.0, 3.0, 0.15, 0.8, 1.2],
            baseline_sd: [0.0; N_VARS],
            horizon_min: HORIZON_MIN,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.archetypes.is_empty() {
            return Err(Error::validation("synthetic spec needs at least one archetype"));
        }
        if self.per_archetype == 0 {
            return Err(Error::validation("per_archetype must be positive"));
        }
        if !(self.rate_per_hour > 0.0 && self.rate_per_hour.is_finite()) {
            return Err(Error::validation(format!(
                "rate_per_hour must be positive, got {}",
                self.rate_per_hour
            )));
        }
        if !(self.horizon_min > 0.0 && self.horizon_min <= HORIZON_MIN) {
            return Err(Error::validation(format!(
                "horizon_min must be in (0, {HORIZON_MIN}], got {}",
                self.horizon_min
            )));
        }
        if let Some(sd) = self.noise_sd.iter().find(|&&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::validation(format!("noise sd must be non-negative, got {sd}")));
        }
        if let Some(sd) = self.baseline_sd.iter().find(|&&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::validation(format!("baseline sd must be non-negative, got {sd}")));
        }
        for a in &self.archetypes {
            for (v, t) in Variable::ALL.iter().zip(&a.trajectories) {
                if !(t.start.is_finite() && t.end.is_finite() && t.wave_amp.is_finite()) {
                    return Err(Error::validation(format!(
                        "archetype `{}` {}: non-finite trajectory",
                        a.name,
                        v.name()
                    )));
                }
                if !(t.wave_period_min > 0.0) {
                    return Err(Error::validation(format!(
                        "archetype `{}` {}: wave period must be positive",
                        a.name,
                        v.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Generate the cohort: encounters are blocked by archetype, ids are
/// `e00000, e00001, ...` in generation order, planted labels are archetype
/// indices.
pub fn generate_synthetic_cohort(spec: &SynthSpec, seed: u64) -> Result<Vec<Encounter>> {
    spec.validate()?;
    let n = spec.archetypes.len() * spec.per_archetype;
    let mut cohort = Vec::with_capacity(n);
    let gap = Exp::new(spec.rate_per_hour / 60.0).expect("validated rate");
    for i in 0..n {
        let arch_idx = i / spec.per_archetype;
        let arch = &spec.archetypes[arch_idx];
        let mut rng = stream(seed, &format!("synth/{i}"));
        let mut enc = Encounter::empty(format!("e{i:05}"));
        enc.planted_label = Some(arch_idx);
        for v in Variable::ALL {
            let traj = &arch.trajectories[v.index()];
            let sd = spec.noise_sd[v.index()];
            let z: f64 = StandardNormal.sample(&mut rng);
            let baseline = spec.baseline_sd[v.index()] * z;
            let mut t = 0.0;
            loop {
                t += gap.sample(&mut rng);
                if t >= spec.horizon_min {
                    break;
                }
                let noise: f64 = StandardNormal.sample(&mut rng);
                let x = baseline + traj.mean_at(t, spec.horizon_min) + sd * noise;
                if t < MODEL_WINDOW_MIN {
                    enc.series[v.index()].points.push((t, x));
                } else {
                    enc.seventh_hour[v.index()].points.push((t, x));
                }
            }
        }
        debug_assert!(enc.validate().is_ok());
        cohort.push(enc);
    }
    Ok(cohort)
}
