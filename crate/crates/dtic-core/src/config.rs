//! Run configuration: every tunable in one serializable struct with the
//! defaults the CLI ships. A config file only needs the keys it overrides.

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamHyper;
use crate::error::{Error, Result};
use crate::interpnet::{ALPHA_INIT, GRID_LEN_DEFAULT, KAPPA};
use crate::reinterp::THETA_INIT;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Reference grid length T over the 6 h model window.
    pub grid_len: usize,
    /// GRU hidden width (embedding dimension).
    pub hidden: usize,
    /// Transient-channel bandwidth multiplier.
    pub kappa: f64,
    /// Initial per-variable interpolation bandwidth.
    pub alpha_init: f64,
    /// Initial re-interpolation bandwidth.
    pub theta_init: f64,
    /// Real encounters per training batch (mirrored 1:1 by fakes).
    pub batch_size: usize,
    pub pretrain_iters: usize,
    pub joint_iters: usize,
    /// Iterations between target-distribution refreshes in the joint phase.
    pub target_refresh: usize,
    /// Stop the joint phase when the fraction of records changing cluster
    /// between refreshes falls below this.
    pub delta: f64,
    /// Weight of the KL clustering term in the joint loss.
    pub lambda_cluster: f64,
    /// Fraction of each series' points resampled when faking an encounter.
    pub fake_fraction: f64,
    pub adam_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// k-means restarts (training init, finalization, and k selection).
    pub restarts: usize,
    /// Clusters holding under this fraction of records get flagged.
    pub min_size_frac: f64,
    /// Reference draws for the gap statistic.
    pub gap_refs: usize,
    /// Abort CSV ingest when more than this fraction of rows is malformed.
    pub max_bad_row_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid_len: GRID_LEN_DEFAULT,
            hidden: 64,
            kappa: KAPPA,
            alpha_init: ALPHA_INIT,
            theta_init: THETA_INIT,
            batch_size: 256,
            pretrain_iters: 2000,
            joint_iters: 2000,
            target_refresh: 100,
            delta: 1e-3,
            lambda_cluster: 0.1,
            fake_fraction: 0.5,
            adam_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            restarts: 10,
            min_size_frac: 0.01,
            gap_refs: 10,
            max_bad_row_fraction: 0.01,
        }
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.adam_lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_len == 0 {
            return Err(Error::validation("grid_len must be positive"));
        }
        if self.hidden == 0 {
            return Err(Error::validation("hidden must be positive"));
        }
        if !(self.kappa > 1.0) {
            return Err(Error::validation("kappa must exceed 1"));
        }
        if !(self.alpha_init > 0.0) || !(self.theta_init > 0.0) {
            return Err(Error::validation("bandwidth inits must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be positive"));
        }
        if self.target_refresh == 0 {
            return Err(Error::validation("target_refresh must be positive"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::validation("delta must be non-negative"));
        }
        if !(self.lambda_cluster >= 0.0) {
            return Err(Error::validation("lambda_cluster must be non-negative"));
        }
        if !(self.fake_fraction >= 0.0 && self.fake_fraction <= 1.0) {
            return Err(Error::validation("fake_fraction must lie in [0, 1]"));
        }
        self.adam().validate()?;
        if self.restarts == 0 {
            return Err(Error::validation("restarts must be positive"));
        }
        if !(self.min_size_frac >= 0.0 && self.min_size_frac < 1.0) {
            return Err(Error::validation("min_size_frac must lie in [0, 1)"));
        }
        if self.gap_refs == 0 {
            return Err(Error::validation("gap_refs must be positive"));
        }
        if !(self.max_bad_row_fraction >= 0.0 && self.max_bad_row_fraction <= 1.0) {
            return Err(Error::validation("max_bad_row_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let cfg = RunConfig::from_json(r#"{"hidden": 16, "batch_size": 8}"#).unwrap();
        assert_eq!(cfg.hidden, 16);
        assert_eq!(cfg.batch_size, 8);
        assert_eq!(cfg.grid_len, RunConfig::default().grid_len);
        assert_eq!(cfg.delta, RunConfig::default().delta);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"hiden": 16}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"grid_len": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"kappa": 1.0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"fake_fraction": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"adam_lr": -1.0}"#).is_err());
    }
}
