//! Run configuration: a single JSON document declaring the simulated true
//! model, the field grids, the sampling plan, noise, seed, and optional
//! sweep lists. Unknown keys are rejected so configs stay forward-safe.

use crate::blackbox::TrueModel;
use crate::bloch::Vec3;
use crate::estimator::{Mode, ReferenceChoice, SamplingPlan};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors raised while loading or validating a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("cannot read config {path}: {source}")]
    Read {
        /// Offending path.
        path: PathBuf,
        /// Underlying I/O error.
        source: std::io::Error,
    },
    /// The file is not valid JSON for the schema.
    #[error("cannot parse config {path}: {source}")]
    Parse {
        /// Offending path.
        path: PathBuf,
        /// Underlying JSON error (includes unknown-key rejections).
        source: serde_json::Error,
    },
    /// The file parsed but the values are out of range.
    #[error("invalid config: {reason}")]
    Invalid {
        /// Human-readable reason.
        reason: String,
    },
}

/// The simulated ground truth: drift axis and one axis per control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Drift axis d₀ as [x, y, z].
    pub d0: [f64; 3],
    /// Control axes d_m as [x, y, z], in control order.
    pub controls: Vec<[f64; 3]>,
}

fn default_coarse_samples() -> usize {
    256
}
fn default_omega_max() -> f64 {
    1.0
}
fn default_refine_points() -> usize {
    150
}
fn default_refine_window() -> [f64; 2] {
    [0.85, 1.15]
}
fn default_phi_coarse_step() -> f64 {
    TAU / 24.0
}
fn default_shots() -> u64 {
    1000
}
fn default_mode() -> Mode {
    Mode::Sampled
}
fn default_reference() -> ReferenceChoice {
    ReferenceChoice::Auto
}

/// Scan-geometry parameters; every field has the documented default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    /// Points J in the stage-1 coarse scan.
    pub coarse_samples: usize,
    /// Frequency bound setting the coarse step Δt = π/ω_max.
    pub omega_max: f64,
    /// Points per refinement scan.
    pub refine_points: usize,
    /// Refinement window as fractions of the prediction, [low, high].
    pub refine_window: [f64; 2],
    /// Stage-2 coarse step in the rotation angle α.
    pub phi_coarse_step: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            coarse_samples: default_coarse_samples(),
            omega_max: default_omega_max(),
            refine_points: default_refine_points(),
            refine_window: default_refine_window(),
            phi_coarse_step: default_phi_coarse_step(),
        }
    }
}

/// Monte Carlo sweep lists: every (seed, shots, eta) combination is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Black-box seeds, one full identification per entry.
    pub seeds: Vec<u64>,
    /// Shot budgets N per data point.
    pub shots: Vec<u64>,
    /// Readout flip probabilities η.
    pub etas: Vec<f64>,
}

/// A complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// The hidden system to simulate.
    pub model: ModelConfig,
    /// Field strengths per control (each strictly increasing, ≥ 2 values).
    pub field_grids: Vec<Vec<f64>>,
    /// Scan geometry.
    #[serde(default)]
    pub plan: PlanConfig,
    /// Shots per data point in sampled mode.
    #[serde(default = "default_shots")]
    pub shots: u64,
    /// Readout flip probability in sampled mode.
    #[serde(default)]
    pub eta: f64,
    /// Seed of the shot-noise stream.
    #[serde(default)]
    pub seed: u64,
    /// Exact or sampled data.
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Reference-axis policy.
    #[serde(default = "default_reference")]
    pub reference: ReferenceChoice,
    /// Default output directory when the CLI gives none.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Optional sweep lists for `qidkit sweep`.
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Range checks beyond what the schema can express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |reason: String| Err(ConfigError::Invalid { reason });

        let finite3 = |v: &[f64; 3]| v.iter().all(|c| c.is_finite());
        if !finite3(&self.model.d0) || !self.model.controls.iter().all(finite3) {
            return bad("model axes must be finite".to_string());
        }
        if self.field_grids.len() != self.model.controls.len() {
            return bad(format!(
                "{} field grids for {} controls",
                self.field_grids.len(),
                self.model.controls.len()
            ));
        }
        for (m, grid) in self.field_grids.iter().enumerate() {
            if grid.len() < 2 {
                return bad(format!(
                    "field grid for control {} has {} values; need ≥ 2",
                    m + 1,
                    grid.len()
                ));
            }
            if grid.iter().any(|f| !f.is_finite())
                || grid.windows(2).any(|w| w[1] <= w[0])
            {
                return bad(format!(
                    "field grid for control {} must be finite and strictly increasing",
                    m + 1
                ));
            }
        }
        if self.shots == 0 {
            return bad("shots must be ≥ 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta {} outside [0, 1]", self.eta));
        }
        // Scan-geometry ranges are enforced by the estimator's own plan
        // validation; run it here so bad configs fail before any experiment.
        self.sampling_plan()
            .validate()
            .map_err(|e| ConfigError::Invalid {
                reason: e.to_string(),
            })?;
        if let Some(sweep) = &self.sweep {
            if sweep.seeds.is_empty() || sweep.shots.is_empty() || sweep.etas.is_empty() {
                return bad("sweep lists must be non-empty".to_string());
            }
            if sweep.shots.iter().any(|&n| n == 0) {
                return bad("sweep shots must be ≥ 1".to_string());
            }
            if sweep.etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return bad("sweep etas must lie in [0, 1]".to_string());
            }
        }
        Ok(())
    }

    /// The sampling plan this configuration describes.
    pub fn sampling_plan(&self) -> SamplingPlan {
        SamplingPlan {
            coarse_samples: self.plan.coarse_samples,
            omega_max: self.plan.omega_max,
            refine_points: self.plan.refine_points,
            refine_window: (self.plan.refine_window[0], self.plan.refine_window[1]),
            phi_coarse_step: self.plan.phi_coarse_step,
            shots: self.shots,
            eta: self.eta,
            mode: self.mode,
        }
    }

    /// The configured ground truth as a simulator model.
    pub fn true_model(&self) -> TrueModel {
        let v = |a: &[f64; 3]| Vec3::new(a[0], a[1], a[2]);
        TrueModel::new(
            v(&self.model.d0),
            self.model.controls.iter().map(v).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "model": { "d0": [0.2, 0.0, 0.1], "controls": [[1.0, 0.9, 0.1], [0.2, 0.0, 0.9]] },
            "field_grids": [[0.1, 0.2], [0.1, 0.2]]
        })
    }

    fn parse(v: serde_json::Value) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_value(v)
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let cfg = parse(minimal_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.plan.coarse_samples, 256);
        assert_eq!(cfg.plan.refine_points, 150);
        assert_eq!(cfg.shots, 1000);
        assert_eq!(cfg.eta, 0.0);
        assert_eq!(cfg.mode, Mode::Sampled);
        assert_eq!(cfg.reference, ReferenceChoice::Auto);
        assert!(cfg.sweep.is_none());
        let plan = cfg.sampling_plan();
        assert_eq!(plan.refine_window, (0.85, 1.15));
        assert!((plan.phi_coarse_step - TAU / 24.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = minimal_json();
        v["surprise"] = serde_json::json!(1);
        assert!(parse(v).is_err());
        let mut v = minimal_json();
        v["plan"] = serde_json::json!({ "coarse_samples": 128, "typo_key": 5 });
        assert!(parse(v).is_err());
    }

    #[test]
    fn range_validation_rejects_bad_values() {
        let mut v = minimal_json();
        v["eta"] = serde_json::json!(1.5);
        assert!(matches!(
            parse(v).unwrap().validate(),
            Err(ConfigError::Invalid { .. })
        ));

        let mut v = minimal_json();
        v["field_grids"] = serde_json::json!([[0.1], [0.1, 0.2]]);
        assert!(parse(v).unwrap().validate().is_err());

        let mut v = minimal_json();
        v["field_grids"] = serde_json::json!([[0.2, 0.1], [0.1, 0.2]]);
        assert!(parse(v).unwrap().validate().is_err());

        let mut v = minimal_json();
        v["shots"] = serde_json::json!(0);
        assert!(parse(v).unwrap().validate().is_err());

        let mut v = minimal_json();
        v["plan"] = serde_json::json!({ "coarse_samples": 8 });
        assert!(parse(v).unwrap().validate().is_err());

        let mut v = minimal_json();
        v["sweep"] = serde_json::json!({ "seeds": [], "shots": [100], "etas": [0.0] });
        assert!(parse(v).unwrap().validate().is_err());
    }

    #[test]
    fn model_and_plan_convert_to_domain_types() {
        let cfg = parse(minimal_json()).unwrap();
        let model = cfg.true_model();
        assert_eq!(model.d0(), Vec3::new(0.2, 0.0, 0.1));
        assert_eq!(model.control_count(), 2);
        assert_eq!(model.controls()[1], Vec3::new(0.2, 0.0, 0.9));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = parse(minimal_json()).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
