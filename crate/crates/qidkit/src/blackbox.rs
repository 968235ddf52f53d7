//! Simulated hidden system: holds the true d-vectors, propagates the Bloch
//! state through piecewise-constant pulse sequences, and returns only σz
//! shot statistics through the [`Experiment`] trait.
//!
//! Estimator code is generic over [`Experiment`], so the true parameters in
//! [`TrueModel`] are reachable only from harness and test code that holds
//! the concrete [`BlackBox`].
//!
//! Shot noise is generated by the crate's own explicitly-specified PRNG
//! ([`crate::rng`]): per shot, one draw `r` decides the projective outcome
//! (`1` when `r < (1+z)/2`) and a second draw `e` decides the readout flip
//! (`e < η`). The `e` draw happens even at η = 0 so the random stream — and
//! therefore every downstream count — is identical whether or not readout
//! noise is enabled.

use crate::bloch::{compose_axis, rotate, Vec3};
use crate::experiment::{Experiment, ExperimentError, PulseSequence, ShotResult};
use crate::rng::Xoshiro256StarStar;

/// The ground-truth Hamiltonian parameters: the drift axis d₀ and one axis
/// d_m per control. Fields are private; the estimator never sees them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    d0: Vec3,
    controls: Vec<Vec3>,
}

impl TrueModel {
    /// A model from its drift and control axes.
    pub fn new(d0: Vec3, controls: Vec<Vec3>) -> Self {
        Self { d0, controls }
    }

    /// The drift axis (verification harness only).
    pub fn d0(&self) -> Vec3 {
        self.d0
    }

    /// The control axes (verification harness only).
    pub fn controls(&self) -> &[Vec3] {
        &self.controls
    }

    /// Number of controls M.
    pub fn control_count(&self) -> usize {
        self.controls.len()
    }

    /// The instantaneous rotation axis d₀ + Σ f_m d_m for given fields.
    pub fn composed(&self, fields: &[f64]) -> Result<Vec3, ExperimentError> {
        if fields.len() != self.controls.len() {
            return Err(ExperimentError::DimensionMismatch {
                expected: self.controls.len(),
                got: fields.len(),
            });
        }
        let terms: Vec<(f64, Vec3)> = fields
            .iter()
            .copied()
            .zip(self.controls.iter().copied())
            .collect();
        Ok(compose_axis(self.d0, &terms))
    }
}

/// Opaque experiment handle: a [`TrueModel`] plus one seeded random stream.
///
/// A handle is single-owner and stateful; parallel workers each get their
/// own handle (cheaply constructed with derived seeds).
#[derive(Debug, Clone)]
pub struct BlackBox {
    model: TrueModel,
    rng: Xoshiro256StarStar,
    experiments_run: u64,
    shots_drawn: u64,
}

impl BlackBox {
    /// Wraps a model with a fresh random stream. The seed fully determines
    /// every subsequent draw.
    pub fn new(model: TrueModel, seed: u64) -> Self {
        Self {
            model,
            rng: Xoshiro256StarStar::new(seed),
            experiments_run: 0,
            shots_drawn: 0,
        }
    }

    /// The wrapped model (verification harness only).
    pub fn model(&self) -> &TrueModel {
        &self.model
    }

    /// How many experiments (sampled or exact) this handle has run.
    pub fn experiments_run(&self) -> u64 {
        self.experiments_run
    }

    /// Total shots drawn across all sampled experiments.
    pub fn shots_drawn(&self) -> u64 {
        self.shots_drawn
    }

    /// Propagates s₀ = (0,0,1) through the sequence and returns the final
    /// z-component. Zero-duration or zero-axis segments leave the state
    /// unchanged.
    fn propagate(&self, seq: &PulseSequence) -> Result<f64, ExperimentError> {
        let mut s = Vec3::new(0.0, 0.0, 1.0);
        for segment in seq.segments() {
            let axis = self.model.composed(&segment.fields)?;
            let alpha = axis.norm() * segment.duration;
            if alpha > 0.0 {
                s = rotate(s, axis, alpha).expect("nonzero axis by construction");
            }
        }
        Ok(s.z)
    }
}

impl Experiment for BlackBox {
    fn control_count(&self) -> usize {
        self.model.control_count()
    }

    fn run_experiment(
        &mut self,
        seq: &PulseSequence,
        shots: u64,
        eta: f64,
    ) -> Result<ShotResult, ExperimentError> {
        if shots == 0 {
            return Err(ExperimentError::ZeroShots);
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(ExperimentError::InvalidNoise { eta });
        }
        let z = self.propagate(seq)?;
        let p_one = (0.5 * (1.0 + z)).clamp(0.0, 1.0);
        let mut ones = 0u64;
        for _ in 0..shots {
            let r = self.rng.next_f64();
            let e = self.rng.next_f64(); // always drawn: stream is η-independent
            let mut outcome = r < p_one;
            if e < eta {
                outcome = !outcome;
            }
            ones += outcome as u64;
        }
        self.experiments_run += 1;
        self.shots_drawn += shots;
        ShotResult::new(shots, ones)
    }

    fn run_exact(&mut self, seq: &PulseSequence) -> Result<f64, ExperimentError> {
        let z = self.propagate(seq)?;
        self.experiments_run += 1;
        Ok(z)
    }
}
