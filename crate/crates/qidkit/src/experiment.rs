//! The experiment interface: pulse sequences, shot statistics, and the
//! trait through which the estimator talks to a system.
//!
//! The estimator is written against [`Experiment`] alone, so it can only
//! request σz statistics for pulse sequences it constructs — it has no
//! access path to the underlying Hamiltonian parameters. The simulator in
//! [`crate::blackbox`] implements the trait; a hardware backend could too.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when running experiments.
#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    /// A segment supplies a different number of control fields than the
    /// system has controls.
    #[error("segment has {got} control fields, system has {expected}")]
    DimensionMismatch {
        /// Number of controls the system exposes.
        expected: usize,
        /// Number of fields the segment supplied.
        got: usize,
    },
    /// Shot statistics need at least one shot.
    #[error("shot count must be at least 1")]
    ZeroShots,
    /// Readout flip probability outside [0, 1].
    #[error("readout error probability {eta} outside [0, 1]")]
    InvalidNoise {
        /// The rejected probability.
        eta: f64,
    },
    /// A pulse sequence with a non-finite or negative duration or a
    /// non-finite field value.
    #[error("invalid pulse sequence: {reason}")]
    InvalidSequence {
        /// Human-readable reason.
        reason: String,
    },
}

/// One piecewise-constant interval of a pulse sequence: fixed control
/// field values applied for a duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Field value f_m for each control, in control order.
    pub fields: Vec<f64>,
    /// How long the fields are held (time units; ≥ 0).
    pub duration: f64,
}

impl Segment {
    /// Builds a segment; durations and fields must be finite, duration ≥ 0.
    pub fn new(fields: Vec<f64>, duration: f64) -> Result<Self, ExperimentError> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(ExperimentError::InvalidSequence {
                reason: format!("duration {duration} not finite and non-negative"),
            });
        }
        if fields.iter().any(|f| !f.is_finite()) {
            return Err(ExperimentError::InvalidSequence {
                reason: "non-finite field value".to_string(),
            });
        }
        Ok(Self { fields, duration })
    }
}

/// An ordered list of segments applied to the freshly initialized state
/// (0, 0, 1) before a σz measurement. An empty sequence measures the
/// initial state directly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseSequence {
    segments: Vec<Segment>,
}

impl PulseSequence {
    /// A sequence from pre-built segments.
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    /// The empty sequence: measure the initial state.
    pub fn empty() -> Self {
        Self::default()
    }

    /// A single-segment sequence.
    pub fn single(fields: Vec<f64>, duration: f64) -> Result<Self, ExperimentError> {
        Ok(Self {
            segments: vec![Segment::new(fields, duration)?],
        })
    }

    /// Free evolution: all `control_count` fields zero for `duration`.
    pub fn free(control_count: usize, duration: f64) -> Result<Self, ExperimentError> {
        Self::single(vec![0.0; control_count], duration)
    }

    /// Appends a segment, consuming and returning the sequence so calls
    /// chain.
    pub fn then(mut self, fields: Vec<f64>, duration: f64) -> Result<Self, ExperimentError> {
        self.segments.push(Segment::new(fields, duration)?);
        Ok(self)
    }

    /// The segments in application order.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }
}

/// Aggregate of N projective σz measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotResult {
    /// Number of shots N.
    pub n_shots: u64,
    /// How many shots returned outcome 1.
    pub ones: u64,
    /// The estimator −1 + 2·ones/N; always in [−1, 1].
    pub z_hat: f64,
}

impl ShotResult {
    /// Builds the result, computing `z_hat` from the counts.
    pub fn new(n_shots: u64, ones: u64) -> Result<Self, ExperimentError> {
        if n_shots == 0 {
            return Err(ExperimentError::ZeroShots);
        }
        debug_assert!(ones <= n_shots);
        Ok(Self {
            n_shots,
            ones,
            z_hat: -1.0 + 2.0 * ones as f64 / n_shots as f64,
        })
    }
}

/// Readout noise settings as they appear in run configurations: a
/// symmetric flip probability and the seed for the shot-level randomness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Probability η ∈ [0, 1] that a recorded outcome is flipped.
    pub eta: f64,
    /// Seed of the shot-noise stream. One seed fixes every draw a handle
    /// will ever make, so a run is reproducible bit-for-bit.
    pub seed: u64,
}

/// A system that can run pulse-sequence experiments and report σz
/// statistics. This trait is the entire surface the estimator sees.
///
/// The seed lives in the handle (fixed at construction) while η is a
/// per-call argument: a handle owns one reproducible random stream, and
/// sweeps vary η against that same stream.
pub trait Experiment {
    /// Number of controls M; segments must carry exactly this many fields.
    fn control_count(&self) -> usize;

    /// Applies the sequence to a fresh initial state and measures σz
    /// `shots` times, flipping each recorded outcome with probability
    /// `eta`.
    fn run_experiment(
        &mut self,
        seq: &PulseSequence,
        shots: u64,
        eta: f64,
    ) -> Result<ShotResult, ExperimentError>;

    /// Applies the sequence and returns the exact final z-component — the
    /// infinite-shot, noise-free limit used for deterministic tests.
    fn run_exact(&mut self, seq: &PulseSequence) -> Result<f64, ExperimentError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_rejects_bad_durations_and_fields() {
        assert!(Segment::new(vec![0.0], -1.0).is_err());
        assert!(Segment::new(vec![0.0], f64::NAN).is_err());
        assert!(Segment::new(vec![f64::INFINITY], 1.0).is_err());
        assert!(Segment::new(vec![0.5], 0.0).is_ok());
    }

    #[test]
    fn sequences_chain_in_order() {
        let seq = PulseSequence::free(2, 1.5)
            .unwrap()
            .then(vec![0.3, 0.0], 2.0)
            .unwrap();
        assert_eq!(seq.segments().len(), 2);
        assert_eq!(seq.segments()[0].fields, vec![0.0, 0.0]);
        assert_eq!(seq.segments()[1].duration, 2.0);
        assert!(PulseSequence::empty().segments().is_empty());
    }

    #[test]
    fn shot_result_computes_z_hat() {
        let r = ShotResult::new(1000, 750).unwrap();
        assert_eq!(r.z_hat, 0.5);
        assert_eq!(ShotResult::new(4, 0).unwrap().z_hat, -1.0);
        assert_eq!(ShotResult::new(4, 4).unwrap().z_hat, 1.0);
        assert_eq!(ShotResult::new(0, 0), Err(ExperimentError::ZeroShots));
    }
}
