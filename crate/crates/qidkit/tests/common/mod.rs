//! Helpers shared by the integration test binaries.

#![allow(dead_code)] // each test binary uses a different subset

use std::path::PathBuf;

use qidkit::blackbox::TrueModel;
use qidkit::bloch::{Mat3, Vec3};
use qidkit::estimator::{Mode, SamplingPlan};

/// The worked reference system: 2H₀ = 0.2σx + 0.1σz with two controls.
pub fn sample_model() -> TrueModel {
    TrueModel::new(
        Vec3::new(0.2, 0.0, 0.1),
        vec![Vec3::new(1.0, 0.9, 0.1), Vec3::new(0.2, 0.0, 0.9)],
    )
}

/// Field grids {0.05·k : k = 1..10} for both controls, as in the worked
/// reference run.
pub fn full_grids() -> Vec<Vec<f64>> {
    let grid: Vec<f64> = (1..=10).map(|k| 0.05 * k as f64).collect();
    vec![grid.clone(), grid]
}

/// Default plan: exact (infinite-shot) data.
pub fn exact_plan() -> SamplingPlan {
    SamplingPlan::default()
}

/// Default plan switched to finite shots with readout error.
pub fn sampled_plan(shots: u64, eta: f64) -> SamplingPlan {
    SamplingPlan {
        shots,
        eta,
        mode: Mode::Sampled,
        ..SamplingPlan::default()
    }
}

/// Absolute path of the checked-in run configuration.
pub fn config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/testsystem.json")
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want} (tol {tol})"
    );
}

/// Matrix exponential exp(A·t) by scaling-and-squaring with a Taylor
/// series: an oracle independent of the closed-form rotation matrix it is
/// used to check.
pub fn mat_exp(a: &Mat3, t: f64) -> Mat3 {
    let scaled = a.scale(t);
    let norm = scaled
        .0
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    // Halve until the norm is ≤ 0.5 so the 20-term Taylor tail is far
    // below f64 resolution, then square back up.
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let base = scaled.scale(0.5f64.powi(squarings));
    let mut term = Mat3::identity();
    let mut sum = Mat3::identity();
    for k in 1..=20 {
        term = term.mul_mat(&base).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    let mut result = sum;
    for _ in 0..squarings {
        result = result.mul_mat(&result);
    }
    result
}

/// Median of a sample (interpolating between the middle pair).
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len();
    assert!(n > 0, "median of an empty sample");
    0.5 * (sorted[(n - 1) / 2] + sorted[n / 2])
}

/// Empirical q-quantile (0 < q ≤ 1) by the ceil-rank convention.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let rank = ((n as f64 * q).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}
