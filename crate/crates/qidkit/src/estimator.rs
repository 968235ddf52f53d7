//! The three-stage identification pipeline.
//!
//! Stage 1 (per axis): a coarse time scan of z(t) under constant fields, a
//! DFT peak for the rotation frequency, and a parabola refinement of the
//! first minimum give ‖d‖ = π/t_min and θ = ½·arccos(z_min).
//!
//! Stage 2 (per axis): the state is first rotated onto the equator about a
//! reference axis, then driven about the target axis. The resulting
//! z(α) = C(1−cos α) + D sin α is an offset sinusoid; its first zero
//! recrossing predicts the two extrema, parabola refinements of those give
//! (γ, δ), and the pair (C, D) = (−γ sin δ, γ cos δ) yields the azimuth
//! φ − β = arcsin(D/sin θ), with the sign of C resolving the quadrant.
//!
//! Stage 3 (per control): the Cartesian components of the composed axes
//! d₀ + f·d_m are affine in the field strength f, so a straight-line fit
//! per component recovers d_m from the slopes; d₀ comes from the direct
//! free-evolution measurement.
//!
//! Everything here talks to the system exclusively through the
//! [`Experiment`] trait, so no code path can read the true parameters.
//!
//! # Gauge
//!
//! σz statistics cannot see the absolute azimuth of the axis set, so the
//! reference axis is placed at φ = 0. Stage 1 cannot distinguish θ from
//! π−θ, and the stage-2 curve of the pair (π−θ, π−ψ) is point-for-point
//! identical to that of (θ, ψ), so the branch is fixed by convention:
//! θ ∈ [0, π/2]. Finally, a mirrored axis set (every y negated) produces
//! mirrored estimates, so the result is normalized to the representative
//! with the first control's fitted y-component ≥ 0; the reported model
//! therefore does not depend on which mirror image generated the data.

use crate::bloch::{
    equatorial_prep, polar_to_cartesian, wrap_angle, AxisPolar, BlochError, EquatorialPrep, Vec3,
};
use crate::experiment::{Experiment, ExperimentError, PulseSequence};
use crate::signal::{
    dft_magnitudes, dft_peak, first_zero_crossing, line_fit, parabola_vertex, DftOptions, LineFit,
    ParabolaVertex, SampledSeries, SignalError, DEFAULT_DEPARTURE_FRAC,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// |sin ψ| above which the azimuth falls back from the arcsine of the
/// sine argument to the full two-argument arctangent (the arcsine's
/// derivative 1/cos ψ diverges as ψ approaches ±π/2).
const ARCSINE_GUARD: f64 = 0.98;

/// Whether data points come from exact propagation or shot sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `run_exact`: infinite-shot, noise-free values.
    Exact,
    /// `run_experiment`: finite shots with readout flips.
    Sampled,
}

/// How the reference axis for equatorial preparation is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceChoice {
    /// Pick the measured axis with tilt in [π/4, 3π/4] closest to π/2.
    Auto,
    /// Force the free-evolution (drift) axis, as in the worked reference
    /// run; errors if its tilt cannot prepare an equatorial state.
    Free,
}

/// Sampling plan shared by all scans of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Number of points J in the stage-1 coarse time scan.
    pub coarse_samples: usize,
    /// Upper bound on any rotation frequency; sets the Nyquist-safe coarse
    /// step Δt = π/ω_max (total span J·Δt).
    pub omega_max: f64,
    /// Points per parabola-refinement scan (stages 1 and 2).
    pub refine_points: usize,
    /// Refinement window as fractions of the predicted location.
    pub refine_window: (f64, f64),
    /// Step in the rotation angle α for the stage-2 coarse scan; the scan
    /// covers one full turn.
    pub phi_coarse_step: f64,
    /// Shots per data point in sampled mode.
    pub shots: u64,
    /// Readout flip probability in sampled mode.
    pub eta: f64,
    /// Exact or sampled data.
    pub mode: Mode,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            coarse_samples: 256,
            omega_max: 1.0,
            refine_points: 150,
            refine_window: (0.85, 1.15),
            phi_coarse_step: TAU / 24.0,
            shots: 1000,
            eta: 0.0,
            mode: Mode::Exact,
        }
    }
}

impl SamplingPlan {
    /// Validates the plan ranges.
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |reason: String| Err(EstimateError::InvalidRequest { reason });
        if self.coarse_samples < 64 {
            return bad(format!("coarse_samples {} < 64", self.coarse_samples));
        }
        if !(self.omega_max.is_finite() && self.omega_max > 0.0) {
            return bad(format!("omega_max {} must be positive", self.omega_max));
        }
        if self.refine_points < 3 {
            return bad(format!("refine_points {} < 3", self.refine_points));
        }
        let (lo, hi) = self.refine_window;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < 1.0 && 1.0 < hi) {
            return bad(format!("refine_window ({lo}, {hi}) must straddle 1.0"));
        }
        if !(self.phi_coarse_step.is_finite()
            && self.phi_coarse_step > 0.0
            && self.phi_coarse_step <= PI / 2.0)
        {
            return bad(format!(
                "phi_coarse_step {} outside (0, π/2]",
                self.phi_coarse_step
            ));
        }
        if self.shots == 0 {
            return bad("shots must be ≥ 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta {} outside [0, 1]", self.eta));
        }
        if self.mode == Mode::Sampled && self.eta >= 0.5 {
            return bad(format!(
                "eta {} ≥ 0.5: readout retains no correctable signal",
                self.eta
            ));
        }
        Ok(())
    }

    /// Upper bound on the shot-noise standard deviation of one corrected
    /// data point: ⟨σz⟩ over N shots fluctuates by at most 1/√N, and
    /// dividing out the readout attenuation stretches that by 1/(1−2η).
    pub fn noise_bound(&self) -> f64 {
        match self.mode {
            Mode::Exact => 0.0,
            Mode::Sampled => 1.0 / ((1.0 - 2.0 * self.eta) * (self.shots as f64).sqrt()),
        }
    }
}

/// Errors raised by the estimation stages.
#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    /// Malformed plan or field grid.
    #[error("invalid request: {reason}")]
    InvalidRequest {
        /// Human-readable reason.
        reason: String,
    },
    /// A signal-processing primitive failed (no oscillation, no crossing,
    /// degenerate fit, ...).
    #[error("signal processing: {0}")]
    Signal(#[from] SignalError),
    /// Rotation geometry failed (zero axis, tilt outside the preparable
    /// band, ...).
    #[error("rotation geometry: {0}")]
    Bloch(#[from] BlochError),
    /// The experiment interface rejected a request.
    #[error("experiment: {0}")]
    Experiment(#[from] ExperimentError),
    /// No measured axis has tilt in [π/4, 3π/4]; equatorial preparation is
    /// impossible.
    #[error("no axis with tilt in [π/4, 3π/4] to serve as reference")]
    NoUsableReference,
    /// The axis is too close to vertical for its azimuth to be conditioned.
    #[error("tilt too vertical for azimuth estimation (sin θ = {sin_theta:.4})")]
    TiltTooVertical {
        /// sin θ of the offending axis.
        sin_theta: f64,
    },
    /// The fitted offset sinusoid does not reproduce the measured stage-2
    /// scan — the equatorial-preparation premise or the extrema refinement
    /// failed.
    #[error("stage-2 fit inconsistent with scan: rms {rms:.4} > limit {limit:.4}")]
    InconsistentFit {
        /// RMS residual of the fit against the coarse scan.
        rms: f64,
        /// Allowed residual: 0.02 plus twice the per-point noise bound.
        limit: f64,
    },
    /// A stage error annotated with which scan failed. `control` 0 means
    /// free evolution; levels are 1-based grid indices (0 for free
    /// evolution).
    #[error("{stage} failed (control {control}, level {level})")]
    AtStage {
        /// Which stage failed.
        stage: &'static str,
        /// Control index m (0 = free evolution).
        control: usize,
        /// Field-grid level ℓ (1-based; 0 = free evolution).
        level: usize,
        /// The underlying failure.
        #[source]
        source: Box<EstimateError>,
    },
}

impl EstimateError {
    fn at(self, stage: &'static str, control: usize, level: usize) -> Self {
        EstimateError::AtStage {
            stage,
            control,
            level,
            source: Box::new(self),
        }
    }
}

/// Stage-1 result for one axis: polar form with the azimuth not yet
/// measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisEstimate {
    /// (‖d‖, θ, φ); φ is 0 and meaningless until `phi_valid`.
    pub polar: AxisPolar,
    /// Fitted minimum of the free-rotation curve, the estimate of cos 2θ.
    pub z_min_hat: f64,
    /// Fitted location of that minimum, the estimate of π/‖d‖.
    pub t_min_hat: f64,
    /// Whether `polar.phi` has been filled in by stage 2.
    pub phi_valid: bool,
}

/// Stage-2 result for one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    /// Amplitude γ = ½(z_max − z_min) of the offset sinusoid, ≥ 0.
    pub gamma: f64,
    /// Phase δ of z(α) = γ sin(α+δ) − γ sin δ, wrapped to (−π, π].
    pub delta: f64,
    /// Coefficient C = −γ sin δ of (1 − cos α) — equals ½ sin 2θ cos(φ−β).
    pub c: f64,
    /// Coefficient D = γ cos δ of sin α — equals sin θ sin(φ−β).
    pub d: f64,
    /// Recovered azimuth φ in the run's gauge, wrapped to (−π, π].
    pub phi: f64,
}

/// One identified axis: which scan it came from plus the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRecord {
    /// Control index m (0 = free evolution).
    pub control: usize,
    /// Field-grid level ℓ, 1-based (0 = free evolution).
    pub level: usize,
    /// Field strength f_m^(ℓ) (0 for free evolution).
    pub field: f64,
    /// Stage-1 estimate.
    pub axis: AxisEstimate,
    /// Stage-2 estimate; `None` for the reference axis, whose azimuth is 0
    /// by gauge.
    pub phi: Option<PhiEstimate>,
    /// The axis in Cartesian form within the run's gauge.
    pub cartesian: Vec3,
}

/// Per-component straight-line fits of one control's composed axes against
/// field strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentFits {
    /// Control index m (1-based).
    pub control: usize,
    /// Fit of the x-components; slope estimates d_m·x̂.
    pub x: LineFit,
    /// Fit of the y-components.
    pub y: LineFit,
    /// Fit of the z-components.
    pub z: LineFit,
}

/// How the gauge freedom was fixed for this run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeInfo {
    /// Control index of the reference axis (0 = free evolution).
    pub reference_control: usize,
    /// Grid level of the reference axis (0 = free evolution).
    pub reference_level: usize,
    /// Whether the global y-reflection was applied to put the first
    /// control's fitted y-component at ≥ 0.
    pub reflected: bool,
}

/// The assembled result of an identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedModel {
    /// Drift axis estimate, from the free-evolution measurement.
    pub d0_hat: Vec3,
    /// Control axis estimates (slopes of the component fits), in control
    /// order.
    pub dm_hat: Vec<Vec3>,
    /// Every per-axis estimate, free evolution first, then controls in
    /// (m, ℓ) order.
    pub axes: Vec<AxisRecord>,
    /// Stage-3 straight-line fits per control.
    pub component_fits: Vec<ComponentFits>,
    /// Per control, ‖fit intercepts − d0_hat‖: the intercepts re-estimate
    /// d₀, so their deviation from the direct measurement is a consistency
    /// diagnostic.
    pub intercept_deviation: Vec<f64>,
    /// Gauge bookkeeping.
    pub gauge: GaugeInfo,
    /// ‖d_m^est − d_m^true‖ per axis (d₀ first); filled only by the
    /// verification harness when the truth is available.
    pub hs_errors: Option<Vec<f64>>,
}

/// A retained stage-1 scan (coarse or refinement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSeries {
    /// Control index m (0 = free evolution).
    pub control: usize,
    /// Grid level ℓ (0 = free evolution).
    pub level: usize,
    /// Field strength.
    pub field: f64,
    /// Abscissae (times).
    pub xs: Vec<f64>,
    /// Measured z values.
    pub ys: Vec<f64>,
}

/// A retained magnitude spectrum of a coarse scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSeries {
    /// Control index m (0 = free evolution).
    pub control: usize,
    /// Grid level ℓ (0 = free evolution).
    pub level: usize,
    /// Field strength.
    pub field: f64,
    /// Angular frequencies of the DFT bins.
    pub omegas: Vec<f64>,
    /// Bin magnitudes (mean-subtracted input).
    pub magnitudes: Vec<f64>,
}

/// A retained stage-2 scan with its refinements and fitted vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiScanRaw {
    /// Control index m.
    pub control: usize,
    /// Grid level ℓ.
    pub level: usize,
    /// Field strength.
    pub field: f64,
    /// Coarse-scan angles α.
    pub coarse_xs: Vec<f64>,
    /// Coarse-scan z values.
    pub coarse_ys: Vec<f64>,
    /// Refinement angles around the predicted minimum.
    pub refine_min_xs: Vec<f64>,
    /// z values of the minimum refinement.
    pub refine_min_ys: Vec<f64>,
    /// Refinement angles around the predicted maximum.
    pub refine_max_xs: Vec<f64>,
    /// z values of the maximum refinement.
    pub refine_max_ys: Vec<f64>,
    /// Fitted vertex labelled as the minimum.
    pub vertex_min: ParabolaVertex,
    /// Fitted vertex labelled as the maximum.
    pub vertex_max: ParabolaVertex,
}

/// Every scan an identification run performed, for figure generation and
/// debugging. Series order matches [`IdentifiedModel::axes`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawData {
    /// Stage-1 coarse scans.
    pub freq_scans: Vec<ScanSeries>,
    /// Spectra of the coarse scans.
    pub spectra: Vec<SpectrumSeries>,
    /// Stage-1 refinement scans.
    pub refine_scans: Vec<ScanSeries>,
    /// Stage-2 scans.
    pub phi_scans: Vec<PhiScanRaw>,
}

/// Measures one data point according to the plan's mode.
fn measure<E: Experiment>(
    handle: &mut E,
    seq: &PulseSequence,
    plan: &SamplingPlan,
) -> Result<f64, EstimateError> {
    match plan.mode {
        Mode::Exact => Ok(handle.run_exact(seq)?),
        Mode::Sampled => {
            let z = handle.run_experiment(seq, plan.shots, plan.eta)?.z_hat;
            // A symmetric flip probability η shrinks E[⟨σz⟩] by exactly
            // (1 − 2η). η is an instrument parameter the caller knows, so
            // the attenuation is divided out once here and every
            // downstream fit sees an unbiased z. Without this, the tilt
            // picked up an O(η) bias that the azimuth stage then amplified
            // through sin 2θ.
            Ok(z / (1.0 - 2.0 * plan.eta))
        }
    }
}

/// Evenly spaced refinement abscissae around a predicted location.
fn refine_grid(prediction: f64, plan: &SamplingPlan) -> Vec<f64> {
    let lo = plan.refine_window.0 * prediction;
    let hi = plan.refine_window.1 * prediction;
    let n = plan.refine_points;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Accepts a refinement fit only where it interpolates. The quadratic
/// signal across a window shrinks with the window width squared, so at low
/// shot counts the fitted curvature can fluctuate through zero and the
/// vertex ratio −b/2a lands arbitrarily far from the data. Such a vertex
/// carries no information; the window centre — the model-exact prediction
/// the window was built around — with the fit's smoothed value there is
/// strictly better.
fn interpolated_vertex(vertex: ParabolaVertex, grid: &[f64], center: f64) -> ParabolaVertex {
    if (grid[0]..=grid[grid.len() - 1]).contains(&vertex.x_v) {
        vertex
    } else {
        ParabolaVertex {
            x_v: center,
            y_v: vertex.eval(center),
            curvature: vertex.curvature,
        }
    }
}

/// Linear least squares for z(α) = C(1−cos α) + D sin α.
///
/// The offset sinusoid is linear in (C, D), so the 2×2 normal equations
/// solve it globally — no extremum localization involved. Returns `None`
/// when the design matrix is singular (all abscissae at multiples of 2π).
fn fit_cd<I: Iterator<Item = (f64, f64)>>(points: I) -> Option<(f64, f64)> {
    let (mut suu, mut suv, mut svv, mut suz, mut svz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, z) in points {
        let u = 1.0 - a.cos();
        let v = a.sin();
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suz += u * z;
        svz += v * z;
    }
    let det = suu * svv - suv * suv;
    if det.abs() < 1e-12 {
        return None;
    }
    Some((
        (svv * suz - suv * svz) / det,
        (suu * svz - suv * suz) / det,
    ))
}

/// Centered moving average with the window truncated at the ends, so the
/// output has the input's length and no phase shift.
fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Stage-1 worker: returns the estimate together with the raw scans.
fn scan_axis<E: Experiment>(
    handle: &mut E,
    fields: &[f64],
    plan: &SamplingPlan,
) -> Result<(AxisEstimate, ScanSeries, SpectrumSeries, ScanSeries), EstimateError> {
    let dt = PI / plan.omega_max;
    let ts: Vec<f64> = (0..plan.coarse_samples).map(|j| j as f64 * dt).collect();
    let mut zs = Vec::with_capacity(ts.len());
    for &t in &ts {
        let seq = PulseSequence::single(fields.to_vec(), t)?;
        zs.push(measure(handle, &seq, plan)?);
    }
    let coarse = SampledSeries::new(ts.clone(), zs.clone())?;
    let (omegas, magnitudes) = dft_magnitudes(&coarse)?;
    let omega = dft_peak(
        &coarse,
        &DftOptions {
            omega_bound: Some(plan.omega_max),
            ..DftOptions::default()
        },
    )?;
    let t_star = PI / omega;

    let refine_ts = refine_grid(t_star, plan);
    let mut refine_zs = Vec::with_capacity(refine_ts.len());
    for &t in &refine_ts {
        let seq = PulseSequence::single(fields.to_vec(), t)?;
        refine_zs.push(measure(handle, &seq, plan)?);
    }
    let fit = parabola_vertex(&SampledSeries::new(refine_ts.clone(), refine_zs.clone())?)?;
    let vertex = interpolated_vertex(fit, &refine_ts, t_star);
    if !(vertex.x_v.is_finite() && vertex.x_v > 0.0) {
        return Err(EstimateError::Signal(SignalError::DegenerateFit {
            reason: format!("refined minimum at non-positive time {}", vertex.x_v),
        }));
    }

    let theta = 0.5 * vertex.y_v.clamp(-1.0, 1.0).acos();
    let estimate = AxisEstimate {
        polar: AxisPolar::new(PI / vertex.x_v, theta, 0.0),
        z_min_hat: vertex.y_v,
        t_min_hat: vertex.x_v,
        phi_valid: false,
    };
    let raw = |xs: Vec<f64>, ys: Vec<f64>| ScanSeries {
        control: 0,
        level: 0,
        field: 0.0,
        xs,
        ys,
    };
    Ok((
        estimate,
        raw(ts, zs),
        SpectrumSeries {
            control: 0,
            level: 0,
            field: 0.0,
            omegas,
            magnitudes,
        },
        raw(refine_ts, refine_zs),
    ))
}

/// Stage 1: coarse scan, DFT peak, parabola refinement of the first
/// minimum. Returns ‖d‖ = π/t_min and θ = ½ arccos(z_min); the azimuth is
/// left unset.
///
/// Errors with `NoOscillation` when the axis is (numerically) vertical —
/// z(t) is then constant and the frequency unidentifiable from this
/// experiment.
pub fn estimate_axis_polar<E: Experiment>(
    handle: &mut E,
    fields: &[f64],
    plan: &SamplingPlan,
) -> Result<AxisEstimate, EstimateError> {
    plan.validate()?;
    scan_axis(handle, fields, plan).map(|(estimate, ..)| estimate)
}

/// Picks the reference axis: tilt within [π/4, 3π/4] and closest to π/2,
/// so the equatorial preparation is well conditioned.
pub fn select_reference(estimates: &[AxisEstimate]) -> Result<usize, EstimateError> {
    estimates
        .iter()
        .enumerate()
        .filter(|(_, e)| (PI / 4.0..=3.0 * PI / 4.0).contains(&e.polar.theta))
        .min_by(|(_, a), (_, b)| {
            let da = (a.polar.theta - PI / 2.0).abs();
            let db = (b.polar.theta - PI / 2.0).abs();
            da.partial_cmp(&db).expect("finite tilts")
        })
        .map(|(i, _)| i)
        .ok_or(EstimateError::NoUsableReference)
}

/// Stage-2 worker: returns the estimate together with the raw scans.
fn scan_phi<E: Experiment>(
    handle: &mut E,
    fields: &[f64],
    axis: &AxisEstimate,
    prep: &EquatorialPrep,
    ref_fields: &[f64],
    plan: &SamplingPlan,
) -> Result<(PhiEstimate, PhiScanRaw), EstimateError> {
    let theta = axis.polar.theta;
    let sin_theta = theta.sin();
    if sin_theta < 0.05 {
        return Err(EstimateError::TiltTooVertical { sin_theta });
    }
    let norm = axis.polar.norm;

    // Coarse scan of z(α) over one full turn. Each point is a fresh
    // prepare-then-drive sequence.
    let steps = (TAU / plan.phi_coarse_step).round() as usize;
    let alphas: Vec<f64> = (0..=steps).map(|i| i as f64 * plan.phi_coarse_step).collect();
    let measure_at = |alpha: f64, handle: &mut E| -> Result<f64, EstimateError> {
        let seq = PulseSequence::single(ref_fields.to_vec(), prep.duration)?
            .then(fields.to_vec(), alpha / norm)?;
        measure(handle, &seq, plan)
    };
    let mut zs = Vec::with_capacity(alphas.len());
    for &a in &alphas {
        zs.push(measure_at(a, handle)?);
    }
    let coarse = SampledSeries::new(alphas.clone(), zs.clone())?;

    // The trivial zero at α = 0 makes a relative departure threshold
    // essential, and shot noise must not be able to arm the detector. A
    // wider threshold alone would overshoot the shallower lobe of strongly
    // offset curves (|sin δ| near 1 makes the two lobes very unequal, and
    // the shallow one comes first), so sampled data is smoothed before
    // detection: a 5-point moving average cuts the noise by √5, which
    // lets the threshold sit at 3σ of the smoothed noise — above shot
    // noise, below every genuine lobe. Exact data needs neither.
    let alpha_cross = match plan.mode {
        Mode::Exact => first_zero_crossing(&coarse, DEFAULT_DEPARTURE_FRAC)?,
        Mode::Sampled => {
            let smoothed = moving_average(&zs, 5);
            let obs_max = smoothed.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let sigma_eff = plan.noise_bound() / 5f64.sqrt();
            let frac = if obs_max > 0.0 {
                DEFAULT_DEPARTURE_FRAC.max(3.0 * sigma_eff / obs_max).min(0.4)
            } else {
                DEFAULT_DEPARTURE_FRAC
            };
            first_zero_crossing(&SampledSeries::new(alphas.clone(), smoothed)?, frac)?
        }
    };

    // z(α) = γ sin(α+δ) − γ sin δ recrosses zero at α_c = π − 2δ (mod 2π),
    // and its extrema sit at exactly α_c/2 and α_c/2 + π.
    let predictions = [0.5 * alpha_cross, 0.5 * alpha_cross + PI];
    let mut vertices = Vec::with_capacity(2);
    let mut refine_raw = Vec::with_capacity(2);
    for &prediction in &predictions {
        let grid = refine_grid(prediction, plan);
        let mut ys = Vec::with_capacity(grid.len());
        for &a in &grid {
            ys.push(measure_at(a, handle)?);
        }
        let fit = parabola_vertex(&SampledSeries::new(grid.clone(), ys.clone())?)?;
        vertices.push(interpolated_vertex(fit, &grid, prediction));
        refine_raw.push((grid, ys));
    }
    let (vertex_min, vertex_max, raw_min, raw_max) = if vertices[0].y_v <= vertices[1].y_v {
        (vertices[0], vertices[1], 0, 1)
    } else {
        (vertices[1], vertices[0], 1, 0)
    };

    let mut gamma = 0.5 * (vertex_max.y_v - vertex_min.y_v);
    // ½(α_min + α_max) = π − δ when the extrema take one set of mod-2π
    // representatives and π − δ ± π for the other; the sign of
    // sin(α_max + δ) — exactly +1 at the true maximum — picks the branch.
    let mut delta = wrap_angle(PI - 0.5 * (vertex_min.x_v + vertex_max.x_v));
    if (vertex_max.x_v + delta).sin() < 0.0 {
        delta = wrap_angle(delta + PI);
    }
    let mut c = -gamma * delta.sin();
    let mut d = gamma * delta.cos();

    // The fitted offset sinusoid must explain the coarse scan. The extrema
    // route can be thrown off by a poorly localized crossing (the windows
    // then sit beside the true extrema); since the model is linear in
    // (C, D), a direct least-squares refit over every measured point
    // recovers those cases from the same data. A fit that still cannot
    // explain the scan means the equatorial-preparation premise itself
    // broke down.
    let coarse_rms = |c: f64, d: f64| {
        let ss: f64 = alphas
            .iter()
            .zip(zs.iter())
            .map(|(&a, &z)| (z - (c * (1.0 - a.cos()) + d * a.sin())).powi(2))
            .sum();
        (ss / alphas.len() as f64).sqrt()
    };
    let mut rms = coarse_rms(c, d);
    let limit = 0.02 + 2.0 * plan.noise_bound();
    if rms > limit {
        let all_points = alphas
            .iter()
            .zip(zs.iter())
            .map(|(&a, &z)| (a, z))
            .chain(refine_raw.iter().flat_map(|(grid, ys)| {
                grid.iter().zip(ys.iter()).map(|(&a, &z)| (a, z))
            }));
        if let Some((c_ls, d_ls)) = fit_cd(all_points) {
            let rms_ls = coarse_rms(c_ls, d_ls);
            if rms_ls < rms {
                (c, d) = (c_ls, d_ls);
                gamma = c.hypot(d);
                delta = (-c).atan2(d);
                rms = rms_ls;
            }
        }
        if rms > limit {
            return Err(EstimateError::InconsistentFit { rms, limit });
        }
    }

    // sin(φ−β) = D/sin θ and cos(φ−β) = 2C/sin 2θ. Both arguments carry the
    // same angle, but not with the same precision: D inherits γ̂'s noise
    // scaled by |sin δ| while C inherits it scaled by |cos δ|, and the
    // cosine argument is further amplified by 1/sin 2θ for axes away from
    // θ = π/4. Taking the arcsine of the well-conditioned argument and
    // using C only to pick the quadrant is algebraically identical on
    // noiseless data and substantially quieter on sampled data. Near
    // ψ = ±π/2 the arcsine itself is ill-conditioned, so the full
    // arctangent takes over there.
    let sin_psi = (d / sin_theta).clamp(-1.0, 1.0);
    let cos_psi = (2.0 * c / (2.0 * theta).sin()).clamp(-1.0, 1.0);
    let psi = if sin_psi.abs() < ARCSINE_GUARD {
        if cos_psi >= 0.0 {
            sin_psi.asin()
        } else {
            wrap_angle(PI - sin_psi.asin())
        }
    } else {
        sin_psi.atan2(cos_psi)
    };
    let phi = wrap_angle(prep.beta + psi);

    let estimate = PhiEstimate {
        gamma,
        delta,
        c,
        d,
        phi,
    };
    let raw = PhiScanRaw {
        control: 0,
        level: 0,
        field: 0.0,
        coarse_xs: alphas,
        coarse_ys: zs,
        refine_min_xs: refine_raw[raw_min].0.clone(),
        refine_min_ys: refine_raw[raw_min].1.clone(),
        refine_max_xs: refine_raw[raw_max].0.clone(),
        refine_max_ys: refine_raw[raw_max].1.clone(),
        vertex_min,
        vertex_max,
    };
    Ok((estimate, raw))
}

/// Stage 2: equatorial preparation about the reference, a coarse scan of
/// z(α) about the target axis, extrema refinement, and azimuth recovery.
///
/// `prep` must have been computed from the selected reference axis, and
/// `ref_fields` must be the field vector that realizes that reference.
pub fn estimate_phi<E: Experiment>(
    handle: &mut E,
    fields: &[f64],
    axis: &AxisEstimate,
    prep: &EquatorialPrep,
    ref_fields: &[f64],
    plan: &SamplingPlan,
) -> Result<PhiEstimate, EstimateError> {
    plan.validate()?;
    scan_phi(handle, fields, axis, prep, ref_fields, plan).map(|(estimate, _)| estimate)
}

/// The field vector that drives control `m` (1-based) at strength `f`.
fn control_fields(m: usize, control_count: usize, f: f64) -> Vec<f64> {
    let mut fields = vec![0.0; control_count];
    fields[m - 1] = f;
    fields
}

/// Runs the full three-stage identification over the given per-control
/// field grids and returns the gauge-fixed model together with every raw
/// scan.
///
/// The run is strictly sequential in (m, ℓ) order — later stages depend on
/// earlier estimates, and a fixed order keeps the consumed random stream,
/// and therefore the entire output, reproducible.
pub fn identify<E: Experiment>(
    handle: &mut E,
    field_grids: &[Vec<f64>],
    plan: &SamplingPlan,
    reference: ReferenceChoice,
) -> Result<(IdentifiedModel, RawData), EstimateError> {
    plan.validate()?;
    let m_total = handle.control_count();
    if field_grids.len() != m_total {
        return Err(EstimateError::InvalidRequest {
            reason: format!(
                "{} field grids for {} controls",
                field_grids.len(),
                m_total
            ),
        });
    }
    for (m, grid) in field_grids.iter().enumerate() {
        if grid.len() < 2 {
            return Err(EstimateError::InvalidRequest {
                reason: format!("grid for control {} has {} levels; need ≥ 2", m + 1, grid.len()),
            });
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|f| !f.is_finite()) {
            return Err(EstimateError::InvalidRequest {
                reason: format!("grid for control {} must be finite and strictly increasing", m + 1),
            });
        }
    }

    let mut raw = RawData::default();

    // ---- Stage 1: frequency and tilt of every axis, free evolution first.
    // (control, level, field) per scan, in fixed order.
    let mut scan_points: Vec<(usize, usize, f64)> = vec![(0, 0, 0.0)];
    for (m, grid) in field_grids.iter().enumerate() {
        for (l, &f) in grid.iter().enumerate() {
            scan_points.push((m + 1, l + 1, f));
        }
    }

    let mut estimates: Vec<AxisEstimate> = Vec::with_capacity(scan_points.len());
    for &(control, level, field) in &scan_points {
        let fields = if control == 0 {
            vec![0.0; m_total]
        } else {
            control_fields(control, m_total, field)
        };
        let (estimate, mut coarse, mut spectrum, mut refine) =
            scan_axis(handle, &fields, plan).map_err(|e| e.at("stage 1", control, level))?;
        coarse.control = control;
        coarse.level = level;
        coarse.field = field;
        spectrum.control = control;
        spectrum.level = level;
        spectrum.field = field;
        refine.control = control;
        refine.level = level;
        refine.field = field;
        raw.freq_scans.push(coarse);
        raw.spectra.push(spectrum);
        raw.refine_scans.push(refine);
        estimates.push(estimate);
    }

    // ---- Reference selection and equatorial preparation.
    let ref_index = match reference {
        ReferenceChoice::Free => 0,
        ReferenceChoice::Auto => select_reference(&estimates)?,
    };
    let (ref_control, ref_level, ref_field) = scan_points[ref_index];
    let ref_fields = if ref_control == 0 {
        vec![0.0; m_total]
    } else {
        control_fields(ref_control, m_total, ref_field)
    };
    let prep = equatorial_prep(&estimates[ref_index].polar)
        .map_err(|e| EstimateError::from(e).at("preparation", ref_control, ref_level))?;

    // ---- Stage 2: azimuth of every non-reference axis. The reference
    // axis has φ = 0 by gauge.
    let mut phi_estimates: Vec<Option<PhiEstimate>> = vec![None; scan_points.len()];
    for (i, &(control, level, field)) in scan_points.iter().enumerate() {
        if i == ref_index {
            estimates[i].polar.phi = 0.0;
            estimates[i].phi_valid = true;
            continue;
        }
        let fields = if control == 0 {
            vec![0.0; m_total]
        } else {
            control_fields(control, m_total, field)
        };
        let (phi_est, mut phi_raw) =
            scan_phi(handle, &fields, &estimates[i], &prep, &ref_fields, plan)
                .map_err(|e| e.at("stage 2", control, level))?;
        phi_raw.control = control;
        phi_raw.level = level;
        phi_raw.field = field;
        raw.phi_scans.push(phi_raw);
        estimates[i].polar.phi = phi_est.phi;
        estimates[i].phi_valid = true;
        phi_estimates[i] = Some(phi_est);
    }

    // ---- Stage 3: straight lines through the Cartesian components.
    let mut axes: Vec<AxisRecord> = scan_points
        .iter()
        .zip(estimates.iter())
        .zip(phi_estimates.iter())
        .map(|((&(control, level, field), axis), phi)| AxisRecord {
            control,
            level,
            field,
            axis: axis.clone(),
            phi: *phi,
            cartesian: polar_to_cartesian(&axis.polar),
        })
        .collect();

    let mut d0_hat = axes[0].cartesian;
    let mut component_fits = Vec::with_capacity(m_total);
    let mut dm_hat = Vec::with_capacity(m_total);
    for m in 1..=m_total {
        let grid = &field_grids[m - 1];
        let comps: Vec<Vec3> = axes
            .iter()
            .filter(|a| a.control == m)
            .map(|a| a.cartesian)
            .collect();
        let fit_component = |extract: fn(&Vec3) -> f64| -> Result<LineFit, EstimateError> {
            let ys: Vec<f64> = comps.iter().map(extract).collect();
            line_fit(&SampledSeries::new(grid.clone(), ys)?)
                .map_err(|e| EstimateError::from(e).at("stage 3", m, 0))
        };
        let fits = ComponentFits {
            control: m,
            x: fit_component(|v| v.x)?,
            y: fit_component(|v| v.y)?,
            z: fit_component(|v| v.z)?,
        };
        dm_hat.push(Vec3::new(fits.x.slope, fits.y.slope, fits.z.slope));
        component_fits.push(fits);
    }

    // ---- Reflection normalization: a mirrored axis set yields mirrored
    // estimates; report the representative with the first control's fitted
    // y ≥ 0 so both mirror images map to the same model.
    let reflected = dm_hat.first().is_some_and(|d| d.y < 0.0);
    if reflected {
        d0_hat.y = -d0_hat.y;
        for d in &mut dm_hat {
            d.y = -d.y;
        }
        for axis in &mut axes {
            axis.cartesian.y = -axis.cartesian.y;
            axis.axis.polar.phi = wrap_angle(-axis.axis.polar.phi);
            if let Some(phi) = &mut axis.phi {
                phi.phi = wrap_angle(-phi.phi);
            }
        }
        for fits in &mut component_fits {
            fits.y.slope = -fits.y.slope;
            fits.y.intercept = -fits.y.intercept;
        }
    }

    let intercept_deviation = component_fits
        .iter()
        .map(|f| {
            let intercepts = Vec3::new(f.x.intercept, f.y.intercept, f.z.intercept);
            (intercepts - d0_hat).norm()
        })
        .collect();

    let model = IdentifiedModel {
        d0_hat,
        dm_hat,
        axes,
        component_fits,
        intercept_deviation,
        gauge: GaugeInfo {
            reference_control: ref_control,
            reference_level: ref_level,
            reflected,
        },
        hs_errors: None,
    };
    Ok((model, raw))
}
