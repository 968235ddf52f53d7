//! Generic 1-D estimation primitives used by the identification pipeline:
//! DFT peak frequency, least-squares parabola vertex, least-squares line,
//! and first zero crossing of a sampled curve.
//!
//! Everything here is a deterministic function of its inputs. The DFT is a
//! direct O(J²) evaluation — at the few hundred samples used per scan the
//! simplicity is worth far more than a transform library, and bin-resolution
//! output is all the pipeline needs because the subsequent parabola
//! refinement supplies the precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default arming threshold for [`first_zero_crossing`], as a fraction of
/// the largest absolute sample value.
pub const DEFAULT_DEPARTURE_FRAC: f64 = 0.05;

/// Default ratio of peak to median spectral magnitude below which the DFT
/// peak is considered meaningless (no oscillation present).
pub const DEFAULT_PEAK_FACTOR: f64 = 3.0;

/// Errors raised by the estimation primitives.
#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    /// The inputs do not form a valid sampled series.
    #[error("invalid sampled series: {reason}")]
    InvalidSeries {
        /// Human-readable reason the construction was rejected.
        reason: String,
    },
    /// An operation needs more points than the series provides.
    #[error("operation needs at least {needed} points, series has {got}")]
    TooFewPoints {
        /// Minimum number of points required.
        needed: usize,
        /// Number of points supplied.
        got: usize,
    },
    /// The DFT requires uniform sample spacing.
    #[error("sample spacing is not uniform at index {index}")]
    NonUniformSpacing {
        /// Index of the first interval that deviates.
        index: usize,
    },
    /// The spectrum has no peak standing out of the background — the series
    /// is (numerically) constant, e.g. because the rotation axis is vertical.
    #[error(
        "no oscillation: spectral peak {peak:.3e} below {factor} x median bin {median:.3e}"
    )]
    NoOscillation {
        /// Magnitude of the largest non-DC bin.
        peak: f64,
        /// Median non-DC bin magnitude.
        median: f64,
        /// Required peak-to-median factor.
        factor: f64,
    },
    /// The caller's frequency search bound exceeds the Nyquist frequency of
    /// the sample grid, so the peak could be an alias.
    #[error("frequency bound {omega_bound} exceeds Nyquist {nyquist} for this grid")]
    AliasingRisk {
        /// The requested search bound (rad/time).
        omega_bound: f64,
        /// Nyquist angular frequency π/Δt.
        nyquist: f64,
    },
    /// A least-squares fit has no usable solution (e.g. collinear points
    /// offered to the parabola fit: the vertex is undefined).
    #[error("degenerate least-squares fit: {reason}")]
    DegenerateFit {
        /// Human-readable reason.
        reason: String,
    },
    /// No sign change was found after the curve departed from zero.
    #[error("no zero crossing found in the scanned range")]
    NoCrossing,
}

/// A finite sampled curve: strictly increasing abscissae with one value per
/// point. Construction validates the invariants, so every operation can rely
/// on them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SampledSeries {
    /// Builds a series from abscissae (times or angles) and values.
    ///
    /// Requires equal lengths, at least 2 points, strictly increasing finite
    /// abscissae, and finite values. Two points are enough for a line fit;
    /// operations needing more ([`dft_peak`], [`parabola_vertex`]) enforce
    /// their own minima.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, SignalError> {
        if xs.len() != ys.len() {
            return Err(SignalError::InvalidSeries {
                reason: format!("{} abscissae vs {} values", xs.len(), ys.len()),
            });
        }
        if xs.len() < 2 {
            return Err(SignalError::InvalidSeries {
                reason: format!("{} points; need at least 2", xs.len()),
            });
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(SignalError::InvalidSeries {
                reason: "non-finite entry".to_string(),
            });
        }
        if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SignalError::InvalidSeries {
                reason: format!("abscissae not strictly increasing at index {}", i + 1),
            });
        }
        Ok(Self { xs, ys })
    }

    /// The abscissae.
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// The values.
    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    /// Whether the series is empty (never true for a constructed series).
    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// An ordinary least-squares straight line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// Fitted slope.
    pub slope: f64,
    /// Fitted vertical-axis intercept.
    pub intercept: f64,
    /// Root-mean-square residual of the fit (0 for collinear input).
    pub residual_rms: f64,
}

impl LineFit {
    /// Evaluates the fitted line at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// The stationary point of a least-squares quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaVertex {
    /// Abscissa of the vertex.
    pub x_v: f64,
    /// Value at the vertex.
    pub y_v: f64,
    /// Second derivative of the fitted quadratic; positive for a minimum,
    /// negative for a maximum.
    pub curvature: f64,
}

impl ParabolaVertex {
    /// Evaluates the fitted parabola at `x` (vertex form).
    pub fn eval(&self, x: f64) -> f64 {
        self.y_v + 0.5 * self.curvature * (x - self.x_v) * (x - self.x_v)
    }
}

/// Options for [`dft_peak`].
#[derive(Debug, Clone, Copy)]
pub struct DftOptions {
    /// Peak must exceed this multiple of the median bin magnitude.
    pub peak_factor: f64,
    /// Optional physical upper bound on the frequency being sought; used to
    /// reject grids whose Nyquist frequency is below it.
    pub omega_bound: Option<f64>,
}

impl Default for DftOptions {
    fn default() -> Self {
        Self {
            peak_factor: DEFAULT_PEAK_FACTOR,
            omega_bound: None,
        }
    }
}

/// Magnitude spectrum of the mean-subtracted series on a uniform grid.
///
/// Returns `(omegas, magnitudes)` for bins `k = 0 ..= J/2`, where
/// `omega_k = 2πk/(J·Δt)`. Bin 0 is retained (it is ~0 after mean
/// subtraction) so spectra can be plotted from zero.
pub fn dft_magnitudes(series: &SampledSeries) -> Result<(Vec<f64>, Vec<f64>), SignalError> {
    let j = series.len();
    if j < 8 {
        return Err(SignalError::TooFewPoints { needed: 8, got: j });
    }
    let dt = uniform_spacing(series)?;
    let mean = series.ys.iter().sum::<f64>() / j as f64;
    let centered: Vec<f64> = series.ys.iter().map(|v| v - mean).collect();

    let mut omegas = Vec::with_capacity(j / 2 + 1);
    let mut mags = Vec::with_capacity(j / 2 + 1);
    for k in 0..=(j / 2) {
        let w = 2.0 * std::f64::consts::PI * k as f64 / j as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in centered.iter().enumerate() {
            let phase = w * n as f64;
            re += v * phase.cos();
            im -= v * phase.sin();
        }
        omegas.push(2.0 * std::f64::consts::PI * k as f64 / (j as f64 * dt));
        mags.push(re.hypot(im));
    }
    Ok((omegas, mags))
}

/// Angular frequency of the dominant oscillation in a uniformly sampled
/// series: the largest non-DC bin of the magnitude spectrum of
/// `y_j − mean(y)`, reported at bin resolution `2π/(JΔt)`.
///
/// For a noiseless single sinusoid below Nyquist the result is within one
/// bin width of the true frequency. No interpolation is attempted — callers
/// refine with [`parabola_vertex`] where more precision is needed.
pub fn dft_peak(series: &SampledSeries, options: &DftOptions) -> Result<f64, SignalError> {
    let dt = uniform_spacing(series)?;
    if let Some(bound) = options.omega_bound {
        let nyquist = std::f64::consts::PI / dt;
        if bound > nyquist * (1.0 + 1e-12) {
            return Err(SignalError::AliasingRisk {
                omega_bound: bound,
                nyquist,
            });
        }
    }
    let (omegas, mags) = dft_magnitudes(series)?;

    // A numerically constant series has no peak at all; catch it before the
    // peak/median comparison, which is 0-vs-0 in that case.
    let mean = series.ys.iter().sum::<f64>() / series.len() as f64;
    let spread = series
        .ys
        .iter()
        .map(|v| (v - mean).abs())
        .fold(0.0, f64::max);
    let scale = series.ys.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * (1.0 + scale) {
        return Err(SignalError::NoOscillation {
            peak: 0.0,
            median: 0.0,
            factor: options.peak_factor,
        });
    }

    let non_dc = &mags[1..];
    let (k_best, peak) = non_dc
        .iter()
        .enumerate()
        .fold((0, 0.0), |(kb, pb), (k, &m)| {
            if m > pb {
                (k, m)
            } else {
                (kb, pb)
            }
        });
    let median = median_of(non_dc);
    if peak < options.peak_factor * median {
        return Err(SignalError::NoOscillation {
            peak,
            median,
            factor: options.peak_factor,
        });
    }
    Ok(omegas[k_best + 1])
}

/// Least-squares quadratic `y = ax² + bx + c` through the points, reported
/// as its stationary point `x_v = −b/2a`, `y_v = c − b²/4a`, and curvature
/// `2a`.
///
/// The abscissae are centered and scaled internally, so windows far from the
/// origin (as produced by the period-refinement scans) stay well
/// conditioned. Collinear input has no vertex and errors with
/// [`SignalError::DegenerateFit`].
pub fn parabola_vertex(points: &SampledSeries) -> Result<ParabolaVertex, SignalError> {
    let n = points.len();
    if n < 3 {
        return Err(SignalError::TooFewPoints { needed: 3, got: n });
    }
    let mu = points.xs.iter().sum::<f64>() / n as f64;
    let scale = points
        .xs
        .iter()
        .map(|x| (x - mu).abs())
        .fold(0.0, f64::max);
    // scale > 0 because abscissae are strictly increasing.
    let us: Vec<f64> = points.xs.iter().map(|x| (x - mu) / scale).collect();

    let mut s = [0.0f64; 5]; // Σ u^0 .. Σ u^4
    let mut t = [0.0f64; 3]; // Σ y·u^0 .. Σ y·u^2
    for (&u, &y) in us.iter().zip(points.ys.iter()) {
        let u2 = u * u;
        s[0] += 1.0;
        s[1] += u;
        s[2] += u2;
        s[3] += u2 * u;
        s[4] += u2 * u2;
        t[0] += y;
        t[1] += y * u;
        t[2] += y * u2;
    }
    let solution = solve3(
        [[s[4], s[3], s[2]], [s[3], s[2], s[1]], [s[2], s[1], s[0]]],
        [t[2], t[1], t[0]],
    )
    .ok_or_else(|| SignalError::DegenerateFit {
        reason: "singular normal equations".to_string(),
    })?;
    let [a, b, c] = solution;

    let y_mean = t[0] / n as f64;
    let y_spread = points
        .ys
        .iter()
        .map(|y| (y - y_mean).abs())
        .fold(0.0, f64::max);
    if a.abs() <= 1e-12 * y_spread.max(f64::MIN_POSITIVE) {
        return Err(SignalError::DegenerateFit {
            reason: "quadratic coefficient vanishes (collinear points)".to_string(),
        });
    }

    Ok(ParabolaVertex {
        x_v: mu + scale * (-b / (2.0 * a)),
        y_v: c - b * b / (4.0 * a),
        curvature: 2.0 * a / (scale * scale),
    })
}

/// Ordinary least-squares straight line through the points; exact for
/// collinear input.
pub fn line_fit(points: &SampledSeries) -> Result<LineFit, SignalError> {
    let n = points.len() as f64;
    let x_mean = points.xs.iter().sum::<f64>() / n;
    let y_mean = points.ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in points.xs.iter().zip(points.ys.iter()) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        // Unreachable through SampledSeries (strictly increasing abscissae),
        // but kept so the contract does not depend on that invariant.
        return Err(SignalError::DegenerateFit {
            reason: "all abscissae equal".to_string(),
        });
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = points
        .xs
        .iter()
        .zip(points.ys.iter())
        .map(|(&x, &y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        residual_rms: (ss_res / n).sqrt(),
    })
}

/// Abscissa of the first zero crossing of a curve that starts at zero,
/// found by linear interpolation between the bracketing samples.
///
/// The trivial zero at the start is skipped by arming only once `|y|`
/// exceeds `departure_frac` times the largest `|y|` in the series (the
/// relative threshold makes the result invariant under positive rescaling
/// of the values). A sign change then counts only if the new-side sample is
/// either clearly away from zero (half the arming threshold) or followed by
/// a second new-side sample — one isolated outlier in shot-noise data
/// cannot fake a crossing.
pub fn first_zero_crossing(
    points: &SampledSeries,
    departure_frac: f64,
) -> Result<f64, SignalError> {
    let ys = &points.ys;
    let xs = &points.xs;
    let vmax = ys.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if vmax == 0.0 {
        return Err(SignalError::NoCrossing);
    }
    let threshold = departure_frac * vmax;

    let (armed_at, sign) = ys
        .iter()
        .enumerate()
        .find(|(_, v)| v.abs() >= threshold && **v != 0.0)
        .map(|(i, v)| (i, v.signum()))
        .ok_or(SignalError::NoCrossing)?;

    let mut last_same = armed_at;
    for i in (armed_at + 1)..ys.len() {
        let v = ys[i];
        if v * sign > 0.0 {
            last_same = i;
            continue;
        }
        let next_also_opposite = i + 1 < ys.len() && ys[i + 1] * sign < 0.0;
        let confirmed = if v == 0.0 {
            next_also_opposite
        } else {
            v.abs() >= 0.5 * threshold || next_also_opposite
        };
        if confirmed {
            let (x0, y0) = (xs[last_same], ys[last_same]);
            let (x1, y1) = (xs[i], v);
            return Ok(x0 + (x1 - x0) * (-y0) / (y1 - y0));
        }
    }
    Err(SignalError::NoCrossing)
}

/// Checks the series for uniform spacing (1e-9 relative) and returns Δt.
fn uniform_spacing(series: &SampledSeries) -> Result<f64, SignalError> {
    let xs = &series.xs;
    let dt = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    for (i, w) in xs.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs() {
            return Err(SignalError::NonUniformSpacing { index: i });
        }
    }
    Ok(dt)
}

/// Median of a nonempty slice.
fn median_of(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    }
}

/// Solves a 3×3 linear system by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&r1, &r2| {
                a[r1][col]
                    .abs()
                    .partial_cmp(&a[r2][col].abs())
                    .expect("finite pivots")
            })
            .expect("nonempty range");
        if a[pivot_row][col] == 0.0 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in (row + 1)..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
