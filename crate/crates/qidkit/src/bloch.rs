//! Exact geometry of driven two-level dynamics on the Bloch sphere.
//!
//! A qubit state is the real 3-vector `s = (⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`; a constant
//! Hamiltonian `2H = d·σ` (identity part dropped — it only contributes a
//! global phase) is the real 3-vector `d`. The equation of motion is
//!
//! ```text
//! ds/dt = s × d
//! ```
//!
//! so `s` rotates about the unit axis `d̂ = d/‖d‖` with angular frequency
//! `‖d‖`. Writing `α = ‖d‖·t` for the accumulated rotation angle, the
//! trajectory has the closed form implemented by [`rotate`]:
//!
//! ```text
//! s(α) = s₀ cos α + d̂ (s₀·d̂)(1 − cos α) + (s₀ × d̂) sin α
//! ```
//!
//! Two z-observable curves derived from this formula drive the whole
//! identification procedure:
//!
//! * starting from `s₀ = (0,0,1)`:  `z(α) = cos α sin²θ + cos²θ`
//!   ([`z_free`]), minimized at `α = (2n+1)π` with `z_min = cos 2θ`;
//! * starting from an equatorial state `s₁ = (cos β, sin β, 0)`:
//!   `z(α) = C(1 − cos α) + D sin α` with `C = ½ sin 2θ cos(φ−β)` and
//!   `D = sin θ sin(φ−β)` ([`z_equatorial`]).
//!
//! Every closed form in this module is unit-tested against direct evaluation
//! of [`rotate`] and against the matrix exponential of [`generator_matrix`],
//! so the sign conventions (handedness of the cross product, the sign of β,
//! the signs inside C and D) are pinned by machine-checked oracles rather
//! than by transcription.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the geometry layer.
#[derive(Debug, Error, PartialEq)]
pub enum BlochError {
    /// A rotation axis (or a vector being converted to polar form) has zero
    /// norm, so its direction is undefined. Surfaced explicitly instead of
    /// silently treating the rotation as the identity, so callers can
    /// distinguish "no dynamics" from "trivial dynamics".
    #[error("rotation axis has zero norm; direction undefined")]
    ZeroAxis,
    /// Equatorial preparation requires a reference tilt in `[π/4, 3π/4]`;
    /// outside that band no single rotation about the axis reaches the
    /// equator from the pole.
    #[error("reference tilt {theta} outside [π/4, 3π/4]; cannot prepare an equatorial state")]
    TiltOutOfRange {
        /// The offending tilt angle in radians.
        theta: f64,
    },
}

/// A real 3-vector: a Bloch state, a rotation axis, or a fitted component
/// triple, depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    /// x-component (⟨σx⟩ for states, σx coefficient of 2H for axes).
    pub x: f64,
    /// y-component.
    pub y: f64,
    /// z-component (the measured observable direction).
    pub z: f64,
}

impl Vec3 {
    /// Builds a vector from components.
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// The zero vector.
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    /// Euclidean dot product.
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Right-handed cross product `self × other`.
    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    /// Euclidean norm.
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Squared Euclidean norm.
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Componentwise scaling.
    pub fn scale(self, k: f64) -> Vec3 {
        Vec3::new(k * self.x, k * self.y, k * self.z)
    }

    /// The unit vector along `self`, or `None` when the norm is zero.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n == 0.0 {
            None
        } else {
            Some(self.scale(1.0 / n))
        }
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        self.scale(k)
    }
}

/// A rotation axis in spherical form: norm (angular frequency), vertical
/// tilt `θ ∈ [0, π]` from the +z axis, and azimuth `φ ∈ (−π, π]`.
///
/// `norm == 0` is representable (the zero Hamiltonian), but then `theta`
/// and `phi` carry no information; [`AxisPolar::angles_defined`] reports
/// whether the angles are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisPolar {
    /// Rotation angular frequency `‖d‖ ≥ 0` (rad per unit time).
    pub norm: f64,
    /// Vertical tilt from +z, in `[0, π]`.
    pub theta: f64,
    /// Azimuth in `(−π, π]`, measured in the gauge chosen by the caller.
    pub phi: f64,
}

impl AxisPolar {
    /// Builds a polar axis, wrapping `phi` into `(−π, π]`.
    pub fn new(norm: f64, theta: f64, phi: f64) -> Self {
        Self {
            norm,
            theta,
            phi: wrap_angle(phi),
        }
    }

    /// Whether `theta`/`phi` are meaningful (they are not for a zero axis).
    pub fn angles_defined(&self) -> bool {
        self.norm > 0.0
    }
}

/// A 3×3 real matrix in row-major layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    /// The identity matrix.
    pub fn identity() -> Self {
        Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// The zero matrix.
    pub fn zero() -> Self {
        Mat3([[0.0; 3]; 3])
    }

    /// Matrix–vector product.
    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Matrix–matrix product `self · rhs`.
    pub fn mul_mat(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    /// Transpose.
    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    /// Determinant.
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Sum of `self + rhs`.
    pub fn add(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.0[i][j] + rhs.0[i][j];
            }
        }
        Mat3(out)
    }

    /// Scalar multiple.
    pub fn scale(&self, k: f64) -> Mat3 {
        let mut out = self.0;
        for row in &mut out {
            for cell in row {
                *cell *= k;
            }
        }
        Mat3(out)
    }
}

/// The antisymmetric generator `G` of the Bloch equation: `ds/dt = G s`
/// with `G s = s × d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationGenerator(Mat3);

impl RotationGenerator {
    /// The generator as a plain matrix.
    pub fn as_mat3(&self) -> &Mat3 {
        &self.0
    }

    /// Applies the generator to a state: `G s = s × d`.
    pub fn apply(&self, s: Vec3) -> Vec3 {
        self.0.mul_vec(s)
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Composes the effective rotation axis `d = d₀ + Σ f·d_m` for the given
/// control field values.
pub fn compose_axis(d0: Vec3, terms: &[(f64, Vec3)]) -> Vec3 {
    let mut d = d0;
    for &(field, dm) in terms {
        d = d + dm * field;
    }
    d
}

/// Converts a Cartesian axis to spherical form:
/// `norm = ‖d‖`, `theta = arccos(d_z/‖d‖)`, `phi = atan2(d_y, d_x)`.
///
/// A vector on the ±z axis has undefined azimuth; `phi = 0` is returned by
/// convention in that case. Errors with [`BlochError::ZeroAxis`] for `d = 0`.
pub fn axis_to_polar(d: Vec3) -> Result<AxisPolar, BlochError> {
    let norm = d.norm();
    if norm == 0.0 {
        return Err(BlochError::ZeroAxis);
    }
    let theta = (d.z / norm).clamp(-1.0, 1.0).acos();
    let phi = if d.x == 0.0 && d.y == 0.0 {
        0.0
    } else {
        d.y.atan2(d.x)
    };
    Ok(AxisPolar::new(norm, theta, phi))
}

/// Converts a spherical axis back to Cartesian components:
/// `d = ‖d‖ (sin θ cos φ, sin θ sin φ, cos θ)`.
pub fn polar_to_cartesian(a: &AxisPolar) -> Vec3 {
    let (st, ct) = (a.theta.sin(), a.theta.cos());
    let (sp, cp) = (a.phi.sin(), a.phi.cos());
    Vec3::new(a.norm * st * cp, a.norm * st * sp, a.norm * ct)
}

/// Rotates `s0` about `axis` by the angle `alpha` (radians):
///
/// ```text
/// s(α) = s₀ cos α + d̂ (s₀·d̂)(1 − cos α) + (s₀ × d̂) sin α
/// ```
///
/// Norm-preserving to floating-point accuracy. Errors on a zero axis.
pub fn rotate(s0: Vec3, axis: Vec3, alpha: f64) -> Result<Vec3, BlochError> {
    let u = axis.normalized().ok_or(BlochError::ZeroAxis)?;
    let (sa, ca) = (alpha.sin(), alpha.cos());
    Ok(s0 * ca + u * (s0.dot(u) * (1.0 - ca)) + s0.cross(u) * sa)
}

/// The rotation matrix `I cos α + A (1 − cos α) + B sin α` equivalent to
/// [`rotate`]: `A = d̂ d̂ᵀ` and `B s = s × d̂`.
///
/// The result is orthogonal with determinant +1 and satisfies
/// `rotation_matrix(d, ‖d‖t) = exp(generator_matrix(d)·t)`.
pub fn rotation_matrix(axis: Vec3, alpha: f64) -> Result<Mat3, BlochError> {
    let u = axis.normalized().ok_or(BlochError::ZeroAxis)?;
    let (sa, ca) = (alpha.sin(), alpha.cos());
    let outer = Mat3([
        [u.x * u.x, u.x * u.y, u.x * u.z],
        [u.y * u.x, u.y * u.y, u.y * u.z],
        [u.z * u.x, u.z * u.y, u.z * u.z],
    ]);
    let skew = generator_matrix(u).0;
    Ok(Mat3::identity()
        .scale(ca)
        .add(&outer.scale(1.0 - ca))
        .add(&skew.scale(sa)))
}

/// The antisymmetric generator of `ds/dt = s × d`:
///
/// ```text
///       (    0    d_z  −d_y )
/// G  =  (  −d_z    0    d_x )
///       (   d_y  −d_x    0  )
/// ```
///
/// `exp(G t)` applied to `s` equals `rotate(s, d, ‖d‖t)`; this identity is
/// what pins the handedness convention of the whole crate.
pub fn generator_matrix(d: Vec3) -> RotationGenerator {
    RotationGenerator(Mat3([
        [0.0, d.z, -d.y],
        [-d.z, 0.0, d.x],
        [d.y, -d.x, 0.0],
    ]))
}

/// The z-observable after evolving `s₀ = (0,0,1)` by angle `alpha` about an
/// axis with tilt `theta`:
///
/// ```text
/// z(α) = cos α sin²θ + cos²θ
/// ```
///
/// Independent of the azimuth. Minimum `z_min = cos 2θ` at `α = (2n+1)π`.
pub fn z_free(theta: f64, alpha: f64) -> f64 {
    let (st, ct) = (theta.sin(), theta.cos());
    alpha.cos() * st * st + ct * ct
}

/// The z-observable after evolving the equatorial state
/// `s₁ = (cos β, sin β, 0)` by angle `alpha` about an axis with tilt `theta`
/// and azimuth `phi`:
///
/// ```text
/// z(α) = C (1 − cos α) + D sin α,
/// C = ½ sin 2θ cos(φ − β),   D = sin θ sin(φ − β)
/// ```
///
/// These signs hold in the `ds/dt = s × d` convention; the unit tests verify
/// them against [`rotate`] directly.
pub fn z_equatorial(theta: f64, phi: f64, beta: f64, alpha: f64) -> f64 {
    let c = 0.5 * (2.0 * theta).sin() * (phi - beta).cos();
    let d = theta.sin() * (phi - beta).sin();
    c * (1.0 - alpha.cos()) + d * alpha.sin()
}

/// The rotation that carries the pole `(0,0,1)` onto the equator, about a
/// reference axis with tilt `θ_r ∈ [π/4, 3π/4]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquatorialPrep {
    /// Rotation angle about the reference axis, in `(0, 2π)`; satisfies
    /// `cos α_r = (cos 2θ_r + 1)/(cos 2θ_r − 1) = −cot²θ_r`.
    pub alpha_r: f64,
    /// Azimuth of the prepared state: `s₁ = (cos β, sin β, 0)`.
    pub beta: f64,
    /// Pulse duration realizing the rotation: `α_r / ‖d_r‖`.
    pub duration: f64,
}

/// Computes the equatorial preparation for the given reference axis.
///
/// `α_r` comes from the closed form `cos α_r = −cot²θ_r` (taking the branch
/// `α_r ∈ [π/2, π]`); `β` is derived geometrically, by applying [`rotate`]
/// to `(0,0,1)` and reading the azimuth of the result with `atan2`. The
/// geometric route is used because it is, by construction, the azimuth the
/// physical preparation actually produces, and it doubles as a self-check
/// that the prepared state is on the equator.
pub fn equatorial_prep(reference: &AxisPolar) -> Result<EquatorialPrep, BlochError> {
    if reference.norm <= 0.0 {
        return Err(BlochError::ZeroAxis);
    }
    let quarter = std::f64::consts::FRAC_PI_4;
    if !(quarter..=3.0 * quarter).contains(&reference.theta) {
        return Err(BlochError::TiltOutOfRange {
            theta: reference.theta,
        });
    }
    let c2 = (2.0 * reference.theta).cos();
    let cos_alpha_r = ((c2 + 1.0) / (c2 - 1.0)).clamp(-1.0, 1.0);
    let alpha_r = cos_alpha_r.acos();
    let axis = polar_to_cartesian(reference);
    let prepared = rotate(Vec3::new(0.0, 0.0, 1.0), axis, alpha_r)?;
    let beta = wrap_angle(prepared.y.atan2(prepared.x));
    Ok(EquatorialPrep {
        alpha_r,
        beta,
        duration: alpha_r / reference.norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256StarStar;
    use std::f64::consts::PI;

    fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
        assert!(
            (got - want).abs() <= tol,
            "{what}: got {got}, want {want} (tol {tol})"
        );
    }

    fn random_unit(rng: &mut Xoshiro256StarStar) -> Vec3 {
        // Uniform direction: z uniform on [-1,1], azimuth uniform.
        let z = 2.0 * rng.next_f64() - 1.0;
        let phi = 2.0 * PI * rng.next_f64();
        let r = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    }

    fn random_axis(rng: &mut Xoshiro256StarStar) -> Vec3 {
        random_unit(rng) * (0.05 + 2.0 * rng.next_f64())
    }

    const D0: Vec3 = Vec3::new(0.2, 0.0, 0.1);

    #[test]
    fn compose_axis_matches_componentwise_arithmetic() {
        let d2 = Vec3::new(0.2, 0.0, 0.9);
        let d = compose_axis(D0, &[(0.5, d2)]);
        // Exactly the componentwise sums, no reordering or normalization.
        assert_eq!(d, Vec3::new(0.2 + 0.5 * 0.2, 0.0, 0.1 + 0.5 * 0.9));
        assert_close(d.x, 0.3, 1e-15, "composed x");
        assert_close(d.z, 0.55, 1e-15, "composed z");

        // Empty control list returns the drift axis unchanged.
        assert_eq!(compose_axis(D0, &[]), D0);

        let d1 = Vec3::new(1.0, 0.9, 0.1);
        let d = compose_axis(D0, &[(0.5, d1)]);
        assert_eq!(
            d,
            Vec3::new(0.2 + 0.5 * 1.0, 0.5 * 0.9, 0.1 + 0.5 * 0.1)
        );
    }

    #[test]
    fn axis_to_polar_on_known_axes() {
        let p = axis_to_polar(D0).unwrap();
        assert_close(p.norm, 0.22360679774997896, 1e-15, "norm of drift axis");
        assert_close(p.theta, 1.1071487177940904, 1e-12, "theta of drift axis");
        assert_close(p.phi, 0.0, 0.0, "phi of drift axis");

        // +z axis: azimuth undefined, returned as 0 by convention.
        let p = axis_to_polar(Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.norm, p.theta, p.phi), (1.0, 0.0, 0.0));

        let p = axis_to_polar(Vec3::new(0.7, 0.45, 0.15)).unwrap();
        assert_close(p.norm, 0.8455767262643881, 1e-12, "norm of composed axis");
        assert_close(p.theta, 1.3924587941093802, 1e-12, "theta of composed axis");
        assert_close(p.phi, 0.5713374798336268, 1e-12, "phi of composed axis");
    }

    #[test]
    fn axis_to_polar_rejects_zero_axis() {
        assert_eq!(axis_to_polar(Vec3::ZERO), Err(BlochError::ZeroAxis));
        assert!(rotate(Vec3::new(0.0, 0.0, 1.0), Vec3::ZERO, 1.0).is_err());
        assert!(rotation_matrix(Vec3::ZERO, 1.0).is_err());
    }

    #[test]
    fn polar_round_trip_reconstructs_vector() {
        let mut rng = Xoshiro256StarStar::new(11);
        for _ in 0..1000 {
            let d = random_axis(&mut rng);
            let p = axis_to_polar(d).unwrap();
            let back = polar_to_cartesian(&p);
            assert!(
                (back - d).norm() <= 1e-12 * d.norm().max(1.0),
                "round trip failed for {d:?} -> {back:?}"
            );
        }
    }

    #[test]
    fn rotate_fixes_pole_for_z_axis_and_identity_angle() {
        let pole = Vec3::new(0.0, 0.0, 1.0);
        let out = rotate(pole, Vec3::new(0.0, 0.0, 5.0), 1.234).unwrap();
        assert!((out - pole).norm() <= 1e-15);

        let out = rotate(pole, Vec3::new(0.3, -0.2, 0.9), 0.0).unwrap();
        assert!((out - pole).norm() <= 1e-15);
    }

    /// cos α_r = −cot²θ₀ = −1/4 for the bundled drift axis, so rotating the
    /// pole by arccos(−1/4) about it lands exactly on the equator.
    #[test]
    fn rotate_reaches_equator_at_alpha_r() {
        let alpha_r = (-0.25f64).acos();
        assert_close(alpha_r, 1.8234765819369754, 1e-15, "alpha_r");
        let out = rotate(Vec3::new(0.0, 0.0, 1.0), D0, alpha_r).unwrap();
        assert!(out.z.abs() < 1e-9, "prepared z = {}", out.z);
    }

    /// 10⁴ random rotations preserve the state norm to 1e-12.
    #[test]
    fn rotation_preserves_norm() {
        let mut rng = Xoshiro256StarStar::new(21);
        for _ in 0..10_000 {
            let s = random_unit(&mut rng) * rng.next_f64().sqrt();
            let axis = random_axis(&mut rng);
            let alpha = 8.0 * PI * (rng.next_f64() - 0.5);
            let out = rotate(s, axis, alpha).unwrap();
            assert!(
                (out.norm() - s.norm()).abs() < 1e-12,
                "norm drifted: {} -> {}",
                s.norm(),
                out.norm()
            );
        }
    }

    /// Rotating by α₁ then α₂ about the same axis equals rotating by α₁+α₂.
    #[test]
    fn rotation_group_property() {
        let mut rng = Xoshiro256StarStar::new(31);
        for _ in 0..1000 {
            let s = random_unit(&mut rng);
            let axis = random_axis(&mut rng);
            let (a1, a2) = (4.0 * rng.next_f64() - 2.0, 4.0 * rng.next_f64() - 2.0);
            let two_step = rotate(rotate(s, axis, a1).unwrap(), axis, a2).unwrap();
            let one_step = rotate(s, axis, a1 + a2).unwrap();
            assert!(
                (two_step - one_step).norm() < 1e-11,
                "group property violated: {two_step:?} vs {one_step:?}"
            );
        }
    }

    #[test]
    fn rotation_matrix_agrees_with_rotate_and_is_special_orthogonal() {
        let mut rng = Xoshiro256StarStar::new(41);
        for _ in 0..1000 {
            let axis = random_axis(&mut rng);
            let alpha = 8.0 * PI * (rng.next_f64() - 0.5);
            let m = rotation_matrix(axis, alpha).unwrap();
            let s = random_unit(&mut rng);
            assert!((m.mul_vec(s) - rotate(s, axis, alpha).unwrap()).norm() < 1e-12);

            // Orthogonality and unit determinant.
            let should_be_identity = m.mul_mat(&m.transpose());
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((should_be_identity.0[i][j] - want).abs() < 1e-12);
                }
            }
            assert!((m.det() - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            rotation_matrix(Vec3::new(0.4, 0.1, -0.3), 0.0).unwrap(),
            Mat3::identity()
        );
    }

    /// The z-rotation direction: with ds/dt = s × d and d along +z,
    /// (1,0,0) must move toward −y.
    #[test]
    fn z_rotation_handedness() {
        let out = rotate(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), PI / 2.0).unwrap();
        assert!((out - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12, "{out:?}");
    }

    #[test]
    fn generator_matrix_layout_and_antisymmetry() {
        assert_eq!(*generator_matrix(Vec3::ZERO).as_mat3(), Mat3::zero());
        let g = generator_matrix(Vec3::new(1.0, 2.0, 3.0));
        let m = g.as_mat3().0;
        // First row is (0, d_z, −d_y).
        assert_eq!(m[0], [0.0, 3.0, -2.0]);
        // G + Gᵀ = 0 exactly (constructed, not rounded).
        for (i, row) in m.iter().enumerate() {
            for (j, &cell) in row.iter().enumerate() {
                assert_eq!(cell + m[j][i], 0.0);
            }
        }
        // G s = s × d.
        let mut rng = Xoshiro256StarStar::new(51);
        for _ in 0..100 {
            let d = random_axis(&mut rng);
            let s = random_unit(&mut rng);
            let lhs = generator_matrix(d).apply(s);
            let rhs = s.cross(d);
            assert!((lhs - rhs).norm() < 1e-14);
        }
    }

    #[test]
    fn z_free_closed_form() {
        // θ = 0: constant curve.
        for k in 0..10 {
            assert_eq!(z_free(0.0, 0.7 * k as f64), 1.0);
        }
        // Drift-axis tilt at α = π: z_min = cos 2θ = −0.6.
        assert_close(z_free(1.1071487177940904, PI), -0.6, 1e-12, "z_min");
        // Equatorial axis quarter turn.
        assert_close(z_free(PI / 2.0, PI / 2.0), 0.0, 1e-16, "quarter turn");
    }

    /// z_free agrees with direct rotation of the pole for any azimuth, and
    /// attains its minimum cos 2θ exactly at odd multiples of π.
    #[test]
    fn z_free_matches_rotate_and_minimum_location() {
        let mut rng = Xoshiro256StarStar::new(61);
        for _ in 0..1000 {
            let theta = PI * rng.next_f64();
            let phi = 2.0 * PI * (rng.next_f64() - 0.5);
            let alpha = 6.0 * PI * (rng.next_f64() - 0.5);
            let axis = polar_to_cartesian(&AxisPolar::new(1.0, theta, phi));
            let z = rotate(Vec3::new(0.0, 0.0, 1.0), axis, alpha).unwrap().z;
            assert_close(z_free(theta, alpha), z, 1e-12, "z_free vs rotate");
        }
        for n in 0..4 {
            let alpha = (2 * n + 1) as f64 * PI;
            let theta = 0.83;
            assert_close(
                z_free(theta, alpha),
                (2.0 * theta).cos(),
                1e-14,
                "minimum value",
            );
            // Neighbouring angles give strictly larger z.
            assert!(z_free(theta, alpha - 0.05) > z_free(theta, alpha));
            assert!(z_free(theta, alpha + 0.05) > z_free(theta, alpha));
        }
    }

    #[test]
    fn z_equatorial_matches_rotate() {
        // Starts at zero by construction.
        assert_eq!(z_equatorial(0.7, 0.3, -0.9, 0.0), 0.0);

        // Dual-route check over random parameters.
        let mut rng = Xoshiro256StarStar::new(71);
        for _ in 0..1000 {
            let theta = 0.02 + (PI - 0.04) * rng.next_f64();
            let phi = 2.0 * PI * (rng.next_f64() - 0.5);
            let beta = 2.0 * PI * (rng.next_f64() - 0.5);
            let alpha = 4.0 * PI * rng.next_f64();
            let axis = polar_to_cartesian(&AxisPolar::new(1.3, theta, phi));
            let s1 = Vec3::new(beta.cos(), beta.sin(), 0.0);
            let z = rotate(s1, axis, alpha).unwrap().z;
            assert_close(z_equatorial(theta, phi, beta, alpha), z, 1e-12, "dual route");
        }

        // Half-turn value for the composed axis at field 0.5 (tilt as used
        // throughout the docs): z(π) = 2C = sin 2θ cos(φ−β).
        let z = z_equatorial(0.498686, 0.0, -PI / 3.0, PI);
        assert_close(z, 0.42002408311164324, 1e-12, "2C at half turn");
        let axis = polar_to_cartesian(&AxisPolar::new(0.6264982043070835, 0.498686, 0.0));
        let s1 = Vec3::new((-PI / 3.0).cos(), (-PI / 3.0).sin(), 0.0);
        let oracle = rotate(s1, axis, PI).unwrap().z;
        assert_close(z, oracle, 1e-12, "2C against rotate oracle");
    }

    #[test]
    fn equatorial_prep_on_drift_axis() {
        let reference = axis_to_polar(D0).unwrap();
        let prep = equatorial_prep(&reference).unwrap();
        assert_close(prep.alpha_r.cos(), -0.25, 1e-12, "cos alpha_r");
        assert_close(prep.alpha_r, 1.8234765819369754, 1e-12, "alpha_r");
        // Geometric azimuth of the prepared state: +π/3 in this handedness.
        assert_close(prep.beta.abs(), PI / 3.0, 1e-9, "|beta|");
        assert_close(
            prep.duration,
            prep.alpha_r / reference.norm,
            1e-15,
            "duration",
        );
        // The prepared state is equatorial and matches (cos β, sin β, 0).
        let s1 = rotate(Vec3::new(0.0, 0.0, 1.0), D0, prep.alpha_r).unwrap();
        assert!(s1.z.abs() < 1e-9);
        assert!((s1 - Vec3::new(prep.beta.cos(), prep.beta.sin(), 0.0)).norm() < 1e-9);
    }

    #[test]
    fn equatorial_prep_boundary_and_errors() {
        // θ_r = π/2: cos α_r = 0, α_r = π/2, prepared state exactly equatorial.
        let prep = equatorial_prep(&AxisPolar::new(1.0, PI / 2.0, 0.7)).unwrap();
        assert_close(prep.alpha_r, PI / 2.0, 1e-15, "alpha_r at theta=pi/2");

        assert_eq!(
            equatorial_prep(&AxisPolar::new(1.0, 0.1, 0.0)),
            Err(BlochError::TiltOutOfRange { theta: 0.1 })
        );
        assert_eq!(
            equatorial_prep(&AxisPolar::new(0.0, PI / 2.0, 0.0)),
            Err(BlochError::ZeroAxis)
        );
    }

    /// 10³ random in-band reference axes: the prepared state is equatorial
    /// with unit norm, and equals (cos β, sin β, 0) componentwise.
    #[test]
    fn equatorial_prep_correctness_over_random_axes() {
        let mut rng = Xoshiro256StarStar::new(81);
        for _ in 0..1000 {
            let theta = PI / 4.0 + (PI / 2.0) * rng.next_f64();
            let phi = 2.0 * PI * (rng.next_f64() - 0.5);
            let norm = 0.1 + 2.0 * rng.next_f64();
            let reference = AxisPolar::new(norm, theta, phi);
            let prep = equatorial_prep(&reference).unwrap();
            let axis = polar_to_cartesian(&reference);
            let s1 = rotate(Vec3::new(0.0, 0.0, 1.0), axis, prep.alpha_r).unwrap();
            assert!(s1.z.abs() < 1e-9, "off equator: z = {}", s1.z);
            assert!((s1.norm() - 1.0).abs() < 1e-12);
            let expect = Vec3::new(prep.beta.cos(), prep.beta.sin(), 0.0);
            assert!((s1 - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        assert_close(wrap_angle(3.0 * PI), PI, 1e-12, "3π wraps to π");
        assert_close(wrap_angle(-PI), PI, 1e-12, "−π wraps to +π");
        assert_close(wrap_angle(0.3), 0.3, 1e-15, "in-range untouched");
        assert_close(wrap_angle(-0.3 - 4.0 * PI), -0.3, 1e-12, "large negative");
        for k in -6..=6 {
            let a = wrap_angle(0.77 + k as f64 * 2.0 * PI);
            assert_close(a, 0.77, 1e-9, "periodic wrap");
        }
    }
}
