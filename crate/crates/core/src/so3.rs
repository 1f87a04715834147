//! Axis–angle coordinates on SO(3).
//!
//! An [`AxisAngle`] is an unconstrained vector in R³ whose direction is the
//! rotation axis and whose norm is the rotation angle in radians. The
//! exponential map sends it to a proper rotation through Rodrigues' formula,
//! so any value proposed by a sampler yields a valid rotation.

use serde::{Deserialize, Serialize};

use crate::{Mat3, Vec3};

/// Below this angle the Rodrigues coefficients switch to their Taylor forms.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Exponential coordinates of a rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle(pub [f64; 3]);

impl AxisAngle {
    pub const ZERO: AxisAngle = AxisAngle([0.0; 3]);

    pub fn new(a1: f64, a2: f64, a3: f64) -> Self {
        AxisAngle([a1, a2, a3])
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::from(self.0)
    }

    pub fn angle(&self) -> f64 {
        self.as_vec3().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec3> for AxisAngle {
    fn from(v: Vec3) -> Self {
        AxisAngle([v[0], v[1], v[2]])
    }
}

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix that is already known to be a rotation.
    ///
    /// Returns `None` if `RᵀR` deviates from the identity or the determinant
    /// from one by more than `tol`.
    pub fn from_matrix(m: Mat3, tol: f64) -> Option<Self> {
        let r = Rotation(m);
        (r.orthogonality_error() <= tol && (m.determinant() - 1.0).abs() <= tol).then_some(r)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// Max-norm of `RᵀR − I`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).amax()
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// The skew-symmetric matrix `U(a)` with `U(a) v = a × v`.
pub fn skew(a: &AxisAngle) -> Mat3 {
    let [a1, a2, a3] = a.0;
    Mat3::new(
        0.0, -a3, a2, //
        a3, 0.0, -a1, //
        -a2, a1, 0.0,
    )
}

/// Rodrigues coefficients `sin θ / θ` and `(1 − cos θ) / θ²`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        // 1 − cos θ = 2 sin²(θ/2) avoids cancellation for moderate θ.
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / (theta * theta))
    }
}

/// `R(a) = exp(U(a))` evaluated with Rodrigues' formula.
pub fn exp_so3(a: &AxisAngle) -> Rotation {
    let u = skew(a);
    let (s, c) = rodrigues_coefficients(a.angle());
    Rotation(Mat3::identity() + u * s + (u * u) * c)
}

/// Geodesic distance to the identity, `arccos((tr R − 1) / 2)`, in `[0, π]`.
pub fn geodesic_angle(r: &Rotation) -> f64 {
    let c = 0.5 * (r.0.trace() - 1.0);
    c.clamp(-1.0, 1.0).acos()
}

/// Principal logarithm of a rotation, returning `a` with `‖a‖ ∈ [0, π]`.
///
/// Only used for diagnostics and for constructing equivalent parameter
/// states; inference never needs it.
pub fn log_so3(r: &Rotation) -> AxisAngle {
    let m = r.0;
    let vee = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    // atan2 keeps full precision near 0 and π, where arccos of the trace
    // does not.
    let theta = (0.5 * vee.norm()).atan2(0.5 * (m.trace() - 1.0));
    if theta < 1e-6 {
        // R − Rᵀ ≈ 2 U(a) to third order.
        return AxisAngle::from(vee * 0.5);
    }
    if theta < std::f64::consts::FRAC_PI_2 {
        return AxisAngle::from(vee * (theta / (2.0 * theta.sin())));
    }
    // Near π the antisymmetric part vanishes; recover the axis from the
    // symmetric part n nᵀ = ((R + Rᵀ)/2 − cos θ I) / (1 − cos θ).
    let cos = theta.cos();
    let sym = (m + m.transpose()) * 0.5 - Mat3::identity() * cos;
    let outer = sym / (1.0 - cos);
    let k = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vec3 = outer.column(k).into_owned() / outer[(k, k)].max(0.0).sqrt();
    axis /= axis.norm();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    AxisAngle::from(axis * theta)
}
