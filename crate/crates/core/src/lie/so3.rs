//! SO(3) kernels: Rodrigues exponential, a quaternion-based logarithm that is
//! robust over the whole injectivity domain, and the closed-form Jacobians of
//! the exponential map.
//!
//! Rotations are 3×3 matrices acting on column vectors; algebra coordinates
//! are rotation vectors `w` with `hat(w)` skew-symmetric. Closed forms switch
//! to Taylor expansions below [`SMALL_ANGLE`], where the exact expressions
//! lose precision to cancellation; the two branches agree to better than
//! 1e-12 at the switch point (tested).

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Angle below which series expansions replace the closed forms.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Angular distance from π inside which [`log`] refuses to pick a branch.
pub const CUT_LOCUS_TOL: f64 = 1e-9;

/// Skew-symmetric matrix of `w`, so that `hat(w) * x = w × x`.
#[rustfmt::skip]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0,  -w.z,  w.y,
        w.z,   0.0, -w.x,
       -w.y,   w.x,  0.0,
    )
}

/// Inverse of [`hat`]; reads the three independent entries of a skew matrix.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues formula: `exp(hat(w)) = I + sinθ/θ W + (1−cosθ)/θ² W²`.
pub fn exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let wx = hat(w);
    let (a, b) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        // sinθ/θ and (1−cosθ)/θ² to O(θ⁶).
        (
            1.0 - theta2 / 6.0 * (1.0 - theta2 / 20.0),
            0.5 * (1.0 - theta2 / 12.0 * (1.0 - theta2 / 30.0)),
        )
    } else {
        let t = theta2.sqrt();
        (t.sin() / t, (1.0 - t.cos()) / theta2)
    };
    Matrix3::identity() + a * wx + b * (wx * wx)
}

/// Rotation-vector logarithm.
///
/// Goes through the unit quaternion, which is numerically stable for any
/// angle; errors out within [`CUT_LOCUS_TOL`] of π, where the branch choice
/// is ambiguous and would silently corrupt downstream covariance transports.
pub fn log(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let q = q.into_inner();
    // Pick the representative with non-negative scalar part so the angle
    // lands in [0, π].
    let (s, v) = if q.w >= 0.0 { (q.w, q.imag()) } else { (-q.w, -q.imag()) };
    let n = v.norm();
    let angle = 2.0 * n.atan2(s);
    if angle > std::f64::consts::PI - CUT_LOCUS_TOL {
        return Err(Error::CutLocus { angle, tol: CUT_LOCUS_TOL });
    }
    // w = (θ / sin(θ/2)) * v; the small branch expands 2·atan2(n, s)/n.
    let scale = if n < 1e-9 {
        2.0 / s * (1.0 - n * n / (3.0 * s * s))
    } else {
        angle / n
    };
    Ok(scale * v)
}

/// Left Jacobian of the exponential:
/// `J_l(w) = I + (1−cosθ)/θ² W + (θ−sinθ)/θ³ W²`.
///
/// Satisfies `exp(hat(w+ε)) ≈ exp(hat(J_l(w)ε)) · exp(hat(w))` to first order.
pub fn left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let wx = hat(w);
    let (b, c) = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (
            0.5 * (1.0 - theta2 / 12.0 * (1.0 - theta2 / 30.0)),
            (1.0 - theta2 / 20.0 * (1.0 - theta2 / 42.0)) / 6.0,
        )
    } else {
        let t = theta2.sqrt();
        ((1.0 - t.cos()) / theta2, (t - t.sin()) / (theta2 * t))
    };
    Matrix3::identity() + b * wx + c * (wx * wx)
}

/// Closed-form inverse of [`left_jacobian`]:
/// `J_l(w)⁻¹ = I − W/2 + (1/θ² − (1+cosθ)/(2θ sinθ)) W²`.
pub fn left_jacobian_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let wx = hat(w);
    let e = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 / 12.0) * (1.0 + theta2 / 60.0 * (1.0 + theta2 / 42.0))
    } else {
        let t = theta2.sqrt();
        (1.0 - 0.5 * t * t.sin() / (1.0 - t.cos())) / theta2
    };
    Matrix3::identity() - 0.5 * wx + e * (wx * wx)
}
