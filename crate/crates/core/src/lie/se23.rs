//! SE₂(3) kernels: the 5×5 extended-pose group whose elements carry a
//! rotation `R` plus two translational columns, velocity `v` and position `p`:
//!
//! ```text
//!     ⎡ R  v  p ⎤
//! X = ⎢ 0  1  0 ⎥
//!     ⎣ 0  0  1 ⎦
//! ```
//!
//! Algebra coordinates are ordered `(ω, ν, ρ)` — rotation, velocity column,
//! position column — matching the block layout used by every linearisation
//! in the crate.

use nalgebra::{Matrix3, Matrix5, SMatrix, SVector, Vector3};

use crate::error::Result;

use super::so3;

/// Coordinates of an se₂(3) element.
pub type Vector9 = SVector<f64, 9>;
/// Adjoint-sized matrix for SE₂(3).
pub type Matrix9 = SMatrix<f64, 9, 9>;

/// Assembles the 5×5 matrix from its rotation and column parts.
pub fn from_parts(r: &Matrix3<f64>, v: &Vector3<f64>, p: &Vector3<f64>) -> Matrix5<f64> {
    let mut m = Matrix5::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(v);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(p);
    m
}

/// Rotation block.
pub fn rotation(m: &Matrix5<f64>) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

/// Velocity column.
pub fn velocity(m: &Matrix5<f64>) -> Vector3<f64> {
    m.fixed_view::<3, 1>(0, 3).into_owned()
}

/// Position column.
pub fn position(m: &Matrix5<f64>) -> Vector3<f64> {
    m.fixed_view::<3, 1>(0, 4).into_owned()
}

fn split(u: &Vector9) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    (
        u.fixed_rows::<3>(0).into_owned(),
        u.fixed_rows::<3>(3).into_owned(),
        u.fixed_rows::<3>(6).into_owned(),
    )
}

fn join(w: &Vector3<f64>, n: &Vector3<f64>, r: &Vector3<f64>) -> Vector9 {
    let mut u = Vector9::zeros();
    u.fixed_rows_mut::<3>(0).copy_from(w);
    u.fixed_rows_mut::<3>(3).copy_from(n);
    u.fixed_rows_mut::<3>(6).copy_from(r);
    u
}

/// Wedge: coordinates to a 5×5 algebra matrix (skew block plus two columns).
pub fn wedge(u: &Vector9) -> Matrix5<f64> {
    let (w, n, r) = split(u);
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3::hat(&w));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&n);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&r);
    m
}

/// Vee: inverse of [`wedge`].
pub fn vee(m: &Matrix5<f64>) -> Vector9 {
    let w = so3::vee(&m.fixed_view::<3, 3>(0, 0).into_owned());
    join(&w, &velocity(m), &position(m))
}

/// Closed-form exponential: the SO(3) left Jacobian maps both columns.
pub fn exp(u: &Vector9) -> Matrix5<f64> {
    let (w, n, r) = split(u);
    let rot = so3::exp(&w);
    let j = so3::left_jacobian(&w);
    from_parts(&rot, &(j * n), &(j * r))
}

/// Closed-form logarithm; errors at the rotation cut locus.
pub fn log(m: &Matrix5<f64>) -> Result<Vector9> {
    let w = so3::log(&rotation(m))?;
    let ji = so3::left_jacobian_inv(&w);
    Ok(join(&w, &(ji * velocity(m)), &(ji * position(m))))
}

/// Block-analytic inverse (no generic matrix inversion).
pub fn inverse(m: &Matrix5<f64>) -> Matrix5<f64> {
    let rt = rotation(m).transpose();
    from_parts(&rt, &(-rt * velocity(m)), &(-rt * position(m)))
}

/// Adjoint matrix `Ad_X` in `(ω, ν, ρ)` coordinates:
///
/// ```text
///      ⎡  R      0   0 ⎤
/// Ad = ⎢ v^∧ R   R   0 ⎥
///      ⎣ p^∧ R   0   R ⎦
/// ```
pub fn adjoint(m: &Matrix5<f64>) -> Matrix9 {
    let r = rotation(m);
    let mut a = Matrix9::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    a.fixed_view_mut::<3, 3>(6, 6).copy_from(&r);
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(so3::hat(&velocity(m)) * r));
    a.fixed_view_mut::<3, 3>(6, 0).copy_from(&(so3::hat(&position(m)) * r));
    a
}

/// Little adjoint `ad_u` (matrix of the Lie bracket) in the same coordinates:
///
/// ```text
///      ⎡ ω^∧   0    0  ⎤
/// ad = ⎢ ν^∧  ω^∧   0  ⎥
///      ⎣ ρ^∧   0   ω^∧ ⎦
/// ```
pub fn little_adjoint(u: &Vector9) -> Matrix9 {
    let (w, n, r) = split(u);
    let wx = so3::hat(&w);
    let mut a = Matrix9::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&wx);
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&wx);
    a.fixed_view_mut::<3, 3>(6, 6).copy_from(&wx);
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&so3::hat(&n));
    a.fixed_view_mut::<3, 3>(6, 0).copy_from(&so3::hat(&r));
    a
}
