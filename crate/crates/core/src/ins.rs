//! GNSS-aided inertial navigation on the extended-pose-with-bias group.
//!
//! The state is `(R, v, p, b_ω, b_a)`: attitude, world-frame velocity and
//! position, and additive gyro/accelerometer biases. Under a non-rotating,
//! flat-Earth assumption the strapdown dynamics driven by body-frame angular
//! rate `ω` and proper acceleration `a` are
//!
//! ```text
//! Ṙ = R·(ω − b_ω)^∧      v̇ = R·(a − b_a) + g      ṗ = v      ḃ = 0
//! ```
//!
//! which left-trivialise to the algebra element
//! `Λ = (ω − b_ω, (a − b_a) + Rᵀg, Rᵀv, 0₆)` — see [`ins_lambda`]. White
//! gyro/accelerometer noise and bias random walks enter through the constant
//! routing matrix of [`ins_upsilon`]. A GNSS receiver provides the position,
//! which is an invariant measurement for the group action
//! `ρ((R,v,p,b), y) = R·y + p` with reference output zero — see
//! [`ins_measurement_model`].

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::iekf::{MeasurementModel, SystemModel};
use crate::lie::{se23, so3, AlgebraVector, GroupElement, GroupTag};

/// World-frame gravity, `(0, 0, −9.81) m/s²`.
pub fn default_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

/// Navigation state in engineering coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct InsState {
    /// Body-to-world rotation.
    pub attitude: Matrix3<f64>,
    /// World-frame velocity, m/s.
    pub velocity: Vector3<f64>,
    /// World-frame position, m.
    pub position: Vector3<f64>,
    /// Gyroscope bias, rad/s.
    pub gyro_bias: Vector3<f64>,
    /// Accelerometer bias, m/s².
    pub accel_bias: Vector3<f64>,
}

impl InsState {
    /// Identity attitude at the origin with zero velocity and biases.
    pub fn zero() -> Self {
        InsState {
            attitude: Matrix3::identity(),
            velocity: Vector3::zeros(),
            position: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
        }
    }

    /// Packs into the product group element (lossless).
    pub fn to_group(&self) -> GroupElement {
        let mut bias = Vector6::zeros();
        bias.fixed_rows_mut::<3>(0).copy_from(&self.gyro_bias);
        bias.fixed_rows_mut::<3>(3).copy_from(&self.accel_bias);
        GroupElement::ProductSe23R6 {
            pose: se23::from_parts(&self.attitude, &self.velocity, &self.position),
            bias,
        }
    }

    /// Unpacks from the product group element (lossless).
    pub fn from_group(g: &GroupElement) -> Result<InsState> {
        match g {
            GroupElement::ProductSe23R6 { pose, bias } => Ok(InsState {
                attitude: se23::rotation(pose),
                velocity: se23::velocity(pose),
                position: se23::position(pose),
                gyro_bias: bias.fixed_rows::<3>(0).into_owned(),
                accel_bias: bias.fixed_rows::<3>(3).into_owned(),
            }),
            other => Err(Error::GroupMismatch {
                expected: GroupTag::ProductSe23R6.to_string(),
                found: other.tag().to_string(),
            }),
        }
    }
}

/// One IMU reading: body-frame angular rate and proper acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    /// Angular rate, rad/s.
    pub omega: Vector3<f64>,
    /// Proper (specific-force) acceleration, m/s².
    pub accel: Vector3<f64>,
    /// Sample time, s.
    pub timestamp: f64,
}

impl ImuSample {
    /// Stacks `(ω, a)` into the 6-vector the filter's system model takes.
    pub fn to_input_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&[
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.accel.x,
            self.accel.y,
            self.accel.z,
        ])
    }

    /// Rebuilds a sample from the stacked input vector.
    pub fn from_input_vector(u: &DVector<f64>, timestamp: f64) -> Result<ImuSample> {
        if u.len() != 6 {
            return Err(Error::DimensionMismatch {
                expected: 6,
                found: u.len(),
            });
        }
        Ok(ImuSample {
            omega: Vector3::new(u[0], u[1], u[2]),
            accel: Vector3::new(u[3], u[4], u[5]),
            timestamp,
        })
    }
}

/// One GNSS position fix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnssSample {
    /// World-frame position, m.
    pub position: Vector3<f64>,
    /// Sample time, s.
    pub timestamp: f64,
}

/// Body-frame (left-trivialised) dynamics
/// `Λ = (ω − b_ω, (a − b_a) + Rᵀg, Rᵀv, 0₆)`.
pub fn ins_lambda(
    x: &GroupElement,
    u: &ImuSample,
    gravity: &Vector3<f64>,
) -> Result<AlgebraVector> {
    let s = InsState::from_group(x)?;
    let rt = s.attitude.transpose();
    let rot = u.omega - s.gyro_bias;
    let vel = (u.accel - s.accel_bias) + rt * gravity;
    let pos = rt * s.velocity;
    let mut coords = DVector::zeros(15);
    coords.fixed_rows_mut::<3>(0).copy_from(&rot);
    coords.fixed_rows_mut::<3>(3).copy_from(&vel);
    coords.fixed_rows_mut::<3>(6).copy_from(&pos);
    AlgebraVector::new(GroupTag::ProductSe23R6, coords)
}

/// Analytic body-frame linearisation of [`ins_lambda`]: the `15×15` matrix
/// `G` with `Λ(X·exp(ξ), u) ≈ Λ(X, u) + G·ξ`. Independent of the inputs and
/// biases; its nonzero blocks are
///
/// ```text
/// ∂vel/∂ξ_rot = (Rᵀg)^∧    ∂pos/∂ξ_rot = (Rᵀv)^∧    ∂pos/∂ξ_vel = I
/// ∂rot/∂ξ_bg  = −I         ∂vel/∂ξ_ba  = −I
/// ```
pub fn ins_dlambda_dx(x: &GroupElement, gravity: &Vector3<f64>) -> Result<DMatrix<f64>> {
    let s = InsState::from_group(x)?;
    let rt = s.attitude.transpose();
    let mut g = DMatrix::zeros(15, 15);
    g.fixed_view_mut::<3, 3>(3, 0).copy_from(&so3::hat(&(rt * gravity)));
    g.fixed_view_mut::<3, 3>(6, 0).copy_from(&so3::hat(&(rt * s.velocity)));
    g.fixed_view_mut::<3, 3>(6, 3).copy_from(&Matrix3::identity());
    g.fixed_view_mut::<3, 3>(0, 9).copy_from(&(-Matrix3::identity()));
    g.fixed_view_mut::<3, 3>(3, 12).copy_from(&(-Matrix3::identity()));
    Ok(g)
}

/// Noise routing matrix `Υ` (`15×12`): gyro noise → rotation rows, accel
/// noise → velocity rows, random-walk channels → bias rows. Exactly twelve
/// unit entries.
pub fn ins_upsilon() -> DMatrix<f64> {
    let mut u = DMatrix::zeros(15, 12);
    for i in 0..3 {
        u[(i, i)] = 1.0; // gyro → rotation
        u[(3 + i, 3 + i)] = 1.0; // accel → velocity
        u[(9 + i, 6 + i)] = 1.0; // gyro-bias walk
        u[(12 + i, 9 + i)] = 1.0; // accel-bias walk
    }
    u
}

/// Noise power `Q = diag(σ_g²I₃, σ_a²I₃, σ_bg²I₃, σ_ba²I₃)` (`12×12`).
pub fn ins_process_noise(
    sigma_g: f64,
    sigma_a: f64,
    sigma_bg: f64,
    sigma_ba: f64,
) -> Result<DMatrix<f64>> {
    for (name, s) in [
        ("sigma_g", sigma_g),
        ("sigma_a", sigma_a),
        ("sigma_bg", sigma_bg),
        ("sigma_ba", sigma_ba),
    ] {
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {s}"
            )));
        }
    }
    let mut d = DVector::zeros(12);
    for i in 0..3 {
        d[i] = sigma_g * sigma_g;
        d[3 + i] = sigma_a * sigma_a;
        d[6 + i] = sigma_bg * sigma_bg;
        d[9 + i] = sigma_ba * sigma_ba;
    }
    Ok(DMatrix::from_diagonal(&d))
}

/// Builds the process-noise covariance from the four intensities.
pub type ProcessNoiseBuilder = fn(f64, f64, f64, f64) -> Result<DMatrix<f64>>;

/// The noise-injection pair: the routing matrix and a builder for `Q`.
pub fn ins_noise_map() -> (DMatrix<f64>, ProcessNoiseBuilder) {
    (ins_upsilon(), ins_process_noise)
}

/// Complete system model with analytic linearisation wired in.
pub fn ins_system_model(
    sigma_g: f64,
    sigma_a: f64,
    sigma_bg: f64,
    sigma_ba: f64,
    gravity: Vector3<f64>,
) -> Result<SystemModel> {
    let q = ins_process_noise(sigma_g, sigma_a, sigma_bg, sigma_ba)?;
    let g_lambda = gravity;
    let lambda = Box::new(move |x: &GroupElement, u: &DVector<f64>| {
        let sample = ImuSample::from_input_vector(u, 0.0)?;
        ins_lambda(x, &sample, &g_lambda)
    });
    let g_jac = gravity;
    let dlambda =
        Box::new(move |x: &GroupElement, _u: &DVector<f64>| ins_dlambda_dx(x, &g_jac));
    Ok(SystemModel::new(GroupTag::ProductSe23R6, lambda, ins_upsilon(), q)?
        .with_dlambda_dx(dlambda))
}

fn pose_of(x: &GroupElement) -> Result<&nalgebra::Matrix5<f64>> {
    match x {
        GroupElement::Se23(m) => Ok(m),
        GroupElement::ProductSe23R6 { pose, .. } => Ok(pose),
        other => Err(Error::GroupMismatch {
            expected: GroupTag::ProductSe23R6.to_string(),
            found: other.tag().to_string(),
        }),
    }
}

/// GNSS position as an invariant measurement: action `ρ(X, y) = R·y + p`
/// with reference output `ẙ = 0`, noise `r_std²·I₃`, and analytic output
/// and action derivatives.
pub fn ins_measurement_model(r_std: f64) -> Result<MeasurementModel> {
    if r_std <= 0.0 || !r_std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "r_std must be positive, got {r_std}"
        )));
    }
    let rho = Box::new(|x: &GroupElement, y: &DVector<f64>| {
        let pose = pose_of(x)?;
        if y.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: y.len(),
            });
        }
        let yv = Vector3::new(y[0], y[1], y[2]);
        let out = se23::rotation(pose) * yv + se23::position(pose);
        Ok(DVector::from_column_slice(out.as_slice()))
    });
    let model = MeasurementModel::left_invariant(
        rho,
        DVector::zeros(3),
        DMatrix::identity(3, 3) * (r_std * r_std),
    )?;
    // Body-frame output derivative: h(X·exp ξ) = p + R·ξ_pos + O(ξ²), so C
    // carries R in the position block and zeros elsewhere.
    let dh = Box::new(|x: &GroupElement| {
        let pose = pose_of(x)?;
        let m = x.tag().algebra_dim();
        let mut c = DMatrix::zeros(3, m);
        c.fixed_view_mut::<3, 3>(0, 6).copy_from(&se23::rotation(pose));
        Ok(c)
    });
    // The action is affine in y with slope R, so ∂ρ(X,·) is the rotation of
    // its group argument (the reference's transpose when called at X̂⁻¹).
    let drho = Box::new(|x: &GroupElement, _z: &DVector<f64>| {
        let pose = pose_of(x)?;
        Ok(crate::lie::dmat_from(&se23::rotation(pose)))
    });
    Ok(model.with_dh(dh).with_drho_dy(drho))
}

/// Advances an exact (noise-free) state by one zero-order-hold interval:
/// `X ← X·exp(Λ(X, u)·δt)`.
pub fn propagate_truth(
    state: &InsState,
    u: &ImuSample,
    gravity: &Vector3<f64>,
    dt: f64,
) -> Result<InsState> {
    let x = state.to_group();
    let lam = ins_lambda(&x, u, gravity)?;
    InsState::from_group(&x.compose(&lam.scaled(dt).exp())?)
}
