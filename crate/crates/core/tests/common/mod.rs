//! Helpers shared by the integration-test suites: seeded random group
//! elements, random SPD matrices, finite-difference oracles, and a compact
//! INS model builder. Everything here is deterministic given the seed.

#![allow(dead_code)] // each test binary uses its own subset

use invariant_kf::ins::{ins_measurement_model, ins_system_model, ImuSample, InsState};
use invariant_kf::iekf::{Iekf, MeasurementModel};
use invariant_kf::lie::{AlgebraVector, GroupElement, GroupTag};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Seeded RNG for reproducible property tests.
pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// All four group tags, with a representative Euclidean dimension.
pub fn all_tags() -> Vec<GroupTag> {
    vec![
        GroupTag::So3,
        GroupTag::Se23,
        GroupTag::ProductSe23R6,
        GroupTag::Euclidean(4),
    ]
}

/// Uniform random algebra coordinates in [−scale, scale] per component.
pub fn random_algebra(rng: &mut impl Rng, tag: GroupTag, scale: f64) -> AlgebraVector {
    let coords = DVector::from_fn(tag.algebra_dim(), |_, _| rng.gen_range(-scale..scale));
    AlgebraVector::new(tag, coords).unwrap()
}

/// Random group element, exp of a moderate algebra draw.
pub fn random_element(rng: &mut impl Rng, tag: GroupTag) -> GroupElement {
    random_algebra(rng, tag, 1.0).exp()
}

/// Random m×m SPD matrix `AAᵀ + floor·I`, comfortably conditioned.
pub fn random_spd(rng: &mut impl Rng, m: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(m, m) * floor
}

/// Random vector with entries in [−scale, scale].
pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Central finite difference of `f` at `x`, one column per input direction.
pub fn central_difference(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    step: f64,
) -> DMatrix<f64> {
    let n_out = f(x).len();
    let mut jac = DMatrix::zeros(n_out, x.len());
    for j in 0..x.len() {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[j] += step;
        lo[j] -= step;
        jac.set_column(j, &((f(&hi) - f(&lo)) / (2.0 * step)));
    }
    jac
}

/// Matrix exponential by scaling-and-squaring on the truncated series;
/// an independent oracle for `Ad_{exp(u)} = exp(ad_u)`.
pub fn matrix_exponential(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let norm = a.norm();
    let squarings = norm.log2().ceil().max(0.0) as u32 + 4;
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(m, m);
    let mut sum = DMatrix::identity(m, m);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Gravity used by all INS-based tests.
pub fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

/// An INS filter with mid-grade noise, the workhorse for lemma suites.
pub fn ins_filter() -> Iekf {
    Iekf::new(ins_system_model(0.01, 0.05, 0.001, 0.001, gravity()).unwrap())
}

/// Matching GNSS position model.
pub fn gnss_model(std: f64) -> MeasurementModel {
    ins_measurement_model(std).unwrap()
}

/// Random INS state with bounded attitude, desk-scale kinematics, and
/// realistic bias magnitudes.
pub fn random_ins_state(rng: &mut impl Rng) -> GroupElement {
    let state = InsState {
        attitude: invariant_kf::lie::so3::exp(&Vector3::from_fn(|_, _| {
            rng.gen_range(-1.2..1.2)
        })),
        velocity: Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0)),
        position: Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
        gyro_bias: Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1)),
        accel_bias: Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1)),
    };
    state.to_group()
}

/// Random IMU input near hover: rates within ±0.5 rad/s, specific force
/// within ±1 m/s² of gravity compensation.
pub fn random_imu_input(rng: &mut impl Rng) -> DVector<f64> {
    let sample = ImuSample {
        omega: Vector3::from_fn(|_, _| rng.gen_range(-0.5..0.5)),
        accel: Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            9.81 + rng.gen_range(-1.0..1.0),
        ),
        timestamp: 0.0,
    };
    sample.to_input_vector()
}

/// Frobenius-norm distance between matrices.
pub fn mat_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}
