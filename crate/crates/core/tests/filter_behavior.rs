//! Behavioural oracles for the filter itself: closed-form covariance flows,
//! textbook update numbers, exact additivity of static systems, handedness
//! equivalence of the discrete step, first-order decay of the hybrid
//! integration gap, divergence without the covariance-correcting reset, and
//! the guard rails (cut locus, positive definiteness at coarse steps).

mod common;

use common::*;
use invariant_kf::cgd::{equivalence_gap, ConcentratedGaussian, Handedness};
use invariant_kf::iekf::{FilterState, Iekf, MeasurementModel, SystemModel};
use invariant_kf::lie::{AlgebraVector, GroupTag};
use invariant_kf::Error;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

/// Scalar linear system `ẋ = a·x` with noise power `q`, as a 1-dimensional
/// translation group.
fn scalar_system(a: f64, q: f64) -> SystemModel {
    let tag = GroupTag::Euclidean(1);
    SystemModel::new(
        tag,
        Box::new(move |x, _u| AlgebraVector::new(tag, a * x.log()?.coords())),
        DMatrix::identity(1, 1),
        dmatrix![q],
    )
    .unwrap()
    .with_dlambda_dx(Box::new(move |_x, _u| Ok(dmatrix![a])))
}

/// Static system on a given group: zero dynamics, identity noise routing.
fn static_system(tag: GroupTag, q: f64) -> SystemModel {
    let m = tag.algebra_dim();
    SystemModel::new(
        tag,
        Box::new(move |_x, _u| Ok(AlgebraVector::zeros(tag))),
        DMatrix::identity(m, m),
        DMatrix::identity(m, m) * q,
    )
    .unwrap()
    .with_dlambda_dx(Box::new(move |_x, _u| Ok(DMatrix::zeros(m, m))))
}

/// Scalar direct-observation model `y = x + noise` on the translation group.
fn scalar_measurement(r: f64) -> MeasurementModel {
    MeasurementModel::left_invariant(
        Box::new(|g, y| Ok(y + g.log()?.coords())),
        dvector![0.0],
        dmatrix![r],
    )
    .unwrap()
    .with_dh(Box::new(|_x| Ok(dmatrix![1.0])))
    .with_drho_dy(Box::new(|_g, _y| Ok(dmatrix![1.0])))
}

fn scalar_state(x: f64, sigma: f64, handedness: Handedness) -> FilterState {
    let x_ref = AlgebraVector::new(GroupTag::Euclidean(1), dvector![x])
        .unwrap()
        .exp();
    FilterState::new(
        ConcentratedGaussian::centred(handedness, x_ref, dmatrix![sigma]).unwrap(),
        0.0,
    )
}

/// The hybrid predict against the closed-form solution of the scalar
/// covariance ODE `Σ̇ = 2aΣ + q`, namely `Σ(t) = (Σ₀ + q/2a)e^{2at} − q/2a`,
/// with first-order convergence in the sub-step count.
#[test]
fn scalar_covariance_flow_converges_to_the_riccati_closed_form() {
    let (a, q, sigma0, x0, t) = (-0.8, 0.4, 2.0, 1.5, 1.0);
    let iekf = Iekf::new(scalar_system(a, q));
    let u = dvector![];
    let sigma_exact = (sigma0 + q / (2.0 * a)) * (2.0 * a * t).exp() - q / (2.0 * a);
    let mean_exact = x0 * (a * t).exp();

    let run = |n: usize| -> (f64, f64) {
        let s = iekf
            .predict_hybrid(&scalar_state(x0, sigma0, Handedness::Left), &u, t, n)
            .unwrap();
        let mean = s.dist.reference().log().unwrap().coords()[0];
        (
            (s.dist.sigma()[(0, 0)] - sigma_exact).abs(),
            (mean - mean_exact).abs(),
        )
    };
    let (e_cov_100, e_mean_100) = run(100);
    let (e_cov_1000, e_mean_1000) = run(1000);
    assert!(e_cov_1000 <= 2e-3, "covariance error {e_cov_1000:.2e}");
    assert!(e_mean_1000 <= 1e-3, "mean error {e_mean_1000:.2e}");
    let ratio_cov = e_cov_100 / e_cov_1000;
    let ratio_mean = e_mean_100 / e_mean_1000;
    assert!(
        (5.0..=20.0).contains(&ratio_cov),
        "covariance error should decay first order, ratio {ratio_cov:.2}"
    );
    assert!(
        (5.0..=20.0).contains(&ratio_mean),
        "mean error should decay first order, ratio {ratio_mean:.2}"
    );
    // Both handedness coincide exactly on a commutative group.
    let right = iekf
        .predict_hybrid(&scalar_state(x0, sigma0, Handedness::Right), &u, t, 100)
        .unwrap();
    let left = iekf
        .predict_hybrid(&scalar_state(x0, sigma0, Handedness::Left), &u, t, 100)
        .unwrap();
    assert!((left.dist.sigma()[(0, 0)] - right.dist.sigma()[(0, 0)]).abs() <= 1e-15);
}

/// A static system adds exactly `δt·Q` to the covariance and leaves the
/// reference fixed — for every handedness and both prediction modes (the
/// rotation-group adjoint is orthogonal, so the right-handed noise transport
/// is invisible).
#[test]
fn static_rotation_system_accumulates_exactly_identity_noise() {
    let mut r = rng(3101);
    let iekf = Iekf::new(static_system(GroupTag::So3, 1.0));
    let u = dvector![];
    for handedness in [Handedness::Left, Handedness::Right] {
        let x = random_element(&mut r, GroupTag::So3);
        let sigma0 = random_spd(&mut r, 3, 0.2);
        let expected = &sigma0 + DMatrix::identity(3, 3);
        let s = FilterState::new(
            ConcentratedGaussian::centred(handedness, x.clone(), sigma0).unwrap(),
            0.0,
        );
        for predicted in [
            iekf.predict_hybrid(&s, &u, 1.0, 7).unwrap(),
            iekf.predict_discrete(&s, &u, 1.0).unwrap(),
        ] {
            assert!(mat_gap(predicted.dist.sigma(), &expected) <= 1e-12);
            let moved = x
                .inverse()
                .compose(predicted.dist.reference())
                .unwrap()
                .log()
                .unwrap()
                .norm();
            assert!(moved <= 1e-12, "reference must stay put");
        }
    }
}

/// The complete textbook scalar Kalman update, numbers checked by hand:
/// prior `(x̂, Σ) = (3.7, 2.0)`, measurement `y = 5.0` with `R = 0.5` gives
/// gain `0.8`, offset `1.04`, covariance `0.4`, and the reset moves the
/// reference to `4.74` leaving the covariance untouched (flat group).
#[test]
fn scalar_update_and_reset_reproduce_textbook_kalman_numbers() {
    let iekf = Iekf::new(scalar_system(0.0, 1.0));
    let model = scalar_measurement(0.5);
    for handedness in [Handedness::Left, Handedness::Right] {
        let s = scalar_state(3.7, 2.0, handedness);
        let updated = iekf.update(&s, &dvector![5.0], &model).unwrap();
        assert!((updated.dist.mu().coords()[0] - 1.04).abs() <= 1e-12);
        assert!((updated.dist.sigma()[(0, 0)] - 0.4).abs() <= 1e-12);
        let reset = iekf.reset(&updated).unwrap();
        let x_post = reset.dist.reference().log().unwrap().coords()[0];
        assert!((x_post - 4.74).abs() <= 1e-12);
        assert!((reset.dist.sigma()[(0, 0)] - 0.4).abs() <= 1e-12);
        assert!(reset.dist.mu().norm() == 0.0);
    }
}

/// An uninformative measurement (enormous noise) must leave the state
/// essentially untouched; an exact measurement of the reference produces a
/// zero posterior offset.
#[test]
fn degenerate_measurements_behave_as_limits_demand() {
    let mut r = rng(3102);
    let iekf = ins_filter();
    let x = random_ins_state(&mut r);
    let sigma = random_spd(&mut r, 15, 0.1) * 0.05;
    let s = FilterState::new(
        ConcentratedGaussian::centred(Handedness::Left, x.clone(), sigma.clone()).unwrap(),
        0.0,
    );

    let vague = gnss_model(1e6);
    let y = vague.output(&x).unwrap() + dvector![0.3, -0.2, 0.1];
    let updated = iekf.update(&s, &y, &vague).unwrap();
    assert!(updated.dist.mu().norm() <= 1e-9, "gain should vanish");
    assert!(
        mat_gap(updated.dist.sigma(), &sigma) <= 1e-6 * sigma.norm(),
        "covariance should be untouched by an uninformative update"
    );

    let sharp = gnss_model(0.5);
    let y_exact = sharp.output(&x).unwrap();
    let updated = iekf.update(&s, &y_exact, &sharp).unwrap();
    assert!(
        updated.dist.mu().norm() <= 1e-13,
        "zero innovation must produce a zero offset"
    );
}

/// One-shot discrete prediction keeps equivalent distributions equivalent to
/// machine precision, and so does the full predict–update–reset cycle.
#[test]
fn discrete_full_steps_preserve_equivalence_to_1e10() {
    let mut r = rng(3103);
    let iekf = ins_filter();
    let model = gnss_model(0.5);
    for _ in 0..50 {
        let x = random_ins_state(&mut r);
        let u = random_imu_input(&mut r);
        let sigma = random_spd(&mut r, 15, 0.1) * 0.05;
        let left = FilterState::new(
            ConcentratedGaussian::centred(Handedness::Left, x, sigma).unwrap(),
            0.0,
        );
        let right = FilterState::new(left.dist.convert_handedness(), 0.0);

        let pred_l = iekf.predict_discrete(&left, &u, 0.05).unwrap();
        let pred_r = iekf.predict_discrete(&right, &u, 0.05).unwrap();
        let gap = equivalence_gap(&pred_l.dist, &pred_r.dist).unwrap();
        assert!(gap.ref_gap <= 1e-12 && gap.mu_gap <= 1e-12 && gap.airm <= 1e-10);

        let y = model.output(pred_l.dist.reference()).unwrap() + random_vector(&mut r, 3, 1.0);
        let post_l = iekf.reset(&iekf.update(&pred_l, &y, &model).unwrap()).unwrap();
        let post_r = iekf.reset(&iekf.update(&pred_r, &y, &model).unwrap()).unwrap();
        let gap = equivalence_gap(&post_l.dist, &post_r.dist).unwrap();
        assert!(
            gap.ref_gap <= 1e-10 && gap.mu_gap <= 1e-12 && gap.airm <= 1e-8,
            "full-step gap: ref {:.2e}, mu {:.2e}, airm {:.2e}",
            gap.ref_gap,
            gap.mu_gap,
            gap.airm
        );
    }
}

/// The handedness gap introduced by hybrid integration is a discretisation
/// artefact: it shrinks first order in the sub-step count.
#[test]
fn hybrid_equivalence_gap_decays_first_order_in_substeps() {
    let mut r = rng(3104);
    let iekf = ins_filter();
    let x = random_ins_state(&mut r);
    let u = random_imu_input(&mut r);
    let sigma = random_spd(&mut r, 15, 0.1) * 0.05;
    let left = FilterState::new(
        ConcentratedGaussian::centred(Handedness::Left, x, sigma).unwrap(),
        0.0,
    );
    let right = FilterState::new(left.dist.convert_handedness(), 0.0);

    let gap_at = |n: usize| -> f64 {
        let l = iekf.predict_hybrid(&left, &u, 0.2, n).unwrap();
        let g = iekf.predict_hybrid(&right, &u, 0.2, n).unwrap();
        equivalence_gap(&l.dist, &g.dist).unwrap().airm
    };
    let (g1, g10, g100) = (gap_at(1), gap_at(10), gap_at(100));
    assert!(g1 > g10 && g10 > g100, "gap must shrink with refinement");
    let (r1, r2) = (g1 / g10, g10 / g100);
    assert!(
        (4.0..=25.0).contains(&r1) && (4.0..=25.0).contains(&r2),
        "expected roughly tenfold decay per tenfold refinement, got {r1:.2} and {r2:.2}"
    );
}

/// Without the covariance-correcting reset (reference moved, covariance kept)
/// the two handedness conventions genuinely drift apart.
#[test]
fn skipping_the_covariance_correction_breaks_equivalence()
{
    let mut r = rng(3105);
    let iekf = ins_filter();
    let model = gnss_model(0.5);
    let x = random_ins_state(&mut r);
    let u = random_imu_input(&mut r);
    let sigma = random_spd(&mut r, 15, 0.2) * 0.1;
    let mut left = FilterState::new(
        ConcentratedGaussian::centred(Handedness::Left, x, sigma).unwrap(),
        0.0,
    );
    let mut right = FilterState::new(left.dist.convert_handedness(), 0.0);

    for _ in 0..10 {
        left = iekf.predict_hybrid(&left, &u, 0.1, 50).unwrap();
        right = iekf.predict_hybrid(&right, &u, 0.1, 50).unwrap();
        let y = model.output(left.dist.reference()).unwrap() + dvector![1.0, -2.0, 1.5];
        left = iekf
            .move_reference(&iekf.update(&left, &y, &model).unwrap())
            .unwrap();
        right = iekf
            .move_reference(&iekf.update(&right, &y, &model).unwrap())
            .unwrap();
    }
    let gap = equivalence_gap(&left.dist, &right.dist).unwrap();
    assert!(
        gap.airm > 1e-6,
        "dropping the correction should leave a visible covariance gap, got {:.2e}",
        gap.airm
    );
}

/// Coarse sub-stepping on a badly conditioned covariance must still produce
/// a positive-definite prediction (the congruence update guarantees it where
/// a plain rate update would not).
#[test]
fn coarse_substeps_preserve_positive_definiteness() {
    let mut r = rng(3106);
    let iekf = Iekf::new(
        SystemModel::new(
            GroupTag::So3,
            Box::new(|_x, u: &DVector<f64>| {
                AlgebraVector::new(GroupTag::So3, u.clone())
            }),
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3) * 1e-12,
        )
        .unwrap()
        .with_dlambda_dx(Box::new(|_x, _u| Ok(DMatrix::zeros(3, 3)))),
    );
    let u = dvector![2.0, -3.0, 1.5];
    for _ in 0..20 {
        // Eigenvalues spanning ten decades, randomly rotated (the adjoint
        // of a rotation is the rotation itself).
        let basis = random_element(&mut r, GroupTag::So3).adjoint_matrix();
        let sigma =
            &basis * DMatrix::from_diagonal(&dvector![1e-8, 1e-4, 1e2]) * basis.transpose();
        let sigma = invariant_kf::cgd::symmetrize(&sigma);
        let x = random_element(&mut r, GroupTag::So3);
        let s = FilterState::new(
            ConcentratedGaussian::centred(Handedness::Left, x, sigma).unwrap(),
            0.0,
        );
        let predicted = iekf.predict_hybrid(&s, &u, 0.5, 1);
        assert!(
            predicted.is_ok(),
            "single coarse sub-step lost positive definiteness: {predicted:?}"
        );
    }
}

/// Measurement matrices against central finite differences of the maps they
/// linearise: the innovation as a function of the state error (both
/// handedness) and of the measurement noise.
#[test]
fn measurement_matrices_match_finite_differences_of_the_innovation() {
    let mut r = rng(3107);
    let model = gnss_model(0.7);
    let tag = GroupTag::ProductSe23R6;
    for _ in 0..20 {
        let x = random_ins_state(&mut r);
        let x_inv = x.inverse();
        let (c_l, d_l) = Iekf::measurement_matrices(&model, &x, Handedness::Left).unwrap();
        let (c_r, d_r) = Iekf::measurement_matrices(&model, &x, Handedness::Right).unwrap();
        let d_l = d_l.expect("invariant model carries an action Jacobian");
        let d_r = d_r.expect("invariant model carries an action Jacobian");

        let map_left = |v: &DVector<f64>| -> DVector<f64> {
            let shifted = x
                .compose(&AlgebraVector::new(tag, v.clone()).unwrap().exp())
                .unwrap();
            model.action(&x_inv, &model.output(&shifted).unwrap()).unwrap()
        };
        let fd_l = central_difference(&map_left, &DVector::zeros(15), 1e-6);
        assert!(mat_gap(&c_l, &fd_l) <= 1e-5 * (1.0 + c_l.norm()));

        let map_right = |v: &DVector<f64>| -> DVector<f64> {
            let shifted = AlgebraVector::new(tag, v.clone())
                .unwrap()
                .exp()
                .compose(&x)
                .unwrap();
            model.action(&x_inv, &model.output(&shifted).unwrap()).unwrap()
        };
        let fd_r = central_difference(&map_right, &DVector::zeros(15), 1e-6);
        assert!(mat_gap(&c_r, &fd_r) <= 1e-5 * (1.0 + c_r.norm()));
        // Exact structural relation between the two sides.
        assert!(mat_gap(&c_r, &(&c_l * x_inv.adjoint_matrix())) <= 1e-10);

        let y0 = model.output(&x).unwrap();
        let map_noise = |w: &DVector<f64>| -> DVector<f64> {
            model.action(&x_inv, &(&y0 + w)).unwrap()
        };
        let fd_d = central_difference(&map_noise, &DVector::zeros(3), 1e-6);
        assert!(mat_gap(&d_l, &fd_d) <= 1e-9, "action Jacobian vs FD");
        assert!(mat_gap(&d_l, &d_r) <= 1e-15, "D is handedness-independent");
    }
}

/// Resets whose rotational offset reaches the cut locus are rejected rather
/// than silently wrapped onto another branch.
#[test]
fn reset_rejects_offsets_at_the_cut_locus() {
    let mut r = rng(3108);
    let iekf = Iekf::new(static_system(GroupTag::So3, 1.0));
    let x = random_element(&mut r, GroupTag::So3);
    let near_pi = AlgebraVector::new(
        GroupTag::So3,
        dvector![std::f64::consts::PI - 1e-12, 0.0, 0.0],
    )
    .unwrap();
    let s = FilterState::new(
        ConcentratedGaussian::new(Handedness::Left, near_pi, x, DMatrix::identity(3, 3))
            .unwrap(),
        0.0,
    );
    match iekf.reset(&s) {
        Err(Error::CutLocus { .. }) => {}
        other => panic!("expected a cut-locus rejection, got {other:?}"),
    }
}
