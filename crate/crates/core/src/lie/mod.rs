//! Matrix Lie groups used by the filters.
//!
//! Four groups are supported behind one tagged interface:
//!
//! * `SO(3)` — rotations, 3×3 matrices, 3 algebra coordinates.
//! * `SE₂(3)` — extended poses (rotation, velocity, position), 5×5 matrices,
//!   9 coordinates ordered `(ω, ν, ρ)`.
//! * `SE₂(3) × ℝ⁶` — extended pose with an additive 6-vector (IMU biases),
//!   15 coordinates ordered `(ω, ν, ρ, b)`.
//! * `ℝⁿ` — the abelian vector group, for plain linear problems.
//!
//! [`GroupElement`] carries the group value, [`AlgebraVector`] carries
//! algebra coordinates; [`AlgebraVector::exp`] / [`GroupElement::log`] move
//! between them. Adjoints and exponential-map Jacobians come out as dynamic
//! matrices sized `m×m` where `m` is the algebra dimension.

pub mod se23;
pub mod so3;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix5, SMatrix, Vector3, Vector6};

use crate::error::{Error, Result};

use se23::{Matrix9, Vector9};

/// Frobenius tolerance for the group-membership checks in
/// [`GroupElement::validate`].
pub const GROUP_TOL: f64 = 1e-12;

/// Identifies which group a value lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupTag {
    /// Rotations `SO(3)`.
    So3,
    /// Extended poses `SE₂(3)`.
    Se23,
    /// Extended pose with an additive bias vector, `SE₂(3) × ℝ⁶`.
    ProductSe23R6,
    /// The vector group `ℝⁿ` with the given dimension.
    Euclidean(usize),
}

impl GroupTag {
    /// Dimension of the Lie algebra (length of coordinate vectors).
    pub fn algebra_dim(&self) -> usize {
        match self {
            GroupTag::So3 => 3,
            GroupTag::Se23 => 9,
            GroupTag::ProductSe23R6 => 15,
            GroupTag::Euclidean(n) => *n,
        }
    }
}

impl std::fmt::Display for GroupTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupTag::So3 => write!(f, "SO(3)"),
            GroupTag::Se23 => write!(f, "SE2(3)"),
            GroupTag::ProductSe23R6 => write!(f, "SE2(3)xR6"),
            GroupTag::Euclidean(n) => write!(f, "R^{n}"),
        }
    }
}

/// An element of one of the supported groups.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupElement {
    /// 3×3 rotation matrix.
    So3(Matrix3<f64>),
    /// 5×5 extended pose.
    Se23(Matrix5<f64>),
    /// Extended pose plus additive bias vector.
    ProductSe23R6 {
        /// 5×5 extended-pose factor.
        pose: Matrix5<f64>,
        /// Additive ℝ⁶ factor.
        bias: Vector6<f64>,
    },
    /// Plain vector in ℝⁿ (the group operation is addition).
    Euclidean(DVector<f64>),
}

impl GroupElement {
    /// Identity element of the tagged group.
    pub fn identity(tag: GroupTag) -> Self {
        match tag {
            GroupTag::So3 => GroupElement::So3(Matrix3::identity()),
            GroupTag::Se23 => GroupElement::Se23(Matrix5::identity()),
            GroupTag::ProductSe23R6 => GroupElement::ProductSe23R6 {
                pose: Matrix5::identity(),
                bias: Vector6::zeros(),
            },
            GroupTag::Euclidean(n) => GroupElement::Euclidean(DVector::zeros(n)),
        }
    }

    /// Which group this element belongs to.
    pub fn tag(&self) -> GroupTag {
        match self {
            GroupElement::So3(_) => GroupTag::So3,
            GroupElement::Se23(_) => GroupTag::Se23,
            GroupElement::ProductSe23R6 { .. } => GroupTag::ProductSe23R6,
            GroupElement::Euclidean(x) => GroupTag::Euclidean(x.len()),
        }
    }

    fn check_same_group(&self, other: &GroupElement) -> Result<()> {
        if self.tag() == other.tag() {
            Ok(())
        } else {
            Err(Error::GroupMismatch {
                expected: self.tag().to_string(),
                found: other.tag().to_string(),
            })
        }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        self.check_same_group(other)?;
        Ok(match (self, other) {
            (GroupElement::So3(a), GroupElement::So3(b)) => GroupElement::So3(a * b),
            (GroupElement::Se23(a), GroupElement::Se23(b)) => GroupElement::Se23(a * b),
            (
                GroupElement::ProductSe23R6 { pose: pa, bias: ba },
                GroupElement::ProductSe23R6 { pose: pb, bias: bb },
            ) => GroupElement::ProductSe23R6 {
                pose: pa * pb,
                bias: ba + bb,
            },
            (GroupElement::Euclidean(a), GroupElement::Euclidean(b)) => {
                GroupElement::Euclidean(a + b)
            }
            _ => unreachable!("tags already checked"),
        })
    }

    /// Group inverse, computed block-analytically (transpose for rotations,
    /// negation for vector parts) rather than by generic matrix inversion.
    pub fn inverse(&self) -> GroupElement {
        match self {
            GroupElement::So3(r) => GroupElement::So3(r.transpose()),
            GroupElement::Se23(m) => GroupElement::Se23(se23::inverse(m)),
            GroupElement::ProductSe23R6 { pose, bias } => GroupElement::ProductSe23R6 {
                pose: se23::inverse(pose),
                bias: -bias,
            },
            GroupElement::Euclidean(x) => GroupElement::Euclidean(-x),
        }
    }

    /// Logarithm map; errors when the rotation part is at the cut locus.
    pub fn log(&self) -> Result<AlgebraVector> {
        let coords = match self {
            GroupElement::So3(r) => dvec_from(&so3::log(r)?),
            GroupElement::Se23(m) => dvec_from(&se23::log(m)?),
            GroupElement::ProductSe23R6 { pose, bias } => {
                let mut u = DVector::zeros(15);
                u.rows_mut(0, 9).copy_from(&se23::log(pose)?);
                u.rows_mut(9, 6).copy_from(bias);
                u
            }
            GroupElement::Euclidean(x) => x.clone(),
        };
        Ok(AlgebraVector {
            tag: self.tag(),
            coords,
        })
    }

    /// Adjoint matrix `Ad_g^∨`, satisfying
    /// `adjoint_matrix(g)·u = vee(g · wedge(u) · g⁻¹)`.
    pub fn adjoint_matrix(&self) -> DMatrix<f64> {
        match self {
            GroupElement::So3(r) => dmat_from(r),
            GroupElement::Se23(m) => dmat_from(&se23::adjoint(m)),
            GroupElement::ProductSe23R6 { pose, .. } => {
                // The bias factor is abelian: conjugation acts trivially there.
                block_diag_15(&se23::adjoint(pose), &Matrix6::identity())
            }
            GroupElement::Euclidean(x) => DMatrix::identity(x.len(), x.len()),
        }
    }

    /// Checks the defining matrix-group invariants to [`GROUP_TOL`].
    pub fn validate(&self) -> Result<()> {
        fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
            if !r.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "rotation matrix",
                });
            }
            let ortho = (r.transpose() * r - Matrix3::identity()).norm();
            if ortho > GROUP_TOL || (r.determinant() - 1.0).abs() > GROUP_TOL {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not a rotation (orthogonality defect {ortho:.2e})"
                )));
            }
            Ok(())
        }
        fn check_pose(m: &Matrix5<f64>) -> Result<()> {
            check_rotation(&se23::rotation(m))?;
            if !m.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "pose matrix",
                });
            }
            let bottom = m.fixed_view::<2, 5>(3, 0);
            let expected = Matrix5::<f64>::identity().fixed_view::<2, 5>(3, 0).into_owned();
            if (bottom - expected).norm() > GROUP_TOL {
                return Err(Error::InvalidArgument(
                    "pose matrix has non-identity bottom rows".into(),
                ));
            }
            Ok(())
        }
        match self {
            GroupElement::So3(r) => check_rotation(r),
            GroupElement::Se23(m) => check_pose(m),
            GroupElement::ProductSe23R6 { pose, bias } => {
                check_pose(pose)?;
                if bias.iter().all(|x| x.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFinite { context: "bias vector" })
                }
            }
            GroupElement::Euclidean(x) => {
                if x.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFinite { context: "euclidean element" })
                }
            }
        }
    }

    /// Projects the rotation block back onto the orthogonal manifold.
    ///
    /// Long chains of group products (hundreds of thousands of sub-steps in
    /// an integration loop) let rounding error random-walk the rotation away
    /// from orthogonality until [`validate`](Self::validate) rejects it. One
    /// Newton step towards the polar factor, `R ← R(3I − RᵀR)/2`, restores
    /// the defect to machine precision whenever it is small, which is the
    /// only regime drift can produce. Vector parts carry no constraint and
    /// are left untouched.
    pub fn renormalized(&self) -> GroupElement {
        fn reproject(r: &Matrix3<f64>) -> Matrix3<f64> {
            r * (Matrix3::identity() * 3.0 - r.transpose() * r) * 0.5
        }
        fn reproject_pose(m: &Matrix5<f64>) -> Matrix5<f64> {
            let mut out = *m;
            out.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&reproject(&se23::rotation(m)));
            out
        }
        match self {
            GroupElement::So3(r) => GroupElement::So3(reproject(r)),
            GroupElement::Se23(m) => GroupElement::Se23(reproject_pose(m)),
            GroupElement::ProductSe23R6 { pose, bias } => GroupElement::ProductSe23R6 {
                pose: reproject_pose(pose),
                bias: *bias,
            },
            GroupElement::Euclidean(_) => self.clone(),
        }
    }
}

/// Coordinates of a Lie-algebra element, tagged with its group.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraVector {
    tag: GroupTag,
    coords: DVector<f64>,
}

/// Matrix form of an algebra element, produced by [`AlgebraVector::wedge`].
#[derive(Clone, Debug, PartialEq)]
pub enum WedgeRepr {
    /// Skew-symmetric 3×3.
    So3(Matrix3<f64>),
    /// 5×5 with skew block and two columns.
    Se23(Matrix5<f64>),
    /// Pose part as 5×5, bias part kept as a vector (the factor is abelian).
    ProductSe23R6 {
        /// Matrix form of the pose coordinates.
        pose: Matrix5<f64>,
        /// Bias coordinates (their matrix form is themselves).
        bias: Vector6<f64>,
    },
    /// Vector form is already the algebra representation.
    Euclidean(DVector<f64>),
}

impl WedgeRepr {
    /// Inverse of [`AlgebraVector::wedge`]; exact coordinate bookkeeping.
    pub fn vee(&self) -> AlgebraVector {
        match self {
            WedgeRepr::So3(m) => AlgebraVector {
                tag: GroupTag::So3,
                coords: dvec_from(&so3::vee(m)),
            },
            WedgeRepr::Se23(m) => AlgebraVector {
                tag: GroupTag::Se23,
                coords: dvec_from(&se23::vee(m)),
            },
            WedgeRepr::ProductSe23R6 { pose, bias } => {
                let mut u = DVector::zeros(15);
                u.rows_mut(0, 9).copy_from(&se23::vee(pose));
                u.rows_mut(9, 6).copy_from(bias);
                AlgebraVector {
                    tag: GroupTag::ProductSe23R6,
                    coords: u,
                }
            }
            WedgeRepr::Euclidean(x) => AlgebraVector {
                tag: GroupTag::Euclidean(x.len()),
                coords: x.clone(),
            },
        }
    }
}

impl AlgebraVector {
    /// Wraps coordinates for the tagged group, checking the length.
    pub fn new(tag: GroupTag, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != tag.algebra_dim() {
            return Err(Error::DimensionMismatch {
                expected: tag.algebra_dim(),
                found: coords.len(),
            });
        }
        Ok(AlgebraVector { tag, coords })
    }

    /// The zero element of the tagged algebra.
    pub fn zeros(tag: GroupTag) -> Self {
        AlgebraVector {
            tag,
            coords: DVector::zeros(tag.algebra_dim()),
        }
    }

    /// Group tag.
    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    /// Coordinate vector.
    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Euclidean norm of the coordinates.
    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    /// Coordinates multiplied by a scalar.
    pub fn scaled(&self, s: f64) -> Self {
        AlgebraVector {
            tag: self.tag,
            coords: &self.coords * s,
        }
    }

    /// Exponential map onto the group.
    pub fn exp(&self) -> GroupElement {
        match self.tag {
            GroupTag::So3 => GroupElement::So3(so3::exp(&self.rot3())),
            GroupTag::Se23 => GroupElement::Se23(se23::exp(&self.pose9())),
            GroupTag::ProductSe23R6 => GroupElement::ProductSe23R6 {
                pose: se23::exp(&self.pose9()),
                bias: self.bias6(),
            },
            GroupTag::Euclidean(_) => GroupElement::Euclidean(self.coords.clone()),
        }
    }

    /// Matrix (wedge) form of the coordinates.
    pub fn wedge(&self) -> WedgeRepr {
        match self.tag {
            GroupTag::So3 => WedgeRepr::So3(so3::hat(&self.rot3())),
            GroupTag::Se23 => WedgeRepr::Se23(se23::wedge(&self.pose9())),
            GroupTag::ProductSe23R6 => WedgeRepr::ProductSe23R6 {
                pose: se23::wedge(&self.pose9()),
                bias: self.bias6(),
            },
            GroupTag::Euclidean(_) => WedgeRepr::Euclidean(self.coords.clone()),
        }
    }

    /// Bracket matrix `ad_u^∨` with `ad_u^∨·v = vee([wedge(u), wedge(v)])`.
    pub fn little_adjoint(&self) -> DMatrix<f64> {
        match self.tag {
            GroupTag::So3 => dmat_from(&so3::hat(&self.rot3())),
            GroupTag::Se23 => dmat_from(&se23::little_adjoint(&self.pose9())),
            // The abelian factor brackets to zero.
            GroupTag::ProductSe23R6 => {
                block_diag_15(&se23::little_adjoint(&self.pose9()), &Matrix6::zeros())
            }
            GroupTag::Euclidean(n) => DMatrix::zeros(n, n),
        }
    }

    /// Left-trivialised derivative of `exp` at these coordinates: for small
    /// `ε`, `exp(μ + ε) ≈ exp(μ) · exp(J_L ε)`.
    pub fn exp_jacobian_left(&self) -> DMatrix<f64> {
        match self.tag {
            GroupTag::So3 => dmat_from(&so3::left_jacobian(&-self.rot3())),
            _ => jacobian_series(&self.little_adjoint(), -1.0),
        }
    }

    /// Right-trivialised derivative of `exp`: for small `ε`,
    /// `exp(μ + ε) ≈ exp(J_R ε) · exp(μ)`.
    pub fn exp_jacobian_right(&self) -> DMatrix<f64> {
        match self.tag {
            GroupTag::So3 => dmat_from(&so3::left_jacobian(&self.rot3())),
            _ => jacobian_series(&self.little_adjoint(), 1.0),
        }
    }

    fn rot3(&self) -> Vector3<f64> {
        Vector3::new(self.coords[0], self.coords[1], self.coords[2])
    }

    fn pose9(&self) -> Vector9 {
        Vector9::from_column_slice(&self.coords.as_slice()[..9])
    }

    fn bias6(&self) -> Vector6<f64> {
        Vector6::from_column_slice(&self.coords.as_slice()[9..15])
    }
}

type Matrix6 = SMatrix<f64, 6, 6>;

/// Copies a static nalgebra matrix into a dynamically sized one.
pub fn dmat_from<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Copies a static nalgebra vector into a dynamically sized one.
pub fn dvec_from<const R: usize>(v: &nalgebra::SVector<f64, R>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn block_diag_15(a: &Matrix9, b: &Matrix6) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(15, 15);
    m.view_mut((0, 0), (9, 9)).copy_from(a);
    m.view_mut((9, 9), (6, 6)).copy_from(b);
    m
}

/// Maximum number of terms in the exponential-Jacobian series. The series is
/// factorially convergent, so this is a safety stop, not an accuracy knob.
const JACOBIAN_MAX_TERMS: usize = 120;

/// Evaluates `Σ_{k≥0} signᵏ/(k+1)! · adᵏ`, truncating once a term's norm
/// drops below 1e-14.
fn jacobian_series(ad: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    let m = ad.nrows();
    let mut total = DMatrix::identity(m, m);
    let mut term = DMatrix::identity(m, m);
    for k in 1..=JACOBIAN_MAX_TERMS {
        term = (&term * ad) * (sign / (k as f64 + 1.0));
        total += &term;
        if term.norm() < 1e-14 {
            break;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn all_tags() -> Vec<GroupTag> {
        vec![
            GroupTag::So3,
            GroupTag::Se23,
            GroupTag::ProductSe23R6,
            GroupTag::Euclidean(4),
        ]
    }

    fn random_algebra(rng: &mut impl Rng, tag: GroupTag, scale: f64) -> AlgebraVector {
        let coords =
            DVector::from_fn(tag.algebra_dim(), |_, _| rng.gen_range(-scale..scale));
        AlgebraVector::new(tag, coords).unwrap()
    }

    fn random_element(rng: &mut impl Rng, tag: GroupTag) -> GroupElement {
        random_algebra(rng, tag, 1.0).exp()
    }

    #[test]
    fn identity_and_inverse_laws() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for tag in all_tags() {
            let g = random_element(&mut rng, tag);
            let id = GroupElement::identity(tag);
            assert_eq!(id.compose(&g).unwrap(), g);
            let gi = g.compose(&g.inverse()).unwrap();
            match (gi, id) {
                (GroupElement::Euclidean(a), GroupElement::Euclidean(b)) => {
                    assert_relative_eq!(a, b, epsilon = 1e-12)
                }
                (GroupElement::So3(a), GroupElement::So3(b)) => {
                    assert_relative_eq!(a, b, epsilon = 1e-12)
                }
                (GroupElement::Se23(a), GroupElement::Se23(b)) => {
                    assert_relative_eq!(a, b, epsilon = 1e-12)
                }
                (
                    GroupElement::ProductSe23R6 { pose: a, bias: ab },
                    GroupElement::ProductSe23R6 { pose: b, bias: bb },
                ) => {
                    assert_relative_eq!(a, b, epsilon = 1e-12);
                    assert_relative_eq!(ab, bb, epsilon = 1e-12);
                }
                _ => panic!("tag mismatch"),
            }
        }
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for tag in all_tags() {
            for _ in 0..20 {
                let (a, b, c) = (
                    random_element(&mut rng, tag),
                    random_element(&mut rng, tag),
                    random_element(&mut rng, tag),
                );
                let left = a.compose(&b).unwrap().compose(&c).unwrap();
                let right = a.compose(&b.compose(&c).unwrap()).unwrap();
                let gap = left
                    .compose(&right.inverse())
                    .unwrap()
                    .log()
                    .unwrap()
                    .norm();
                assert!(gap < 1e-12, "associativity defect {gap:.2e} on {tag}");
            }
        }
    }

    #[test]
    fn compose_rejects_mixed_groups() {
        let a = GroupElement::identity(GroupTag::So3);
        let b = GroupElement::identity(GroupTag::Se23);
        assert!(matches!(
            a.compose(&b),
            Err(Error::GroupMismatch { .. })
        ));
        let c = GroupElement::identity(GroupTag::Euclidean(3));
        let d = GroupElement::identity(GroupTag::Euclidean(4));
        assert!(c.compose(&d).is_err());
    }

    #[test]
    fn wedge_vee_roundtrips_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for tag in all_tags() {
            let u = random_algebra(&mut rng, tag, 2.0);
            assert_eq!(u.wedge().vee(), u);
        }
    }

    #[test]
    fn renormalisation_restores_drifted_rotations() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for tag in [GroupTag::So3, GroupTag::Se23, GroupTag::ProductSe23R6] {
            let clean = random_element(&mut rng, tag);
            // Inject the kind of defect long composition chains accumulate:
            // a random absolute perturbation of the rotation entries just
            // above the validity tolerance.
            let mut drifted = clean.clone();
            let delta = Matrix3::from_fn(|_, _| 1e-11 * rng.gen_range(-1.0..1.0_f64));
            match &mut drifted {
                GroupElement::So3(r) => *r += delta,
                GroupElement::Se23(m) => {
                    let mut block = m.fixed_view_mut::<3, 3>(0, 0);
                    block += delta;
                }
                GroupElement::ProductSe23R6 { pose, .. } => {
                    let mut block = pose.fixed_view_mut::<3, 3>(0, 0);
                    block += delta;
                }
                GroupElement::Euclidean(_) => unreachable!(),
            }
            assert!(drifted.validate().is_err(), "defect not injected on {tag}");
            let fixed = drifted.renormalized();
            fixed.validate().unwrap();
            // The projection must not move the element materially.
            let gap = clean.inverse().compose(&fixed).unwrap().log().unwrap();
            assert!(gap.coords().norm() < 1e-9, "projection moved {tag} too far");
        }
        // Euclidean elements carry no constraint; renormalisation is the identity.
        let e = GroupElement::Euclidean(DVector::from_vec(vec![1.0, -2.0]));
        assert_eq!(e.renormalized(), e);
    }

    #[test]
    fn exp_log_roundtrips() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for tag in all_tags() {
            for _ in 0..20 {
                let u = random_algebra(&mut rng, tag, 0.9);
                let back = u.exp().log().unwrap();
                assert!(
                    (back.coords() - u.coords()).norm() <= 1e-10,
                    "roundtrip failed on {tag}"
                );
            }
        }
    }

    #[test]
    fn adjoint_is_homomorphism_and_matches_conjugation() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for tag in all_tags() {
            let g = random_element(&mut rng, tag);
            let h = random_element(&mut rng, tag);
            let prod = g.compose(&h).unwrap();
            let defect = (prod.adjoint_matrix() - g.adjoint_matrix() * h.adjoint_matrix()).norm();
            assert!(defect <= 1e-10, "Ad homomorphism defect {defect:.2e} on {tag}");

            // Ad matches conjugation through exp/log at first order in t.
            let u = random_algebra(&mut rng, tag, 1.0);
            let t = 1e-7;
            let conj = g
                .compose(&u.scaled(t).exp())
                .unwrap()
                .compose(&g.inverse())
                .unwrap()
                .log()
                .unwrap();
            let lin = g.adjoint_matrix() * u.coords() * t;
            assert!((conj.coords() - &lin).norm() <= 1e-10 * (1.0 + lin.norm()));
        }
    }

    #[test]
    fn adjoint_of_exp_matches_exponential_of_little_adjoint() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for tag in all_tags() {
            let u = random_algebra(&mut rng, tag, 0.8);
            // Truncated series oracle for the matrix exponential of ad_u.
            let ad = u.little_adjoint();
            let m = ad.nrows();
            let mut series = DMatrix::identity(m, m);
            let mut term = DMatrix::identity(m, m);
            for k in 1..40 {
                term = (&term * &ad) / (k as f64);
                series += &term;
            }
            assert!((u.exp().adjoint_matrix() - series).norm() <= 1e-8);
        }
    }

    #[test]
    fn little_adjoint_is_derivative_of_adjoint() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for tag in all_tags() {
            let u = random_algebra(&mut rng, tag, 1.0);
            let t = 1e-6;
            let fd =
                (u.scaled(t).exp().adjoint_matrix() - u.scaled(-t).exp().adjoint_matrix())
                    / (2.0 * t);
            assert!((fd - u.little_adjoint()).norm() <= 1e-6);
        }
    }

    #[test]
    fn exp_jacobians_satisfy_first_order_property() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for tag in all_tags() {
            let mu = random_algebra(&mut rng, tag, 0.8);
            let jl = mu.exp_jacobian_left();
            let jr = mu.exp_jacobian_right();
            let x = mu.exp();
            let eps = 1e-5;
            for i in 0..tag.algebra_dim() {
                let mut e = DVector::zeros(tag.algebra_dim());
                e[i] = eps;
                let moved = AlgebraVector::new(tag, mu.coords() + &e).unwrap().exp();
                // Left: exp(μ+ε) ≈ exp(μ)·exp(J_L ε).
                let dl = x.inverse().compose(&moved).unwrap().log().unwrap();
                assert!((dl.coords() - &jl * &e).norm() <= 1e-8, "left on {tag}");
                // Right: exp(μ+ε) ≈ exp(J_R ε)·exp(μ).
                let dr = moved.compose(&x.inverse()).unwrap().log().unwrap();
                assert!((dr.coords() - &jr * &e).norm() <= 1e-8, "right on {tag}");
            }
        }
    }

    #[test]
    fn exp_jacobian_relations() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for tag in all_tags() {
            let mu = random_algebra(&mut rng, tag, 0.9);
            // J_R(μ) = Ad_{exp(μ)} · J_L(μ).
            let lhs = mu.exp_jacobian_right();
            let rhs = mu.exp().adjoint_matrix() * mu.exp_jacobian_left();
            assert!((lhs.clone() - rhs).norm() <= 1e-10, "Ad relation on {tag}");
            // J_L(−μ) = J_R(μ).
            let sym = mu.scaled(-1.0).exp_jacobian_left();
            assert!((lhs - sym).norm() <= 1e-10, "symmetry on {tag}");
        }
    }

    #[test]
    fn jacobians_at_zero_are_identity() {
        for tag in all_tags() {
            let z = AlgebraVector::zeros(tag);
            let m = tag.algebra_dim();
            assert_relative_eq!(z.exp_jacobian_left(), DMatrix::identity(m, m), epsilon = 1e-15);
            assert_relative_eq!(z.exp_jacobian_right(), DMatrix::identity(m, m), epsilon = 1e-15);
        }
    }

    #[test]
    fn product_jacobians_are_identity_on_bias_block() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mu = random_algebra(&mut rng, GroupTag::ProductSe23R6, 0.8);
        for j in [mu.exp_jacobian_left(), mu.exp_jacobian_right()] {
            assert_relative_eq!(
                j.view((9, 9), (6, 6)).into_owned(),
                DMatrix::identity(6, 6),
                epsilon = 1e-14
            );
            assert!(j.view((9, 0), (6, 9)).norm() < 1e-14);
            assert!(j.view((0, 9), (9, 6)).norm() < 1e-14);
        }
    }

    #[test]
    fn algebra_vector_checks_dimension() {
        assert!(AlgebraVector::new(GroupTag::So3, DVector::zeros(4)).is_err());
        assert!(AlgebraVector::new(GroupTag::Euclidean(4), DVector::zeros(4)).is_ok());
    }

    #[test]
    fn validate_accepts_group_members_and_rejects_corruption() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for tag in all_tags() {
            random_element(&mut rng, tag).validate().unwrap();
        }
        let mut bad = Matrix3::identity();
        bad[(0, 0)] = 1.5;
        assert!(GroupElement::So3(bad).validate().is_err());
        let mut pose = Matrix5::identity();
        pose[(4, 0)] = 0.1;
        assert!(GroupElement::Se23(pose).validate().is_err());
    }
}
