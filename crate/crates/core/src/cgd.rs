//! Concentrated Gaussian distributions on a matrix Lie group.
//!
//! A concentrated Gaussian is the pushforward of a Gaussian on the Lie
//! algebra through the exponential map, anchored at a reference group element
//! `X̂`. The algebra-valued error can sit on either side of the reference:
//!
//! * **Left**:  `g = X̂ · exp(ε)`, `ε ~ N(μ, Σ)` — body-frame error.
//! * **Right**: `g = exp(ε) · X̂`, `ε ~ N(μ, Σ)` — world-frame error.
//!
//! The two parameterisations describe the *same* family of densities: moving
//! `(μ, Σ)` through the adjoint of the reference swaps handedness without
//! changing the distribution (see [`ConcentratedGaussian::convert_handedness`]
//! and the log-likelihood preservation tests). [`equivalence_gap`] quantifies
//! how far two distributions of opposite handedness are from being the same
//! density, which is the central diagnostic of this crate's filter pair.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement};

/// Side of the reference on which the algebra-valued error sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Handedness {
    /// Error composed on the right of the reference: `g = X̂·exp(ε)`.
    Left,
    /// Error composed on the left of the reference: `g = exp(ε)·X̂`.
    Right,
}

impl Handedness {
    /// The opposite handedness.
    pub fn flipped(self) -> Handedness {
        match self {
            Handedness::Left => Handedness::Right,
            Handedness::Right => Handedness::Left,
        }
    }
}

impl std::fmt::Display for Handedness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Handedness::Left => write!(f, "left"),
            Handedness::Right => write!(f, "right"),
        }
    }
}

/// Symmetry tolerance for covariance inputs.
const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalue floor used when forming inverse square roots and matrix logs
/// of covariances; guards near-singular matrices after tight updates.
const EIGENVALUE_FLOOR: f64 = 1e-14;

/// A Gaussian on the Lie algebra pushed onto the group at a reference point.
#[derive(Clone, Debug)]
pub struct ConcentratedGaussian {
    handedness: Handedness,
    mu: AlgebraVector,
    reference: GroupElement,
    sigma: DMatrix<f64>,
}

/// Checks symmetry and positive-definiteness, returning the Cholesky factor.
fn spd_cholesky(sigma: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !sigma.is_square() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            found: sigma.ncols(),
        });
    }
    if (sigma - sigma.transpose()).norm() > SYMMETRY_TOL * (1.0 + sigma.norm()) {
        return Err(Error::NotPositiveDefinite { context });
    }
    Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite { context })
}

/// `(m + mᵀ)/2`, forcing exact symmetry.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl ConcentratedGaussian {
    /// Builds a distribution, validating dimensions and that `sigma` is
    /// symmetric positive-definite.
    pub fn new(
        handedness: Handedness,
        mu: AlgebraVector,
        reference: GroupElement,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        let m = reference.tag().algebra_dim();
        if mu.tag() != reference.tag() {
            return Err(Error::GroupMismatch {
                expected: reference.tag().to_string(),
                found: mu.tag().to_string(),
            });
        }
        if sigma.nrows() != m || sigma.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: sigma.nrows(),
            });
        }
        spd_cholesky(&sigma, "covariance")?;
        Ok(ConcentratedGaussian {
            handedness,
            mu,
            reference,
            sigma,
        })
    }

    /// Zero-mean distribution centred at `reference`.
    pub fn centred(
        handedness: Handedness,
        reference: GroupElement,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        let mu = AlgebraVector::zeros(reference.tag());
        ConcentratedGaussian::new(handedness, mu, reference, sigma)
    }

    /// Which side the error sits on.
    pub fn handedness(&self) -> Handedness {
        self.handedness
    }

    /// Mean offset in algebra coordinates.
    pub fn mu(&self) -> &AlgebraVector {
        &self.mu
    }

    /// Reference group element `X̂`.
    pub fn reference(&self) -> &GroupElement {
        &self.reference
    }

    /// Covariance of the algebra-valued error.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// The mode of the density: `X̂·exp(μ)` (left) or `exp(μ)·X̂` (right).
    pub fn group_mean(&self) -> GroupElement {
        let e = self.mu.exp();
        let g = match self.handedness {
            Handedness::Left => self.reference.compose(&e),
            Handedness::Right => e.compose(&self.reference),
        };
        g.expect("mu and reference share a tag by construction")
    }

    /// Algebra-coordinate error of `g` relative to the reference:
    /// `log(X̂⁻¹·g)` (left) or `log(g·X̂⁻¹)` (right).
    pub fn log_error(&self, g: &GroupElement) -> Result<AlgebraVector> {
        let rel = match self.handedness {
            Handedness::Left => self.reference.inverse().compose(g)?,
            Handedness::Right => g.compose(&self.reference.inverse())?,
        };
        rel.log()
    }

    /// Negative log-density up to the normalising constant:
    /// `½ (log_error(g) − μ)ᵀ Σ⁻¹ (log_error(g) − μ)`.
    pub fn log_likelihood(&self, g: &GroupElement) -> Result<f64> {
        let e = self.log_error(g)?;
        let d = e.coords() - self.mu.coords();
        let chol = spd_cholesky(&self.sigma, "covariance")?;
        Ok(0.5 * d.dot(&chol.solve(&d)))
    }

    /// Draws `n` group elements, deterministically for a given `seed`.
    ///
    /// Errors are synthesised as `ε = μ + L·z` with `L` the Cholesky factor
    /// of `Σ` and `z` standard normal, then composed onto the reference on
    /// the side given by the handedness.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Vec<GroupElement>> {
        let chol = spd_cholesky(&self.sigma, "covariance")?;
        let l = chol.l();
        let m = self.mu.coords().len();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            let eps = AlgebraVector::new(self.mu.tag(), self.mu.coords() + &l * z)?;
            let e = eps.exp();
            let g = match self.handedness {
                Handedness::Left => self.reference.compose(&e)?,
                Handedness::Right => e.compose(&self.reference)?,
            };
            out.push(g);
        }
        Ok(out)
    }

    /// Rewrites the distribution with the opposite handedness without
    /// changing the density: the reference stays put and `(μ, Σ)` are
    /// transported through `Ad_{X̂}` (left→right) or `Ad_{X̂⁻¹}` (right→left).
    pub fn convert_handedness(&self) -> ConcentratedGaussian {
        let ad = match self.handedness {
            Handedness::Left => self.reference.adjoint_matrix(),
            Handedness::Right => self.reference.inverse().adjoint_matrix(),
        };
        let mu = AlgebraVector::new(self.mu.tag(), &ad * self.mu.coords())
            .expect("adjoint preserves dimension");
        let sigma = symmetrize(&(&ad * &self.sigma * ad.transpose()));
        ConcentratedGaussian {
            handedness: self.handedness.flipped(),
            mu,
            reference: self.reference.clone(),
            sigma,
        }
    }
}

/// How far a left/right distribution pair is from describing the same
/// density, split into the three quantities that must vanish together.
#[derive(Clone, Copy, Debug)]
pub struct EquivalenceGap {
    /// `‖log(X̂_L⁻¹ X̂_R)‖` — disagreement of the references.
    pub ref_gap: f64,
    /// `‖Ad_{X̂_L} μ_L − μ_R‖` — disagreement of the transported mean offsets.
    pub mu_gap: f64,
    /// Affine-invariant Riemannian distance between `Σ_L` and the
    /// right covariance transported to left handedness.
    pub airm: f64,
}

/// Measures the equivalence gap between a left-handed and a right-handed
/// distribution on the same group.
pub fn equivalence_gap(
    left: &ConcentratedGaussian,
    right: &ConcentratedGaussian,
) -> Result<EquivalenceGap> {
    if left.handedness() != Handedness::Left || right.handedness() != Handedness::Right {
        return Err(Error::InvalidArgument(format!(
            "equivalence gap wants a (left, right) pair, got ({}, {})",
            left.handedness(),
            right.handedness()
        )));
    }
    if left.reference.tag() != right.reference.tag() {
        return Err(Error::GroupMismatch {
            expected: left.reference.tag().to_string(),
            found: right.reference.tag().to_string(),
        });
    }
    let ref_gap = left
        .reference
        .inverse()
        .compose(&right.reference)?
        .log()?
        .norm();
    let ad_l = left.reference.adjoint_matrix();
    let mu_gap = (&ad_l * left.mu.coords() - right.mu.coords()).norm();
    // Transport the right covariance into left handedness at its own
    // reference, then compare on the shared algebra.
    let ad_ri = right.reference.inverse().adjoint_matrix();
    let sigma_r_left = symmetrize(&(&ad_ri * &right.sigma * ad_ri.transpose()));
    let airm = airm_distance(&left.sigma, &sigma_r_left)?;
    Ok(EquivalenceGap {
        ref_gap,
        mu_gap,
        airm,
    })
}

/// Eigendecomposition-based power of an SPD matrix, with eigenvalues floored
/// at [`EIGENVALUE_FLOOR`]. Clearly negative eigenvalues are rejected.
fn spd_power(m: &DMatrix<f64>, exponent: f64, context: &'static str) -> Result<DMatrix<f64>> {
    if (m - m.transpose()).norm() > SYMMETRY_TOL * (1.0 + m.norm()) {
        return Err(Error::NotPositiveDefinite { context });
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-10 {
            return Err(Error::NotPositiveDefinite { context });
        }
        d[(i, i)] = lambda.max(EIGENVALUE_FLOOR).powf(exponent);
    }
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Affine-invariant Riemannian distance between SPD matrices:
/// `‖log_matrix(a^{-1/2} · b · a^{-1/2})‖_F`.
pub fn airm_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let a_inv_sqrt = spd_power(a, -0.5, "airm first argument")?;
    let middle = symmetrize(&(&a_inv_sqrt * b * &a_inv_sqrt));
    let eig = middle.symmetric_eigen();
    let mut sum = 0.0;
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -1e-10 {
            return Err(Error::NotPositiveDefinite {
                context: "airm second argument",
            });
        }
        let ln = lambda.max(EIGENVALUE_FLOOR).ln();
        sum += ln * ln;
    }
    Ok(sum.sqrt())
}
