//! Poincare-map spectral analysis and unique continuation.
//!
//! The monodromy `P(0) = Phi(T, 0)` carries the Floquet multipliers; the
//! unit circle splits them into a stable cluster (largest modulus `delta_bar`)
//! and an unstable cluster of total algebraic multiplicity `n_0`.  The Riesz
//! projector onto the unstable subspace is computed twice, by independent
//! routes: from the reordered real Schur form, and by resolvent contour
//! quadrature (the Kato projection).  Their agreement is a standing
//! cross-check used throughout the test suite.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::gramian::observability_gramian;
use crate::linalg::{opnorm, ordered_schur_by_modulus, spectral_projector};
use crate::propagator::transition;
use crate::system::PeriodicSystem;

/// Eigenvalues of modulus at least this count as unstable (the paper's
/// `|lambda| >= 1` split with a floating-point guard band).
const UNIT_CIRCLE_BOUNDARY: f64 = 1.0 - 1e-9;
/// Moduli this close to exactly 1 are flagged borderline.
const BORDERLINE_WIDTH: f64 = 1e-9;
/// Relative gap used to cluster eigenvalues into multiplicity groups.
const CLUSTER_GAP: f64 = 1e-6;

/// Spectral picture of the Poincare map at `t = 0`.
#[derive(Clone, Debug)]
pub struct SpectralSummary {
    /// All Floquet multipliers, modulus-descending.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Largest stable modulus; `None` when no eigenvalue lies inside the
    /// unit circle.
    pub delta_bar: Option<f64>,
    /// Total algebraic multiplicity of the unstable cluster (`n_0`).
    pub n_unstable_dim: usize,
    /// Riesz projector onto the unstable subspace (oblique in general).
    pub projector: DMatrix<f64>,
    /// Orthonormal columns spanning `Y_u = P Y`.
    pub unstable_basis: DMatrix<f64>,
    /// Set when a multiplier sits within `1e-9` of the unit circle or a
    /// multiplicity cluster straddles it; verdicts are then unreliable.
    pub borderline: bool,
    /// `||P^2 - P||_F`.
    pub idempotency_residual: f64,
    /// `||P M - M P||_F` against the monodromy `M`.
    pub commutation_residual: f64,
}

/// Analyze the monodromy matrix `Phi(T, 0)`.
pub fn poincare_spectrum(sys: &PeriodicSystem, steps_per_period: usize) -> Result<SpectralSummary> {
    let monodromy = transition(sys, 0.0, sys.period(), steps_per_period)?.matrix;
    spectrum_of_monodromy(&monodromy)
}

pub(crate) fn spectrum_of_monodromy(monodromy: &DMatrix<f64>) -> Result<SpectralSummary> {
    let mut eigenvalues: Vec<Complex<f64>> =
        monodromy.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });

    let n_unstable_eig = eigenvalues
        .iter()
        .filter(|l| l.norm() >= UNIT_CIRCLE_BOUNDARY)
        .count();
    let delta_bar = eigenvalues
        .iter()
        .map(|l| l.norm())
        .filter(|&m| m < UNIT_CIRCLE_BOUNDARY)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))));

    let mut borderline = eigenvalues
        .iter()
        .any(|l| (l.norm() - 1.0).abs() <= BORDERLINE_WIDTH);
    for cluster in cluster_eigenvalues(&eigenvalues) {
        let unstable = cluster
            .iter()
            .filter(|l| l.norm() >= UNIT_CIRCLE_BOUNDARY)
            .count();
        if unstable != 0 && unstable != cluster.len() {
            borderline = true;
        }
    }

    let schur = ordered_schur_by_modulus(monodromy, UNIT_CIRCLE_BOUNDARY)?;
    if schur.unstable_dim != n_unstable_eig {
        // the two eigenvalue routes disagree on the split; trust the Schur
        // count (it is the one the projector realizes) and flag the case
        borderline = true;
    }
    let n_unstable_dim = schur.unstable_dim;
    let projector = spectral_projector(&schur)?;
    let unstable_basis = schur.u.columns(0, n_unstable_dim).clone_owned();

    let idempotency_residual = (&projector * &projector - &projector).norm();
    let commutation_residual = (&projector * monodromy - monodromy * &projector).norm();
    Ok(SpectralSummary {
        eigenvalues,
        delta_bar,
        n_unstable_dim,
        projector,
        unstable_basis,
        borderline,
        idempotency_residual,
        commutation_residual,
    })
}

/// Greedy clustering of eigenvalues at relative gap `1e-6`.
fn cluster_eigenvalues(eigenvalues: &[Complex<f64>]) -> Vec<Vec<Complex<f64>>> {
    let mut clusters: Vec<Vec<Complex<f64>>> = Vec::new();
    for &l in eigenvalues {
        let found = clusters.iter_mut().find(|c| {
            let rep = c[0];
            (l - rep).norm() <= CLUSTER_GAP * rep.norm().max(l.norm()).max(f64::MIN_POSITIVE)
        });
        match found {
            Some(c) => c.push(l),
            None => clusters.push(vec![l]),
        }
    }
    clusters
}

/// Riesz projector onto the unstable subspace by resolvent quadrature:
/// `I - (2 pi i)^{-1} oint_{|l| = rho} (l I - P(0))^{-1} dl`.
///
/// Trapezoid quadrature in the angle is exponentially accurate here because
/// the integrand is analytic in an annulus around the contour.  The result
/// must agree with the Schur-route projector to about `1e-7`.
pub fn kato_projection(
    sys: &PeriodicSystem,
    rho: f64,
    contour_nodes: usize,
    steps_per_period: usize,
) -> Result<DMatrix<f64>> {
    if contour_nodes < 64 {
        return Err(Error::InvalidArgument(
            "contour quadrature needs at least 64 nodes".into(),
        ));
    }
    let summary = poincare_spectrum(sys, steps_per_period)?;
    let delta_bar = summary.delta_bar.unwrap_or(0.0);
    if !(rho > delta_bar && rho < 1.0) {
        return Err(Error::RhoOutsideAnnulus { rho, delta_bar });
    }
    let monodromy = transition(sys, 0.0, sys.period(), steps_per_period)?.matrix;
    let d = monodromy.nrows();
    let mc = monodromy.map(|x| Complex::new(x, 0.0));
    let mut acc = DMatrix::<Complex<f64>>::zeros(d, d);
    for j in 0..contour_nodes {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / contour_nodes as f64;
        let lambda = Complex::from_polar(rho, theta);
        let shifted = DMatrix::<Complex<f64>>::identity(d, d) * lambda - &mc;
        let resolvent = nalgebra::linalg::LU::new(shifted)
            .try_inverse()
            .ok_or_else(|| {
                Error::SingularSolve(format!(
                    "resolvent singular on the contour at angle {theta} (eigenvalue on |l| = {rho})"
                ))
            })?;
        acc += resolvent * lambda;
    }
    let kato = acc / Complex::new(contour_nodes as f64, 0.0);
    let imag_max = kato.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag_max > 1e-9 {
        return Err(Error::SingularSolve(format!(
            "contour projector has imaginary residue {imag_max}"
        )));
    }
    Ok(DMatrix::identity(d, d) - kato.map(|z| z.re))
}

/// Finite-dimensional unique-continuation test (detectability verdict).
///
/// Restricts the Gramian quadratic form over `[0, n_0 T]` to the subspace
/// `P^T Y_u`; positive definiteness there forces any unobserved `xi` to be
/// zero.  Returns the verdict and the margin `lambda_min / ||Q||` (infinite
/// when `n_0 = 0`, where detectability is vacuous).
pub fn unique_continuation_test(
    sys: &PeriodicSystem,
    tol: f64,
    steps_per_period: usize,
) -> Result<(bool, f64)> {
    let summary = poincare_spectrum(sys, steps_per_period)?;
    let n0 = summary.n_unstable_dim;
    if n0 == 0 {
        return Ok((true, f64::INFINITY));
    }
    let q = observability_gramian(sys, n0, 0.0, steps_per_period)?.matrix;
    let q_norm = opnorm(&q);
    if q_norm == 0.0 {
        return Ok((false, 0.0));
    }
    let image = summary.projector.transpose() * &summary.unstable_basis;
    let qr = nalgebra::linalg::QR::new(image);
    let v = qr.q();
    let restricted = v.transpose() * &q * &v;
    let sym = (&restricted + restricted.transpose()) * 0.5;
    let min_eig = nalgebra::linalg::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let margin = min_eig / q_norm;
    Ok((margin > tol, margin))
}

/// Hautus (PBH) detectability of the constant pair `[a, b]`: every eigenvalue
/// of `a` with `Re >= 0` must keep `[a - l I; b^T]` at full column rank.
///
/// Ranks come from singular values of the real embedding of the complex
/// stacked matrix, with absolute threshold `tol`.
pub fn hautus_detectability(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(
            "Hautus test needs a square state matrix".into(),
        ));
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(
            "input matrix must have one row per state".into(),
        ));
    }
    let m = b.ncols();
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < 0.0 {
            continue;
        }
        // stacked complex matrix S = [a - lambda I; b^T], embedded as
        // [[Re S, -Im S], [Im S, Re S]] whose singular values duplicate S's
        let rows = n + m;
        let mut re = DMatrix::<f64>::zeros(rows, n);
        let mut im = DMatrix::<f64>::zeros(rows, n);
        re.view_mut((0, 0), (n, n)).copy_from(a);
        for i in 0..n {
            re[(i, i)] -= lambda.re;
            im[(i, i)] = -lambda.im;
        }
        re.view_mut((n, 0), (m, n)).copy_from(&b.transpose());
        let mut embed = DMatrix::<f64>::zeros(2 * rows, 2 * n);
        embed.view_mut((0, 0), (rows, n)).copy_from(&re);
        embed.view_mut((0, n), (rows, n)).copy_from(&(-&im));
        embed.view_mut((rows, 0), (rows, n)).copy_from(&im);
        embed.view_mut((rows, n), (rows, n)).copy_from(&re);
        let svd = nalgebra::linalg::SVD::try_new(embed, false, false, f64::EPSILON, 0)
            .ok_or(Error::SchurFailure)?;
        let sigma_min = svd
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if sigma_min <= tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{random_system, RandomKind};
    use crate::system::{build_system, OperatorSpec};
    use nalgebra::dmatrix;

    fn constant_system(a: DMatrix<f64>) -> PeriodicSystem {
        let d = a.nrows();
        build_system(
            (d, 1),
            1.0,
            a,
            &OperatorSpec::Zero,
            &OperatorSpec::Zero,
            "constant",
        )
        .unwrap()
    }

    #[test]
    fn zero_matrix_monodromy_is_all_unit_multipliers() {
        let sys = constant_system(DMatrix::zeros(3, 3));
        let s = poincare_spectrum(&sys, 200).unwrap();
        assert_eq!(s.n_unstable_dim, 3);
        assert!(s.delta_bar.is_none());
        assert!((s.projector.clone() - DMatrix::identity(3, 3)).norm() < 1e-9);
        assert!(s.borderline, "multipliers exactly on the circle");
        assert!(s.eigenvalues.iter().all(|l| (l.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn stable_diagonal_spectrum() {
        let sys = constant_system(dmatrix![-1.0, 0.0; 0.0, -2.0]);
        let s = poincare_spectrum(&sys, 2000).unwrap();
        assert_eq!(s.n_unstable_dim, 0);
        let expected = (-1f64).exp();
        assert!((s.delta_bar.unwrap() - expected).abs() < 1e-10);
        assert!((s.eigenvalues[0].re - expected).abs() < 1e-10);
        assert!((s.eigenvalues[1].re - (-2f64).exp()).abs() < 1e-10);
        assert!(s.projector.norm() < 1e-12);
        assert!(!s.borderline);
    }

    #[test]
    fn kato_projector_of_stable_system_vanishes() {
        // trapezoid rate is (|lambda|/rho)^nodes = (e^{-1}/0.5)^256 here
        let sys = constant_system(dmatrix![-1.0, 0.0; 0.0, -2.0]);
        let p = kato_projection(&sys, 0.5, 256, 2000).unwrap();
        assert!(p.norm() < 1e-10);
    }

    #[test]
    fn kato_rejects_rho_outside_annulus() {
        let sys = constant_system(dmatrix![-1.0, 0.0; 0.0, -2.0]);
        assert!(matches!(
            kato_projection(&sys, 0.2, 64, 500),
            Err(Error::RhoOutsideAnnulus { .. })
        ));
        assert!(kato_projection(&sys, 1.0, 64, 500).is_err());
    }

    #[test]
    fn contour_and_schur_projectors_agree_on_random_systems() {
        for seed in [5, 17, 29] {
            let sys = random_system(3, seed, RandomKind::Generic);
            let s = poincare_spectrum(&sys, 2000).unwrap();
            if s.borderline {
                continue;
            }
            // midpoint of the annulus; enough nodes for stable eigenvalues
            // close to the contour
            let rho = (s.delta_bar.unwrap_or(0.0) + 1.0) / 2.0;
            let contour = kato_projection(&sys, rho, 512, 2000).unwrap();
            assert!(
                (&contour - &s.projector).norm() < 1e-7,
                "seed {seed} rho {rho}: {:e}",
                (&contour - &s.projector).norm()
            );
        }
    }

    #[test]
    fn ucp_vacuous_when_stable() {
        let sys = constant_system(dmatrix![-0.4]);
        let (ok, margin) = unique_continuation_test(&sys, 1e-8, 500).unwrap();
        assert!(ok);
        assert!(margin.is_infinite());
    }

    #[test]
    fn ucp_false_without_output() {
        let sys = constant_system(dmatrix![0.5]);
        let (ok, margin) = unique_continuation_test(&sys, 1e-8, 500).unwrap();
        assert!(!ok);
        assert_eq!(margin, 0.0);
    }

    #[test]
    fn ucp_true_with_full_row_rank_input() {
        let sys = build_system(
            (2, 2),
            1.0,
            dmatrix![0.5, 0.0; 0.0, -1.0],
            &OperatorSpec::Zero,
            &OperatorSpec::Constant {
                matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            "full-input",
        )
        .unwrap();
        let (ok, margin) = unique_continuation_test(&sys, 1e-8, 1000).unwrap();
        assert!(ok);
        assert!(margin > 1e-4);
    }

    #[test]
    fn hautus_sees_unstable_mode_through_first_input() {
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        let b_good = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b_bad = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(hautus_detectability(&a, &b_good, 1e-9).unwrap());
        assert!(!hautus_detectability(&a, &b_bad, 1e-9).unwrap());
    }

    #[test]
    fn hautus_vacuous_for_hurwitz_matrix() {
        let a = dmatrix![-0.5, 1.0; 0.0, -2.0];
        let b = DMatrix::zeros(2, 1);
        assert!(hautus_detectability(&a, &b, 1e-9).unwrap());
    }

    #[test]
    fn hautus_handles_complex_unstable_pair() {
        // eigenvalues 0.2 +/- 2i, observed through the first state
        let a = dmatrix![0.2, -2.0; 2.0, 0.2];
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(hautus_detectability(&a, &b, 1e-9).unwrap());
        assert!(!hautus_detectability(&a, &DMatrix::zeros(2, 1), 1e-9).unwrap());
    }

    #[test]
    fn hautus_rejects_nonsquare() {
        let a = DMatrix::<f64>::zeros(2, 3);
        let b = DMatrix::<f64>::zeros(2, 1);
        assert!(hautus_detectability(&a, &b, 1e-9).is_err());
    }

    #[test]
    fn projector_commutes_on_random_systems() {
        for seed in [3, 41] {
            let sys = random_system(3, seed, RandomKind::Generic);
            let s = poincare_spectrum(&sys, 1000).unwrap();
            assert!(s.idempotency_residual < 1e-8);
            assert!(s.commutation_residual < 1e-7);
            assert_eq!(s.unstable_basis.ncols(), s.n_unstable_dim);
        }
    }
}
