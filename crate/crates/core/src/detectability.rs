//! Certification and falsification of the detectability inequality.
//!
//! The certificate search replaces the non-constructive existence argument by
//! a Tikhonov-regularized minimum-energy control family: for each `gamma > 0`
//! the control `u_z = -B^T Phi(nT,.)^T (gamma I + Q)^{-1} Phi(nT,0) z` steers
//! `z` to the residual `gamma (gamma I + Q)^{-1} Phi(nT,0) z`, so
//!
//! ```text
//! delta(gamma) = opnorm( gamma (gamma I + Q)^{-1} Phi(nT,0) )
//! C(gamma)     = opnorm( Q^{1/2} (gamma I + Q)^{-1} Phi(nT,0) )
//! ```
//!
//! witness the state-contraction/control-cost pair whenever `delta < 1`, and
//! by duality the detectability inequality with the same constants.

use nalgebra::{DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramian::TerminalFamily;
use crate::linalg::{opnorm, sym_sqrt};
use crate::propagator::{AdjointSolver, ControlSignal};
use crate::system::PeriodicSystem;

/// A witness `(n, delta, C)` for the detectability inequality, together with
/// the regularization `gamma` and grid resolution that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityCertificate {
    pub n: usize,
    pub delta: f64,
    pub c: f64,
    pub gamma: f64,
    pub steps_per_period: usize,
}

impl DetectabilityCertificate {
    pub fn new(n: usize, delta: f64, c: f64, gamma: f64, steps_per_period: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidArgument("certificate needs n >= 1".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "certificate needs delta in (0,1), got {delta}"
            )));
        }
        if !(c > 0.0) || !(gamma > 0.0) {
            return Err(Error::InvalidArgument(
                "certificate needs positive C and gamma".into(),
            ));
        }
        Ok(DetectabilityCertificate {
            n,
            delta,
            c,
            gamma,
            steps_per_period,
        })
    }
}

/// Margins `RHS - LHS` of the inequality over a batch of terminal values.
#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub samples: usize,
    pub worst_psi: DVector<f64>,
}

/// Precomputed minimum-energy control generator for fixed `(n, gamma)`.
pub(crate) struct MinEnergySolver {
    family: TerminalFamily,
    q: DMatrix<f64>,
    gamma: f64,
    chol: nalgebra::linalg::Cholesky<f64, Dyn>,
}

impl MinEnergySolver {
    pub(crate) fn new(
        sys: &PeriodicSystem,
        n: usize,
        gamma: f64,
        steps_per_period: usize,
    ) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularization gamma must be positive, got {gamma}"
            )));
        }
        let family = TerminalFamily::new(sys, 0.0, n, steps_per_period)?;
        let q = family.gramian();
        let d = q.nrows();
        let reg = &q + DMatrix::identity(d, d) * gamma;
        let chol = nalgebra::linalg::Cholesky::new(reg).ok_or_else(|| {
            Error::SingularSolve(format!(
                "gamma I + Q is numerically singular at gamma = {gamma}; increase gamma"
            ))
        })?;
        Ok(MinEnergySolver {
            family,
            q,
            gamma,
            chol,
        })
    }

    /// `u_z` on the shared grid and the predicted terminal state `gamma w`,
    /// where `(gamma I + Q) w = Phi(nT,0) z`.
    pub(crate) fn control(&self, z: &DVector<f64>) -> Result<(ControlSignal, DVector<f64>)> {
        let d = self.q.nrows();
        if z.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "initial state has dimension {}, system expects {d}",
                z.nrows()
            )));
        }
        let w = self.chol.solve(&(self.family.phi_from_start() * z));
        let values: Vec<DVector<f64>> = self
            .family
            .psi
            .iter()
            .zip(&self.family.b_nodes)
            .map(|(psi, b)| -(b.transpose() * (psi.transpose() * &w)))
            .collect();
        let u = ControlSignal::new(self.family.times.clone(), values)?;
        Ok((u, &w * self.gamma))
    }
}

/// Minimum-energy control steering `z` toward zero over `[0, nT]`.
///
/// Returns the control and the predicted final state
/// `gamma (gamma I + Q)^{-1} Phi(nT,0) z`, which the simulated trajectory
/// reproduces up to integration error.
pub fn min_energy_control(
    sys: &PeriodicSystem,
    n: usize,
    gamma: f64,
    z: &DVector<f64>,
    steps_per_period: usize,
) -> Result<(ControlSignal, DVector<f64>)> {
    MinEnergySolver::new(sys, n, gamma, steps_per_period)?.control(z)
}

/// 25 logarithmically spaced regularization weights in `[1e-8, 1e2]`.
pub fn default_gamma_grid() -> Vec<f64> {
    log_spaced(1e-8, 1e2, 25)
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && points >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Sweep the regularization grid and return the best certificate, if any.
///
/// For every `gamma` the pair `(delta(gamma), C(gamma))` is valid by
/// construction; the sweep keeps the minimal `delta` and, within relative
/// noise `1e-9` of that minimum, the largest `gamma` (best conditioned).
/// Returns `None` when the minimum is not below `1 - 1e-6`; absence of a
/// certificate is a verdict, not an error.
pub fn certificate_search(
    sys: &PeriodicSystem,
    n: usize,
    gamma_grid: &[f64],
    steps_per_period: usize,
) -> Result<Option<DetectabilityCertificate>> {
    if gamma_grid.is_empty() {
        return Err(Error::InvalidArgument("gamma grid must be nonempty".into()));
    }
    if gamma_grid.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidArgument(
            "gamma grid entries must be positive and finite".into(),
        ));
    }
    let mut grid: Vec<f64> = gamma_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let family = TerminalFamily::new(sys, 0.0, n, steps_per_period)?;
    let q = family.gramian();
    let q_sqrt = sym_sqrt(&q);
    let phi0 = family.phi_from_start();
    let d = q.nrows();

    let mut best: Option<(f64, f64, f64)> = None;
    for &gamma in &grid {
        let reg = &q + DMatrix::identity(d, d) * gamma;
        let Some(chol) = nalgebra::linalg::Cholesky::new(reg) else {
            continue;
        };
        let x = chol.solve(phi0);
        let delta = opnorm(&(&x * gamma));
        let c = opnorm(&(&q_sqrt * &x));
        if !delta.is_finite() || !c.is_finite() {
            continue;
        }
        // ascending gamma: a tie within noise promotes the larger gamma
        let better = match best {
            None => true,
            Some((best_delta, _, _)) => delta <= best_delta * (1.0 + 1e-9),
        };
        if better {
            best = Some((delta, c, gamma));
        }
    }
    match best {
        Some((delta, c, gamma)) if delta < 1.0 - 1e-6 => {
            Ok(Some(DetectabilityCertificate::new(
                n,
                delta,
                c.max(1e-12),
                gamma,
                steps_per_period,
            )?))
        }
        _ => Ok(None),
    }
}

/// Check the detectability inequality for the given certificate.
///
/// `k = 1` checks the plain inequality with `(delta, C)`; `k > 1` checks the
/// telescoped `k`-block form with constants `((sqrt(2) delta)^k, sqrt(2) C)`,
/// which is only valid under `2 delta^2 < 1`.
pub fn check_inequality(
    sys: &PeriodicSystem,
    cert: &DetectabilityCertificate,
    k: usize,
    psi_samples: &[DVector<f64>],
) -> Result<InequalityReport> {
    if k < 1 {
        return Err(Error::InvalidArgument("block count k must be >= 1".into()));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    if k > 1 && sqrt2 * cert.delta >= 1.0 {
        return Err(Error::OutsideProofValidity(sqrt2 * cert.delta));
    }
    if psi_samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one psi sample".into()));
    }
    if psi_samples.iter().any(|p| p.norm() == 0.0) {
        return Err(Error::InvalidArgument("psi samples must be nonzero".into()));
    }
    let (delta_k, c_k) = if k == 1 {
        (cert.delta, cert.c)
    } else {
        ((sqrt2 * cert.delta).powi(k as i32), sqrt2 * cert.c)
    };
    let solver = AdjointSolver::new(sys, k * cert.n, cert.steps_per_period)?;
    let mut margins = Vec::with_capacity(psi_samples.len());
    let mut min_margin = f64::INFINITY;
    let mut worst_psi = psi_samples[0].clone();
    for psi in psi_samples {
        let adj = solver.solve(psi)?;
        let margin = delta_k * psi.norm() + c_k * adj.output_l2_norm - adj.initial_norm();
        if margin < min_margin {
            min_margin = margin;
            worst_psi = psi.clone();
        }
        margins.push(margin);
    }
    Ok(InequalityReport {
        min_margin,
        samples: margins.len(),
        margins,
        worst_psi,
    })
}

/// Projected gradient ascent on `f(psi) = ||Phi(nT,0)^T psi|| - c sqrt(psi^T Q psi)`
/// over the unit sphere, with multistart.
///
/// A value exceeding `delta` falsifies the certificate `(n, delta, c)`.  The
/// subgradient of the second term is taken as zero where `psi^T Q psi = 0`.
pub fn worst_case_psi(
    sys: &PeriodicSystem,
    n: usize,
    c: f64,
    restarts: usize,
    seed: u64,
    steps_per_period: usize,
) -> Result<(DVector<f64>, f64)> {
    if restarts < 1 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("weight c must be positive".into()));
    }
    let family = TerminalFamily::new(sys, 0.0, n, steps_per_period)?;
    let q = family.gramian();
    let phi0 = family.phi_from_start().clone();
    let phi0_t = phi0.transpose();
    let d = q.nrows();

    let objective = |psi: &DVector<f64>| -> f64 {
        let quad = (psi.transpose() * &q * psi)[(0, 0)].max(0.0);
        (&phi0_t * psi).norm() - c * quad.sqrt()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..restarts {
        let mut psi = random_unit_vector(&mut rng, d);
        for _ in 0..500 {
            let image = &phi0_t * &psi;
            let image_norm = image.norm();
            let mut grad = if image_norm > 0.0 {
                &phi0 * image / image_norm
            } else {
                DVector::zeros(d)
            };
            let qpsi = &q * &psi;
            let quad = psi.dot(&qpsi).max(0.0);
            if quad > 0.0 && quad.sqrt() > 1e-150 {
                grad -= qpsi * (c / quad.sqrt());
            }
            let stepped = &psi + grad * 0.1;
            let norm = stepped.norm();
            if norm > 0.0 {
                psi = stepped / norm;
            }
        }
        let value = objective(&psi);
        if best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, psi));
        }
    }
    let (value, psi) = best.unwrap();
    Ok((psi, value))
}

pub(crate) fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = random_gaussian_vector(rng, dim);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

pub(crate) fn random_gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    use rand::Rng;
    DVector::from_fn(dim, |_, _| rng.sample(rand_distr::StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::simulate;
    use crate::registry::{random_system, RandomKind};
    use crate::system::{build_system, OperatorSpec, TimeGrid};
    use nalgebra::{dmatrix, dvector};

    fn scalar_sys(a: f64, b: f64) -> PeriodicSystem {
        let b_spec = if b == 0.0 {
            OperatorSpec::Zero
        } else {
            OperatorSpec::Constant {
                matrix: vec![vec![b]],
            }
        };
        build_system(
            (1, 1),
            1.0,
            dmatrix![a],
            &OperatorSpec::Zero,
            &b_spec,
            "scalar",
        )
        .unwrap()
    }

    #[test]
    fn zero_state_gives_zero_control() {
        let sys = scalar_sys(1.0, 1.0);
        let (u, fin) = min_energy_control(&sys, 1, 0.1, &dvector![0.0], 500).unwrap();
        assert_eq!(u.squared_l2_norm(), 0.0);
        assert_eq!(fin[0], 0.0);
    }

    #[test]
    fn scalar_predicted_final_closed_form() {
        // Q = (e^2-1)/2, predicted = 0.1 e / (0.1 + Q) * z
        let sys = scalar_sys(1.0, 1.0);
        let z = dvector![1.0];
        let (_, fin) = min_energy_control(&sys, 1, 0.1, &z, 2000).unwrap();
        let e = 1f64.exp();
        let q = (e * e - 1.0) / 2.0;
        let expected = 0.1 * e / (0.1 + q);
        assert!((fin[0] - expected).abs() < 1e-7 * expected);
    }

    #[test]
    fn simulated_final_matches_prediction() {
        let sys = random_system(4, 21, RandomKind::Generic);
        let z = dvector![0.9, -0.4, 1.3, 0.2];
        let (u, predicted) = min_energy_control(&sys, 1, 0.1, &z, 2000).unwrap();
        let grid = TimeGrid::new(0.0, sys.period(), 2000).unwrap();
        let traj = simulate(&sys, &z, Some(&u), grid).unwrap();
        let err = (traj.final_state() - &predicted).norm();
        assert!(err <= 1e-6 * z.norm(), "residual {err}");
    }

    #[test]
    fn control_norm_matches_gramian_form() {
        // trapezoid norm of u equals w^T Q w because both use the same grid
        let sys = random_system(3, 22, RandomKind::Generic);
        let z = dvector![1.0, -2.0, 0.5];
        let (u, _) = min_energy_control(&sys, 1, 0.05, &z, 1000).unwrap();
        let family = TerminalFamily::new(&sys, 0.0, 1, 1000).unwrap();
        let q = family.gramian();
        let phi_z = family.phi_from_start() * &z;
        let reg = &q + DMatrix::identity(3, 3) * 0.05;
        let w = nalgebra::linalg::Cholesky::new(reg).unwrap().solve(&phi_z);
        let expected = (w.transpose() * &q * &w)[(0, 0)];
        assert!((u.squared_l2_norm() - expected).abs() <= 1e-10 * expected.max(1.0));
    }

    #[test]
    fn stable_uncontrolled_system_certifies_at_exp_minus_one() {
        let sys = scalar_sys(-1.0, 0.0);
        let cert = certificate_search(&sys, 1, &default_gamma_grid(), 500)
            .unwrap()
            .expect("certificate must exist");
        assert!((cert.delta - (-1f64).exp()).abs() < 1e-9);
        assert_eq!(cert.c, 1e-12);
    }

    #[test]
    fn unstable_uncontrolled_system_has_no_certificate() {
        let sys = scalar_sys(1.0, 0.0);
        let found = certificate_search(&sys, 1, &default_gamma_grid(), 500).unwrap();
        assert!(found.is_none());
    }

    #[test]
    fn margins_scale_with_psi() {
        let sys = scalar_sys(-0.5, 1.0);
        let cert = certificate_search(&sys, 1, &default_gamma_grid(), 500)
            .unwrap()
            .unwrap();
        let r1 = check_inequality(&sys, &cert, 1, &[dvector![1.0]]).unwrap();
        let r2 = check_inequality(&sys, &cert, 1, &[dvector![3.5]]).unwrap();
        assert!((r2.min_margin - 3.5 * r1.min_margin).abs() < 1e-9);
    }

    #[test]
    fn k_block_check_requires_small_delta() {
        let sys = scalar_sys(-0.5, 1.0);
        let cert = DetectabilityCertificate::new(1, 0.9, 1.0, 1.0, 200).unwrap();
        let err = check_inequality(&sys, &cert, 3, &[dvector![1.0]]).unwrap_err();
        assert!(matches!(err, Error::OutsideProofValidity(_)));
    }

    #[test]
    fn worst_case_on_pure_growth_is_exp() {
        let sys = scalar_sys(1.0, 0.0);
        let (_, value) = worst_case_psi(&sys, 1, 5.0, 2, 7, 500).unwrap();
        assert!((value - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn worst_case_picks_dominant_axis() {
        // A = diag(1, -2), B = 0: brute force over the unit circle at one
        // degree resolution gives f = e at psi = +/- e1.
        let sys = build_system(
            (2, 1),
            1.0,
            dmatrix![1.0, 0.0; 0.0, -2.0],
            &OperatorSpec::Zero,
            &OperatorSpec::Zero,
            "diag",
        )
        .unwrap();
        let family = TerminalFamily::new(&sys, 0.0, 1, 500).unwrap();
        let phi0_t = family.phi_from_start().transpose();
        let mut brute = f64::NEG_INFINITY;
        for deg in 0..360 {
            let a = (deg as f64).to_radians();
            let psi = dvector![a.cos(), a.sin()];
            brute = brute.max((&phi0_t * psi).norm());
        }
        assert!((brute - 1f64.exp()).abs() < 1e-3);

        let (psi, value) = worst_case_psi(&sys, 1, 3.0, 8, 3, 500).unwrap();
        assert!((value - 1f64.exp()).abs() < 1e-6);
        assert!((psi[0].abs() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn worst_case_scalar_controlled_is_negative() {
        // f = e - 10 sqrt((e^2-1)/2) < 0
        let sys = scalar_sys(1.0, 1.0);
        let (_, value) = worst_case_psi(&sys, 1, 10.0, 2, 11, 2000).unwrap();
        let e = 1f64.exp();
        let expected = e - 10.0 * ((e * e - 1.0) / 2.0).sqrt();
        assert!((value - expected).abs() < 1e-6);
        assert!(value < 0.0);
    }
}
