//! Observability Gramians over `[t_start, nT]` and the control-to-state map.
//!
//! The Gramian realizes `||B(.)^T phi_n(.; psi)||^2_{L2} = psi^T Q psi` as a
//! quadratic form, assembled by composite trapezoid quadrature on the shared
//! integration grid and symmetrized after assembly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::propagator::{propagate_matrix_recorded, ControlSignal, OperatorGrid};
use crate::system::PeriodicSystem;

/// Gramian matrix with interval metadata.
#[derive(Clone, Debug)]
pub struct GramianBundle {
    /// Symmetric positive-semidefinite `Q`.
    pub matrix: DMatrix<f64>,
    /// Terminal time is `n * T`.
    pub n: usize,
    pub quadrature_nodes: usize,
}

/// The family `Psi_j = Phi(nT, t_j)` on the shared grid, together with the
/// sampled input operators; the workhorse behind Gramians, minimum-energy
/// controls and gain schedules.
pub(crate) struct TerminalFamily {
    pub t_end: f64,
    pub h: f64,
    pub times: Vec<f64>,
    pub psi: Vec<DMatrix<f64>>,
    pub b_nodes: Vec<DMatrix<f64>>,
}

impl TerminalFamily {
    pub(crate) fn new(
        sys: &PeriodicSystem,
        t_start: f64,
        n: usize,
        steps_per_period: usize,
    ) -> Result<Self> {
        let t_end = n as f64 * sys.period();
        if n < 1 {
            return Err(Error::InvalidArgument("need n >= 1 periods".into()));
        }
        if !(0.0..t_end).contains(&t_start) {
            return Err(Error::InvalidArgument(format!(
                "t_start = {t_start} must lie in [0, nT) = [0, {t_end})"
            )));
        }
        let h_target = sys.period() / steps_per_period as f64;
        let steps = (((t_end - t_start) / h_target).round() as usize).max(1);
        // backward family via the time-reversed transposed system:
        // Z' = A(t_end - tau)^T Z gives Phi(t_end, t_j)^T = Z(t_end - t_j)
        let grid = OperatorGrid::sample(
            |tau| sys.a_full(t_end - tau).transpose(),
            0.0,
            t_end - t_start,
            steps,
        );
        let d = sys.dim_state();
        let z = propagate_matrix_recorded(&grid, DMatrix::identity(d, d));
        let h = (t_end - t_start) / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|j| t_start + j as f64 * h).collect();
        let psi: Vec<DMatrix<f64>> = (0..=steps).map(|j| z[steps - j].transpose()).collect();
        let b_nodes: Vec<DMatrix<f64>> = times.iter().map(|&t| sys.b(t)).collect();
        Ok(TerminalFamily {
            t_end,
            h,
            times,
            psi,
            b_nodes,
        })
    }

    /// `Phi(nT, t_start)`.
    pub(crate) fn phi_from_start(&self) -> &DMatrix<f64> {
        &self.psi[0]
    }

    /// Trapezoid assembly of `Q = int Psi B B^T Psi^T dt`, symmetrized.
    pub(crate) fn gramian(&self) -> DMatrix<f64> {
        let d = self.psi[0].nrows();
        let last = self.times.len() - 1;
        let mut q = DMatrix::<f64>::zeros(d, d);
        for j in 0..=last {
            let w = if j == 0 || j == last { 0.5 } else { 1.0 };
            let g = &self.psi[j] * &self.b_nodes[j];
            q += &g * g.transpose() * (w * self.h);
        }
        (&q + q.transpose()) * 0.5
    }
}

/// Assemble `Q = int_{t_start}^{nT} Phi(nT,t) B(t) B(t)^T Phi(nT,t)^T dt`.
pub fn observability_gramian(
    sys: &PeriodicSystem,
    n: usize,
    t_start: f64,
    steps_per_period: usize,
) -> Result<GramianBundle> {
    let family = TerminalFamily::new(sys, t_start, n, steps_per_period)?;
    Ok(GramianBundle {
        matrix: family.gramian(),
        t_start,
        n,
        quadrature_nodes: family.times.len(),
    })
}

/// Control-to-state map `L u = int_0^{nT} Phi(nT, tau) B(tau) u(tau) dtau`.
pub fn control_to_state(
    sys: &PeriodicSystem,
    n: usize,
    u: &ControlSignal,
    steps_per_period: usize,
) -> Result<DVector<f64>> {
    let t_end = n as f64 * sys.period();
    if u.horizon() < t_end - 1e-9 * t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "control horizon {} does not cover [0, {t_end}]",
            u.horizon()
        )));
    }
    if u.dim() != sys.dim_control() {
        return Err(Error::DimensionMismatch(
            "control dimension does not match the system".into(),
        ));
    }
    let family = TerminalFamily::new(sys, 0.0, n, steps_per_period)?;
    let d = sys.dim_state();
    let last = family.times.len() - 1;
    let mut acc = DVector::<f64>::zeros(d);
    for j in 0..=last {
        let w = if j == 0 || j == last { 0.5 } else { 1.0 };
        acc += &family.psi[j] * (&family.b_nodes[j] * u.eval(family.times[j])) * (w * family.h);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::adjoint_trajectory;
    use crate::registry::{random_system, RandomKind};
    use crate::system::{build_system, OperatorSpec};
    use nalgebra::{dmatrix, dvector};

    fn scalar_unstable() -> PeriodicSystem {
        build_system(
            (1, 1),
            1.0,
            dmatrix![1.0],
            &OperatorSpec::Zero,
            &OperatorSpec::Constant {
                matrix: vec![vec![1.0]],
            },
            "scalar",
        )
        .unwrap()
    }

    #[test]
    fn zero_input_gives_zero_gramian() {
        let sys = build_system(
            (2, 1),
            1.0,
            dmatrix![0.0, 1.0; -1.0, 0.0],
            &OperatorSpec::Zero,
            &OperatorSpec::Zero,
            "free",
        )
        .unwrap();
        let q = observability_gramian(&sys, 1, 0.0, 200).unwrap();
        assert_eq!(q.matrix.norm(), 0.0);
    }

    #[test]
    fn scalar_gramian_closed_form() {
        // Q = int_0^1 e^{2(1-t)} dt = (e^2 - 1)/2
        let sys = scalar_unstable();
        let q = observability_gramian(&sys, 1, 0.0, 2000).unwrap();
        let expected = (1f64.exp().powi(2) - 1.0) / 2.0;
        assert!((q.matrix[(0, 0)] - expected).abs() < 1e-7 * expected);
    }

    #[test]
    fn quadratic_form_matches_adjoint_output_norm() {
        let sys = random_system(3, 11, RandomKind::Generic);
        let q = observability_gramian(&sys, 1, 0.0, 2000).unwrap();
        let psi = dvector![0.3, -1.2, 0.7];
        let quad = (psi.transpose() * &q.matrix * &psi)[(0, 0)];
        let adj = adjoint_trajectory(&sys, 1, &psi, 2000).unwrap();
        let direct = adj.output_l2_norm * adj.output_l2_norm;
        assert!(
            (quad - direct).abs() <= 1e-6 * direct.max(1.0),
            "quad = {quad}, direct = {direct}"
        );
    }

    #[test]
    fn gramian_is_monotone_in_t_start() {
        let sys = random_system(3, 12, RandomKind::Generic);
        let full = observability_gramian(&sys, 1, 0.0, 1000).unwrap().matrix;
        let tail = observability_gramian(&sys, 1, 0.4, 1000).unwrap().matrix;
        let diff = full - tail;
        let eigs = nalgebra::linalg::SymmetricEigen::new(diff).eigenvalues;
        assert!(eigs.iter().all(|&v| v > -1e-10));
    }

    #[test]
    fn control_to_state_zero_and_closed_form() {
        let sys = scalar_unstable();
        let zero = ControlSignal::zero(1, 1.0);
        let out = control_to_state(&sys, 1, &zero, 1000).unwrap();
        assert_eq!(out[0], 0.0);

        // u = 1 on [0,1]: int_0^1 e^{1-tau} dtau = e - 1
        let ones = ControlSignal::from_fn(1, 1.0, 2000, |_| dvector![1.0]).unwrap();
        let out = control_to_state(&sys, 1, &ones, 2000).unwrap();
        assert!((out[0] - (1f64.exp() - 1.0)).abs() < 1e-7);
    }

    #[test]
    fn control_to_state_is_linear() {
        let sys = random_system(3, 13, RandomKind::Generic);
        let u1 = ControlSignal::from_fn(1, 1.0, 400, |t| dvector![(3.0 * t).sin()]).unwrap();
        let u2 = ControlSignal::from_fn(1, 1.0, 400, |t| dvector![t * t - 0.4]).unwrap();
        let sum = ControlSignal::from_fn(1, 1.0, 400, |t| {
            dvector![(3.0 * t).sin() + t * t - 0.4]
        })
        .unwrap();
        let l1 = control_to_state(&sys, 1, &u1, 400).unwrap();
        let l2 = control_to_state(&sys, 1, &u2, 400).unwrap();
        let lsum = control_to_state(&sys, 1, &sum, 400).unwrap();
        assert!((l1 + l2 - lsum).norm() < 1e-8);
    }

    #[test]
    fn rejects_t_start_past_horizon() {
        let sys = scalar_unstable();
        assert!(observability_gramian(&sys, 1, 1.0, 100).is_err());
        assert!(observability_gramian(&sys, 1, 1.5, 100).is_err());
    }

    #[test]
    fn rejects_short_control_horizon() {
        let sys = scalar_unstable();
        let short = ControlSignal::zero(1, 0.5);
        assert!(control_to_state(&sys, 2, &short, 100).is_err());
    }
}
