//! Transition matrices, controlled trajectories and adjoint solutions.
//!
//! Everything integrates with the classical fourth-order fixed-step scheme on
//! a grid of `steps_per_period` intervals per period, shared with all
//! quadrature in the crate.  Backward (adjoint) problems run the same forward
//! integrator on the time-reversed system, so there is a single integration
//! code path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::{PeriodicSystem, TimeGrid};

/// Default grid resolution: `h = T / 2000`.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 2000;

/// Composite trapezoid quadrature of sampled values with uniform step `h`.
pub(crate) fn trapezoid(h: f64, values: &[f64]) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = values[1..n - 1].iter().sum();
            h * (0.5 * (values[0] + values[n - 1]) + interior)
        }
    }
}

/// Pre-sampled operator values on the nodes and midpoints of a uniform grid.
///
/// Sampling the operator once and integrating many right-hand sides against
/// it is what keeps thousand-sample certificate checks cheap.
pub(crate) struct OperatorGrid {
    pub t0: f64,
    pub h: f64,
    pub steps: usize,
    nodes: Vec<DMatrix<f64>>,
    mids: Vec<DMatrix<f64>>,
}

impl OperatorGrid {
    pub(crate) fn sample(op: impl Fn(f64) -> DMatrix<f64>, t0: f64, t1: f64, steps: usize) -> Self {
        assert!(steps >= 1, "OperatorGrid needs at least one step");
        let h = (t1 - t0) / steps as f64;
        let nodes = (0..=steps).map(|j| op(t0 + j as f64 * h)).collect();
        let mids = (0..steps)
            .map(|j| op(t0 + (j as f64 + 0.5) * h))
            .collect();
        OperatorGrid {
            t0,
            h,
            steps,
            nodes,
            mids,
        }
    }

    pub(crate) fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.h
    }
}

/// One RK4 step of `x' = A(t) x + f(t)` for matrix- or vector-valued `x`.
macro_rules! rk4_step {
    ($a0:expr, $am:expr, $a1:expr, $h:expr, $x:expr, $f0:expr, $fm:expr, $f1:expr) => {{
        let k1 = $a0 * &$x + $f0;
        let k2 = $am * &($x.clone() + &k1 * (0.5 * $h)) + $fm;
        let k3 = $am * &($x.clone() + &k2 * (0.5 * $h)) + $fm;
        let k4 = $a1 * &($x.clone() + &k3 * $h) + $f1;
        $x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * ($h / 6.0)
    }};
}

/// Integrate `M' = A(t) M` from `m0`, returning only the final value.
pub(crate) fn propagate_matrix(grid: &OperatorGrid, m0: DMatrix<f64>) -> DMatrix<f64> {
    let zero = DMatrix::<f64>::zeros(m0.nrows(), m0.ncols());
    let mut m = m0;
    for j in 0..grid.steps {
        rk4_step!(
            &grid.nodes[j],
            &grid.mids[j],
            &grid.nodes[j + 1],
            grid.h,
            m,
            &zero,
            &zero,
            &zero
        );
    }
    m
}

/// Integrate `M' = A(t) M` from `m0`, recording every node.
pub(crate) fn propagate_matrix_recorded(grid: &OperatorGrid, m0: DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let zero = DMatrix::<f64>::zeros(m0.nrows(), m0.ncols());
    let mut out = Vec::with_capacity(grid.steps + 1);
    let mut m = m0;
    out.push(m.clone());
    for j in 0..grid.steps {
        rk4_step!(
            &grid.nodes[j],
            &grid.mids[j],
            &grid.nodes[j + 1],
            grid.h,
            m,
            &zero,
            &zero,
            &zero
        );
        out.push(m.clone());
    }
    out
}

/// Integrate `y' = A(t) y + f(t)` from `y0`, recording every node.
///
/// `forcing`, when present, supplies `f` pre-sampled on nodes and midpoints.
pub(crate) fn propagate_vector_recorded(
    grid: &OperatorGrid,
    y0: DVector<f64>,
    forcing: Option<(&[DVector<f64>], &[DVector<f64>])>,
) -> Vec<DVector<f64>> {
    let zero = DVector::<f64>::zeros(y0.nrows());
    let mut out = Vec::with_capacity(grid.steps + 1);
    let mut y = y0;
    out.push(y.clone());
    for j in 0..grid.steps {
        let (f0, fm, f1) = match forcing {
            Some((nodes, mids)) => (&nodes[j], &mids[j], &nodes[j + 1]),
            None => (&zero, &zero, &zero),
        };
        rk4_step!(
            &grid.nodes[j],
            &grid.mids[j],
            &grid.nodes[j + 1],
            grid.h,
            y,
            f0,
            fm,
            f1
        );
        out.push(y.clone());
    }
    out
}

/// Sampled evolution operator `Phi(t, s)` with interval metadata.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    pub matrix: DMatrix<f64>,
    pub s: f64,
    pub t: f64,
    pub grid_steps: usize,
}

/// Compute `Phi(t, s)` by integrating `M' = A(tau) M`, `M(s) = I`.
///
/// `Phi(t, t)` is the identity exactly; the step count is chosen so the local
/// step matches the shared grid `h = T / steps_per_period`.
pub fn transition(
    sys: &PeriodicSystem,
    s: f64,
    t: f64,
    steps_per_period: usize,
) -> Result<TransitionMatrix> {
    if s < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "transition start must be nonnegative, got {s}"
        )));
    }
    if t < s {
        return Err(Error::TimeOrder { s, t });
    }
    if steps_per_period < 16 {
        return Err(Error::InvalidArgument(
            "steps_per_period must be at least 16".into(),
        ));
    }
    let d = sys.dim_state();
    if t == s {
        return Ok(TransitionMatrix {
            matrix: DMatrix::identity(d, d),
            s,
            t,
            grid_steps: 0,
        });
    }
    let h = sys.period() / steps_per_period as f64;
    let steps = (((t - s) / h).round() as usize).max(1);
    let grid = OperatorGrid::sample(|tau| sys.a_full(tau), s, t, steps);
    Ok(TransitionMatrix {
        matrix: propagate_matrix(&grid, DMatrix::identity(d, d)),
        s,
        t,
        grid_steps: steps,
    })
}

/// A control signal on an ascending time grid, linearly interpolated between
/// nodes and zero-extended beyond its horizon.
#[derive(Clone, Debug)]
pub struct ControlSignal {
    times: Vec<f64>,
    values: Vec<DVector<f64>>,
    squared_l2_norm: f64,
}

impl ControlSignal {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::InvalidArgument(
                "control signal needs matching times/values with >= 2 nodes".into(),
            ));
        }
        if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "control times must be nonnegative and strictly ascending".into(),
            ));
        }
        let dim = values[0].nrows();
        if values.iter().any(|v| v.nrows() != dim) || dim == 0 {
            return Err(Error::DimensionMismatch(
                "control values must share a positive dimension".into(),
            ));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("control values".into()));
        }
        let squared_l2_norm = Self::grid_norm_sq(&times, &values);
        Ok(ControlSignal {
            times,
            values,
            squared_l2_norm,
        })
    }

    /// Trapezoid quadrature of `||u||^2`, valid for non-uniform grids.
    fn grid_norm_sq(times: &[f64], values: &[DVector<f64>]) -> f64 {
        let mut acc = 0.0;
        for j in 0..times.len() - 1 {
            let h = times[j + 1] - times[j];
            acc += 0.5 * h * (values[j].norm_squared() + values[j + 1].norm_squared());
        }
        acc
    }

    /// The zero control on `[0, horizon]`.
    pub fn zero(dim: usize, horizon: f64) -> Self {
        ControlSignal {
            times: vec![0.0, horizon],
            values: vec![DVector::zeros(dim), DVector::zeros(dim)],
            squared_l2_norm: 0.0,
        }
    }

    /// Sample `f` on a uniform grid of `steps` intervals over `[0, horizon]`.
    pub fn from_fn(
        dim: usize,
        horizon: f64,
        steps: usize,
        f: impl Fn(f64) -> DVector<f64>,
    ) -> Result<Self> {
        let h = horizon / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
        let values: Vec<DVector<f64>> = times.iter().map(|&t| f(t)).collect();
        if values.iter().any(|v| v.nrows() != dim) {
            return Err(Error::DimensionMismatch("control sample dimension".into()));
        }
        Self::new(times, values)
    }

    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn squared_l2_norm(&self) -> f64 {
        self.squared_l2_norm
    }

    /// Linear interpolation inside the stored grid, zero outside.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let dim = self.dim();
        if t < self.times[0] || t > *self.times.last().unwrap() {
            return DVector::zeros(dim);
        }
        let idx = self.times.partition_point(|&x| x <= t);
        let hi = idx.clamp(1, self.times.len() - 1);
        let lo = hi - 1;
        let span = self.times[hi] - self.times[lo];
        let w = ((t - self.times[lo]) / span).clamp(0.0, 1.0);
        &self.values[lo] * (1.0 - w) + &self.values[hi] * w
    }
}

/// A simulated state trajectory on a uniform grid.
#[derive(Clone, Debug)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub control_used: Option<ControlSignal>,
}

impl StateTrajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Trapezoid quadrature of `||y(t)||^2` over the stored grid.
    pub fn state_l2_sq(&self) -> f64 {
        let h = (self.times[1] - self.times[0]).abs();
        let sq: Vec<f64> = self.states.iter().map(|s| s.norm_squared()).collect();
        trapezoid(h, &sq)
    }
}

/// Simulate `y' = A(t) y + B(t) u(t)` over `grid` with `y(t_start) = z`.
///
/// The control is interpolated linearly onto the integration nodes and
/// zero-extended beyond its horizon.
pub fn simulate(
    sys: &PeriodicSystem,
    z: &DVector<f64>,
    u: Option<&ControlSignal>,
    grid: TimeGrid,
) -> Result<StateTrajectory> {
    if z.nrows() != sys.dim_state() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has dimension {}, system expects {}",
            z.nrows(),
            sys.dim_state()
        )));
    }
    if let Some(u) = u {
        if u.dim() != sys.dim_control() {
            return Err(Error::DimensionMismatch(format!(
                "control has dimension {}, system expects {}",
                u.dim(),
                sys.dim_control()
            )));
        }
    }
    let op = OperatorGrid::sample(|t| sys.a_full(t), grid.t_start, grid.t_end, grid.steps);
    let states = match u {
        None => propagate_vector_recorded(&op, z.clone(), None),
        Some(u) => {
            let bu = |t: f64| sys.b(t) * u.eval(t);
            let f_nodes: Vec<DVector<f64>> = (0..=grid.steps).map(|j| bu(op.time(j))).collect();
            let f_mids: Vec<DVector<f64>> = (0..grid.steps)
                .map(|j| bu(op.t0 + (j as f64 + 0.5) * op.h))
                .collect();
            propagate_vector_recorded(&op, z.clone(), Some((&f_nodes, &f_mids)))
        }
    };
    let times = (0..=grid.steps).map(|j| op.time(j)).collect();
    Ok(StateTrajectory {
        times,
        states,
        control_used: u.cloned(),
    })
}

/// Adjoint solution `phi_n(.; psi)` on `[0, nT]` with its observed output.
#[derive(Clone, Debug)]
pub struct AdjointTrajectory {
    pub times: Vec<f64>,
    pub phi: Vec<DVector<f64>>,
    pub output: Vec<DVector<f64>>,
    pub terminal: DVector<f64>,
    pub output_l2_norm: f64,
}

impl AdjointTrajectory {
    pub fn initial_norm(&self) -> f64 {
        self.phi[0].norm()
    }
}

/// Reusable backward-integration context for `phi' = -A(t)^T phi` on `[0, nT]`.
///
/// Build once, then solve for many terminal values `psi`; the operator grid
/// is the expensive part.
pub struct AdjointSolver {
    steps: usize,
    h: f64,
    grid: OperatorGrid,
    times: Vec<f64>,
    b_nodes: Vec<DMatrix<f64>>,
}

impl AdjointSolver {
    pub fn new(sys: &PeriodicSystem, n: usize, steps_per_period: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidArgument(
                "adjoint horizon needs n >= 1 periods".into(),
            ));
        }
        let t_end = n as f64 * sys.period();
        let steps = n * steps_per_period;
        // time reversal: sigma(tau) = phi(nT - tau) solves sigma' = A(nT-tau)^T sigma
        let grid = OperatorGrid::sample(
            |tau| sys.a_full(t_end - tau).transpose(),
            0.0,
            t_end,
            steps,
        );
        let h = t_end / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
        let b_nodes = times.iter().map(|&t| sys.b(t)).collect();
        Ok(AdjointSolver {
            steps,
            h,
            grid,
            times,
            b_nodes,
        })
    }

    pub fn solve(&self, psi: &DVector<f64>) -> Result<AdjointTrajectory> {
        let d = self.b_nodes[0].nrows();
        if psi.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "terminal value has dimension {}, system expects {d}",
                psi.nrows()
            )));
        }
        let sigma = propagate_vector_recorded(&self.grid, psi.clone(), None);
        let phi: Vec<DVector<f64>> = (0..=self.steps)
            .map(|j| sigma[self.steps - j].clone())
            .collect();
        let output: Vec<DVector<f64>> = phi
            .iter()
            .zip(&self.b_nodes)
            .map(|(p, b)| b.transpose() * p)
            .collect();
        let sq: Vec<f64> = output.iter().map(|w| w.norm_squared()).collect();
        let output_l2_norm = trapezoid(self.h, &sq).max(0.0).sqrt();
        Ok(AdjointTrajectory {
            times: self.times.clone(),
            phi,
            output,
            terminal: psi.clone(),
            output_l2_norm,
        })
    }
}

/// Solve the adjoint equation backward from `phi(nT) = psi`.
pub fn adjoint_trajectory(
    sys: &PeriodicSystem,
    n: usize,
    psi: &DVector<f64>,
    steps_per_period: usize,
) -> Result<AdjointTrajectory> {
    AdjointSolver::new(sys, n, steps_per_period)?.solve(psi)
}
