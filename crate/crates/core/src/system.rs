//! Finite-dimensional time-periodic control systems `y' = (A + D(t)) y + B(t) u`.
//!
//! Operator-valued functions are either registered closed forms or uniform
//! tabulations with linear interpolation; both are wrapped periodically, so
//! `D(t + T) = D(t)` holds exactly by construction.  Systems are immutable
//! after construction and all sampling is pure.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major nested-list matrix representation used in structured text files.
pub type MatrixData = Vec<Vec<f64>>;

pub(crate) fn matrix_from_rows(rows: &MatrixData, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::DimensionMismatch(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!(
            "{what}: ragged or empty rows"
        )));
    }
    let m = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
    ensure_finite(&m, what)?;
    Ok(m)
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> MatrixData {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Declarative description of an operator-valued function of time.
///
/// The closed forms are the registered names accepted in system description
/// files; everything else must be tabulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    /// Identically zero.
    Zero,
    /// Constant matrix.
    Constant { matrix: MatrixData },
    /// `scale * sin^2(t) * I` (pi-periodic, square matrices only).
    ScaledIdentitySinSquared { scale: f64 },
    /// `C0 + sum_j [ S_j sin(2 pi j t / T) + C_j cos(2 pi j t / T) ]` with the
    /// system period `T`.
    TrigPolynomial {
        constant: MatrixData,
        sin_coeffs: Vec<MatrixData>,
        cos_coeffs: Vec<MatrixData>,
    },
    /// Samples on ascending times covering `[0, T]`, linearly interpolated and
    /// periodically wrapped.
    Tabulated {
        times: Vec<f64>,
        matrices: Vec<MatrixData>,
    },
}

impl OperatorSpec {
    /// Constant spec from a dense matrix.
    pub fn constant(m: &DMatrix<f64>) -> Self {
        OperatorSpec::Constant {
            matrix: matrix_to_rows(m),
        }
    }

    /// Tabulated spec from dense samples.
    pub fn tabulated(times: Vec<f64>, matrices: &[DMatrix<f64>]) -> Self {
        OperatorSpec::Tabulated {
            times,
            matrices: matrices.iter().map(matrix_to_rows).collect(),
        }
    }

    fn is_tabulated(&self) -> bool {
        matches!(self, OperatorSpec::Tabulated { .. })
    }

    /// Conjugate the spec by an orthogonal matrix: `M -> r M r^T` when
    /// `square` is set, `M -> r M` otherwise (input operators).
    pub fn conjugate(&self, r: &DMatrix<f64>, square: bool) -> Result<OperatorSpec> {
        let map = |rows: &MatrixData| -> Result<MatrixData> {
            let m = matrix_from_rows(rows, "conjugate")?;
            let out = if square {
                r * m * r.transpose()
            } else {
                r * m
            };
            Ok(matrix_to_rows(&out))
        };
        Ok(match self {
            OperatorSpec::Zero => OperatorSpec::Zero,
            OperatorSpec::Constant { matrix } => OperatorSpec::Constant { matrix: map(matrix)? },
            OperatorSpec::ScaledIdentitySinSquared { scale } => {
                if square {
                    // commutes with any orthogonal conjugation
                    OperatorSpec::ScaledIdentitySinSquared { scale: *scale }
                } else {
                    return Err(Error::InvalidArgument(
                        "scaled identity cannot be used as a non-square operator".into(),
                    ));
                }
            }
            OperatorSpec::TrigPolynomial {
                constant,
                sin_coeffs,
                cos_coeffs,
            } => OperatorSpec::TrigPolynomial {
                constant: map(constant)?,
                sin_coeffs: sin_coeffs.iter().map(&map).collect::<Result<_>>()?,
                cos_coeffs: cos_coeffs.iter().map(&map).collect::<Result<_>>()?,
            },
            OperatorSpec::Tabulated { times, matrices } => OperatorSpec::Tabulated {
                times: times.clone(),
                matrices: matrices.iter().map(&map).collect::<Result<_>>()?,
            },
        })
    }
}

/// How an operator sampler is represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    ClosedFormRegistered,
    TabulatedWithLinearInterpolation,
}

/// A compiled, periodically wrapped operator sampler.
#[derive(Clone, Debug)]
pub struct MatrixSampler {
    rows: usize,
    cols: usize,
    period: f64,
    spec: OperatorSpec,
    repr: SamplerRepr,
}

#[derive(Clone, Debug)]
enum SamplerRepr {
    Zero,
    Constant(DMatrix<f64>),
    SinSquared { scale: f64 },
    Trig {
        constant: DMatrix<f64>,
        sin: Vec<DMatrix<f64>>,
        cos: Vec<DMatrix<f64>>,
    },
    Tabulated {
        times: Vec<f64>,
        matrices: Vec<DMatrix<f64>>,
    },
}

impl MatrixSampler {
    pub(crate) fn compile(
        spec: &OperatorSpec,
        rows: usize,
        cols: usize,
        period: f64,
        what: &str,
    ) -> Result<Self> {
        let check_dims = |m: &DMatrix<f64>| -> Result<()> {
            if m.nrows() != rows || m.ncols() != cols {
                Err(Error::DimensionMismatch(format!(
                    "{what}: expected {rows}x{cols}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        let repr = match spec {
            OperatorSpec::Zero => SamplerRepr::Zero,
            OperatorSpec::Constant { matrix } => {
                let m = matrix_from_rows(matrix, what)?;
                check_dims(&m)?;
                SamplerRepr::Constant(m)
            }
            OperatorSpec::ScaledIdentitySinSquared { scale } => {
                if rows != cols {
                    return Err(Error::DimensionMismatch(format!(
                        "{what}: scaled identity requires a square shape, got {rows}x{cols}"
                    )));
                }
                if !scale.is_finite() {
                    return Err(Error::NonFinite(what.to_string()));
                }
                SamplerRepr::SinSquared { scale: *scale }
            }
            OperatorSpec::TrigPolynomial {
                constant,
                sin_coeffs,
                cos_coeffs,
            } => {
                let c = matrix_from_rows(constant, what)?;
                check_dims(&c)?;
                let compile_all = |specs: &[MatrixData]| -> Result<Vec<DMatrix<f64>>> {
                    specs
                        .iter()
                        .map(|m| {
                            let m = matrix_from_rows(m, what)?;
                            check_dims(&m)?;
                            Ok(m)
                        })
                        .collect()
                };
                SamplerRepr::Trig {
                    constant: c,
                    sin: compile_all(sin_coeffs)?,
                    cos: compile_all(cos_coeffs)?,
                }
            }
            OperatorSpec::Tabulated { times, matrices } => {
                if times.len() != matrices.len() || times.len() < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "{what}: tabulation needs matching times/matrices with >= 2 nodes"
                    )));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite())
                {
                    return Err(Error::InvalidArgument(format!(
                        "{what}: tabulation times must be finite and strictly ascending"
                    )));
                }
                let t_first = times[0];
                let t_last = *times.last().unwrap();
                if t_first > 1e-9 || t_last < period - 1e-9 {
                    return Err(Error::TabulationCoverage {
                        period,
                        t_first,
                        t_last,
                    });
                }
                let mats = matrices
                    .iter()
                    .map(|m| {
                        let m = matrix_from_rows(m, what)?;
                        check_dims(&m)?;
                        Ok(m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                SamplerRepr::Tabulated {
                    times: times.clone(),
                    matrices: mats,
                }
            }
        };
        Ok(MatrixSampler {
            rows,
            cols,
            period,
            spec: spec.clone(),
            repr,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        if self.spec.is_tabulated() {
            SamplerKind::TabulatedWithLinearInterpolation
        } else {
            SamplerKind::ClosedFormRegistered
        }
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    /// Evaluate at any `t >= 0`, periodically wrapped into `[0, period)`.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let tau = t.rem_euclid(self.period);
        match &self.repr {
            SamplerRepr::Zero => DMatrix::zeros(self.rows, self.cols),
            SamplerRepr::Constant(m) => m.clone(),
            SamplerRepr::SinSquared { scale } => {
                let s = tau.sin();
                DMatrix::identity(self.rows, self.cols) * (scale * s * s)
            }
            SamplerRepr::Trig { constant, sin, cos } => {
                let mut out = constant.clone();
                let omega = 2.0 * std::f64::consts::PI / self.period;
                for (j, m) in sin.iter().enumerate() {
                    out += m * ((j as f64 + 1.0) * omega * tau).sin();
                }
                for (j, m) in cos.iter().enumerate() {
                    out += m * ((j as f64 + 1.0) * omega * tau).cos();
                }
                out
            }
            SamplerRepr::Tabulated { times, matrices } => {
                let idx = times.partition_point(|&x| x <= tau);
                let hi = idx.clamp(1, times.len() - 1);
                let lo = hi - 1;
                let span = times[hi] - times[lo];
                let w = ((tau - times[lo]) / span).clamp(0.0, 1.0);
                &matrices[lo] * (1.0 - w) + &matrices[hi] * w
            }
        }
    }
}

/// Which operator of the system to sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// `A + D(t)`.
    AFull,
    /// `D(t)` alone.
    DOnly,
    /// `B(t)`.
    B,
}

/// A validated finite-dimensional time-periodic control system.
#[derive(Clone, Debug)]
pub struct PeriodicSystem {
    dim_state: usize,
    dim_control: usize,
    period: f64,
    a_const: DMatrix<f64>,
    d_sampler: MatrixSampler,
    b_sampler: MatrixSampler,
    label: String,
}

impl PeriodicSystem {
    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_control(&self) -> usize {
        self.dim_control
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn a_const(&self) -> &DMatrix<f64> {
        &self.a_const
    }

    pub fn d_sampler(&self) -> &MatrixSampler {
        &self.d_sampler
    }

    pub fn b_sampler(&self) -> &MatrixSampler {
        &self.b_sampler
    }

    /// `A + D(t)`.
    pub fn a_full(&self, t: f64) -> DMatrix<f64> {
        &self.a_const + self.d_sampler.eval(t)
    }

    /// `B(t)`.
    pub fn b(&self, t: f64) -> DMatrix<f64> {
        self.b_sampler.eval(t)
    }

    /// Serializable description that rebuilds this system.
    pub fn description(&self) -> SystemDescription {
        SystemDescription {
            dim_state: self.dim_state,
            dim_control: self.dim_control,
            period: self.period,
            a_const: matrix_to_rows(&self.a_const),
            d_spec: self.d_sampler.spec().clone(),
            b_spec: self.b_sampler.spec().clone(),
            label: self.label.clone(),
        }
    }
}

/// Structured-text (JSON-compatible) description of a system.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemDescription {
    pub dim_state: usize,
    pub dim_control: usize,
    pub period: f64,
    pub a_const: MatrixData,
    pub d_spec: OperatorSpec,
    pub b_spec: OperatorSpec,
    pub label: String,
}

impl SystemDescription {
    pub fn build(&self) -> Result<PeriodicSystem> {
        let a = matrix_from_rows(&self.a_const, "a_const")?;
        build_system(
            (self.dim_state, self.dim_control),
            self.period,
            a,
            &self.d_spec,
            &self.b_spec,
            self.label.clone(),
        )
    }

    /// Same dynamics in rotated state coordinates `y -> r y` for orthogonal `r`.
    pub fn conjugate_by_orthogonal(&self, r: &DMatrix<f64>) -> Result<SystemDescription> {
        if r.nrows() != self.dim_state || r.ncols() != self.dim_state {
            return Err(Error::DimensionMismatch(
                "conjugation matrix must match the state dimension".into(),
            ));
        }
        let a = matrix_from_rows(&self.a_const, "a_const")?;
        Ok(SystemDescription {
            dim_state: self.dim_state,
            dim_control: self.dim_control,
            period: self.period,
            a_const: matrix_to_rows(&(r * a * r.transpose())),
            d_spec: self.d_spec.conjugate(r, true)?,
            b_spec: self.b_spec.conjugate(r, false)?,
            label: format!("{}-rotated", self.label),
        })
    }
}

/// Validate and assemble a [`PeriodicSystem`].
pub fn build_system(
    dims: (usize, usize),
    period: f64,
    a_const: DMatrix<f64>,
    d_spec: &OperatorSpec,
    b_spec: &OperatorSpec,
    label: impl Into<String>,
) -> Result<PeriodicSystem> {
    let (dim_state, dim_control) = dims;
    if dim_state == 0 || dim_control == 0 {
        return Err(Error::InvalidArgument(
            "state and control dimensions must be positive".into(),
        ));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "period must be positive and finite, got {period}"
        )));
    }
    if a_const.nrows() != dim_state || a_const.ncols() != dim_state {
        return Err(Error::DimensionMismatch(format!(
            "a_const: expected {dim_state}x{dim_state}, got {}x{}",
            a_const.nrows(),
            a_const.ncols()
        )));
    }
    ensure_finite(&a_const, "a_const")?;
    let d_sampler = MatrixSampler::compile(d_spec, dim_state, dim_state, period, "d_spec")?;
    let b_sampler = MatrixSampler::compile(b_spec, dim_state, dim_control, period, "b_spec")?;
    let sys = PeriodicSystem {
        dim_state,
        dim_control,
        period,
        a_const,
        d_sampler,
        b_sampler,
        label: label.into(),
    };
    // probe a few evaluation points so closed forms with bad parameters fail here
    for k in 0..5 {
        let t = period * (k as f64) / 4.0;
        ensure_finite(&sys.a_full(t), "d_spec evaluation")?;
        ensure_finite(&sys.b(t), "b_spec evaluation")?;
    }
    Ok(sys)
}

/// Sample one of the system operators at `t >= 0`.
pub fn sample_operator(sys: &PeriodicSystem, which: OperatorKind, t: f64) -> Result<DMatrix<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "sample time must be nonnegative, got {t}"
        )));
    }
    Ok(match which {
        OperatorKind::AFull => sys.a_full(t),
        OperatorKind::DOnly => sys.d_sampler.eval(t),
        OperatorKind::B => sys.b(t),
    })
}

/// Output-injection adjoint system `z'(t) = [A(t)^T + L(t) B(t)^T] z(t)`.
///
/// The injection `L` is supplied by the caller and evaluated empirically; no
/// correspondence with a stabilizing feedback is assumed.  The composite state
/// matrix is tabulated on `nodes` uniform intervals over one `l_period` and
/// the returned system carries a zero control operator.
pub fn adjoint_injection_system(
    sys: &PeriodicSystem,
    l_sampler: impl Fn(f64) -> DMatrix<f64>,
    l_period: f64,
    nodes: usize,
) -> Result<PeriodicSystem> {
    if !(l_period > 0.0) || !l_period.is_finite() {
        return Err(Error::InvalidArgument("l_period must be positive".into()));
    }
    let ratio = l_period / sys.period();
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "l_period = {l_period} must be a positive integer multiple of the system period {}",
            sys.period()
        )));
    }
    if nodes < 2 {
        return Err(Error::InvalidArgument(
            "tabulation needs at least 2 nodes".into(),
        ));
    }
    let d = sys.dim_state();
    let m = sys.dim_control();
    let h = l_period / nodes as f64;
    let mut times = Vec::with_capacity(nodes + 1);
    let mut mats = Vec::with_capacity(nodes + 1);
    for j in 0..=nodes {
        let t = (j as f64) * h;
        let l = l_sampler(t);
        if l.nrows() != d || l.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "injection gain: expected {d}x{m}, got {}x{}",
                l.nrows(),
                l.ncols()
            )));
        }
        let composite = sys.d_sampler.eval(t).transpose() + l * sys.b(t).transpose();
        ensure_finite(&composite, "injection sampler")?;
        times.push(t);
        mats.push(composite);
    }
    build_system(
        (d, m),
        l_period,
        sys.a_const().transpose(),
        &OperatorSpec::tabulated(times, &mats),
        &OperatorSpec::Zero,
        format!("{}-output-injection", sys.label()),
    )
}

/// Uniform integration window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time grid needs t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs steps >= 1".into()));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            steps,
        })
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t_start) / self.steps as f64
    }
}
