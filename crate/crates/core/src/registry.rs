//! Builtin system registry and seeded random families.
//!
//! The builtins let the CLI and the acceptance suite run without external
//! files.  `random-3d` is a generic seeded draw; the hidden-unstable variant
//! plants an exactly uncontrolled unstable mode behind a random orthogonal
//! change of coordinates, which no sweep can certify and the
//! unique-continuation test must reject.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::heat::{build_heat_galerkin, build_heat_galerkin_control_mode, HeatConfig};
use crate::system::{
    build_system, matrix_to_rows, OperatorSpec, PeriodicSystem, SystemDescription,
};

/// Names accepted by [`builtin_system`].
pub const BUILTIN_NAMES: &[&str] = &[
    "heat8",
    "heat16",
    "heat8-sin2x",
    "scalar-stable",
    "scalar-unstable",
    "unstable-uncontrolled",
    "random-3d",
];

/// Look up a builtin by name; `seed` only affects `random-3d`.
pub fn builtin_system(name: &str, seed: u64) -> Result<PeriodicSystem> {
    match name {
        "heat8" => build_heat_galerkin(&HeatConfig::with_modes(8)),
        "heat16" => build_heat_galerkin(&HeatConfig::with_modes(16)),
        "heat8-sin2x" => build_heat_galerkin_control_mode(&HeatConfig::with_modes(8), 2),
        "scalar-stable" => scalar(-1.0, 1.0, "scalar-stable"),
        "scalar-unstable" => scalar(1.0, 1.0, "scalar-unstable"),
        "unstable-uncontrolled" => scalar(1.0, 0.0, "unstable-uncontrolled"),
        "random-3d" => Ok(random_system(3, seed, RandomKind::Generic)),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

fn scalar(a: f64, b: f64, label: &str) -> Result<PeriodicSystem> {
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
        DMatrix::from_element(1, 1, a),
        &OperatorSpec::Zero,
        &b_spec,
        label,
    )
}

/// Flavor of the random generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomKind {
    /// Dense Gaussian data; generically observable, so certifiable whenever
    /// stabilizable.
    Generic,
    /// A planted unstable mode decoupled from the control (3-dimensional
    /// only); not stabilizable, not detectable.
    HiddenUnstable,
}

/// Deterministic seeded random system with period 1 and one control channel.
pub fn random_system(dim: usize, seed: u64, kind: RandomKind) -> PeriodicSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let desc = match kind {
        RandomKind::Generic => {
            let scale = 0.5 / (dim as f64).sqrt();
            let a = gauss_matrix(&mut rng, dim, dim, scale);
            let d_spec = OperatorSpec::TrigPolynomial {
                constant: matrix_to_rows(&DMatrix::zeros(dim, dim)),
                sin_coeffs: vec![matrix_to_rows(&gauss_matrix(&mut rng, dim, dim, 0.15))],
                cos_coeffs: vec![matrix_to_rows(&gauss_matrix(&mut rng, dim, dim, 0.15))],
            };
            let b_spec = OperatorSpec::constant(&gauss_matrix(&mut rng, dim, 1, 1.0));
            SystemDescription {
                dim_state: dim,
                dim_control: 1,
                period: 1.0,
                a_const: matrix_to_rows(&a),
                d_spec,
                b_spec,
                label: format!("random-{dim}d-s{seed}"),
            }
        }
        RandomKind::HiddenUnstable => {
            assert_eq!(dim, 3, "hidden-unstable generator is 3-dimensional");
            let lambda_u = 0.4 + 0.5 * rng.gen::<f64>();
            let diag_a = 0.8 + rng.gen::<f64>();
            let diag_c = 0.8 + rng.gen::<f64>();
            let skew = 0.3 + 0.7 * rng.gen::<f64>();
            let mut a = DMatrix::zeros(3, 3);
            a[(0, 0)] = lambda_u;
            a[(1, 1)] = -diag_a;
            a[(2, 2)] = -diag_c;
            a[(1, 2)] = skew;
            a[(2, 1)] = -skew;
            let embed = |m: &DMatrix<f64>| {
                let mut out = DMatrix::zeros(3, 3);
                out.view_mut((1, 1), (2, 2)).copy_from(m);
                out
            };
            let d_spec = OperatorSpec::TrigPolynomial {
                constant: matrix_to_rows(&DMatrix::zeros(3, 3)),
                sin_coeffs: vec![matrix_to_rows(&embed(&gauss_matrix(&mut rng, 2, 2, 0.2)))],
                cos_coeffs: vec![matrix_to_rows(&embed(&gauss_matrix(&mut rng, 2, 2, 0.2)))],
            };
            let mut b = DMatrix::zeros(3, 1);
            b[(1, 0)] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            b[(2, 0)] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            let plain = SystemDescription {
                dim_state: 3,
                dim_control: 1,
                period: 1.0,
                a_const: matrix_to_rows(&a),
                d_spec,
                b_spec: OperatorSpec::constant(&b),
                label: format!("hidden-3d-s{seed}"),
            };
            let r = random_orthogonal(&mut rng, 3);
            plain
                .conjugate_by_orthogonal(&r)
                .expect("conjugation of a generated description cannot fail")
        }
    };
    desc.build().expect("generated description is valid")
}

/// The mixed family used by the randomized acceptance criteria: every fifth
/// seed plants a hidden unstable mode, the rest are generic.
pub fn random_family_3d(count: usize, base_seed: u64) -> Vec<PeriodicSystem> {
    (0..count)
        .map(|i| {
            let kind = if i % 5 == 0 {
                RandomKind::HiddenUnstable
            } else {
                RandomKind::Generic
            };
            random_system(3, base_seed + i as u64, kind)
        })
        .collect()
}

fn gauss_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let g = gauss_matrix(rng, dim, dim, 1.0);
    nalgebra::linalg::QR::new(g).q()
}
