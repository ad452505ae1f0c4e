//! Certification and synthesis of periodic stabilizing feedback for linear
//! time-periodic systems `y'(t) = A(t) y(t) + B(t) u(t)`.
//!
//! The crate is organized around one question: does a finite-dimensional
//! `T`-periodic pair `(A(·), B(·))` admit a periodic feedback `K(·)` that makes
//! the closed loop exponentially stable?  The answer is certified through a
//! detectability inequality on adjoint solutions,
//!
//! ```text
//! ||phi_n(0; psi)|| <= delta ||psi|| + C ||B(.)^T phi_n(.; psi)||_{L2(0,nT)}
//! ```
//!
//! with `delta < 1`, and the certificate `(n, delta, C)` is produced
//! constructively by a Tikhonov-regularized minimum-energy control sweep.
//! From a certificate the crate builds block-concatenated controls with
//! geometric state decay, a periodic gain schedule, decay-rate fits, LQ cost
//! estimates via a periodic Riccati sweep, and a Floquet/spectral analysis
//! (Poincare map, Riesz projector, unique-continuation test) that decides
//! stabilizability independently.

pub mod detectability;
pub mod error;
pub mod gramian;
pub mod heat;
pub mod io;
mod linalg;
pub mod propagator;
pub mod registry;
pub mod spectral;
pub mod stabilizer;
pub mod system;

pub use detectability::{
    certificate_search, check_inequality, default_gamma_grid, min_energy_control, worst_case_psi,
    DetectabilityCertificate, InequalityReport,
};
pub use error::{Error, Result};
pub use gramian::{control_to_state, observability_gramian, GramianBundle};
pub use heat::{build_heat_galerkin, heat_reference_report, HeatConfig, HeatReport, Normalization};
pub use propagator::{
    adjoint_trajectory, simulate, transition, AdjointTrajectory, ControlSignal, StateTrajectory,
    TransitionMatrix, DEFAULT_STEPS_PER_PERIOD,
};
pub use spectral::{
    hautus_detectability, kato_projection, poincare_spectrum, unique_continuation_test,
    SpectralSummary,
};
pub use stabilizer::{
    block_concatenation, closed_loop_decay, cost_bound, lq_cost, periodic_feedback_from_gramian,
    riccati_periodic, BlockRun, DecayFit, PeriodicFeedback, RiccatiOutcome, RiccatiSolution,
};
pub use system::{
    adjoint_injection_system, build_system, sample_operator, OperatorKind, OperatorSpec,
    PeriodicSystem, SystemDescription, TimeGrid,
};
