//! Finite-N particle optimal control with selective controls, its Pontryagin
//! forward–backward system, and numerical diagnostics of the mean-field limit.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: equal-weight empirical and phase-space measures, exact and
//!   entropic Wasserstein-1 distances.
//! - [`problems`]: the problem catalog, with analytic spatial and Wasserstein
//!   differentials, plus the multi-label replicator dynamics.
//! - [`simulate`]: RK4 integration of the controlled particle system and the
//!   discrete cost.
//! - [`pmp`]: Hamiltonian, backward costate, forward–backward sweep, exact
//!   discrete adjoint and a projected-gradient baseline.
//! - [`meanfield`]: generated phase measures and the limit diagnostics
//!   (uniform bounds, convergence, control-density extraction, maximality).
//! - [`oracle`]: brute-force optimizers for tiny instances.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod error;
pub mod meanfield;
pub mod measures;
pub mod oracle;
pub mod par;
pub mod pmp;
pub mod problems;
pub mod simulate;
pub(crate) mod vec;

pub use error::{Error, Result};
pub use measures::{AtomicMeasure, EmpiricalMeasure, PhaseMeasure, VectorMeasure};
pub use problems::{catalog, ProblemSpec};
pub use simulate::{ControlGrid, TimeGrid, TrajectoryBundle};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
