//! Modal-centric field inversion for modified viscous Burgers flows.
//!
//! The crate wires together five layers:
//!
//! - [`model`]: grids, trajectories, singular triplets, and the
//!   design-to-field parametrization (Gaussian bumps in 1D, constant strips
//!   in 2D);
//! - [`burgers`]: the smooth-upwind finite-difference solver and its exact
//!   Jacobian-transpose contractions;
//! - [`pod`]: snapshot centering and SVD-based mode extraction;
//! - [`objectives`] and [`adjoint`]: mode-matching losses and the adjoint
//!   gradient that needs a single backward sweep regardless of how many
//!   modes the loss tracks;
//! - [`verify`] and [`optimize`]: the finite-difference comparison harness
//!   and a projected quasi-Newton optimizer for the inverse problem.
//!
//! [`pipeline`] bundles the pieces into runnable problems.

pub mod adjoint;
pub mod burgers;
pub mod error;
pub mod model;
pub mod objectives;
pub mod optimize;
pub mod pipeline;
pub mod pod;
pub mod verify;

pub use burgers::{initial_condition, simulate, smooth_selector, SolverConfig};
pub use error::{McfiError, Result};
pub use model::{DesignSpec, Dim, Grid, SingularTriplet, Trajectory};
pub use objectives::{ObjectiveKind, ObjectiveSpec, Targets};
pub use optimize::{minimize, OptimizeHistory, OptimizeOptions, StopReason};
pub use pipeline::Problem;
pub use pod::{center, compute_modes, CenteredSnapshots, ModeSet};
pub use verify::{grad_check, Components, GradCheckReport};
