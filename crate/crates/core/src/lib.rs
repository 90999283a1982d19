//! Growth eigenvalues of time-periodic, age-structured renewal systems.
//!
//! The crate models populations whose members age within phases, die or
//! transition at periodic rates, and re-enter at age zero through birth
//! kernels. It provides:
//!
//! * a coefficient language ([`coefficients`]) and model builder
//!   ([`model`]) for periodic multi-phase renewal systems, including the
//!   cell-division-cycle special case;
//! * an upwind transport solver on characteristics ([`transport`]) and a
//!   power iteration extracting the periodic growth eigenvalue
//!   ([`eigensolver`]);
//! * time-averaged companion models (arithmetic and mixed
//!   geometric/arithmetic) whose eigenvalues bound the periodic one;
//! * a dual (adjoint) eigenfunction solver and inequality verifiers
//!   ([`adjoint`]);
//! * dense nonnegative-matrix utilities ([`matrix`]) used both as an
//!   independent cross-check on the solver and for spectral-radius
//!   interpolation experiments.

pub mod adjoint;
pub mod coefficients;
pub mod eigensolver;
pub mod error;
pub mod grid;
pub mod matrix;
pub mod model;
pub mod sampling;
pub mod transport;

pub use coefficients::{AverageMode, CoefficientSpec, TrigTerm};
pub use error::{Error, Result};
pub use model::{BirthEntry, CellCyclePhase, ModelKind, PhaseModel};
