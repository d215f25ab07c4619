//! Finite-volume lab for the degenerate generalized porous medium equation
//! `p_t = (k(p) p_x)_x` on a 1D vertex-centred grid.
//!
//! Face coefficients are arithmetic or harmonic averages of nodal `k`; the
//! modified harmonic method (MHM) adds counter-terms that cancel the leading
//! harmonic-averaging error. Explicit Euler, TVD RK2 and Picard-iterated
//! backward Euler integrators drive the semi-discrete operator.

// Validation is written as `!(x > 0.0)` on purpose: the negation also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Stencil and tridiagonal code reads more clearly with explicit node indices.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod coefficients;
pub mod diagnostics;
pub mod error;
pub mod flux;
pub mod grid;
pub mod modeq;
pub mod simulation;
pub mod timestepping;

pub use coefficients::{CoefficientModel, KDerivatives};
pub use error::{GpmeError, Result};
pub use flux::{AveragingRule, MhmMode, MhmSwitch, SpatialOperatorConfig};
pub use grid::{Field, Grid1D, InitialPreset, ProblemSetup};
pub use simulation::{simulate, RecordOptions, RunOutput};
pub use timestepping::{DtRule, IntegratorConfig, TimeScheme};
