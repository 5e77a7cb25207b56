//! Hybridizable discontinuous Galerkin discretization of coupled
//! time-dependent Navier-Stokes / Darcy flow in two dimensions, with
//! backward Euler time stepping.

pub mod diagnostics;
pub mod error;
pub mod femlib;
pub mod forms;
pub mod mesh;
pub mod scenarios;
pub mod solver;
pub mod spaces;
pub mod stepper;

pub use error::{HdgError, Result};
