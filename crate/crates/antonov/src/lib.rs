//! Plane-symmetric Vlasov–Poisson steady states, the Antonov operator in
//! energy-angle variables, its band structure, limiting-absorption boundary values,
//! generalized Fourier maps and the Antonov wave equation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod action_angle;
pub mod band_structure;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod ode;
pub mod quadrature;
pub mod scattering;
pub mod steady_state;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
