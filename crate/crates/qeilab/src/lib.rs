//! Numerical laboratory for quantum energy inequalities of the massive free
//! scalar field on the flat spacetime cylinder.
//!
//! The crate builds smeared stress tensor expressions in Hadamard states,
//! constructs the positive frequency comparison kernels that dominate them,
//! and certifies lower bounds of the form
//! `integral of F^2 <T_00> >= -C omega(:phi^2:(F^2)) - c` together with
//! pointwise consequences for classical solutions.

pub mod error;
pub mod grid;
pub mod construct;
pub mod field;
pub mod kernels;
pub mod bounds;
pub mod config;
pub mod report;
pub mod run;

pub use error::{QeiError, Result};
