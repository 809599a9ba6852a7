//! Numerical laboratory for finite causal fermion systems.

pub mod error;
pub mod fd;
pub mod linalg;
pub mod operator_core;
pub mod system_measure;
pub mod action_optim;
pub mod fixtures;
pub mod surface_layer;
pub mod linfield_complex;
pub mod wavefunc;
pub mod quantum_state;
pub mod fock_rep;
pub mod cli;

pub use error::{CfsError, Result};
