//! Numerical checks of normal hyperbolicity and subprincipal bounds at the
//! photon sphere of Schwarzschild–de Sitter spacetimes.

pub mod config;
pub mod error;
pub mod hamiltonian_flow;
pub mod linalg;
pub mod psi_inner;
pub mod report;
pub mod sds_metric;
pub mod subprincipal;
pub mod trajectory_csv;
pub mod sphere;

pub use error::{Error, Result};
pub use sds_metric::SdsParams;
