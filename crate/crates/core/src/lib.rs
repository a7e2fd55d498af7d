// Force linkage of the system BLAS/LAPACK backend used by ndarray-linalg.
extern crate openblas_src as _;

pub mod cli;
pub mod device;
pub mod error;
pub mod fock;
pub mod gates;
pub mod evolve;
pub mod experiments;
pub mod hamiltonians;
pub mod metrics;
pub mod sparse;

pub use error::{Error, Result};
