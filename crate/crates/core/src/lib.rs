//! Numerical laboratory for topological versus restoration entropy of
//! smooth torus maps.
//!
//! All entropies, exponents and pressures are in bits (base-2 logarithms)
//! per iteration.

pub mod cocycle;
pub mod error;
pub mod estimators;
pub mod int_matrix;
pub mod observer;
pub mod periodic;
pub mod torus;

pub use error::{Error, Result};
pub use int_matrix::IntMatrix;
pub use torus::{LiftVector, MapKind, MapSpec, TorusPoint};
