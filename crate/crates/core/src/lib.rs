//! Heat kernels of sums of squares of homogeneous Hörmander vector fields.
//!
//! The pipeline: validate a [`systems::HomogeneousSystem`], lift it to a
//! [`group::CarnotGroup`], evaluate the group kernel, saturate over the added
//! variables to get the base kernel, then check envelopes, the Cauchy problem
//! and Harnack ratios numerically.

pub mod catalog;
pub mod cauchy;
pub mod envelopes;
pub mod error;
pub mod flow;
pub mod group;
pub mod harnack;
pub mod heisenberg;
pub mod kernel;
pub mod metric;
pub mod poly;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod systems;
pub mod tolerances;

pub use error::{Error, Result};
