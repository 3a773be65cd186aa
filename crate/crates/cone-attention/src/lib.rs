//! Hyperbolic entailment-cone attention.
//!
//! Similarity kernels that score a pair of points by the depth of their
//! geometric lowest common ancestor under shadow cones in the Poincaré
//! half-space, as drop-in replacements for dot-product attention, together
//! with the projection maps that feed them, analytic gradients, baselines,
//! brute-force geometric oracles, and desk-scale hierarchy and throughput
//! benchmarks.

pub mod attention;
pub mod bench;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod gradients;
pub mod hierarchy;
pub mod io;
pub mod kernels;
pub mod matrix;
pub mod oracle;
pub mod projections;

pub use error::{Error, Result};
pub use geometry::{HalfSpacePoint, HyperboloidPoint};
pub use kernels::{KernelConfig, KernelKind, ProjectionKind};
pub use matrix::Matrix;
