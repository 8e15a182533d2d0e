//! Gradient-flow basins of Gaussian entire functions.
//!
//! The toolkit samples the random entire function `f(z) = Σ ξ_k z^k/√(k!)`,
//! follows the gradient flow of its potential `U(z) = log|f(z)| − ½|z|²`,
//! partitions a window of the plane into basins of attraction of the zeros,
//! and measures the geometry and statistics of that partition. It also
//! implements the deterministic tentacle-cutting procedure that re-allocates
//! the far parts of equal-area regions near their centers.

pub mod basins;
pub mod geom;
pub mod critical;
pub mod cutoff;
pub mod error;
pub mod flow;
pub mod gef;
pub mod io;
pub mod stats;

pub use error::{GefError, Result};
pub use gef::{GefSample, SampleKind};

pub mod cli;
