//! Operational modal analysis from ambient vibration records.
//!
//! The crate implements covariance-driven stochastic subspace
//! identification with a randomized low-rank SVD in place of the dense
//! decomposition of the block-Toeplitz correlation matrix, stabilization
//! analysis over model order and — optionally — over the correlation time
//! lag as a third axis, two-stage clustering of the stable poles into
//! modes, and tracking of those modes across monitoring sessions. A
//! synthetic shear-frame generator with exact modal truth supports
//! end-to-end validation.

pub mod cluster;
pub mod error;
pub mod linalg;
pub mod memtrack;
pub mod randla;
pub mod signal;
pub mod ssi;
pub mod stab;
pub mod synth;
pub mod track;

pub use error::{Error, Result};

/// Crate version, for embedding in output provenance documents.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process-wide allocation counter so benchmarks can report true peak
/// memory for each decomposition path.
#[global_allocator]
static ALLOC: memtrack::CountingAllocator = memtrack::CountingAllocator;
