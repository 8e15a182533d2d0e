use num_complex::Complex64;
use thiserror::Error;

/// Error type shared across the toolkit.
#[derive(Debug, Error)]
pub enum GefError {
    /// A request outside the validity region of a truncated series, or an
    /// otherwise ill-posed input (evaluation at a zero, bad parameter).
    #[error("domain error: {0}")]
    Domain(String),

    /// A size or budget cap would be exceeded (truncation degree, storage
    /// capacity inside a unit square, step budget).
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Two independent computations of the same quantity disagree
    /// (e.g. winding-number census vs. polished zero count).
    #[error("inconsistency: {0}")]
    Inconsistency(String),

    /// Gradient-curve integration failed; carries the last location so an
    /// unlisted singularity can be investigated.
    #[error("integration error near {location}: {reason}")]
    Integration { location: Complex64, reason: String },

    /// Sink assignment did not end at a zero.
    #[error("assignment failure: trajectory terminated with {terminal}")]
    Assignment { terminal: String },

    /// A point cloud handed to the area-contraction measurement straddles
    /// several basins.
    #[error("region not contained in a single basin: {0}")]
    RegionNotContained(String),

    /// Too many grid nodes could not be resolved to a sink.
    #[error("tessellation quality error: {0}")]
    Tessellation(String),

    /// A raster partition violates its structural invariants.
    #[error("malformed partition: {0}")]
    MalformedPartition(String),

    /// Cut-off conservation check failed; the diff report is embedded.
    #[error("conservation failure: {0}")]
    Conservation(String),

    /// On-disk format problems (bad magic, version, truncation).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GefError>;

impl GefError {
    /// Process exit code category: domain/numeric errors map to 1,
    /// usage errors are handled by the CLI layer as 2.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
