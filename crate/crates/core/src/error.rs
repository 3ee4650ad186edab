use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition (e.g. non-unit direction).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is outside its legal range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Geometry degenerated below numeric tolerances (e.g. point at camera center).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Rejection sampling could not fill the requested point budget.
    #[error(
        "visual hull too small: accepted {accepted} of {requested} points \
         (acceptance rate {acceptance_rate:.6} over {attempts} attempts)"
    )]
    HullTooSmall {
        accepted: usize,
        requested: usize,
        attempts: u64,
        acceptance_rate: f64,
    },

    /// Training removed every point or produced non-finite parameters.
    #[error("training collapsed: {0}")]
    TrainingCollapse(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}
