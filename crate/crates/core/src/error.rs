use thiserror::Error;

/// All fallible operations in this crate return `Result<T, Error>`.
///
/// Variants are grouped by the stage that raises them; the CLI maps
/// `Divergence` and `NonFinite` to a runtime-failure exit code and
/// everything else to a usage/configuration exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes for an operation; names both shapes.
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Input outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// API misuse, e.g. differentiating a non-scalar or an eps outside
    /// the supported range.
    #[error("usage error: {0}")]
    Usage(String),

    /// A variable was used with a tape other than the one that created it.
    #[error("tape error: {0}")]
    Tape(String),

    /// A gradient expected by the optimizer or a layer is absent or
    /// mismatched in count.
    #[error("gradient consistency error: {0}")]
    Gradient(String),

    /// Invalid model or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or contradictory schema definition.
    #[error("schema error: {0}")]
    Schema(String),

    /// A dataset row failed validation; carries the 1-based line number.
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    /// Input data failed a structural or semantic check.
    #[error("validation error: {0}")]
    Validation(String),

    /// A metric is mathematically undefined for the given input.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A curve (ROC) is undefined because only one class is present.
    #[error("undefined curve: {0}")]
    UndefinedCurve(String),

    /// A named quantity became NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training loss became non-finite.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    /// Cross-validation fold construction failed.
    #[error("fold error: {0}")]
    Fold(String),

    /// A failure inside one member of an ensemble, tagged with the
    /// member's name.
    #[error("base model {name}: {source}")]
    Base { name: String, source: Box<Error> },

    /// A serialized artifact is corrupt or fails its checksum.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A serialized artifact has an unsupported format version.
    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for numeric training failures (divergence, non-finite
    /// values), directly or inside an ensemble member. The CLI gives
    /// these a distinct exit code.
    pub fn is_numeric_failure(&self) -> bool {
        match self {
            Error::NonFinite(_) | Error::Divergence { .. } => true,
            Error::Base { source, .. } => source.is_numeric_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
