use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no embeddings")]
    NoEmbeddings,
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("zero-norm descriptor")]
    ZeroNorm,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("duplicate trajectory_id `{0}`")]
    DuplicateTrajectory(String),
    #[error("unknown trajectory_id `{0}`")]
    UnknownTrajectory(String),
    #[error("trajectory `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset is not fully labeled (trajectory `{0}` has no identity_id)")]
    MissingIdentity(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(
        "could not place {identities} centroids at separation {separation} after {attempts} attempts; \
         use fewer identities or a smaller separation"
    )]
    SeparationUnsatisfiable {
        identities: usize,
        separation: f64,
        attempts: usize,
    },
}
