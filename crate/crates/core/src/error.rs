use thiserror::Error;

/// Errors surfaced by every subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },

    #[error("backward on empty tape")]
    EmptyTape,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("parameter {0} has no gradient")]
    MissingGradient(String),

    #[error("unknown parameter path {0}")]
    UnknownParam(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("scenario {id}: {detail}")]
    Scenario { id: String, detail: String },

    #[error("degenerate latent: both norms are zero")]
    DegenerateLatent,

    #[error("ego track invalid at step {0}")]
    EgoInvalid(usize),

    #[error("empty map after cropping")]
    EmptyMap,

    #[error("agent count {0} exceeds N_max {1}")]
    TooManyAgents(usize, usize),

    #[error("dream rollout produced non-finite latent at step {0}")]
    RolloutAbort(usize),

    #[error("schema error at line {line}: {detail}")]
    SchemaLine { line: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("import adapter not implemented: {0}")]
    Unsupported(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
