use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid structure: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("permutation is not hardened")]
    NotHardened,

    #[error("layers with soft permutations: {0:?}")]
    SoftLayers(Vec<usize>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unsupported checkpoint version {0}")]
    Version(u32),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
