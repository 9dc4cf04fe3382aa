use std::fmt;

/// Errors produced anywhere in the distillation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate embedding at row {row} (norm {norm:e})")]
    DegenerateEmbedding { row: usize, norm: f64 },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged: non-finite gradient for parameter `{parameter}`")]
    Divergence { parameter: String },

    #[error("training failed for {context}: {source}")]
    Training {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source),
        }
    }
}

/// Row/column pair used in dimension errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}
