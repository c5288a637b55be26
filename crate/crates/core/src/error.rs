use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch in layer `{layer}`: {detail}")]
    Shape { layer: String, detail: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("class `{class}` has {available} samples, episode needs {needed}")]
    InsufficientSamples {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("format error in {}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged at epoch {epoch}, episode {episode}: {detail}")]
    Divergence {
        epoch: usize,
        episode: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad or missing input data rather than a
    /// failure of the computation itself.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::Io { .. }
                | Error::InsufficientSamples { .. }
                | Error::DegenerateInput(_)
        )
    }
}
