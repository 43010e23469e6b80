use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate embedding{}: all interspike intervals are zero", fmt_entity(*entity))]
    DegenerateEmbedding { entity: Option<usize> },

    #[error("silent neuron: entity {entity} produces no spike in slot {slot}")]
    SilentNeuron { entity: usize, slot: usize },

    #[error("ill-conditioned interval gradient: membrane slope {slope:e} at threshold crossing")]
    IllConditioned { slope: f64 },

    #[error("non-finite gradient in parameter tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("coefficient of variation undefined: mean ISI {mean} <= refractory period {tau_ref}")]
    UndefinedCv { mean: f64, tau_ref: f64 },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation: {0}")]
    Eval(String),
}

fn fmt_entity(entity: Option<usize>) -> String {
    entity.map(|e| format!(" for entity {e}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 1,
            Error::Parse { .. }
            | Error::UnknownLabel { .. }
            | Error::Io { .. }
            | Error::Dimension(_)
            | Error::Checkpoint(_)
            | Error::Eval(_) => 2,
            Error::DegenerateEmbedding { .. }
            | Error::SilentNeuron { .. }
            | Error::IllConditioned { .. }
            | Error::NonFiniteGradient { .. }
            | Error::NonFiniteLoss { .. }
            | Error::UndefinedCv { .. } => 3,
        }
    }
}
