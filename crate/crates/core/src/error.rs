use std::path::PathBuf;

/// Error type shared across the simulator.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid subject: {0}")]
    InvalidSubject(String),

    #[error("invalid posture: {0}")]
    InvalidPosture(String),

    #[error("assistance gain {gain} outside allowed range [{}, {limit}]", -limit)]
    GainOutOfRange { gain: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{file}:{line}: {msg}")]
    ConfigParse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("{file}:{line}: unknown key `{key}`")]
    UnknownKey {
        file: String,
        line: usize,
        key: String,
    },

    #[error("numerical fault at t = {t_s} s: {detail}")]
    NumericalFault { t_s: f64, detail: String },

    #[error("scheduler fault: {0}")]
    SchedulerFault(String),

    #[error("metrics window is empty after settle skip of {settle_skip_s} s")]
    EmptyMetricsWindow { settle_skip_s: f64 },

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
