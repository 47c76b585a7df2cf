use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported audio format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("voicing labels incomplete: {0}")]
    LabelsIncomplete(String),

    #[error("filter centre {center_hz:.1} Hz is not below Nyquist ({nyquist_hz:.1} Hz)")]
    FilterOutOfBand { center_hz: f64, nyquist_hz: f64 },

    #[error("pitch unavailable: {0}")]
    PitchUnavailable(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("calibration impossible: {0}")]
    CalibrationImpossible(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("malformed {what}: {reason}")]
    Parse { what: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            reason: reason.to_string(),
        }
    }

    /// True for failures of the analysis pipeline itself (pitch, calibration),
    /// as opposed to bad files or bad arguments.
    pub fn is_pipeline(&self) -> bool {
        matches!(
            self,
            Error::PitchUnavailable(_)
                | Error::CalibrationImpossible(_)
                | Error::MetricUndefined(_)
                | Error::DegenerateVariance(_)
                | Error::Degenerate(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. } | Error::Parse { .. })
    }
}
