use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file at byte offset {offset}: {reason}")]
    MalformedFile {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("label-mismatch: {labels} labels for {points} points")]
    LabelMismatch { labels: usize, points: usize },

    #[error("calib error: {0}")]
    Calib(String),

    #[error("{path}: parse error on line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("degenerate point at the origin has no polar angle")]
    DegeneratePoint,

    #[error("no-overlap: no cyclic shift has a jointly occupied sector")]
    NoOverlap,

    #[error("no-correspondence: no label-matched correspondences in iteration {iteration}")]
    NoCorrespondence { iteration: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty-positives: no pair closer than {threshold} m with frame gap >= {min_gap}")]
    EmptyPositives { threshold: f64, min_gap: usize },

    #[error("degenerate label set: need at least one positive and one negative ({positives} positives, {negatives} negatives)")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
