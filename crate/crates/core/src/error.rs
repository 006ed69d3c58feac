use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no points")]
    EmptyInput,

    #[error("normals are undefined for clouds with fewer than 3 points (got {0})")]
    NormalsUndefined(usize),

    #[error("tetrahedron is degenerate")]
    DegenerateTetrahedron,

    #[error("both clusters have zero spacing but are {distance} apart")]
    ZeroSpacing { distance: f64 },

    #[error("{0} is undefined")]
    Undefined(&'static str),

    #[error("assignment uses absent edge ({row}, {col})")]
    ForbiddenEdge { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported or malformed file: {0}")]
    Format(String),

    #[error("label count {labels} does not match point count {points}")]
    LabelCount { labels: usize, points: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
