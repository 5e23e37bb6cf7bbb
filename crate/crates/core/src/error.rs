use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage, attached to errors surfaced by the orchestrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Depth,
    PoseFusion,
    Integration,
    Meshing,
    Evaluation,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Depth => "depth",
            Stage::PoseFusion => "pose-fusion",
            Stage::Integration => "integration",
            Stage::Meshing => "meshing",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("gimbal lock: pitch is within tolerance of +/-90 degrees")]
    GimbalLock,
    #[error("value outside the mapping domain: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("count mismatch: expected {expected}, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("insufficient correspondences: {found} after pruning (need {required})")]
    InsufficientCorrespondences { found: usize, required: usize },
    #[error("no correspondences within the maximum correspondence distance")]
    NoCorrespondences,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("pose graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("degenerate measurements: eigen-gap {gap:.3e} below tolerance")]
    RankDeficient { gap: f64 },
    #[error("volume contains no zero crossing")]
    EmptySurface,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dataset layout error at {}: {reason}", path.display())]
    Layout { path: PathBuf, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, stage: Stage) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// `true` for problems with the inputs or configuration rather than with
    /// a processing stage.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Layout { .. } | Error::InvalidParameter(_) => true,
            Error::Stage { stage, source } => *stage == Stage::Config || source.is_config(),
            _ => false,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
