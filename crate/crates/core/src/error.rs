use thiserror::Error;

/// Errors shared across the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("basis family has no free coefficients (degree too low for the constraints)")]
    InsufficientDegree,
    #[error("invalid sine frequency: {0}")]
    InvalidFrequency(u32),
    #[error("degenerate integration cell")]
    DegenerateCell,
    #[error("too few points: have {have}, need at least {need}")]
    TooFewPoints { have: usize, need: usize },
    #[error("points are missing normals")]
    MissingNormals,
    #[error("integration domain is empty")]
    EmptyDomain,
    #[error("cell normals are not unit length")]
    UnnormalizedNormals,
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        /// Best iterate reached before giving up.
        best: Vec<f64>,
    },
    #[error("level set does not cross the domain")]
    NoCrossing,
    #[error("mesh is degenerate (no area)")]
    DegenerateMesh,
    #[error("mesh is not watertight")]
    NonWatertight,
    #[error("feature shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("voxel contains no points")]
    EmptyVoxel,
    #[error("missing occupancy labels for scale {0}")]
    MissingLabels(u8),
    #[error("weight bundle: {0}")]
    WeightBundle(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it occurred in.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
