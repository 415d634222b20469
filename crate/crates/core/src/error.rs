use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the geometric, numerical and pipeline layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point is too close to the chart singularity alpha = ±pi/2 (alpha = {alpha})")]
    DegenerateChart { alpha: f64 },

    #[error("spatial coordinates ({0}, {1}) lie outside the chart domain")]
    OutOfChart(f64, f64),

    #[error("planar point ({0}, {1}) lies outside the image of the spherical projection")]
    OutOfRange(f64, f64),

    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("seed {0:?} lies outside the grid")]
    SeedOutsideGrid([f64; 3]),

    #[error("covector has zero dual norm")]
    ZeroCovector,

    #[error("tip {0:?} is not reached by the distance map")]
    TipUnreached([f64; 3]),

    #[error("backtracking stalled after {steps} steps: the distance gradient vanished away from the seed")]
    Stalled {
        steps: usize,
        partial: Box<crate::tracking::GeodesicTrack>,
    },

    #[error("backtracking did not reach the seed within {steps} steps")]
    NotReached {
        steps: usize,
        partial: Box<crate::tracking::GeodesicTrack>,
    },

    #[error("missing input file {}: expected {expected}", path.display())]
    MissingInput { path: PathBuf, expected: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed array file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
