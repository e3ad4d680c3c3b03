//! Shared error type for the analysis primitives.

use std::path::PathBuf;
use thiserror::Error;

/// Errors surfaced by imaging, calibration, alignment and statistics routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("failed to decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("failed to encode image {path}: {reason}")]
    Encode { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("polygon must be simple and have at least 3 vertices: {0}")]
    InvalidRoi(String),

    #[error("region of interest contains no pixel centers")]
    EmptyRoi,

    #[error("image {width}x{height} is smaller than the required {min_width}x{min_height}")]
    ImageTooSmall {
        width: u32,
        height: u32,
        min_width: u32,
        min_height: u32,
    },

    #[error("patch ({row}, {col}) outside card grid of {rows}x{cols}")]
    IndexOutOfGrid {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("colour-card annotation required but not present")]
    MissingAnnotation,

    #[error("invalid card annotation: {0}")]
    InvalidAnnotation(String),

    #[error("invalid card layout: {0}")]
    InvalidLayout(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("descriptor set is empty")]
    EmptyDescriptorSet,

    #[error("{got} matches is fewer than the {needed} required to fit the model")]
    InsufficientMatches { needed: usize, got: usize },

    #[error("no consensus: best inlier set has {best_inliers} of {matches} matches")]
    NoConsensus { best_inliers: usize, matches: usize },

    #[error("transform is singular and cannot be inverted")]
    SingularTransform,

    #[error("sample of {got} observations is below the minimum of {needed}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("sample has zero variance")]
    ZeroVariance,

    #[error("paired differences have zero variance")]
    ZeroVarianceDifferences,

    #[error("all paired differences are zero")]
    AllDifferencesZero,

    #[error("sample contains a non-finite value")]
    NonFiniteSample,

    #[error("paired samples have mismatched lengths {left} and {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("baseline mean is zero; percent variation is undefined")]
    ZeroBaselineMean,

    #[error("image mean intensity is zero; wrinkle ratio is undefined")]
    ZeroMeanImage,
}

pub type Result<T> = std::result::Result<T, Error>;
