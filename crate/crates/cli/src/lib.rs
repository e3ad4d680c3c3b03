//! Trial pipeline behind the `skintrack` binary: manifest handling,
//! per-session colour and wrinkle measurement, trial statistics and
//! CSV/SVG report emission.

pub mod error;
pub mod fixture;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod svg;

pub use error::{Error, Result};
