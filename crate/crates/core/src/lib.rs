//! Analysis primitives for longitudinal skin-condition trials captured
//! with smartphone photographs.
//!
//! The crate covers the measurement path end to end: decoding and raster
//! handling, colour-space conversion, illumination normalization (global
//! and adaptive histogram equalization, colour-card correction),
//! cross-session feature alignment, skin-colour and wrinkle metrics, and
//! the statistical tests used to compare trial sessions.

pub mod align;
pub mod card;
pub mod color;
pub mod error;
pub mod image;
pub mod metrics;
pub mod normalize;
pub mod stats;

pub use error::{Error, Result};
