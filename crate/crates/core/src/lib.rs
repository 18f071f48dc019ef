//! Omnidirectional audio-visual saliency toolkit.

pub mod audio;
pub mod cli;
pub mod error;
pub mod gaze;
pub mod io;
pub mod maps;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod sphere;
pub mod synth;
pub mod vattr;

pub use error::{Error, Result};
