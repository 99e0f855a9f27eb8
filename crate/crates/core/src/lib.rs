//! Stereo free-space detection: a disparity Stixel World produces weak ground/obstacle
//! labels that train a small fully convolutional color classifier, evaluated on a
//! birds-eye-view grid.

pub mod config;
pub mod error;
pub mod eval;
pub mod fcn;
pub mod geometry;
pub mod imgio;
pub mod pipeline;
pub mod stereo;
pub mod stixel;
pub mod synth;

pub use error::{Error, Result};
