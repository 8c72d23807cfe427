//! Learn and generate eight-channel surface-EMG envelopes from arm motion.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod regimes;
pub mod signal;
pub mod synthetic;

pub use error::{Error, Result};
pub use myosynth_nn as nn;
