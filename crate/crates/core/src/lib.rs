//! Generative cross-entropy training objectives, calibration metrics and
//! post-hoc temperature calibrators for probabilistic classifiers.
//!
//! Every module works on the same currency: an N×K [`LogitMatrix`] of
//! pre-softmax scores together with a [`Labels`] vector of zero-indexed
//! class ids.

pub mod calibrate;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Labels, LogitMatrix, ProbabilityMatrix};
