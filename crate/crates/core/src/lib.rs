//! Learned variational interpolation of gappy space-time fields.
//!
//! A trainable prior `Φ` and a conv-LSTM gradient solver reconstruct a field
//! from sparse observations and a smooth optimal-interpolation background.
//! The [`osse`] module builds synthetic truths and satellite-like samplings
//! to train and score the scheme against that baseline.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod field;
pub mod io;
pub mod model;
pub mod osse;
pub mod params;
pub mod pipeline;
pub mod prior;
pub mod solver;
pub mod state;
pub mod training;

pub use error::{Error, Result};
pub use field::{FieldSeq, Grid, ObsPoint, ObsSet};
