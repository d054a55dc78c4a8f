//! Quantum–classical correspondence toolkit for a continuously observed,
//! driven anharmonic oscillator.

pub mod classical;
pub mod error;
pub mod expcli;
pub mod field;
pub mod lyapunov;
pub mod model;
pub mod noise;
pub mod qct;
pub mod quantum;
pub mod spectral;

pub use error::{Error, Result};
