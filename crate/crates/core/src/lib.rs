//! Direction-of-arrival estimation on first-order Ambisonics.

pub mod acoustics;
pub mod ambisonics;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod music;
pub mod nn;
pub mod sphere;
pub mod wav;

pub use error::{Error, Result};
