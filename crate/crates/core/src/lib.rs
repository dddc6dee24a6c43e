//! Harmonic transfer function admittance models of modular multilevel and
//! two-level converters, and an average-model simulator used to scan them.

pub mod admittance;
pub mod control;
pub mod error;
pub mod frames;
pub mod htf;
pub mod opoint;
pub mod parallel;
pub mod params;
pub mod plant;
pub mod sim;

pub use error::{Error, Result};
