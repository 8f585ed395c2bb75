//! Open XXZ chain with diagonal boundaries: R/L/K operators, double-row
//! transfer matrices, Baxter's Q-operator as a truncated oscillator trace,
//! an identity battery, and Bethe-root extraction.

pub mod bethe;
pub mod chain;
pub mod error;
pub mod lattice_ops;
pub mod poly;
pub mod qoscillator;
pub mod tensor_core;
pub mod verify;

pub use error::{Error, Result};
