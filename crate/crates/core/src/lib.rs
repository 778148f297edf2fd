//! Quantum-classical branch and bound for binary linear programs.

pub mod blp;
pub mod bound;
pub mod engine;
pub mod error;
pub mod ising;
pub mod metrics;
pub mod vqa;

pub use error::{Error, Result};
