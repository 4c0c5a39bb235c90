//! Deterministic 2D Cahn-Hilliard-Darcy simulator with a mass source and a
//! strongly separating (singular) potential, regularised by Taylor
//! extension, together with runtime audits of the discrete energy budget,
//! mass balance and separation property.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod oracles;
pub mod potential;
pub mod solver;
pub mod source;

pub use error::{Error, Result};
