//! Simulation and analysis of two-agent and N-agent wealth exchange models.

pub mod config;
pub mod diffusion;
pub mod duality;
pub mod error;
pub mod exchange;
pub mod measures;
pub mod nagent;
pub mod quadrature;
pub mod runner;
pub mod stationary;
pub mod stats;
pub mod trials;

pub use error::{Error, Result};
