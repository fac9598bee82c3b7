//! Nonlinear joint models of longitudinal biomarkers and multi-state
//! semi-Markov processes: simulation, stochastic-gradient inference with
//! Metropolis–Hastings sampling of random effects, Fisher information, and
//! dynamic prediction.
//!
//! With the default `parallel` feature the per-individual loops run on the
//! rayon pool. Without it they run sequentially. Every random stream is tied
//! to an individual (and chain), so both paths give the same draws for a
//! given seed.

pub mod dataset;
pub mod design;
pub mod error;
pub mod graph;
pub mod inference;
pub mod likelihood;
pub mod params;
pub mod predict;
pub mod presets;
pub mod sampler;
pub mod simulate;

mod par;

pub use error::{Error, Result};
