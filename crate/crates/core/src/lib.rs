//! Pilot-wave relaxation simulator for a pair of one-dimensional harmonic
//! oscillators coupled through a linearly growing interaction k(t) = βt.
//!
//! The crate evolves ensembles of de Broglie–Bohm trajectories under the
//! exact time-dependent wave function of the coupled system, coarse-grains
//! the resulting position densities against |Ψ|², and fits the decay of the
//! coarse-grained H-function to extract relaxation timescales as functions
//! of the mode count M, the coarse-graining length ε and the coupling rate β.

pub mod coarse;
pub mod ensemble;
pub mod error;
mod linalg;
pub mod mode;
pub mod fitting;
pub mod guidance;
pub mod special;
pub mod state;

pub use error::{Error, Result};
