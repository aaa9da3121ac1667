//! Link-level MIMO-OTFS simulation.
//!
//! Builds the sparse delay-Doppler equivalent channel, detects symbols with
//! damped Gaussian-approximation message passing, estimates channels from
//! delay-Doppler impulse pilots and compares against a MIMO-OFDM baseline
//! through Monte Carlo BER sweeps.

pub mod alphabet;
pub mod chanest;
pub mod channel;
pub mod config;
pub mod detector;
pub mod error;
pub mod grid;
pub mod ofdm;
pub mod rng;
pub mod sim;
pub mod sparse;
pub mod transforms;

pub use alphabet::{Alphabet, Modulation};
pub use error::{Error, Result};
pub use grid::{DdGrid, GridDims, TfGrid};
pub use sparse::SparseChannelMatrix;
