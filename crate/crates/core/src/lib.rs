//! Neural-signal compression toolkit: an 8-bit integer encoder engine with
//! LFSR-balanced pruning, a tile/PE dataflow simulator, a float decoder,
//! file formats and reconstruction metrics.

pub mod decoder;
pub mod engine;
pub mod error;
pub mod lfsr;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod pruner;
pub mod quant;
pub mod signalio;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
