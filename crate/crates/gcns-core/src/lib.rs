//! Spectral graph convolutional network for time-resolved multichannel
//! signal classification: correlation-derived electrode graphs, Chebyshev
//! polynomial filters, Graclus coarsening with binary-tree max pooling, and
//! an end-to-end training loop with hand-derived gradients.

pub mod cheb;
pub mod checkpoint;
pub mod coarsen;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod network;
pub mod params;
pub mod train;
pub mod util;

pub use error::{Error, Result};
