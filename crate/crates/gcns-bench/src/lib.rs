//! Shared fixtures for the pipeline benchmarks.

use gcns_core::coarsen::{coarsen, CoarseningPlan};
use gcns_core::data::{make_synthetic, SignalDataset};
use gcns_core::graph::{build_graph, CorrelationGraph};

pub fn bench_dataset(n_channels: usize) -> SignalDataset {
    make_synthetic(n_channels, 200, 4, 7, 2.0).unwrap()
}

pub fn bench_graph(n_channels: usize) -> CorrelationGraph {
    build_graph(&bench_dataset(n_channels)).unwrap()
}

pub fn bench_plan(n_channels: usize, levels: usize) -> CoarseningPlan {
    coarsen(&bench_graph(n_channels), levels, 7).unwrap()
}
