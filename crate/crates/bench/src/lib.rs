//! Benchmarks for the edgeflow stages; see `benches/stages.rs`.
