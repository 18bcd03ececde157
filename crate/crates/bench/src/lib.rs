//! Criterion benchmarks for the simulation and estimation pipeline; see `benches/`.
