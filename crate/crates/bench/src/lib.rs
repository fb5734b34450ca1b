//! Criterion benchmarks for the relaysel solvers live under `benches/`.
