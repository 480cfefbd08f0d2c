//! Criterion benchmarks for the solver paths; see `benches/`.
