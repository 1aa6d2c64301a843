//! Criterion benchmarks for the anonsat core; see `benches/`.
