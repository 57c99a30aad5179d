//! Criterion benchmarks for the geosmc crate; see `benches/`.
