//! Benchmarks for the gapdiff pipeline live in `benches/`.
