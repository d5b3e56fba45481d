//! Benchmarks for the simulator's hot paths live in `benches/`.
