//! Benchmark-only crate; see `benches/calculus.rs`.
