//! Criterion benchmarks live in `benches/`; nothing is exported.
