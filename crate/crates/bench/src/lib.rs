//! Criterion benchmarks for `qpq-core`; see `benches/protocol.rs`.
