//! Benchmark-only crate; see benches/estimators.rs.
