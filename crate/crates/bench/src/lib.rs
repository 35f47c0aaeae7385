//! Benchmarks for the `tssort` kernels; see `benches/kernels.rs`.
