//! Criterion benchmarks for the steklov kernels live in `benches/kernels.rs`;
//! run them with `cargo bench -p steklov-bench`.
