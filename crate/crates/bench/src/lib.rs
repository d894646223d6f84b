//! Criterion benchmarks for the DTW kernels, the one-class models and the
//! spotter live in `benches/`; run them with `cargo bench -p ocdtw-bench`.
