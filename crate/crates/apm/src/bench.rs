//! Benchmark payloads for builds and queries.
