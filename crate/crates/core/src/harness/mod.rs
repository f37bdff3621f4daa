//! Experiment configuration, Monte Carlo benchmarking, trajectory capture
//! and output formatting.

pub mod bench;
pub mod config;
pub mod diag;
pub mod output;

pub use bench::{bench, bench_with_threads, BenchReport, BenchSummary, PolicySummary, THREADS_ENV};
pub use config::{parse_config, parse_instance, CaptureOptions, ExperimentConfig, RawConfig, Series};
pub use diag::{diag_capture, diag_capture_with_threads, Band, DiagPoint, PolicyDiag};
