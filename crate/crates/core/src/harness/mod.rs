//! Benchmarks, metrics, statistics and experiment orchestration.

pub mod benchmark;
pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod stats;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentReport, SummaryRow};
pub use metrics::{ans, andr, csr, day_score, metrics, DayResult, Metrics, Setting};
pub use stats::{paired_t_test, PairedTest};
