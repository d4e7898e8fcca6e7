//! Experiment harness: runs solvers over seeded scenarios and writes traces.

pub mod aggregate;
pub mod experiment;
pub mod output;
pub mod verify;

pub use aggregate::{aggregate, aggregate_timing, SummaryRow, TimingRow};
pub use experiment::{run_experiment, run_one, ExperimentSpec, RunKey, RunResult, SolverKind};
pub use output::{read_metadata, read_trace, write_run, write_summary, RunMetadata};
