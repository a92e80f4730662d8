//! Batch front end: reads a JSON run config, estimates, tests or simulates,
//! and writes a JSON report.

pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{ColumnType, EstimatorKind, Input, RunConfig, Task, TestKind};
pub use error::{CliError, Result};
pub use report::Report;
pub use run::{execute, fusion_paths, run};
