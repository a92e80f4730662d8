use std::path::PathBuf;

use kecausal::TestResult;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run produced. Sections that do not apply to the task are
/// `null`, so every report has the same keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub task: String,
    /// The input config with every default filled in.
    pub config: RunConfig,
    pub rows: Option<Rows>,
    pub estimates: Option<Vec<EstimatePoint>>,
    pub contrast: Option<Contrast>,
    pub tests: Option<Vec<TestRecord>>,
    pub simulation: Option<Simulation>,
    pub benchmark: Option<Benchmark>,
    /// Wall-clock times; the only non-reproducible part of a report.
    pub timings: Timings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rows {
    pub n: usize,
    /// Rows of the second dataset, for fusion input.
    pub n_d2: Option<usize>,
}

/// `E[Y | do(T=t)]` and, optionally, the embedding evaluated on the y grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub t: f64,
    pub ate: f64,
    pub ime: Option<Vec<f64>>,
    pub oracle_ate: Option<f64>,
    pub abs_error: Option<f64>,
}

/// `E[Y | do(T=t1)] − E[Y | do(T=t0)]` between the largest and smallest
/// requested treatments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub t1: f64,
    pub t0: f64,
    pub estimate: f64,
    pub oracle: Option<f64>,
    pub abs_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub kind: String,
    #[serde(flatten)]
    pub result: TestResult,
    pub rejects_at_0_05: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub files: Vec<PathBuf>,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub estimator: String,
    /// `|contrast(1, 0) − oracle contrast(1, 0)|` per replicate.
    pub metric: String,
    pub rows: Vec<BenchmarkRow>,
    /// Median error is non-increasing in `n`.
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub seeds: Vec<u64>,
    pub errors: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_ms: f64,
    pub task_ms: f64,
    pub total_ms: f64,
}
