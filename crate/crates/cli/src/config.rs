use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kecausal::{EstimatorConfig, Role, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// A complete run description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Input,
    pub task: Task,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Root of all randomness in the run.
    #[serde(default)]
    pub seed: u64,
    /// Where the JSON report goes; stdout when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Either a CSV file (two for fusion) or a scenario to sample from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Input {
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub csv_path: Option<PathBuf>,
    /// Second dataset `(X, T, S)` of the fusion estimator; `csv_path`
    /// then holds `(S, Y)`.
    #[serde(default)]
    pub csv_path_d2: Option<PathBuf>,
    /// Columns per role. Unmapped CSV inputs use column names (`x`, `x1`, ...).
    #[serde(default)]
    pub role_map: Option<BTreeMap<Role, Vec<String>>>,
    #[serde(default)]
    pub column_types: Option<BTreeMap<String, ColumnType>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Real,
    Integer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Backdoor,
    Frontdoor,
    Fusion,
    Instrument,
    Proxy,
}

impl EstimatorKind {
    pub fn required_roles(self) -> &'static [Role] {
        match self {
            Self::Backdoor => &[Role::X, Role::T, Role::Y],
            Self::Frontdoor => &[Role::T, Role::S, Role::Y],
            Self::Fusion => &[Role::X, Role::T, Role::S, Role::Y],
            Self::Instrument => &[Role::Z, Role::T, Role::Y],
            Self::Proxy => &[Role::T, Role::Z, Role::U, Role::Y],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Two-sample test of `Y | T=a` against `Y | T=b` for binary `T`.
    Mmd,
    /// Marginal independence of `T` and `Y`.
    Hsic,
    /// No causal effect of `T` on `Y` given backdoor covariates `X`.
    BackdoorHsic,
}

impl TestKind {
    pub fn required_roles(self) -> &'static [Role] {
        match self {
            Self::Mmd | Self::Hsic => &[Role::T, Role::Y],
            Self::BackdoorHsic => &[Role::X, Role::T, Role::Y],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    Estimate {
        estimator: EstimatorKind,
        /// Defaults to the treatment grid of the data.
        #[serde(default)]
        treatments: Option<Vec<f64>>,
        /// Outcome values at which to evaluate each embedding.
        #[serde(default)]
        y_grid: Option<Vec<f64>>,
    },
    Test {
        test: TestKind,
        #[serde(default)]
        permutations: Option<usize>,
    },
    Simulate {
        path: PathBuf,
    },
    Benchmark {
        estimator: EstimatorKind,
        n: Vec<usize>,
        seeds: usize,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Estimate { .. } => "estimate",
            Self::Test { .. } => "test",
            Self::Simulate { .. } => "simulate",
            Self::Benchmark { .. } => "benchmark",
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config("config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let input = &self.input;
        let csv = input.csv_path.is_some();
        match (&input.scenario, csv) {
            (Some(_), true) => {
                return Err(CliError::config("input", "give either `scenario` or `csv_path`, not both"))
            }
            (None, false) => return Err(CliError::config("input", "needs `scenario` or `csv_path`")),
            _ => {}
        }
        if let Some(spec) = &input.scenario {
            spec.validate().map_err(|e| CliError::config("input.scenario", e))?;
            for (field, set) in [
                ("input.role_map", input.role_map.is_some()),
                ("input.column_types", input.column_types.is_some()),
                ("input.csv_path_d2", input.csv_path_d2.is_some()),
            ] {
                if set {
                    return Err(CliError::config(field, "only applies to CSV input"));
                }
            }
            match (&self.task, input.n) {
                (Task::Benchmark { .. }, _) => {}
                (_, None) => return Err(CliError::config("input.n", "scenario input needs a sample size")),
                (_, Some(0)) => return Err(CliError::config("input.n", "must be at least 1")),
                _ => {}
            }
        } else if input.n.is_some() {
            return Err(CliError::config("input.n", "only applies to scenario input"));
        }
        self.estimator
            .validate()
            .map_err(|e| CliError::config("estimator", e))?;

        let roles: &[Role] = match &self.task {
            Task::Estimate { estimator, treatments, y_grid } => {
                let finite = |v: &Option<Vec<f64>>| v.as_ref().is_none_or(|v| !v.is_empty() && v.iter().all(|x| x.is_finite()));
                if !finite(treatments) {
                    return Err(CliError::config("task.treatments", "must be non-empty and finite"));
                }
                if !finite(y_grid) {
                    return Err(CliError::config("task.y_grid", "must be non-empty and finite"));
                }
                let fusion_input = input.csv_path_d2.is_some() || input.scenario.as_ref().is_some_and(|s| s.is_fusion());
                if (*estimator == EstimatorKind::Fusion) != fusion_input {
                    return Err(CliError::config(
                        "task.estimator",
                        "the fusion estimator needs two-dataset input and only it accepts one",
                    ));
                }
                estimator.required_roles()
            }
            Task::Test { test, permutations } => {
                if let Some(p) = permutations {
                    if *p < kecausal::hypothesis::MIN_PERMUTATIONS {
                        return Err(CliError::config(
                            "task.permutations",
                            format!("must be at least {}", kecausal::hypothesis::MIN_PERMUTATIONS),
                        ));
                    }
                }
                test.required_roles()
            }
            Task::Simulate { .. } => {
                if input.scenario.is_none() {
                    return Err(CliError::config("input.scenario", "simulate needs a scenario"));
                }
                &[]
            }
            Task::Benchmark { estimator, n, seeds } => {
                if input.scenario.is_none() {
                    return Err(CliError::config("input.scenario", "benchmark needs a scenario"));
                }
                if n.is_empty() || n.contains(&0) {
                    return Err(CliError::config("task.n", "must list positive sample sizes"));
                }
                if *seeds == 0 {
                    return Err(CliError::config("task.seeds", "must be at least 1"));
                }
                let fusion = input.scenario.as_ref().is_some_and(|s| s.is_fusion());
                if (*estimator == EstimatorKind::Fusion) != fusion {
                    return Err(CliError::config(
                        "task.estimator",
                        "the fusion estimator needs a fusion scenario and only it accepts one",
                    ));
                }
                estimator.required_roles()
            }
        };
        if let Some(map) = &input.role_map {
            if let Some(missing) = roles.iter().find(|r| !map.contains_key(r)) {
                return Err(CliError::config(
                    "input.role_map",
                    format!("role `{missing}` is required by the task but not mapped"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        let c = RunConfig::from_json(text)?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn minimal_scenario_config() {
        let c = parse(
            r#"{"input": {"scenario": {"kind": "backdoor_discrete"}, "n": 100},
                "task": {"kind": "estimate", "estimator": "backdoor"}}"#,
        )
        .unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.task.name(), "estimate");
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match parse(text) {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            field(r#"{"input": {"scenario": {"kind": "backdoor_discrete"}}, "task": {"kind": "estimate", "estimator": "backdoor"}}"#),
            "input.n"
        );
        assert_eq!(
            field(r#"{"input": {"csv_path": "a.csv", "role_map": {"x": ["a"], "t": ["b"]}}, "task": {"kind": "estimate", "estimator": "backdoor"}}"#),
            "input.role_map"
        );
        assert_eq!(
            field(r#"{"input": {"csv_path": "a.csv"}, "task": {"kind": "test", "test": "hsic", "permutations": 10}}"#),
            "task.permutations"
        );
        assert_eq!(
            field(r#"{"input": {"csv_path": "a.csv"}, "task": {"kind": "simulate", "path": "b.csv"}}"#),
            "input.scenario"
        );
        assert_eq!(field(r#"{"input": {}, "task": {"kind": "test", "test": "hsic"}}"#), "input");
        assert_eq!(field(r#"{"input": {"csv_path": "a"}, "task": {"kind": "x"}}"#), "config");
    }
}
