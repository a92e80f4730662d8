use std::path::{Path, PathBuf};
use std::time::Instant;

use kecausal::estimators::{quantile, treatment_grid, ResolvedSettings};
use kecausal::hypothesis::DEFAULT_PERMUTATIONS;
use kecausal::{
    backdoor_hsic_test, generate, hsic_test, mmd_test, oracle, Backdoor, CausalDataset, EstimatorConfig, Frontdoor,
    Fusion, Instrument, PointSet, Proxy, Role, Sample, ScenarioSpec, WeightedEmbedding,
};
use rayon::prelude::*;

use crate::config::{ColumnType, EstimatorKind, Input, RunConfig, Task, TestKind};
use crate::error::{CliError, Result};
use crate::report::{
    Benchmark, BenchmarkRow, Contrast, EstimatePoint, Report, Rows, Simulation, TestRecord, Timings, SCHEMA_VERSION,
};

/// Validates `config`, runs its task and writes the report to
/// `config.output` when set.
pub fn run(config: &RunConfig) -> Result<Report> {
    let report = execute(config)?;
    if let Some(path) = &config.output {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, text + "\n")?;
    }
    Ok(report)
}

/// Runs without writing anything except simulated datasets.
pub fn execute(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let mut resolved = config.clone();
    resolved.estimator.split_seed = config.seed;
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        task: config.task.name().into(),
        config: resolved.clone(),
        rows: None,
        estimates: None,
        contrast: None,
        tests: None,
        simulation: None,
        benchmark: None,
        timings: Timings::default(),
    };

    if let Task::Benchmark { estimator, n, seeds } = &config.task {
        let spec = config.input.scenario.as_ref().expect("validated");
        let t = Instant::now();
        report.benchmark = Some(benchmark(spec, *estimator, n, *seeds, &resolved)?);
        report.timings.task_ms = ms(t);
        report.timings.total_ms = ms(start);
        return Ok(report);
    }

    let data = load(&config.input, config.seed)?;
    report.timings.load_ms = ms(start);
    report.rows = Some(match &data {
        Sample::Single(d) => Rows { n: d.n(), n_d2: None },
        Sample::Fusion { d1, d2 } => Rows {
            n: d1.n(),
            n_d2: Some(d2.n()),
        },
    });
    let task_start = Instant::now();
    match &config.task {
        Task::Estimate {
            estimator,
            treatments,
            y_grid,
        } => {
            let fitted = fit(*estimator, &data, &resolved.estimator)?;
            let treatments = match treatments {
                Some(t) => t.clone(),
                None => {
                    let d = match &data {
                        Sample::Single(d) => d,
                        Sample::Fusion { d2, .. } => d2,
                    };
                    treatment_grid(d.scalar(Role::T).map_err(treatment_error)?)?
                }
            };
            let truth = match &config.input.scenario {
                Some(spec) => Some(oracle(spec)?),
                None => None,
            };
            let mut points = Vec::with_capacity(treatments.len());
            for &t in &treatments {
                let ime = fitted.ime(&PointSet::point(&[t]))?;
                let ate = ime.mean_value()?;
                let values = match y_grid {
                    Some(grid) => Some(
                        grid.iter()
                            .map(|&y| ime.evaluate_at(&PointSet::point(&[y])))
                            .collect::<kecausal::Result<Vec<_>>>()
                            .map_err(|e| CliError::config("task.y_grid", e))?,
                    ),
                    None => None,
                };
                let oracle_ate = truth.as_ref().and_then(|o| o.mean_at(t));
                points.push(EstimatePoint {
                    t,
                    ate,
                    ime: values,
                    oracle_ate,
                    abs_error: oracle_ate.map(|o| (ate - o).abs()),
                });
            }
            report.contrast = contrast(&points, truth.as_ref());
            report.estimates = Some(points);
            let settings = fitted.settings();
            resolved.estimator.kernels = settings.kernels.clone();
            resolved.estimator.lambda = Some(settings.lambda);
            resolved.estimator.xi = settings.xi;
            resolved.task = Task::Estimate {
                estimator: *estimator,
                treatments: Some(treatments),
                y_grid: y_grid.clone(),
            };
        }
        Task::Test { test, permutations } => {
            let perms = permutations.unwrap_or(DEFAULT_PERMUTATIONS);
            let d = data.single().map_err(|e| CliError::config("task.test", e))?;
            let result = run_test(*test, d, &mut resolved.estimator, perms, config.seed)?;
            report.tests = Some(vec![TestRecord {
                kind: serde_json::to_value(test).expect("serializes").as_str().unwrap_or_default().into(),
                rejects_at_0_05: result.rejects(0.05),
                result,
            }]);
            resolved.task = Task::Test {
                test: *test,
                permutations: Some(perms),
            };
        }
        Task::Simulate { path } => {
            let (files, rows) = write_sample(&data, path)?;
            report.simulation = Some(Simulation { files, rows });
        }
        Task::Benchmark { .. } => unreachable!("handled above"),
    }
    report.config = resolved;
    report.timings.task_ms = ms(task_start);
    report.timings.total_ms = ms(start);
    Ok(report)
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn treatment_error(e: kecausal::Error) -> CliError {
    CliError::config("input.role_map", format!("treatment must be a single column: {e}"))
}

fn load(input: &Input, seed: u64) -> Result<Sample> {
    if let Some(spec) = &input.scenario {
        return Ok(generate(spec, input.n.expect("validated"), seed)?);
    }
    let first = read(input, input.csv_path.as_deref().expect("validated"))?;
    match &input.csv_path_d2 {
        Some(p) => Ok(Sample::Fusion {
            d1: first,
            d2: read(input, p)?,
        }),
        None => Ok(Sample::Single(first)),
    }
}

fn read(input: &Input, path: &Path) -> Result<CausalDataset> {
    let mut ds = CausalDataset::read_csv(path).map_err(|e| match e {
        kecausal::Error::Io(io) => CliError::Data(format!("{}: {io}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })?;
    if let Some(types) = &input.column_types {
        let names: Vec<String> = ds.column_names().into_iter().map(String::from).collect();
        for (name, ty) in types {
            let Some(j) = names.iter().position(|c| c == name) else {
                // The other fusion file may hold this column.
                if input.csv_path_d2.is_some() {
                    continue;
                }
                return Err(CliError::config("input.column_types", format!("no column `{name}`")));
            };
            if *ty == ColumnType::Integer {
                let col = ds.column(name).expect("exists");
                if let Some(i) = col.iter().position(|v| v.fract() != 0.0) {
                    return Err(CliError::Data(format!(
                        "{}: row {}, column {} ({name}): `{}` is not an integer",
                        path.display(),
                        i + 2,
                        j + 1,
                        col[i]
                    )));
                }
            }
        }
    }
    if let Some(map) = &input.role_map {
        for (role, columns) in map {
            let present: Vec<&str> = columns
                .iter()
                .map(String::as_str)
                .filter(|c| ds.column(c).is_some())
                .collect();
            // Fusion files each hold a subset of the mapped roles.
            if present.is_empty() && input.csv_path_d2.is_some() {
                continue;
            }
            if present.len() != columns.len() {
                return Err(CliError::config(
                    "input.role_map",
                    format!("{}: role `{role}` maps to missing columns", path.display()),
                ));
            }
            ds.assign(*role, &present)
                .map_err(|e| CliError::config("input.role_map", e))?;
        }
    }
    Ok(ds)
}

/// Fitted estimator behind a common interface.
trait Fitted {
    fn ime(&self, t: &PointSet) -> kecausal::Result<WeightedEmbedding>;
    fn settings(&self) -> &ResolvedSettings;
}

macro_rules! fitted {
    ($($ty:ty),*) => {$(
        impl Fitted for $ty {
            fn ime(&self, t: &PointSet) -> kecausal::Result<WeightedEmbedding> {
                <$ty>::ime(self, t)
            }
            fn settings(&self) -> &ResolvedSettings {
                <$ty>::settings(self)
            }
        }
    )*};
}

fitted!(Backdoor, Frontdoor, Fusion, Instrument, Proxy);

fn fit(kind: EstimatorKind, data: &Sample, cfg: &EstimatorConfig) -> Result<Box<dyn Fitted + Send + Sync>> {
    let single = || data.single().map_err(|e| CliError::config("task.estimator", e));
    Ok(match kind {
        EstimatorKind::Backdoor => Box::new(Backdoor::fit(single()?, cfg)?),
        EstimatorKind::Frontdoor => Box::new(Frontdoor::fit(single()?, cfg)?),
        EstimatorKind::Instrument => Box::new(Instrument::fit(single()?, cfg)?),
        EstimatorKind::Proxy => Box::new(Proxy::fit(single()?, cfg)?),
        EstimatorKind::Fusion => match data {
            Sample::Fusion { d1, d2 } => Box::new(Fusion::fit(d1, d2, cfg)?),
            Sample::Single(_) => return Err(CliError::config("task.estimator", "fusion needs two datasets")),
        },
    })
}

fn contrast(points: &[EstimatePoint], truth: Option<&kecausal::OracleResult>) -> Option<Contrast> {
    let lo = points.iter().min_by(|a, b| a.t.total_cmp(&b.t))?;
    let hi = points.iter().max_by(|a, b| a.t.total_cmp(&b.t))?;
    if lo.t == hi.t {
        return None;
    }
    let estimate = hi.ate - lo.ate;
    let oracle = truth.and_then(|o| o.effect(hi.t, lo.t));
    Some(Contrast {
        t1: hi.t,
        t0: lo.t,
        estimate,
        oracle,
        abs_error: oracle.map(|o| (estimate - o).abs()),
    })
}

fn run_test(
    kind: TestKind,
    data: &CausalDataset,
    cfg: &mut EstimatorConfig,
    permutations: usize,
    seed: u64,
) -> Result<kecausal::TestResult> {
    let t = data.points(Role::T)?;
    let y = data.points(Role::Y)?;
    let ky = cfg.kernel(Role::Y, &y)?;
    let result = match kind {
        TestKind::Mmd => {
            let levels = treatment_levels(data)?;
            if levels.len() != 2 {
                return Err(CliError::config(
                    "task.test",
                    format!("the mmd test needs a binary treatment, found {} values", levels.len()),
                ));
            }
            let t = data.scalar(Role::T)?;
            let group = |level: f64| -> Vec<usize> { (0..t.len()).filter(|&i| t[i] == level).collect() };
            let a = y.select(&group(levels[0]));
            let b = y.select(&group(levels[1]));
            mmd_test(&a, &b, &ky, permutations, seed)?
        }
        TestKind::Hsic => {
            let kt = cfg.kernel(Role::T, &t)?;
            cfg.kernels.insert(Role::T, kt.clone());
            hsic_test(&t, &y, &kt, &ky, permutations, seed)?
        }
        TestKind::BackdoorHsic => {
            let kt = cfg.kernel(Role::T, &t)?;
            cfg.kernels.insert(Role::T, kt);
            backdoor_hsic_test(data, cfg, permutations, seed)?
        }
    };
    cfg.kernels.insert(Role::Y, ky);
    Ok(result)
}

fn treatment_levels(data: &CausalDataset) -> Result<Vec<f64>> {
    let mut levels = data.scalar(Role::T).map_err(treatment_error)?.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    Ok(levels)
}

/// `<stem>_d1.<ext>` and `<stem>_d2.<ext>` next to `path`.
pub fn fusion_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    (
        path.with_file_name(format!("{stem}_d1{ext}")),
        path.with_file_name(format!("{stem}_d2{ext}")),
    )
}

fn write_sample(data: &Sample, path: &Path) -> Result<(Vec<PathBuf>, usize)> {
    match data {
        Sample::Single(d) => {
            d.write_csv(path).map_err(io_error)?;
            Ok((vec![path.to_path_buf()], d.n()))
        }
        Sample::Fusion { d1, d2 } => {
            let (p1, p2) = fusion_paths(path);
            d1.write_csv(&p1).map_err(io_error)?;
            d2.write_csv(&p2).map_err(io_error)?;
            Ok((vec![p1, p2], d1.n()))
        }
    }
}

fn io_error(e: kecausal::Error) -> CliError {
    match e {
        kecausal::Error::Io(io) => CliError::Io(io),
        other => other.into(),
    }
}

/// Replicate `i` of a benchmark uses data seed `seed + i`.
fn benchmark(
    spec: &ScenarioSpec,
    kind: EstimatorKind,
    sizes: &[usize],
    seeds: usize,
    cfg: &RunConfig,
) -> Result<Benchmark> {
    let truth = oracle(spec)?;
    let target = truth
        .effect(1.0, 0.0)
        .ok_or_else(|| CliError::config("input.scenario", "oracle has no contrast between t=1 and t=0"))?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let replicate: Vec<u64> = (0..seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
        let errors = replicate
            .par_iter()
            .map(|&s| -> Result<f64> {
                let data = generate(spec, n, s)?;
                let est_cfg = EstimatorConfig {
                    split_seed: s,
                    ..cfg.estimator.clone()
                };
                let fitted = fit(kind, &data, &est_cfg)?;
                let at = |t: f64| -> Result<f64> { Ok(fitted.ime(&PointSet::point(&[t]))?.mean_value()?) };
                Ok((at(1.0)? - at(0.0)? - target).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
        rows.push(BenchmarkRow {
            n,
            seeds: replicate,
            errors,
            median,
            q1,
            q3,
            iqr: q3 - q1,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].median <= w[0].median);
    Ok(Benchmark {
        estimator: serde_json::to_value(kind).expect("serializes").as_str().unwrap_or_default().into(),
        metric: "abs_contrast_error".into(),
        rows,
        monotone,
    })
}
