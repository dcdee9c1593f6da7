use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use hom_core::io::{self as hio, RunConfigFile, RunSettings, ScanIndexRow, ScanResultRow};
use hom_core::montecarlo::{self, RunPlan};
use hom_core::{
    analytic, estimator, fitter, fock, Config, ExperimentSet, ScanVariable, SinglesNormalization,
};
use serde::Serialize;

use crate::{CliError, ModelArgs, ScanArgs};

pub fn load_settings(model: &ModelArgs) -> Result<RunSettings, CliError> {
    let mut file = match &model.config {
        Some(path) => RunConfigFile::load(path)
            .with_context(|| format!("config {}", path.display()))
            .map_err(CliError::config)?,
        None => RunConfigFile::default(),
    };
    if model.seed.is_some() {
        file.seed = model.seed;
    }
    if model.s_norm.is_some() {
        file.s_normalization = model.s_norm;
    }
    file.resolve().map_err(CliError::config)
}

fn scan_grid(scan: &ScanArgs) -> Result<Option<(ScanVariable, Vec<f64>)>, CliError> {
    let (Some(variable), Some(spec)) = (scan.scan, scan.grid.as_deref()) else {
        return Ok(None);
    };
    let grid = hio::parse_grid(spec).map_err(|e| CliError::config(anyhow!(e)))?;
    if grid.is_empty() {
        return Err(CliError::config(anyhow!("grid `{spec}` has no points")));
    }
    Ok(Some((variable, grid)))
}

pub fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::other)?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::other)?;
    Ok(path)
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    hio::write_rows(&mut buf, rows).map_err(CliError::other)?;
    Ok(buf)
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(CliError::other)?;
    buf.push(b'\n');
    Ok(buf)
}

fn emit(out: Option<&Path>, name: &str, contents: &[u8]) -> Result<(), CliError> {
    match out {
        Some(dir) => write_file(dir, name, contents).map(|_| ()),
        None => std::io::stdout()
            .write_all(contents)
            .map_err(CliError::other),
    }
}

pub fn predict_rows(
    config: &Config,
    normalization: SinglesNormalization,
    variable: ScanVariable,
    grid: &[f64],
) -> Result<Vec<hio::PredictRow>, CliError> {
    let curve =
        analytic::scan_curve(config, variable, grid, normalization).map_err(CliError::config)?;
    let truth = fock::true_p11(config.optics());
    Ok(curve
        .into_iter()
        .map(|r| hio::PredictRow {
            value: r.value,
            g2: r.g2,
            p_ub_predicted: r.p_ub,
            true_p11: truth,
        })
        .collect())
}

pub fn predict(model: &ModelArgs, scan: &ScanArgs, out: Option<&Path>) -> Result<(), CliError> {
    let settings = load_settings(model)?;
    let (variable, grid) = scan_grid(scan)?
        .unwrap_or((ScanVariable::Tau, vec![settings.config.source().tau]));
    let rows = predict_rows(&settings.config, settings.s_normalization, variable, &grid)?;
    emit(out, "predict.csv", &csv_bytes(&rows)?)
}

#[derive(Serialize)]
struct SimulationRecord<'a> {
    settings: &'a RunSettings,
    scan: Option<ScanVariable>,
    grid: Option<&'a [f64]>,
}

pub fn counts_bytes(set: &ExperimentSet) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    hio::write_counts(&mut buf, set).map_err(CliError::other)?;
    Ok(buf)
}

pub fn simulate(model: &ModelArgs, scan: &ScanArgs, out: &Path) -> Result<(), CliError> {
    let settings = load_settings(model)?;
    let plan = RunPlan::new(
        settings.config,
        settings.n_pulses,
        settings.n_trials,
        settings.seed,
    );
    let grid = scan_grid(scan)?;
    match &grid {
        Some((variable, values)) => {
            let runs = montecarlo::scan(&plan, *variable, values).map_err(CliError::config)?;
            let mut index = Vec::with_capacity(runs.len());
            for (i, (value, set)) in runs.iter().enumerate() {
                let name = format!("counts_{i:03}.csv");
                write_file(out, &name, &counts_bytes(set)?)?;
                index.push(ScanIndexRow {
                    index: i,
                    variable: *variable,
                    value: *value,
                    counts_file: name,
                });
            }
            write_file(out, "scan_index.csv", &csv_bytes(&index)?)?;
        }
        None => {
            let set = montecarlo::run_protocol(&plan);
            write_file(out, "counts.csv", &counts_bytes(&set)?)?;
        }
    }
    let record = SimulationRecord {
        settings: &settings,
        scan: grid.as_ref().map(|g| g.0),
        grid: grid.as_ref().map(|g| g.1.as_slice()),
    };
    write_file(out, "simulate.json", &json_bytes(&record)?)?;
    Ok(())
}

/// One estimated point with the full bound result.
#[derive(Serialize)]
pub struct EstimatePoint {
    pub value: f64,
    pub result: estimator::BoundResult,
}

pub fn estimate_set(
    value: f64,
    set: &ExperimentSet,
    normalization: SinglesNormalization,
) -> Result<EstimatePoint, CliError> {
    let probs = estimator::dark_correct(set);
    let result = estimator::upper_bound(&probs, normalization).map_err(CliError::data)?;
    Ok(EstimatePoint { value, result })
}

fn read_counts_file(path: &Path) -> Result<ExperimentSet, CliError> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(CliError::data)?;
    hio::read_counts(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::data)
}

fn first_line(path: &Path) -> Result<String, CliError> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(CliError::data)?;
    let mut line = String::new();
    BufReader::new(file)
        .read_line(&mut line)
        .map_err(CliError::data)?;
    Ok(line.trim_end().to_owned())
}

/// Accepts either a counts CSV (reported at value 0) or a scan index.
pub fn estimate_input(
    input: &Path,
    normalization: SinglesNormalization,
) -> Result<Vec<EstimatePoint>, CliError> {
    if first_line(input)? != hio::SCAN_INDEX_HEADER {
        return Ok(vec![estimate_set(0.0, &read_counts_file(input)?, normalization)?]);
    }
    let file = File::open(input).map_err(CliError::data)?;
    let index: Vec<ScanIndexRow> = hio::read_rows(BufReader::new(file))
        .with_context(|| format!("reading {}", input.display()))
        .map_err(CliError::data)?;
    let dir = input.parent().unwrap_or(Path::new("."));
    index
        .iter()
        .map(|row| {
            let set = read_counts_file(&dir.join(&row.counts_file))?;
            estimate_set(row.value, &set, normalization)
        })
        .collect()
}

pub fn result_rows(points: &[EstimatePoint]) -> Vec<ScanResultRow> {
    points
        .iter()
        .map(|p| ScanResultRow::new(p.value, &p.result))
        .collect()
}

pub fn estimate(
    input: &Path,
    normalization: SinglesNormalization,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let points = estimate_input(input, normalization)?;
    let table = csv_bytes(&result_rows(&points))?;
    if let Some(dir) = out {
        write_file(dir, "estimate.json", &json_bytes(&points)?)?;
    }
    emit(out, "estimate.csv", &table)
}

/// Fit output with the columns that produced it.
#[derive(Serialize)]
pub struct FitReport {
    pub y_column: String,
    pub err_column: Option<String>,
    pub fit: fitter::FitResult,
}

fn default_columns(baseline: f64) -> Option<(&'static str, &'static str)> {
    if baseline == 1.0 {
        Some(("g2", "g2_sem"))
    } else if baseline == 0.5 {
        Some(("p_ub", "p_ub_sem"))
    } else {
        None
    }
}

pub fn fit_table(
    input: &Path,
    baseline: f64,
    y_col: Option<String>,
    err_col: Option<String>,
) -> Result<FitReport, CliError> {
    let defaults = default_columns(baseline);
    let y = y_col
        .or_else(|| defaults.map(|d| d.0.to_owned()))
        .ok_or_else(|| CliError::config(anyhow!("--y-col is required for baseline {baseline}")))?;
    let err = err_col.or_else(|| defaults.map(|d| d.1.to_owned()));
    let file = File::open(input)
        .with_context(|| format!("opening {}", input.display()))
        .map_err(CliError::data)?;
    let (points, has_err) = hio::read_fit_points(BufReader::new(file), "value", &y, err.as_deref())
        .map_err(CliError::data)?;
    if !has_err {
        eprintln!(
            "warning: no `{}` column, fitting unweighted",
            err.as_deref().unwrap_or("uncertainty")
        );
    }
    let fit = fitter::fit_dip(&points, baseline).map_err(CliError::data)?;
    if has_err && !fit.weighted {
        eprintln!("warning: some uncertainties are not positive, fitting unweighted");
    }
    Ok(FitReport {
        y_column: y,
        err_column: err.filter(|_| has_err),
        fit,
    })
}

pub fn fit(
    input: &Path,
    baseline: f64,
    y_col: Option<String>,
    err_col: Option<String>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let report = fit_table(input, baseline, y_col, err_col)?;
    if let Some(dir) = out {
        write_file(dir, "fit.csv", &csv_bytes(&[hio::FitRow::from(&report.fit)])?)?;
    }
    emit(out, "fit.json", &json_bytes(&report)?)
}
