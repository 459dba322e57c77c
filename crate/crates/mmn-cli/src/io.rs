//! Dataset ingestion and the JSON/CSV formats used by the commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mmn::mc::{CriticalTable, PowerTable};
use mmn::{FitResult, MixingLaw, MmnParams};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Numeric table read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
    pub source: PathBuf,
}

/// Reads a headed, comma-separated file and keeps `columns` (all columns when
/// `None`) in the requested order.
pub fn read_dataset(path: &Path, columns: Option<&[String]>) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers().map_err(|e| CliError::input(format!("{}: {e}", path.display())))?.iter().map(str::to_string).collect();
    let wanted: Vec<String> = match columns {
        Some(c) if !c.is_empty() => c.to_vec(),
        _ => header.clone(),
    };
    let idx: Vec<usize> = wanted
        .iter()
        .map(|c| header.iter().position(|h| h == c).ok_or_else(|| CliError::input(format!("column {c:?} not found in {}", path.display()))))
        .collect::<Result<_, _>>()?;
    let mut flat = Vec::new();
    let mut n = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        for &j in &idx {
            let raw = rec.get(j).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| CliError::input(format!("{}: row {}: {:?} is not a number", path.display(), line + 2, raw)))?;
            if !v.is_finite() {
                return Err(CliError::input(format!("{}: row {}: non-finite value", path.display(), line + 2)));
            }
            flat.push(v);
        }
        n += 1;
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Dataset { name, columns: wanted, values: DMatrix::from_row_slice(n, idx.len(), &flat), source: path.to_path_buf() })
}

/// Writes an n×p matrix as CSV with the given header. Values use the
/// shortest decimal form that reads back to the same f64.
pub fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::io(path))?;
    w.write_record(header).map_err(CliError::io(path))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string())).map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Model name used in the params files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Mmne,
    Mmng,
}

impl Model {
    pub fn law(self, nu: Option<f64>) -> Result<MixingLaw, CliError> {
        match (self, nu) {
            (Model::Mmne, _) => Ok(MixingLaw::Exponential),
            (Model::Mmng, Some(nu)) => Ok(MixingLaw::Gamma { nu }),
            (Model::Mmng, None) => Err(CliError::input("model mmng needs nu")),
        }
    }
}

/// Parameters as stored on disk; matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub xi: Vec<f64>,
    #[serde(rename = "Omega")]
    pub omega: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    pub model: Model,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nu: Option<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let p = rows.len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(CliError::input(format!("{what} must be a square array of arrays")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ParamsFile {
    pub fn to_params(&self) -> Result<MmnParams, CliError> {
        let law = self.model.law(self.nu)?;
        let omega = matrix_from_rows(&self.omega, "Omega")?;
        Ok(MmnParams::new(DVector::from_vec(self.xi.clone()), omega, DVector::from_vec(self.delta.clone()), law)?)
    }

    pub fn from_params(p: &MmnParams) -> Result<Self, CliError> {
        let (model, nu) = match p.law.normalized() {
            MixingLaw::Exponential => (Model::Mmne, None),
            MixingLaw::Gamma { nu } => (Model::Mmng, Some(nu)),
            other => return Err(CliError::input(format!("law {} has no params file form", other.name()))),
        };
        Ok(ParamsFile { xi: p.xi.iter().copied().collect(), omega: matrix_rows(&p.omega_mat), delta: p.delta.iter().copied().collect(), model, nu })
    }
}

pub fn read_params(path: &Path) -> Result<MmnParams, CliError> {
    let file: ParamsFile = read_json(path)?;
    file.to_params()
}

/// Output of `mmn fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    #[serde(flatten)]
    pub params: ParamsFile,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub iters: usize,
    pub converged: bool,
}

impl FitOutput {
    pub fn from_fit(r: &FitResult) -> Result<Self, CliError> {
        Ok(FitOutput { params: ParamsFile::from_params(&r.params_hat)?, loglik: r.loglik, aic: r.aic, bic: r.bic, iters: r.iters, converged: r.converged })
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(CliError::io(path))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    writeln!(w).map_err(CliError::io(path))?;
    w.flush().map_err(CliError::io(path))
}

/// One row per statistic: name, lower, upper, upper one-sided quantile.
pub fn write_critical_csv(path: &Path, table: &CriticalTable) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::io(path))?;
    w.write_record(["statistic", "lower", "upper", "upper_one_sided"]).map_err(CliError::io(path))?;
    for r in &table.rows {
        w.write_record([r.statistic.name().to_string(), r.lower.to_string(), r.upper.to_string(), r.upper_one_sided.to_string()])
            .map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// One row per statistic: name and rejection frequency.
pub fn write_power_csv(path: &Path, table: &PowerTable) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::io(path))?;
    w.write_record(["statistic", "power"]).map_err(CliError::io(path))?;
    for r in &table.rows {
        w.write_record([r.statistic.name().to_string(), r.power.to_string()]).map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}
