//! Subcommands of the `mmn` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};
use mmn::mc::{critical_values, power_study, CriticalTable, McConfig};
use mmn::skewness::{report, sample_report};
use mmn::{FitConfig, Init, MixingLaw, Mmn, MmnParams, Statistic};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{
    read_dataset, read_json, read_params, write_critical_csv, write_json, write_matrix_csv, write_power_csv, FitOutput,
    Model,
};
use crate::record::RunRecord;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "MMN_THREADS";

/// Mean mixtures of multivariate normal distributions: fitting, sampling,
/// skewness measures and Monte Carlo tests of normality.
#[derive(Debug, Parser)]
#[command(name = "mmn", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fit a model to columns of a CSV file by EM.
    Fit(FitArgs),
    /// Draw a sample from a parameter file.
    Sample(SampleArgs),
    /// Skewness measures of a parameter file or of a fitted sample.
    Skewness(SkewnessArgs),
    /// Null critical values of the twelve skewness statistics.
    CriticalValues(CriticalArgs),
    /// Power of the skewness tests against an alternative.
    Power(PowerArgs),
    /// Re-run the command stored in a run record.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EmArgs {
    /// Relative log-likelihood change that stops EM.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated column names; all columns when omitted.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "mmne")]
    pub model: Model,
    /// Starting gamma shape for mmng (default 2).
    #[arg(long)]
    pub nu: Option<f64>,
    /// Keep the gamma shape fixed at --nu.
    #[arg(long, requires = "nu")]
    pub fix_nu: bool,
    #[command(flatten)]
    pub em: EmArgs,
    /// Parameter file used as the starting point.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Overrides the model named in the parameter file.
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("source").required(true).args(["params", "input"])))]
pub struct SkewnessArgs {
    /// Population measures of this parameter file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Sample measures: fit this CSV first.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "mmne")]
    pub model: Model,
    #[arg(long)]
    pub nu: Option<f64>,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the density on a square grid (p = 2 only) to this CSV.
    #[arg(long)]
    pub density_grid: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct McArgs {
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// Use the 10 000 replicates of the published tables.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long)]
    pub seed: u64,
    /// Worker threads (default: logical cores); MMN_THREADS takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_json: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CriticalArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Comma-separated statistic names; all twelve when omitted.
    #[arg(long, value_delimiter = ',')]
    pub statistics: Option<Vec<String>>,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PowerArgs {
    /// Parameter file of the alternative.
    #[arg(long)]
    pub params: PathBuf,
    /// Critical table JSON written by `critical-values`.
    #[arg(long)]
    pub table: PathBuf,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub record: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Sample(_) => "sample",
            Command::Skewness(_) => "skewness",
            Command::CriticalValues(_) => "critical-values",
            Command::Power(_) => "power",
            Command::Replay(_) => "replay",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Sample(a) => Some(a.seed),
            Command::CriticalValues(a) => Some(a.mc.seed),
            Command::Power(a) => Some(a.mc.seed),
            _ => None,
        }
    }
}

/// Runs one command, writes its outputs and run record, and returns the
/// paths written.
pub fn run(cmd: &Command) -> Result<Vec<PathBuf>, CliError> {
    if let Command::Replay(a) = cmd {
        let rec = RunRecord::read(&a.record)?;
        if matches!(rec.config, Command::Replay(_)) {
            return Err(CliError::input("a run record cannot hold a replay"));
        }
        return run(&rec.config);
    }
    let start = Instant::now();
    let outputs = match cmd {
        Command::Fit(a) => cmd_fit(a)?,
        Command::Sample(a) => cmd_sample(a)?,
        Command::Skewness(a) => cmd_skewness(a)?,
        Command::CriticalValues(a) => cmd_critical_values(a)?,
        Command::Power(a) => cmd_power(a)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    let record = RunRecord {
        command: cmd.name().to_string(),
        config: cmd.clone(),
        seed: cmd.seed(),
        outputs: outputs.clone(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let sidecar = record.write()?;
    let mut all = outputs;
    all.push(sidecar);
    Ok(all)
}

fn fit_config(em: &EmArgs, init: Option<MmnParams>, estimate_nu: bool) -> FitConfig {
    FitConfig {
        tol: em.tol,
        max_iter: em.max_iter,
        init: init.map_or(Init::MomentInit, Init::UserInit),
        nu_grid: None,
        estimate_nu,
    }
}

fn fit_law(model: Model, nu: Option<f64>) -> Result<MixingLaw, CliError> {
    let law = match model {
        Model::Mmne => MixingLaw::Exponential,
        // ν = 1 would collapse to the exponential law and drop the shape search.
        Model::Mmng => MixingLaw::Gamma { nu: nu.unwrap_or(2.0) },
    };
    law.validate()?;
    Ok(law)
}

fn numeric_fit_error(e: mmn::MmnError) -> CliError {
    match CliError::from(e) {
        c if c.code == crate::error::EXIT_INPUT => c,
        c => CliError::numeric(format!("fit failed: {}", c.message)),
    }
}

fn cmd_fit(a: &FitArgs) -> Result<Vec<PathBuf>, CliError> {
    let data = read_dataset(&a.input, a.columns.as_deref())?;
    let init = a.init.as_deref().map(read_params).transpose()?;
    let law = fit_law(a.model, a.nu)?;
    let cfg = fit_config(&a.em, init, !a.fix_nu);
    let r = mmn::em::fit(&data.values, law, &cfg).map_err(numeric_fit_error)?;
    write_json(&a.out, &FitOutput::from_fit(&r)?)?;
    Ok(vec![a.out.clone()])
}

fn cmd_sample(a: &SampleArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut params = read_params(&a.params)?;
    if let Some(model) = a.model {
        params.law = model.law(a.nu.or(params.law.nu()))?;
        params.validate()?;
    }
    let dist = Mmn::new(params)?;
    let mut rng = ChaCha12Rng::seed_from_u64(a.seed);
    let m = dist.sample(&mut rng, a.n);
    let header: Vec<String> = (1..=dist.dim()).map(|j| format!("y{j}")).collect();
    write_matrix_csv(&a.out, &header, &m)?;
    Ok(vec![a.out.clone()])
}

fn cmd_skewness(a: &SkewnessArgs) -> Result<Vec<PathBuf>, CliError> {
    let params = match (&a.params, &a.input) {
        (Some(path), _) => read_params(path)?,
        (None, Some(input)) => {
            let data = read_dataset(input, a.columns.as_deref())?;
            let law = fit_law(a.model, a.nu)?;
            let (rep, fitted) = sample_report(&data.values, law, &fit_config(&a.em, None, true)).map_err(numeric_fit_error)?;
            write_json(&a.out, &rep)?;
            let mut out = vec![a.out.clone()];
            if let Some(grid) = &a.density_grid {
                write_density_grid(grid, &fitted.params_hat, a.grid_size)?;
                out.push(grid.clone());
            }
            return Ok(out);
        }
        (None, None) => return Err(CliError::input("either --params or --input is required")),
    };
    write_json(&a.out, &report(&params)?)?;
    let mut out = vec![a.out.clone()];
    if let Some(grid) = &a.density_grid {
        write_density_grid(grid, &params, a.grid_size)?;
        out.push(grid.clone());
    }
    Ok(out)
}

/// Density on a `k`×`k` grid spanning four standard deviations around the
/// mean, one row per point: y1, y2, density.
fn write_density_grid(path: &Path, params: &MmnParams, k: usize) -> Result<(), CliError> {
    if params.dim() != 2 {
        return Err(CliError::input(format!("density grid needs p = 2, got p = {}", params.dim())));
    }
    if k < 2 {
        return Err(CliError::input("grid size must be at least 2"));
    }
    let dist = Mmn::new(params.clone())?;
    let mean = params.mean();
    let sd = params.covariance().diagonal().map(f64::sqrt);
    let axis = |j: usize, i: usize| mean[j] - 4.0 * sd[j] + 8.0 * sd[j] * i as f64 / (k - 1) as f64;
    let mut rows = Vec::with_capacity(k * k * 3);
    for i in 0..k {
        for j in 0..k {
            let y = DVector::from_vec(vec![axis(0, i), axis(1, j)]);
            rows.extend([y[0], y[1], dist.pdf(&y)?]);
        }
    }
    let m = nalgebra::DMatrix::from_row_slice(k * k, 3, &rows);
    write_matrix_csv(path, &["y1".into(), "y2".into(), "density".into()], &m)
}

/// Worker count: MMN_THREADS, then --threads, then the rayon default.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| CliError::input(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(flag.filter(|&t| t > 0)),
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = resolve_threads(threads)? {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn mc_config(mc: &McArgs, dim: usize, n: usize, alpha: f64, statistics: Vec<Statistic>) -> McConfig {
    McConfig {
        replicates: if mc.full_scale { 10_000 } else { mc.replicates },
        sample_size: n,
        dim,
        seed: mc.seed,
        alpha,
        statistics,
        fit: fit_config(&mc.em, None, true),
    }
}

fn parse_statistics(names: Option<&[String]>) -> Result<Vec<Statistic>, CliError> {
    match names {
        None => Ok(Statistic::ALL.to_vec()),
        Some(list) => list
            .iter()
            .map(|s| Statistic::from_name(s).ok_or_else(|| CliError::input(format!("unknown statistic {s:?}"))))
            .collect(),
    }
}

fn cmd_critical_values(a: &CriticalArgs) -> Result<Vec<PathBuf>, CliError> {
    let cfg = mc_config(&a.mc, a.dim, a.n, a.alpha, parse_statistics(a.statistics.as_deref())?);
    let table = in_pool(a.mc.threads, || critical_values(&cfg))??;
    write_json(&a.mc.out_json, &table)?;
    write_critical_csv(&a.mc.out_csv, &table)?;
    Ok(vec![a.mc.out_json.clone(), a.mc.out_csv.clone()])
}

fn cmd_power(a: &PowerArgs) -> Result<Vec<PathBuf>, CliError> {
    let alt = read_params(&a.params)?;
    let table: CriticalTable = read_json(&a.table)?;
    let stats = table.rows.iter().map(|r| r.statistic).collect();
    let cfg = mc_config(&a.mc, table.dim, table.sample_size, table.alpha, stats);
    let power = in_pool(a.mc.threads, || power_study(&alt, &table, &cfg))??;
    write_json(&a.mc.out_json, &power)?;
    write_power_csv(&a.mc.out_csv, &power)?;
    Ok(vec![a.mc.out_json.clone(), a.mc.out_csv.clone()])
}
