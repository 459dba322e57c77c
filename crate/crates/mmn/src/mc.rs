//! Monte Carlo studies: estimator bias and MSE, null critical values of the
//! skewness statistics and their power against MMN alternatives.
//!
//! Replicate `r` draws from its own ChaCha stream (master seed, stream `r`),
//! so results do not depend on the size of the worker pool.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Mmn;
use crate::em::{fit, FitConfig};
use crate::error::{MmnError, Result};
use crate::mixing::MixingLaw;
use crate::params::MmnParams;
use crate::skewness::{report, Statistic};

/// Largest share of failed replicates a study tolerates.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Settings shared by the critical-value and power studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replicates: usize,
    pub sample_size: usize,
    pub dim: usize,
    pub seed: u64,
    pub alpha: f64,
    pub statistics: Vec<Statistic>,
    pub fit: FitConfig,
}

impl McConfig {
    /// Desk-scale defaults: 1000 replicates of size 100 at level 0.05.
    pub fn new(dim: usize, seed: u64) -> Self {
        McConfig {
            replicates: 1000,
            sample_size: 100,
            dim,
            seed,
            alpha: 0.05,
            statistics: Statistic::ALL.to_vec(),
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(MmnError::InvalidConfig(format!("replicates = {} is below 100", self.replicates)));
        }
        if !(2..=8).contains(&self.dim) {
            return Err(MmnError::InvalidConfig(format!("dim = {} outside 2..=8", self.dim)));
        }
        if self.sample_size <= self.dim + 2 {
            return Err(MmnError::InsufficientObservations { n: self.sample_size, p: self.dim });
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(MmnError::InvalidConfig(format!("alpha = {} outside (0, 0.5)", self.alpha)));
        }
        if self.statistics.is_empty() {
            return Err(MmnError::InvalidConfig("no statistics selected".into()));
        }
        self.fit.validate()
    }
}

/// Random stream of replicate `index`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Type-7 sample quantile (linear interpolation between order statistics)
/// of already sorted data.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-replicate statistics with the counts of failed and unconverged fits.
#[derive(Debug, Clone)]
struct Sweep {
    /// One row per usable replicate, columns in `McConfig::statistics` order.
    values: Vec<Vec<f64>>,
    failed: usize,
    nonconverged: usize,
}

fn replicate_statistics(data: &DMatrix<f64>, cfg: &McConfig) -> Result<(Vec<f64>, bool)> {
    let fitted = fit(data, MixingLaw::Exponential, &cfg.fit)?;
    let rep = report(&fitted.params_hat)?;
    let values: Vec<f64> = cfg.statistics.iter().map(|&s| rep.statistic(s)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MmnError::DegenerateData("non-finite statistic".into()));
    }
    Ok((values, fitted.converged))
}

fn sweep<F>(cfg: &McConfig, draw: F) -> Result<Sweep>
where
    F: Fn(&mut ChaCha12Rng) -> DMatrix<f64> + Sync,
{
    let outcomes: Vec<Result<(Vec<f64>, bool)>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(cfg.seed, r);
            replicate_statistics(&draw(&mut rng), cfg)
        })
        .collect();
    let mut out = Sweep { values: Vec::with_capacity(cfg.replicates), failed: 0, nonconverged: 0 };
    for o in outcomes {
        match o {
            Ok((v, converged)) => {
                out.nonconverged += usize::from(!converged);
                out.values.push(v);
            }
            Err(_) => out.failed += 1,
        }
    }
    if out.failed as f64 > MAX_FAILURE_RATE * cfg.replicates as f64 {
        return Err(MmnError::StudyUnstable { failed: out.failed, total: cfg.replicates });
    }
    Ok(out)
}

/// Null quantiles of one statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRow {
    pub statistic: Statistic,
    /// α/2 quantile.
    pub lower: f64,
    /// 1 − α/2 quantile.
    pub upper: f64,
    /// 1 − α quantile, used by the one-sided tests.
    pub upper_one_sided: f64,
}

/// Critical values under the standard normal null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalTable {
    pub sample_size: usize,
    pub dim: usize,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub failed: usize,
    pub nonconverged: usize,
    pub rows: Vec<CriticalRow>,
}

impl CriticalTable {
    pub fn row(&self, s: Statistic) -> Option<&CriticalRow> {
        self.rows.iter().find(|r| r.statistic == s)
    }

    /// Whether `value` of statistic `s` falls in the rejection region.
    pub fn rejects(&self, s: Statistic, value: f64) -> Option<bool> {
        let row = self.row(s)?;
        Some(if s.one_sided() { value > row.upper_one_sided } else { value < row.lower || value > row.upper })
    }
}

fn standard_normal_draw(n: usize, p: usize) -> impl Fn(&mut ChaCha12Rng) -> DMatrix<f64> + Sync {
    let null = Mmn::new(MmnParams::normal(DVector::zeros(p), DMatrix::identity(p, p)).expect("identity scale is valid"))
        .expect("identity scale is valid");
    move |rng| null.sample(rng, n)
}

/// Simulates standard normal samples, fits MMNE to each and tabulates
/// type-7 quantiles of every selected statistic.
pub fn critical_values(cfg: &McConfig) -> Result<CriticalTable> {
    cfg.validate()?;
    let sw = sweep(cfg, standard_normal_draw(cfg.sample_size, cfg.dim))?;
    let rows = cfg
        .statistics
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let mut col: Vec<f64> = sw.values.iter().map(|v| v[j]).collect();
            col.sort_by(f64::total_cmp);
            CriticalRow {
                statistic: s,
                lower: quantile_type7(&col, cfg.alpha / 2.0),
                upper: quantile_type7(&col, 1.0 - cfg.alpha / 2.0),
                upper_one_sided: quantile_type7(&col, 1.0 - cfg.alpha),
            }
        })
        .collect();
    Ok(CriticalTable {
        sample_size: cfg.sample_size,
        dim: cfg.dim,
        replicates: cfg.replicates,
        seed: cfg.seed,
        alpha: cfg.alpha,
        failed: sw.failed,
        nonconverged: sw.nonconverged,
        rows,
    })
}

/// Rejection frequency of one statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub statistic: Statistic,
    pub power: f64,
}

/// Power of every selected statistic against one alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub alternative: MmnParams,
    pub sample_size: usize,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub failed: usize,
    pub nonconverged: usize,
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn power(&self, s: Statistic) -> Option<f64> {
        self.rows.iter().find(|r| r.statistic == s).map(|r| r.power)
    }
}

/// Simulates samples from `alt` and counts how often each test rejects
/// normality at the critical values of `table`.
pub fn power_study(alt: &MmnParams, table: &CriticalTable, cfg: &McConfig) -> Result<PowerTable> {
    cfg.validate()?;
    alt.validate()?;
    if alt.dim() != cfg.dim || table.dim != cfg.dim {
        return Err(MmnError::DimensionMismatch(format!(
            "alternative p = {}, table p = {}, config p = {}",
            alt.dim(),
            table.dim,
            cfg.dim
        )));
    }
    if table.sample_size != cfg.sample_size {
        return Err(MmnError::InvalidConfig(format!(
            "critical values were computed for n = {}, not n = {}",
            table.sample_size, cfg.sample_size
        )));
    }
    for &s in &cfg.statistics {
        if table.row(s).is_none() {
            return Err(MmnError::InvalidConfig(format!("critical table lacks {}", s.name())));
        }
    }
    let dist = Mmn::new(alt.clone())?;
    let n = cfg.sample_size;
    let sw = sweep(cfg, |rng| dist.sample(rng, n))?;
    let used = sw.values.len().max(1) as f64;
    let rows = cfg
        .statistics
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let hits = sw.values.iter().filter(|v| table.rejects(s, v[j]).unwrap_or(false)).count();
            PowerRow { statistic: s, power: hits as f64 / used }
        })
        .collect();
    Ok(PowerTable {
        alternative: alt.clone(),
        sample_size: n,
        replicates: cfg.replicates,
        seed: cfg.seed,
        alpha: cfg.alpha,
        failed: sw.failed,
        nonconverged: sw.nonconverged,
        rows,
    })
}

/// Summary of the estimates of one parameter at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMseRow {
    pub parameter: String,
    pub n: usize,
    pub truth: f64,
    pub mean: f64,
    pub std: f64,
    pub bias: f64,
    pub mse: f64,
}

/// Result of [`bias_mse_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMseTable {
    pub replicates: usize,
    pub seed: u64,
    /// Failed replicates per sample size, in `n_list` order.
    pub failed: Vec<usize>,
    pub rows: Vec<BiasMseRow>,
    /// Whether the log-likelihood trace of every fit was nondecreasing.
    pub monotone_traces: bool,
}

/// Names and values of ξ, the upper triangle of Ω and δ.
pub fn parameter_vector(params: &MmnParams) -> Vec<(String, f64)> {
    let p = params.dim();
    let mut out: Vec<(String, f64)> = (0..p).map(|i| (format!("xi[{}]", i + 1), params.xi[i])).collect();
    for i in 0..p {
        for j in i..p {
            out.push((format!("Omega[{},{}]", i + 1, j + 1), params.omega_mat[(i, j)]));
        }
    }
    out.extend((0..p).map(|i| (format!("delta[{}]", i + 1), params.delta[i])));
    out
}

/// A trace is accepted as nondecreasing when no step drops by more than
/// 1e-9 relative to the current log-likelihood.
pub fn trace_is_monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
}

/// Repeated fits to samples from `truth` for each sample size in `n_list`:
/// mean, standard deviation, bias and MSE of every parameter estimate.
pub fn bias_mse_study(
    truth: &MmnParams,
    n_list: &[usize],
    replicates: usize,
    seed: u64,
    fit_cfg: &FitConfig,
) -> Result<BiasMseTable> {
    truth.validate()?;
    fit_cfg.validate()?;
    if replicates == 0 || n_list.is_empty() {
        return Err(MmnError::InvalidConfig("need at least one replicate and one sample size".into()));
    }
    let law = truth.law;
    let dist = Mmn::new(truth.clone())?;
    let names = parameter_vector(truth);
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut monotone = true;
    for (k, &n) in n_list.iter().enumerate() {
        let outcomes: Vec<Result<(Vec<f64>, bool)>> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                // Streams are offset per sample size so each n gets fresh data.
                let mut rng = replicate_rng(seed, k * replicates + r);
                let data = dist.sample(&mut rng, n);
                let f = fit(&data, law, fit_cfg)?;
                let est = parameter_vector(&f.params_hat).into_iter().map(|(_, v)| v).collect();
                Ok((est, trace_is_monotone(&f.loglik_trace)))
            })
            .collect();
        let mut ests = Vec::with_capacity(replicates);
        let mut fails = 0;
        for o in outcomes {
            match o {
                Ok((e, mono)) => {
                    monotone &= mono;
                    ests.push(e);
                }
                Err(_) => fails += 1,
            }
        }
        if fails as f64 > MAX_FAILURE_RATE * replicates as f64 {
            return Err(MmnError::StudyUnstable { failed: fails, total: replicates });
        }
        failed.push(fails);
        let r = ests.len() as f64;
        for (j, (name, truth_v)) in names.iter().enumerate() {
            let mean = ests.iter().map(|e| e[j]).sum::<f64>() / r;
            let bias = mean - truth_v;
            let mse = ests.iter().map(|e| (e[j] - truth_v).powi(2)).sum::<f64>() / r;
            let var = if ests.len() > 1 {
                ests.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (r - 1.0)
            } else {
                0.0
            };
            rows.push(BiasMseRow { parameter: name.clone(), n, truth: *truth_v, mean, std: var.sqrt(), bias, mse });
        }
    }
    Ok(BiasMseTable { replicates, seed, failed, rows, monotone_traces: monotone })
}
