//! Maximum likelihood fitting by the EM-type algorithm: closed-form E-step
//! and M-step for (ξ, α, Σ_Y), and a profile search over the gamma shape.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::Mmn;
use crate::error::{MmnError, Result};
use crate::mixing::MixingLaw;
use crate::params::{checked_cholesky, MmnParams};
use crate::special::truncnorm_moments;

/// Radius to which δᵀΩ̄⁻¹δ is pulled back when an update reaches the boundary.
pub const BOUNDARY_RADIUS: f64 = 1.0 - 1e-6;
/// Size of the nudge applied to an iterate with δ = 0.
pub const ZERO_SKEW_NUDGE: f64 = 1e-6;

/// Starting point of the iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Sample mean and covariance with a skewness-signed δ.
    MomentInit,
    /// Caller-supplied parameters.
    UserInit(MmnParams),
}

/// Controls for [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop when |ℓ_{k+1}/ℓ_k − 1| falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    /// Search interval for the gamma shape; `None` means [0.05, 50].
    pub nu_grid: Option<(f64, f64)>,
    /// When false the gamma shape stays at the value passed to [`fit`].
    #[serde(default = "estimate_nu_default")]
    pub estimate_nu: bool,
}

fn estimate_nu_default() -> bool {
    true
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { tol: 1e-8, max_iter: 2000, init: Init::MomentInit, nu_grid: None, estimate_nu: true }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(MmnError::InvalidConfig("tol must be positive and max_iter at least 1".into()));
        }
        if let Some((lo, hi)) = self.nu_grid {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(MmnError::InvalidConfig(format!("invalid nu interval ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    fn nu_interval(&self) -> (f64, f64) {
        self.nu_grid.unwrap_or((0.05, 50.0))
    }
}

/// Result of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params_hat: MmnParams,
    pub loglik: f64,
    /// Log-likelihood of the start followed by one entry per iteration.
    pub loglik_trace: Vec<f64>,
    pub iters: usize,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
}

/// Updated (ξ, α, Σ_Y) from one M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub xi: DVector<f64>,
    pub alpha: DVector<f64>,
    pub sigma_y: DMatrix<f64>,
}

/// Number of free parameters: p + p(p+1)/2 + p, plus one for a gamma shape.
pub fn n_free_params(p: usize, law: MixingLaw) -> usize {
    2 * p + p * (p + 1) / 2 + usize::from(law.nu().is_some())
}

/// AIC = 2k − 2ℓ and BIC = k ln n − 2ℓ.
pub fn information_criteria(loglik: f64, k: usize, n: usize) -> (f64, f64) {
    let k = k as f64;
    (2.0 * k - 2.0 * loglik, k * (n as f64).ln() - 2.0 * loglik)
}

/// Conditional moments E[U | yᵢ] and E[U² | yᵢ] under exponential mixing:
/// η⁻¹(Aᵢ + φ(Aᵢ)/Φ(Aᵢ)) and η⁻²(Aᵢ² + Aᵢφ(Aᵢ)/Φ(Aᵢ) + 1).
pub fn e_step_mmne(params: &MmnParams, data: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    if params.law.normalized() != MixingLaw::Exponential {
        return Err(MmnError::UnsupportedLaw(params.law.name()));
    }
    let dist = Mmn::new(params.clone())?;
    if dist.eta() == 0.0 {
        return Err(MmnError::DegenerateSkewness);
    }
    let eta = dist.eta();
    let n = data.nrows();
    let (mut e1, mut e2) = (DVector::zeros(n), DVector::zeros(n));
    for i in 0..n {
        let a = dist.a_value(&data.row(i).transpose())?;
        let m = truncnorm_moments(a, 2);
        e1[i] = m[1] / eta;
        e2[i] = m[2] / (eta * eta);
    }
    Ok((e1, e2))
}

/// Conditional moments E[U | yᵢ] and E[U² | yᵢ] for any supported mixing law.
pub fn e_step(params: &MmnParams, data: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    if params.law.normalized() == MixingLaw::Exponential {
        return e_step_mmne(params, data);
    }
    let dist = Mmn::new(params.clone())?;
    let n = data.nrows();
    let (mut e1, mut e2) = (DVector::zeros(n), DVector::zeros(n));
    for i in 0..n {
        let m = dist.cond_u_moments_any(&data.row(i).transpose(), 2)?;
        e1[i] = m[0];
        e2[i] = m[1];
    }
    Ok((e1, e2))
}

/// Closed-form maximizer of the expected complete-data log-likelihood over
/// (ξ, α, Σ_Y) given the conditional moments.
pub fn m_step(data: &DMatrix<f64>, e1: &DVector<f64>, e2: &DVector<f64>) -> Result<MStep> {
    let (n, p) = data.shape();
    if e1.len() != n || e2.len() != n {
        return Err(MmnError::DimensionMismatch(format!("{n} rows but {} and {} weights", e1.len(), e2.len())));
    }
    let nf = n as f64;
    let ybar = data.row_sum().transpose() / nf;
    let s1 = e1.sum();
    let s2 = e2.sum();
    let denom = s2 - s1 * s1 / nf;
    if !(denom > 1e-12 * s2.abs().max(f64::MIN_POSITIVE)) {
        return Err(MmnError::DegenerateWeights);
    }
    let alpha = (data.transpose() * e1 - &ybar * s1) / denom;
    let xi = &ybar - &alpha * (s1 / nf);
    let mut s = DMatrix::zeros(p, p);
    let mut cross = DVector::zeros(p);
    for i in 0..n {
        let r = data.row(i).transpose() - &xi;
        s += &r * r.transpose();
        cross += &r * e1[i];
    }
    let sigma = s / nf - (2.0 / nf) * &cross * alpha.transpose() + &alpha * alpha.transpose() * (s2 / nf);
    let sigma_y = 0.5 * (&sigma + sigma.transpose());
    Ok(MStep { xi, alpha, sigma_y })
}

/// Third central moment of each column.
fn column_third_moments(data: &DMatrix<f64>) -> DVector<f64> {
    let n = data.nrows() as f64;
    DVector::from_iterator(
        data.ncols(),
        data.column_iter().map(|c| {
            let m = c.mean();
            c.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n
        }),
    )
}

fn sample_moments(data: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = data.nrows() as f64;
    let mean = data.row_sum().transpose() / n;
    let mut s = DMatrix::zeros(data.ncols(), data.ncols());
    for r in data.row_iter() {
        let d = r.transpose() - &mean;
        s += &d * d.transpose();
    }
    (mean, s / n)
}

/// Pulls δ back inside the admissible region when δᵀΩ̄⁻¹δ ≥ 1 − 10⁻⁶.
fn clamp_to_boundary(params: &mut MmnParams) {
    let q = params.delta_star_sq();
    if q >= BOUNDARY_RADIUS {
        params.delta *= (BOUNDARY_RADIUS / q).sqrt() * (1.0 - 1e-12);
    }
}

fn nudge_zero_skew(params: &mut MmnParams, skew: &DVector<f64>) {
    if params.is_symmetric() {
        params.delta = skew.map(|g| if g < 0.0 { -ZERO_SKEW_NUDGE } else { ZERO_SKEW_NUDGE });
    }
}

/// Largest var(U)·αᵀS⁻¹α accepted for the moment start, keeping Σ_Y well inside the cone.
const MOMENT_INIT_RADIUS: f64 = 0.9;

/// Method-of-moments starting values. Each column's third central moment
/// equals α_j³ κ₃(U), which fixes α; then Ω = S − (var U − 1)ααᵀ and
/// ξ = ȳ − α E U. α is shrunk when S − var(U)ααᵀ would not be well inside
/// the positive-definite cone.
pub fn moment_init(data: &DMatrix<f64>, law: MixingLaw) -> Result<MmnParams> {
    let (mean, s) = sample_moments(data);
    let chol = checked_cholesky(&s, "sample covariance")
        .map_err(|_| MmnError::DegenerateData("singular sample covariance".into()))?;
    let m3 = column_third_moments(data);
    let (var_u, k3_u) = (law.variance(), law.third_central());
    let mut alpha = m3.map(|m| (m / k3_u).cbrt());
    if alpha.iter().all(|a| *a == 0.0) {
        alpha = m3.map(|g| if g < 0.0 { -ZERO_SKEW_NUDGE } else { ZERO_SKEW_NUDGE }).component_mul(&s.diagonal().map(f64::sqrt));
    }
    let q = var_u * alpha.dot(&chol.solve(&alpha));
    if q > MOMENT_INIT_RADIUS {
        alpha *= (MOMENT_INIT_RADIUS / q).sqrt();
    }
    let omega = &s - (var_u - 1.0) * &alpha * alpha.transpose();
    let w = omega.diagonal().map(f64::sqrt);
    let delta = alpha.component_div(&w);
    let mut params = MmnParams { xi: &mean - &alpha * law.mean(), omega_mat: omega, delta, law };
    clamp_to_boundary(&mut params);
    params.validate()?;
    Ok(params)
}

fn params_from_m_step(m: &MStep, law: MixingLaw) -> Result<MmnParams> {
    checked_cholesky(&m.sigma_y, "Sigma_Y update")?;
    let omega = &m.sigma_y + &m.alpha * m.alpha.transpose();
    let w = omega.diagonal().map(f64::sqrt);
    let delta = m.alpha.component_div(&w);
    let mut params = MmnParams { xi: m.xi.clone(), omega_mat: omega, delta, law };
    clamp_to_boundary(&mut params);
    params.validate()?;
    Ok(params)
}

fn loglik_of(params: &MmnParams, data: &DMatrix<f64>) -> Result<f64> {
    Mmn::new(params.clone())?.loglik(data)
}

/// Half-width of the ln ν stencil used by the shape update.
const NU_STENCIL: f64 = 0.02;

/// Largest ln ν move in one shape update.
const NU_MAX_STEP: f64 = 1.0;

/// Gamma law with shape `nu` and the same α, mean and covariance as `params`.
fn reshaped(params: &MmnParams, nu: f64) -> Result<MmnParams> {
    let old = params.law.nu().unwrap_or(1.0);
    let alpha = params.alpha();
    let xi = &params.xi + &alpha * (old - nu);
    let omega = &params.omega_mat + (old - nu) * &alpha * alpha.transpose();
    checked_cholesky(&(&omega - &alpha * alpha.transpose()), "Sigma_Y under shape change")?;
    let w = omega.diagonal().map(f64::sqrt);
    let delta = alpha.component_div(&w);
    let reshaped = MmnParams { xi, omega_mat: omega, delta, law: MixingLaw::Gamma { nu } };
    reshaped.validate()?;
    Ok(reshaped)
}

/// Shape update: one safeguarded parabolic step in ln ν through the current
/// value and its two stencil neighbours. Only a strict improvement of the
/// observed log-likelihood is accepted, so each sweep stays monotone. The
/// step moves along [`reshaped`], which holds the first two moments fixed.
fn update_nu(params: &mut MmnParams, data: &DMatrix<f64>, interval: (f64, f64), current_ll: f64) -> Result<f64> {
    let Some(nu) = params.law.nu() else { return Ok(current_ll) };
    let (lo, hi) = (interval.0.ln(), interval.1.ln());
    let eval = |log_nu: f64| {
        reshaped(params, log_nu.exp()).and_then(|trial| loglik_of(&trial, data)).unwrap_or(f64::NEG_INFINITY)
    };
    let x0 = nu.ln().clamp(lo, hi);
    let (xm, xp) = ((x0 - NU_STENCIL).max(lo), (x0 + NU_STENCIL).min(hi));
    let (fm, fp) = (eval(xm), eval(xp));
    let mut best = (x0, current_ll);
    for (x, f) in [(xm, fm), (xp, fp)] {
        if f > best.1 {
            best = (x, f);
        }
    }
    if xm < x0 && x0 < xp && fm.is_finite() && fp.is_finite() {
        let curv = (fp - 2.0 * current_ll + fm) / (NU_STENCIL * NU_STENCIL);
        let slope = (fp - fm) / (2.0 * NU_STENCIL);
        let step = if curv < 0.0 { -slope / curv } else { slope.signum() * NU_MAX_STEP };
        let x = (x0 + step.clamp(-NU_MAX_STEP, NU_MAX_STEP)).clamp(lo, hi);
        let f = eval(x);
        if f > best.1 {
            best = (x, f);
        }
    }
    if best.1 > current_ll {
        *params = reshaped(params, best.0.exp())?;
        Ok(best.1)
    } else {
        Ok(current_ll)
    }
}

/// Step multiples tried by [`extrapolate`].
const EXTRAPOLATION_STEPS: [f64; 6] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

/// Moves past `cur` along the last sweep's direction in (ξ, α, Ω, ln ν) while
/// the log-likelihood keeps improving.
fn extrapolate(prev: &MmnParams, cur: MmnParams, cur_ll: f64, data: &DMatrix<f64>, interval: (f64, f64)) -> (MmnParams, f64) {
    let (a0, a1) = (prev.alpha(), cur.alpha());
    let (n0, n1) = (prev.law.nu().unwrap_or(1.0).ln(), cur.law.nu().unwrap_or(1.0).ln());
    let (lo, hi) = (interval.0.ln(), interval.1.ln());
    let point = |s: f64| -> Result<MmnParams> {
        let alpha = &a0 + (&a1 - &a0) * s;
        let omega = &prev.omega_mat + (&cur.omega_mat - &prev.omega_mat) * s;
        let xi = &prev.xi + (&cur.xi - &prev.xi) * s;
        let nu = (n0 + (n1 - n0) * s).clamp(lo, hi).exp();
        let w = omega.diagonal().map(f64::sqrt);
        let delta = alpha.component_div(&w);
        let law = if cur.law.nu().is_some() { MixingLaw::Gamma { nu } } else { cur.law };
        let trial = MmnParams { xi, omega_mat: omega, delta, law };
        trial.validate()?;
        Ok(trial)
    };
    let mut best: Option<(MmnParams, f64)> = None;
    for s in EXTRAPOLATION_STEPS {
        let Ok(trial) = point(s) else { break };
        let Ok(ll) = loglik_of(&trial, data) else { break };
        if ll <= best.as_ref().map_or(cur_ll, |b| b.1) {
            break;
        }
        best = Some((trial, ll));
    }
    best.unwrap_or((cur, cur_ll))
}

/// Shapes tried, along with the requested one, when warm-starting a gamma fit.
const NU_START_GRID: [f64; 7] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

/// Gamma-mixing start: the exponential fit, moved by [`reshaped`] to the
/// best of the requested shape and [`NU_START_GRID`].
fn warm_start(data: &DMatrix<f64>, law: MixingLaw, cfg: &FitConfig) -> Result<MmnParams> {
    let exp = fit(data, MixingLaw::Exponential, &FitConfig { init: Init::MomentInit, ..cfg.clone() })?;
    let (lo, hi) = cfg.nu_interval();
    let requested = law.nu().unwrap_or(1.0);
    let mut shapes = vec![requested];
    if cfg.estimate_nu {
        shapes.extend(NU_START_GRID.iter().copied().filter(|nu| (lo..=hi).contains(nu)));
    }
    let mut best: Option<(MmnParams, f64)> = None;
    for nu in shapes {
        let Ok(candidate) = reshaped(&exp.params_hat, nu) else { continue };
        let Ok(ll) = loglik_of(&candidate, data) else { continue };
        if best.as_ref().is_none_or(|b| ll > b.1) {
            best = Some((candidate, ll));
        }
    }
    match best {
        Some((params, _)) => Ok(params),
        None => moment_init(data, law),
    }
}

/// Fits an MMN law with the given mixing family by the EM-type algorithm.
/// Exponential mixing has no shape to update. For gamma mixing each sweep adds
/// a shape step ([`update_nu`], when `estimate_nu` is set) and a monotone
/// extrapolation ([`extrapolate`]); the moment start is the exponential fit
/// moved to a gamma law by [`warm_start`].
pub fn fit(data: &DMatrix<f64>, law: MixingLaw, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    law.validate()?;
    let law = law.normalized();
    if matches!(law, MixingLaw::TruncNormal { .. }) {
        return Err(MmnError::UnsupportedLaw(law.name()));
    }
    let (n, p) = data.shape();
    if p == 0 || n <= p + 2 {
        return Err(MmnError::InsufficientObservations { n, p });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(MmnError::DegenerateData("non-finite entries".into()));
    }
    let skew = column_third_moments(data);
    let mut params = match &cfg.init {
        Init::MomentInit if law.nu().is_some() => warm_start(data, law, cfg)?,
        Init::MomentInit => moment_init(data, law)?,
        Init::UserInit(p0) => {
            if p0.dim() != p {
                return Err(MmnError::DimensionMismatch(format!("initial dimension {} vs data {p}", p0.dim())));
            }
            let mut p0 = p0.clone();
            if law.nu().is_none() {
                p0.law = law;
            }
            p0.validate()?;
            p0
        }
    };
    nudge_zero_skew(&mut params, &skew);
    let mut ll = loglik_of(&params, data)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iter {
        iters += 1;
        let step = e_step(&params, data).and_then(|(e1, e2)| m_step(data, &e1, &e2));
        let mut next = match step.and_then(|m| params_from_m_step(&m, params.law)) {
            Ok(np) => np,
            Err(_) => break,
        };
        nudge_zero_skew(&mut next, &skew);
        let mut next_ll = match loglik_of(&next, data) {
            Ok(v) => v,
            Err(_) => break,
        };
        if law.nu().is_some() && cfg.estimate_nu {
            next_ll = update_nu(&mut next, data, cfg.nu_interval(), next_ll)?;
        }
        if law.nu().is_some() {
            (next, next_ll) = extrapolate(&params, next, next_ll, data, cfg.nu_interval());
        }
        let rel = (next_ll / ll - 1.0).abs();
        params = next;
        ll = next_ll;
        trace.push(ll);
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }
    let mut k = n_free_params(p, params.law);
    if law.nu().is_some() && !cfg.estimate_nu {
        k -= 1;
    }
    let (aic, bic) = information_criteria(ll, k, n);
    Ok(FitResult { params_hat: params, loglik: ll, loglik_trace: trace, iters, aic, bic, converged })
}
