//! Densities, generating functions, sampling and conditional moments of the
//! mixing variable, plus harnesses for log-concavity and infinite
//! divisibility.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MmnError, Result};
use crate::mixing::MixingLaw;
use crate::params::{checked_cholesky, MmnParams};
use crate::quad::{log_integrate_many, panel_breaks, Doubling};
use crate::special::{ln_gamma, log_add, log_cdf_over_pdf, log_norm_cdf, truncnorm_moments, LN_SQRT_2PI};

/// Evaluation workspace for one parameter set: caches the Cholesky factor of
/// Σ_Y, v = Σ_Y⁻¹α, η = (αᵀΣ_Y⁻¹α)^{1/2} and the normal constant.
#[derive(Debug, Clone)]
pub struct Mmn {
    params: MmnParams,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    v: DVector<f64>,
    eta: f64,
    log_norm_const: f64,
}

impl Mmn {
    pub fn new(params: MmnParams) -> Result<Self> {
        params.validate()?;
        let alpha = params.alpha();
        let chol = checked_cholesky(&params.sigma_y(), "Sigma_Y")?;
        let v = chol.solve(&alpha);
        let eta = alpha.dot(&v).max(0.0).sqrt();
        let p = params.dim() as f64;
        let l = chol.l_dirty();
        let log_det_half: f64 = (0..params.dim()).map(|j| l[(j, j)].ln()).sum();
        let log_norm_const = -p * LN_SQRT_2PI - log_det_half;
        Ok(Mmn { params, alpha, chol, v, eta, log_norm_const })
    }

    pub fn params(&self) -> &MmnParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// η = (αᵀΣ_Y⁻¹α)^{1/2}; zero exactly when δ = 0.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn check_point(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.dim() {
            return Err(MmnError::DimensionMismatch(format!("point has length {}, expected {}", y.len(), self.dim())));
        }
        Ok(())
    }

    /// (q, b) with q = rᵀΣ_Y⁻¹r and b = αᵀΣ_Y⁻¹r for r = y − ξ.
    fn quad_forms(&self, y: &DVector<f64>) -> (f64, f64) {
        let r = y - &self.params.xi;
        let w = self.chol.l_dirty().solve_lower_triangular(&r).expect("nonsingular factor");
        (w.norm_squared(), self.v.dot(&r))
    }

    /// A(y) = (αᵀΣ_Y⁻¹(y − ξ) − 1)/η.
    pub fn a_value(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_point(y)?;
        if self.eta == 0.0 {
            return Err(MmnError::DegenerateSkewness);
        }
        let (_, b) = self.quad_forms(y);
        Ok((b - 1.0) / self.eta)
    }

    /// ln f(y) by quadrature over the mixing law:
    /// ln ∫ φ_p(y; ξ + αu, Σ_Y) h(u) du.
    pub fn log_pdf_generic(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_point(y)?;
        let (q, b) = self.quad_forms(y);
        let base = self.log_norm_const - 0.5 * q;
        if self.eta == 0.0 {
            return Ok(base);
        }
        let e2 = self.eta * self.eta;
        let li = self.params.law.log_expect_many(
            |u, out: &mut [f64]| out[0] = b * u - 0.5 * e2 * u * u,
            1,
            b / e2,
            1.0 / self.eta,
        )?;
        Ok(base + li[0])
    }

    pub fn pdf_generic(&self, y: &DVector<f64>) -> Result<f64> {
        self.log_pdf_generic(y).map(f64::exp)
    }

    /// ln f(y) from the closed forms for exponential and gamma mixing.
    pub fn log_pdf_closed(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_point(y)?;
        let law = self.params.law.normalized();
        if matches!(law, MixingLaw::TruncNormal { .. }) {
            return Err(MmnError::UnsupportedLaw(law.name()));
        }
        if self.eta == 0.0 {
            return Err(MmnError::DegenerateSkewness);
        }
        let (q, b) = self.quad_forms(y);
        let a = (b - 1.0) / self.eta;
        let base = self.log_norm_const - 0.5 * q;
        match law {
            MixingLaw::Exponential => Ok(base - self.eta.ln() + log_cdf_over_pdf(a)),
            MixingLaw::Gamma { nu } => {
                let j = log_tilted_integrals(nu, a, 0)?;
                Ok(base - nu * self.eta.ln() - ln_gamma(nu) + j[0])
            }
            MixingLaw::TruncNormal { .. } => unreachable!(),
        }
    }

    pub fn pdf_closed(&self, y: &DVector<f64>) -> Result<f64> {
        self.log_pdf_closed(y).map(f64::exp)
    }

    /// ln f(y), using the closed form where one exists and the normal
    /// density when δ = 0.
    pub fn log_pdf(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_point(y)?;
        if self.eta == 0.0 {
            let (q, _) = self.quad_forms(y);
            return Ok(self.log_norm_const - 0.5 * q);
        }
        match self.params.law {
            MixingLaw::TruncNormal { a, b: bv } => {
                // exp(bu − η²u²/2) against N(a, bv) on (0, ∞) is again a
                // truncated normal kernel with precision η² + 1/bv.
                let (q, b) = self.quad_forms(y);
                let prec = self.eta * self.eta + 1.0 / bv;
                let c = (b + a / bv) / prec.sqrt();
                Ok(self.log_norm_const - 0.5 * q - a * a / (2.0 * bv) - LN_SQRT_2PI - 0.5 * bv.ln()
                    - log_norm_cdf(a / bv.sqrt())
                    - 0.5 * prec.ln()
                    + log_cdf_over_pdf(c))
            }
            _ => self.log_pdf_closed(y),
        }
    }

    pub fn pdf(&self, y: &DVector<f64>) -> Result<f64> {
        self.log_pdf(y).map(f64::exp)
    }

    /// ln f at every row of `data`.
    pub fn log_pdf_rows(&self, data: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..data.nrows()).map(|i| self.log_pdf(&data.row(i).transpose())).collect()
    }

    /// Observed log-likelihood Σ ln f(yᵢ).
    pub fn loglik(&self, data: &DMatrix<f64>) -> Result<f64> {
        Ok(self.log_pdf_rows(data)?.iter().sum())
    }

    /// ∇ ln f(y) = −Σ_Y⁻¹(y − ξ) + Σ_Y⁻¹α E[U | y].
    pub fn log_pdf_gradient(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(y)?;
        let r = y - &self.params.xi;
        let mut g = -self.chol.solve(&r);
        if self.eta > 0.0 {
            let m = self.cond_u_moments_any(y, 1)?;
            g += &self.v * m[0];
        }
        Ok(g)
    }

    /// M_Y(t) = exp(tᵀξ + tᵀΣ_Y t/2) M_U(tᵀα).
    pub fn mgf(&self, t: &DVector<f64>) -> Result<f64> {
        self.check_point(t)?;
        let s = self.params.sigma_y();
        let mu = self.params.law.mgf(t.dot(&self.alpha))?;
        Ok((t.dot(&self.params.xi) + 0.5 * (t.transpose() * s * t)[0]).exp() * mu)
    }

    /// C_Y(t) = exp(i tᵀξ − tᵀΣ_Y t/2) C_U(tᵀα).
    pub fn cf(&self, t: &DVector<f64>) -> Result<Complex<f64>> {
        self.check_point(t)?;
        let s = self.params.sigma_y();
        let quad = (t.transpose() * s * t)[0];
        let base = Complex::new(-0.5 * quad, t.dot(&self.params.xi)).exp();
        Ok(base * self.params.law.cf(t.dot(&self.alpha)))
    }

    /// `n` draws of Y = ξ + αU + Σ_Y^{1/2}N as rows of an n×p matrix.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> DMatrix<f64> {
        let p = self.dim();
        let l = self.chol.l();
        let us = self.params.law.sampler();
        let mut out = DMatrix::zeros(n, p);
        let mut z = DVector::zeros(p);
        for i in 0..n {
            let u: f64 = us.sample(rng);
            for j in 0..p {
                z[j] = StandardNormal.sample(rng);
            }
            let y = &self.params.xi + &self.alpha * u + &l * &z;
            out.set_row(i, &y.transpose());
        }
        out
    }

    /// E[U^k | Y = y] for k = 1..=kmax under exponential mixing, where U | y
    /// is N(A/η, 1/η²) truncated to (0, ∞).
    pub fn cond_u_moments(&self, y: &DVector<f64>, kmax: usize) -> Result<Vec<f64>> {
        if self.params.law.normalized() != MixingLaw::Exponential {
            return Err(MmnError::UnsupportedLaw(self.params.law.name()));
        }
        let a = self.a_value(y)?;
        let m = truncnorm_moments(a, kmax);
        Ok((1..=kmax).map(|k| m[k] / self.eta.powi(k as i32)).collect())
    }

    /// E[U^k | Y = y] for k = 1..=kmax under any supported mixing law.
    pub(crate) fn cond_u_moments_any(&self, y: &DVector<f64>, kmax: usize) -> Result<Vec<f64>> {
        self.check_point(y)?;
        if self.eta == 0.0 {
            let m = self.params.law.raw_moments();
            return (1..=kmax).map(|k| m.get(k).copied().ok_or(MmnError::UnsupportedOrder(k))).collect();
        }
        let (_, b) = self.quad_forms(y);
        match self.params.law.normalized() {
            MixingLaw::Exponential => self.cond_u_moments(y, kmax),
            MixingLaw::Gamma { nu } => {
                let a = (b - 1.0) / self.eta;
                let j = log_tilted_integrals(nu, a, kmax)?;
                Ok((1..=kmax).map(|k| (j[k] - j[0]).exp() / self.eta.powi(k as i32)).collect())
            }
            MixingLaw::TruncNormal { a, b: bv } => {
                let prec = self.eta * self.eta + 1.0 / bv;
                let sd = 1.0 / prec.sqrt();
                let mean = (b + a / bv) / prec;
                let m = truncnorm_moments(mean / sd, kmax);
                Ok((1..=kmax).map(|k| m[k] * sd.powi(k as i32)).collect())
            }
        }
    }
}

/// ln J_{s+k}(a) for k = 0..=kmax, where J_s(a) = ∫₀^∞ t^{s−1} exp(at − t²/2) dt.
///
/// J_1(a) = Φ(a)/φ(a), and J_{s+2} = a J_{s+1} + s J_s.
pub fn log_tilted_integrals(s: f64, a: f64, kmax: usize) -> Result<Vec<f64>> {
    if !(s > 0.0 && s.is_finite() && a.is_finite()) {
        return Err(MmnError::DomainError(if a.is_finite() { s } else { a }));
    }
    let smax = s + kmax as f64;
    let peak = |sh: f64| 0.5 * (a + (a * a + 4.0 * (sh - 1.0).max(0.0)).sqrt());
    let (lo, hi, step) = if a < -1.0 {
        let hi = (smax + 20.0 * smax.sqrt() + 40.0) / -a;
        (0.0, hi, (hi / 40.0).min(1.0))
    } else {
        ((peak(s) - 40.0).max(0.0), peak(smax) + 15.0, 1.0)
    };
    let plan = Doubling::default();
    let k = kmax + 1;
    let body = |t: f64, out: &mut [f64]| {
        let lt = t.ln();
        let e = a * t - 0.5 * t * t;
        for (j, o) in out.iter_mut().enumerate() {
            *o = (s + j as f64 - 1.0) * lt + e;
        }
    };
    if lo > 0.0 {
        return log_integrate_many(body, k, &panel_breaks(lo, hi, step, 100_000), plan);
    }
    let t1 = step.min(hi);
    let tail_breaks = panel_breaks(t1, hi, step, 100_000);
    let head = if s < 1.0 {
        // r = t^s on the first panel: t^{s+j−1} dt = t^j dr / s.
        let ls = s.ln();
        log_integrate_many(
            |r, out: &mut [f64]| {
                let t = r.powf(1.0 / s);
                let e = a * t - 0.5 * t * t - ls;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = if j == 0 { e } else { j as f64 * t.ln() + e };
                }
            },
            k,
            &[0.0, t1.powf(s)],
            plan,
        )?
    } else if s.fract() != 0.0 {
        let mut breaks: Vec<f64> = (0..14).rev().map(|j| t1 * 0.1f64.powi(j)).collect();
        breaks.insert(0, 0.0);
        log_integrate_many(body, k, &breaks, plan)?
    } else {
        log_integrate_many(body, k, &[0.0, t1], plan)?
    };
    if t1 >= hi {
        return Ok(head);
    }
    let tail = log_integrate_many(body, k, &tail_breaks, plan)?;
    Ok(head.iter().zip(&tail).map(|(x, y)| log_add(*x, *y)).collect())
}

/// Univariate MMNE density at ξ = 0, ω = 1 in the slant parametrization
/// λ = δ/(1 − δ²)^{1/2}:
/// f(z) = (1+λ²)^{1/2}/|λ| exp(−(1+λ²)^{1/2} z/λ + 1/(2λ²)) Φ(A),
/// with A = (λ(1+λ²)^{1/2} z − 1)/|λ|.
pub fn pdf_univariate_mmne(z: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(MmnError::DegenerateSkewness);
    }
    let r = (1.0 + lambda * lambda).sqrt();
    let a = (lambda * r * z - 1.0) / lambda.abs();
    let log_f = r.ln() - lambda.abs().ln() - r * z / lambda + 0.5 / (lambda * lambda) + log_norm_cdf(a);
    Ok(log_f.exp())
}

/// Outcome of [`check_logconcavity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogConcavityReport {
    pub trials: usize,
    pub checks: usize,
    pub violations: usize,
    /// Largest value of t ln f(a) + (1−t) ln f(b) − ln f(ta + (1−t)b).
    pub worst_gap: f64,
}

/// Tests midpoint log-concavity on random segments at t ∈ {0.25, 0.5, 0.75}.
/// Endpoints are a draw from the law and a wide normal point around ξ.
pub fn check_logconcavity<R: Rng + ?Sized>(params: &MmnParams, trials: usize, rng: &mut R) -> Result<LogConcavityReport> {
    let dist = Mmn::new(params.clone())?;
    let p = params.dim();
    let w = params.omega_diag();
    let mut report = LogConcavityReport { trials, checks: 0, violations: 0, worst_gap: f64::NEG_INFINITY };
    for _ in 0..trials {
        let ya = dist.sample(rng, 1).row(0).transpose();
        let yb = DVector::from_fn(p, |j, _| {
            let n: f64 = StandardNormal.sample(rng);
            params.xi[j] + 4.0 * w[j] * n
        });
        let (fa, fb) = (dist.log_pdf(&ya)?, dist.log_pdf(&yb)?);
        for t in [0.25, 0.5, 0.75] {
            let ym = &ya * t + &yb * (1.0 - t);
            let gap = t * fa + (1.0 - t) * fb - dist.log_pdf(&ym)?;
            report.checks += 1;
            report.worst_gap = report.worst_gap.max(gap);
            if gap > 1e-9 {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

/// One moment comparison in [`DivisibilityReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub label: String,
    pub expected: f64,
    pub observed: f64,
    pub z_score: f64,
}

/// Outcome of [`check_infinite_divisibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisibilityReport {
    pub n_parts: usize,
    pub draws: usize,
    pub checks: Vec<MomentCheck>,
    pub max_abs_z: f64,
    /// True when every check lies within 4 standard errors.
    pub passed: bool,
}

/// Sums `n_parts` independent pieces ξ/n + ω(δUᵢ + Zᵢ) with Uᵢ ~ Gamma(ν/n)
/// and Zᵢ ~ N(0, (Ω̄ − δδᵀ)/n), then compares per-coordinate mean, variance,
/// third central moment and the MGF on a small grid with the MMNG law.
pub fn check_infinite_divisibility<R: Rng + ?Sized>(
    params: &MmnParams,
    n_parts: usize,
    draws: usize,
    rng: &mut R,
) -> Result<DivisibilityReport> {
    params.validate()?;
    let nu = match params.law.normalized() {
        MixingLaw::Exponential => 1.0,
        MixingLaw::Gamma { nu } => nu,
        other => return Err(MmnError::UnsupportedLaw(other.name())),
    };
    if n_parts == 0 || draws < 2 {
        return Err(MmnError::InvalidConfig("need n_parts >= 1 and draws >= 2".into()));
    }
    let p = params.dim();
    let dist = Mmn::new(params.clone())?;
    let w = params.omega_diag();
    let alpha = params.alpha();
    let sx = params.omega_bar() - &params.delta * params.delta.transpose();
    let lx = checked_cholesky(&sx, "Omega_bar - delta delta^T")?.l() / (n_parts as f64).sqrt();
    let part = MixingLaw::Gamma { nu: nu / n_parts as f64 }.sampler();
    let xi_part = &params.xi / n_parts as f64;

    let mean = params.mean();
    let var = params.covariance().diagonal();
    let third = alpha.map(|a| 2.0 * nu * a * a * a);
    let mut grid: Vec<DVector<f64>> = Vec::new();
    for j in 0..p {
        for s in [-0.3, 0.3] {
            let mut t = DVector::zeros(p);
            t[j] = s / w[j];
            grid.push(t);
        }
    }
    grid.push(w.map(|x| 0.2 / (x * p as f64)));
    let mgf_expected: Vec<f64> = grid.iter().map(|t| dist.mgf(t)).collect::<Result<_>>()?;

    // Running sums of each statistic and its square.
    let n_stats = 3 * p + grid.len();
    let mut sum = vec![0.0; n_stats];
    let mut sum_sq = vec![0.0; n_stats];
    let mut z = DVector::zeros(p);
    for _ in 0..draws {
        let mut y = DVector::zeros(p);
        for _ in 0..n_parts {
            let u: f64 = part.sample(rng);
            for j in 0..p {
                z[j] = StandardNormal.sample(rng);
            }
            let x = &params.delta * u + &lx * &z;
            y += &xi_part + x.component_mul(&w);
        }
        let mut push = |i: usize, v: f64| {
            sum[i] += v;
            sum_sq[i] += v * v;
        };
        for j in 0..p {
            let d = y[j] - mean[j];
            push(3 * j, y[j]);
            push(3 * j + 1, d * d);
            push(3 * j + 2, d * d * d);
        }
        for (g, t) in grid.iter().enumerate() {
            push(3 * p + g, t.dot(&y).exp());
        }
    }
    let n = draws as f64;
    let mut checks = Vec::with_capacity(n_stats);
    for i in 0..n_stats {
        let (label, expected) = if i < 3 * p {
            let j = i / 3;
            match i % 3 {
                0 => (format!("mean[{j}]"), mean[j]),
                1 => (format!("variance[{j}]"), var[j]),
                _ => (format!("third_central[{j}]"), third[j]),
            }
        } else {
            (format!("mgf[{}]", i - 3 * p), mgf_expected[i - 3 * p])
        };
        let observed = sum[i] / n;
        let sd = ((sum_sq[i] / n - observed * observed).max(0.0) * n / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        let z_score = if se > 0.0 { (observed - expected) / se } else if observed == expected { 0.0 } else { f64::INFINITY };
        checks.push(MomentCheck { label, expected, observed, z_score });
    }
    let max_abs_z = checks.iter().map(|c| c.z_score.abs()).fold(0.0, f64::max);
    Ok(DivisibilityReport { n_parts, draws, checks, max_abs_z, passed: max_abs_z <= 4.0 })
}
