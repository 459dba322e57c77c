//! Multivariate skewness measures of MMN laws and their plug-in sample
//! versions.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::em::{fit, FitConfig, FitResult};
use crate::error::{MmnError, Result};
use crate::mixing::MixingLaw;
use crate::moments::{central_from_raw, moments_y, third_central_projected};
use crate::params::{canonical_mode, MmnParams};

/// The twelve scalar statistics used for testing symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Beta1p,
    Beta2_1p,
    SMax,
    SSum,
    BMax,
    BSum,
    QStar,
    TMax,
    TSum,
    SI,
    SCMax,
    SCSum,
}

impl Statistic {
    pub const ALL: [Statistic; 12] = [
        Statistic::Beta1p,
        Statistic::Beta2_1p,
        Statistic::SMax,
        Statistic::SSum,
        Statistic::BMax,
        Statistic::BSum,
        Statistic::QStar,
        Statistic::TMax,
        Statistic::TSum,
        Statistic::SI,
        Statistic::SCMax,
        Statistic::SCSum,
    ];

    /// Statistics whose rejection region is the upper tail only.
    pub fn one_sided(self) -> bool {
        matches!(self, Statistic::Beta1p | Statistic::Beta2_1p | Statistic::QStar | Statistic::SI)
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Beta1p => "beta_1p",
            Statistic::Beta2_1p => "beta2_1p",
            Statistic::SMax => "s_max",
            Statistic::SSum => "s_sum",
            Statistic::BMax => "b_max",
            Statistic::BSum => "b_sum",
            Statistic::QStar => "q_star",
            Statistic::TMax => "t_max",
            Statistic::TSum => "t_sum",
            Statistic::SI => "s_i",
            Statistic::SCMax => "sc_max",
            Statistic::SCSum => "sc_sum",
        }
    }

    pub fn from_name(name: &str) -> Option<Statistic> {
        Statistic::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// All measures for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewnessReport {
    pub mardia: f64,
    pub malkovich_afifi: f64,
    pub srivastava: f64,
    pub mori: Vec<f64>,
    pub kollo: Vec<f64>,
    pub bbq_t: Vec<f64>,
    pub bbq_qstar: f64,
    pub isogai_si: f64,
    pub isogai_sc: Vec<f64>,
    /// Sum and maximum over coordinates of s, b, T and s_C.
    pub scalarized: BTreeMap<String, f64>,
}

impl SkewnessReport {
    pub fn statistic(&self, s: Statistic) -> f64 {
        match s {
            Statistic::Beta1p => self.mardia,
            Statistic::Beta2_1p => self.srivastava,
            Statistic::QStar => self.bbq_qstar,
            Statistic::SI => self.isogai_si,
            other => self.scalarized[other.name()],
        }
    }
}

fn sum_max(v: &[f64]) -> (f64, f64) {
    (v.iter().sum(), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// γ₁* of the canonical univariate law MMN(0, 1, δ*; H): its third central
/// moment over the 3/2 power of its variance.
pub fn canonical_gamma1(delta_star: f64, law: MixingLaw) -> f64 {
    let d2 = delta_star * delta_star;
    delta_star.powi(3) * law.third_central() / (1.0 + d2 * (law.variance() - 1.0)).powf(1.5)
}

/// Mardia's β₁,p = (γ₁*)², equal to the Malkovich–Afifi index here.
pub fn mardia(params: &MmnParams) -> Result<f64> {
    params.validate()?;
    Ok(canonical_gamma1(params.delta_star(), params.law).powi(2))
}

/// Mardia's index for exponential mixing, 4δ*⁶.
pub fn mardia_mmne(params: &MmnParams) -> Result<f64> {
    params.validate()?;
    if params.law.normalized() != MixingLaw::Exponential {
        return Err(MmnError::UnsupportedLaw(params.law.name()));
    }
    Ok(4.0 * params.delta_star_sq().powi(3))
}

fn covariance_eigen(params: &MmnParams) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let cov = params.covariance();
    let eig = cov.symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(MmnError::EigenFailure);
    }
    // Descending eigenvalue order.
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    Ok((values, vectors))
}

/// Srivastava's β²₁p from principal components of var(Y).
pub fn srivastava(params: &MmnParams) -> Result<f64> {
    params.validate()?;
    let raw = moments_y(params)?;
    let (values, vectors) = covariance_eigen(params)?;
    let p = params.dim();
    let mut total = 0.0;
    for i in 0..p {
        let g = vectors.column(i).into_owned();
        let a = DMatrix::from_column_slice(p, 1, g.as_slice());
        let c3 = third_central_projected(&raw, &a)?[(0, 0)];
        total += (c3 / values[i].powf(1.5)).powi(2);
    }
    Ok(total / p as f64)
}

/// Third moment tensor (p² × p) of Z = Δ^{−1/2}(Y − μ), Δ = var(Y).
pub fn standardized_third_moment(params: &MmnParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let (values, vectors) = covariance_eigen(params)?;
    let inv_root = &vectors * DMatrix::from_diagonal(&values.map(|l| 1.0 / l.sqrt())) * vectors.transpose();
    let inv_root = 0.5 * (&inv_root + inv_root.transpose());
    let c = -(&inv_root * params.mean());
    let z = params.affine_transform(&inv_root, &c)?;
    Ok(central_from_raw(&moments_y(&z)?)?.m3)
}

fn mori_from(m3z: &DMatrix<f64>, p: usize) -> Vec<f64> {
    (0..p).map(|r| (0..p).map(|i| m3z[(i * p + i, r)]).sum()).collect()
}

fn kollo_from(m3z: &DMatrix<f64>, p: usize) -> Vec<f64> {
    (0..p).map(|r| (0..p * p).map(|ij| m3z[(ij, r)]).sum()).collect()
}

/// Móri–Rohatgi–Székely vector sᵣ = Σᵢ E(Zᵢ²Zᵣ).
pub fn mori(params: &MmnParams) -> Result<Vec<f64>> {
    Ok(mori_from(&standardized_third_moment(params)?, params.dim()))
}

/// Kollo vector bᵣ = Σᵢⱼ E(ZᵢZⱼZᵣ).
pub fn kollo(params: &MmnParams) -> Result<Vec<f64>> {
    Ok(kollo_from(&standardized_third_moment(params)?, params.dim()))
}

/// Balakrishnan–Brito–Quiroz vector T with Tᵣ = 3 sᵣ / (p(p+2)), and
/// Q* = TᵀT.
pub fn bbq(params: &MmnParams) -> Result<(Vec<f64>, f64)> {
    let p = params.dim();
    let t = bbq_from(&mori(params)?, p);
    let q = t.iter().map(|x| x * x).sum();
    Ok((t, q))
}

fn bbq_from(s: &[f64], p: usize) -> Vec<f64> {
    let pf = p as f64;
    let j4 = 3.0 / (pf * (pf + 2.0));
    let j22 = 1.0 / (pf * (pf + 2.0));
    // J₄ E(Zᵣ³) + 3 J₂,₂ Σ_{i≠r} E(Zᵢ²Zᵣ) collapses to J₄ sᵣ.
    debug_assert!((j4 - 3.0 * j22).abs() < 1e-15);
    s.iter().map(|x| j4 * x).collect()
}

/// Isogai's scalar s_I and the vector s_C, both built from the mode m₀* of
/// the canonical univariate law.
pub fn isogai(params: &MmnParams) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    let ds = params.delta_star();
    if ds == 0.0 {
        return Ok((0.0, vec![0.0; params.dim()]));
    }
    let law = params.law;
    let m0 = canonical_mode(ds, law)?;
    let si = (ds * law.mean() - m0).powi(2) / (1.0 + ds * ds * (law.variance() - 1.0));
    let sc = params.delta.iter().map(|d| (law.mean() - m0 / ds) * d).collect();
    Ok((si, sc))
}

/// Every measure for `params`.
pub fn report(params: &MmnParams) -> Result<SkewnessReport> {
    params.validate()?;
    let p = params.dim();
    let m = mardia(params)?;
    let m3z = standardized_third_moment(params)?;
    let s = mori_from(&m3z, p);
    let b = kollo_from(&m3z, p);
    let t = bbq_from(&s, p);
    let q = t.iter().map(|x| x * x).sum();
    let (si, sc) = isogai(params)?;
    let mut scalarized = BTreeMap::new();
    for (stat_sum, stat_max, v) in [
        (Statistic::SSum, Statistic::SMax, &s),
        (Statistic::BSum, Statistic::BMax, &b),
        (Statistic::TSum, Statistic::TMax, &t),
        (Statistic::SCSum, Statistic::SCMax, &sc),
    ] {
        let (sum, max) = sum_max(v);
        scalarized.insert(stat_sum.name().to_string(), sum);
        scalarized.insert(stat_max.name().to_string(), max);
    }
    Ok(SkewnessReport {
        mardia: m,
        malkovich_afifi: m,
        srivastava: srivastava(params)?,
        mori: s,
        kollo: b,
        bbq_t: t,
        bbq_qstar: q,
        isogai_si: si,
        isogai_sc: sc,
        scalarized,
    })
}

/// Fits the model to `data` and evaluates every measure at the estimates.
pub fn sample_report(data: &DMatrix<f64>, law: MixingLaw, cfg: &FitConfig) -> Result<(SkewnessReport, FitResult)> {
    let fitted = fit(data, law, cfg)?;
    Ok((report(&fitted.params_hat)?, fitted))
}
