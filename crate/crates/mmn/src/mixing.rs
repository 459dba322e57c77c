//! Mixing laws for the latent variable U.

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, Exp1, OpenClosed01};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf};

use crate::error::{MmnError, Result};
use crate::quad::{log_integrate_many, panel_breaks, Doubling, GaussLegendre};
use crate::special::{ln_gamma, log_norm_cdf, norm_quantile, truncnorm_moments, LN_SQRT_2PI};

/// Distribution of the nonnegative mixing variable U.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingLaw {
    /// Standard gamma with shape ν and unit rate.
    Gamma { nu: f64 },
    /// Standard exponential.
    Exponential,
    /// N(a, b) truncated to (0, ∞); a = 0, b = 1 gives the half-normal.
    TruncNormal { a: f64, b: f64 },
}

impl MixingLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MixingLaw::Gamma { nu } if !(nu.is_finite() && nu > 0.0) => {
                Err(MmnError::InvalidConfig(format!("gamma shape must be positive, got {nu}")))
            }
            MixingLaw::TruncNormal { a, b } if !(a.is_finite() && b.is_finite() && b > 0.0) => {
                Err(MmnError::InvalidConfig(format!("truncated normal needs finite a and b > 0, got ({a}, {b})")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            MixingLaw::Gamma { nu } => format!("gamma(nu={nu})"),
            MixingLaw::Exponential => "exponential".into(),
            MixingLaw::TruncNormal { a, b } => format!("truncnormal(a={a}, b={b})"),
        }
    }

    /// Shape parameter when it is free in fitting (gamma only).
    pub fn nu(&self) -> Option<f64> {
        match *self {
            MixingLaw::Gamma { nu } => Some(nu),
            _ => None,
        }
    }

    /// Gamma(1) is the exponential law; this maps it to `Exponential`.
    pub fn normalized(self) -> Self {
        match self {
            MixingLaw::Gamma { nu } if nu == 1.0 => MixingLaw::Exponential,
            other => other,
        }
    }

    pub fn log_pdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            MixingLaw::Gamma { nu } => {
                if u == 0.0 {
                    return match nu.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => 0.0,
                        _ => f64::NEG_INFINITY,
                    };
                }
                (nu - 1.0) * u.ln() - u - ln_gamma(nu)
            }
            MixingLaw::Exponential => -u,
            MixingLaw::TruncNormal { a, b } => {
                let d = u - a;
                -d * d / (2.0 * b) - LN_SQRT_2PI - 0.5 * b.ln() - log_norm_cdf(a / b.sqrt())
            }
        }
    }

    /// M_U(t) = E exp(tU).
    pub fn mgf(&self, t: f64) -> Result<f64> {
        match *self {
            MixingLaw::Gamma { nu } => {
                if t >= 1.0 {
                    return Err(MmnError::DomainError(t));
                }
                Ok((-nu * (-t).ln_1p()).exp())
            }
            MixingLaw::Exponential => {
                if t >= 1.0 {
                    return Err(MmnError::DomainError(t));
                }
                Ok(1.0 / (1.0 - t))
            }
            MixingLaw::TruncNormal { a, b } => {
                let sb = b.sqrt();
                let c = a / sb;
                Ok((a * t + 0.5 * b * t * t + log_norm_cdf(c + sb * t) - log_norm_cdf(c)).exp())
            }
        }
    }

    /// C_U(t) = E exp(itU).
    pub fn cf(&self, t: f64) -> Complex<f64> {
        match *self {
            MixingLaw::Gamma { nu } => Complex::new(1.0, -t).powf(-nu),
            MixingLaw::Exponential => Complex::new(1.0, -t).inv(),
            MixingLaw::TruncNormal { .. } => {
                let hi = self.quantile(1.0 - 1e-12) + 12.0 * self.variance().sqrt();
                let period = if t.abs() > 0.0 { std::f64::consts::PI / t.abs() } else { hi };
                let breaks = panel_breaks(0.0, hi, period.min(hi), 20_000);
                let rule = GaussLegendre::cached(32);
                let (mut re, mut im) = (0.0, 0.0);
                for w in breaks.windows(2) {
                    re += rule.integrate(|u| (t * u).cos() * self.log_pdf(u).exp(), w[0], w[1]);
                    im += rule.integrate(|u| (t * u).sin() * self.log_pdf(u).exp(), w[0], w[1]);
                }
                Complex::new(re, im)
            }
        }
    }

    /// E U^k for k ≤ 4.
    pub fn raw_moment(&self, k: usize) -> Result<f64> {
        if k > 4 {
            return Err(MmnError::UnsupportedOrder(k));
        }
        Ok(self.raw_moments()[k])
    }

    /// E U^k for k = 0..=4.
    pub fn raw_moments(&self) -> [f64; 5] {
        match *self {
            MixingLaw::Gamma { nu } => {
                let mut m = [1.0; 5];
                for k in 1..5 {
                    m[k] = m[k - 1] * (nu + (k - 1) as f64);
                }
                m
            }
            MixingLaw::Exponential => [1.0, 1.0, 2.0, 6.0, 24.0],
            MixingLaw::TruncNormal { a, b } => {
                let sb = b.sqrt();
                let w = truncnorm_moments(a / sb, 4);
                let mut m = [1.0; 5];
                for k in 1..5 {
                    m[k] = w[k] * sb.powi(k as i32);
                }
                m
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moments()[1]
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MixingLaw::Gamma { nu } => nu,
            MixingLaw::Exponential => 1.0,
            MixingLaw::TruncNormal { .. } => {
                let m = self.raw_moments();
                m[2] - m[1] * m[1]
            }
        }
    }

    /// E (U − E U)³.
    pub fn third_central(&self) -> f64 {
        match *self {
            MixingLaw::Gamma { nu } => 2.0 * nu,
            MixingLaw::Exponential => 2.0,
            MixingLaw::TruncNormal { .. } => {
                let m = self.raw_moments();
                m[3] - 3.0 * m[2] * m[1] + 2.0 * m[1].powi(3)
            }
        }
    }

    /// Quantile function.
    pub fn quantile(&self, q: f64) -> f64 {
        match *self {
            MixingLaw::Gamma { nu } => GammaCdf::new(nu, 1.0).expect("validated shape").inverse_cdf(q),
            MixingLaw::Exponential => -(-q).ln_1p(),
            MixingLaw::TruncNormal { a, b } => {
                let sb = b.sqrt();
                let c = a / sb;
                sb * (c - norm_quantile((1.0 - q) * log_norm_cdf(c).exp())).max(0.0)
            }
        }
    }

    /// Sampler for repeated draws.
    pub fn sampler(&self) -> MixingSampler {
        match *self {
            MixingLaw::Gamma { nu } => {
                MixingSampler::Gamma(rand_distr::Gamma::new(nu, 1.0).expect("validated shape"))
            }
            MixingLaw::Exponential => MixingSampler::Exponential,
            MixingLaw::TruncNormal { a, b } => {
                let sb = b.sqrt();
                let c = a / sb;
                MixingSampler::TruncNormal { c, scale: sb, cdf_c: log_norm_cdf(c).exp() }
            }
        }
    }

    /// `n` i.i.d. draws of U.
    pub fn sample_u<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let s = self.sampler();
        (0..n).map(|_| s.sample(rng)).collect()
    }

    /// Log-integrals ln ∫ exp(g_j(u)) h(u) du for `k` integrands sharing one
    /// quadrature layout. `center` and `width` locate the region where the
    /// integrands concentrate beyond the bulk of h; the range runs to the
    /// larger of the (1 − 10⁻¹⁵) quantile plus 5 standard deviations and
    /// `center + 12 width`.
    pub(crate) fn log_expect_many<G: Fn(f64, &mut [f64])>(
        &self,
        g: G,
        k: usize,
        center: f64,
        width: f64,
    ) -> Result<Vec<f64>> {
        let sd = self.variance().sqrt();
        let mut hi = self.quantile(1.0 - 1e-15) + 5.0 * sd;
        if center.is_finite() && width.is_finite() {
            hi = hi.max(center + 12.0 * width);
        }
        let step = width.min(sd).max(hi / 4000.0);
        let plan = Doubling::default();
        match *self {
            MixingLaw::Gamma { nu } if nu < 1.0 => {
                // u = s^(1/ν) on the first panel absorbs the u^(ν−1) singularity:
                // h(u) du = exp(−u) / Γ(ν+1) ds.
                let u1 = step.min(hi);
                let lg = ln_gamma(nu + 1.0);
                let head = log_integrate_many(
                    |s, out: &mut [f64]| {
                        let u = s.powf(1.0 / nu);
                        g(u, out);
                        for v in out.iter_mut() {
                            *v += -u - lg;
                        }
                    },
                    k,
                    &[0.0, u1.powf(nu)],
                    plan,
                )?;
                if u1 >= hi {
                    return Ok(head);
                }
                let tail = self.log_expect_plain(&g, k, &panel_breaks(u1, hi, step, 4000), plan)?;
                Ok(head.iter().zip(&tail).map(|(a, b)| crate::special::log_add(*a, *b)).collect())
            }
            MixingLaw::Gamma { nu } if nu.fract() != 0.0 => {
                // u^(ν−1) is not smooth at zero: grade the first panel geometrically.
                let u1 = step.min(hi);
                let mut breaks: Vec<f64> = (0..14).rev().map(|j| u1 * 0.1f64.powi(j)).collect();
                breaks.insert(0, 0.0);
                breaks.extend(panel_breaks(u1, hi, step, 4000).into_iter().skip(1));
                self.log_expect_plain(&g, k, &breaks, plan)
            }
            _ => self.log_expect_plain(&g, k, &panel_breaks(0.0, hi, step, 4000), plan),
        }
    }

    fn log_expect_plain<G: Fn(f64, &mut [f64])>(
        &self,
        g: &G,
        k: usize,
        breaks: &[f64],
        plan: Doubling,
    ) -> Result<Vec<f64>> {
        log_integrate_many(
            |u, out: &mut [f64]| {
                g(u, out);
                let lh = self.log_pdf(u);
                for v in out.iter_mut() {
                    *v += lh;
                }
            },
            k,
            breaks,
            plan,
        )
    }
}

/// Prepared sampler for a [`MixingLaw`].
#[derive(Debug, Clone, Copy)]
pub enum MixingSampler {
    Gamma(rand_distr::Gamma<f64>),
    Exponential,
    /// Inverse-CDF draw of √b·W with W ~ N(c, 1) truncated to (0, ∞).
    TruncNormal { c: f64, scale: f64, cdf_c: f64 },
}

impl Distribution<f64> for MixingSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MixingSampler::Gamma(g) => g.sample(rng),
            MixingSampler::Exponential => Exp1.sample(rng),
            MixingSampler::TruncNormal { c, scale, cdf_c } => {
                let v: f64 = OpenClosed01.sample(rng);
                scale * (c - norm_quantile(v * cdf_c)).max(0.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn laws() -> Vec<MixingLaw> {
        vec![
            MixingLaw::Exponential,
            MixingLaw::Gamma { nu: 0.5 },
            MixingLaw::Gamma { nu: 2.0 },
            MixingLaw::Gamma { nu: 2.5 },
            MixingLaw::Gamma { nu: 0.05 },
            MixingLaw::TruncNormal { a: 0.0, b: 1.0 },
            MixingLaw::TruncNormal { a: -1.0, b: 2.0 },
        ]
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(MixingLaw::Exponential.mgf(0.0).unwrap(), 1.0);
        assert!((MixingLaw::Gamma { nu: 2.0 }.mgf(0.5).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(MixingLaw::Exponential.mgf(1.0), Err(MmnError::DomainError(1.0)));
        assert_eq!(MixingLaw::Exponential.raw_moment(3).unwrap(), 6.0);
        assert_eq!(MixingLaw::Gamma { nu: 1.0 }.raw_moment(2).unwrap(), 2.0);
        assert!((MixingLaw::Gamma { nu: 2.5 }.raw_moment(1).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(MixingLaw::Exponential.raw_moment(5), Err(MmnError::UnsupportedOrder(5)));
    }

    #[test]
    fn mgf_derivatives_match_moments() {
        let h = 1e-3;
        for law in laws() {
            let m = law.raw_moments();
            let f = |t: f64| law.mgf(t).unwrap();
            let d1 = (f(h) - f(-h)) / (2.0 * h);
            let d2 = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
            let d3 = (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h);
            for (k, d) in [(1, d1), (2, d2), (3, d3)] {
                assert!((d - m[k]).abs() < 1e-4 * m[k], "{law:?} k={k}: {d} vs {}", m[k]);
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for law in laws() {
            let li = law.log_expect_many(|_, out: &mut [f64]| out[0] = 0.0, 1, 0.0, 1.0).unwrap()[0];
            assert!(li.abs() < 1e-6, "{law:?}: {li}");
        }
    }

    #[test]
    fn quadrature_reproduces_moments() {
        for law in laws() {
            let m = law.raw_moments();
            let li = law
                .log_expect_many(
                    |u, out: &mut [f64]| {
                        for (k, v) in out.iter_mut().enumerate() {
                            *v = (k as f64 + 1.0) * u.ln();
                        }
                    },
                    4,
                    0.0,
                    1.0,
                )
                .unwrap();
            for k in 1..=4 {
                let rel = (li[k - 1].exp() - m[k]) / m[k];
                assert!(rel.abs() < 1e-8, "{law:?} k={k}: rel {rel}");
            }
        }
    }

    #[test]
    fn sample_means_within_four_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        for law in [MixingLaw::Exponential, MixingLaw::Gamma { nu: 2.0 }, MixingLaw::TruncNormal { a: 0.0, b: 1.0 }] {
            let xs = law.sample_u(&mut rng, n);
            let mean = xs.iter().sum::<f64>() / n as f64;
            let se = (law.variance() / n as f64).sqrt();
            assert!((mean - law.mean()).abs() < 4.0 * se, "{law:?}: {mean}");
        }
        assert!((MixingLaw::TruncNormal { a: 0.0, b: 1.0 }.mean() - 0.797_884_560_802_865_4).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for law in laws() {
            for q in [0.1, 0.5, 0.9] {
                let x = law.quantile(q);
                let li = law
                    .log_expect_many(|u, out: &mut [f64]| out[0] = if u <= x { 0.0 } else { f64::NEG_INFINITY }, 1, 0.0, 1.0);
                // the indicator is rough; compare on a coarse tolerance only
                if let Ok(v) = li {
                    assert!((v[0].exp() - q).abs() < 2e-2, "{law:?} q={q}");
                }
            }
        }
    }

    #[test]
    fn characteristic_function_small_argument() {
        for law in laws() {
            let t = 1e-3;
            let c = law.cf(t);
            let m = law.raw_moments();
            assert!((c.re - (1.0 - t * t * m[2] / 2.0)).abs() < 1e-8, "{law:?}");
            assert!((c.im - (t * m[1] - t.powi(3) * m[3] / 6.0)).abs() < 1e-8, "{law:?}");
        }
    }
}
