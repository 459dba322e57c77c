//! Normal-distribution special functions with tail-stable evaluation.

use std::f64::consts::SQRT_2;

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// ln √(2π).
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument Φ is evaluated through the tail continued fraction.
const TAIL_SWITCH: f64 = -8.0;

/// Below this mean the truncated-normal moments use backward ratio recursion.
const RATIO_SWITCH: f64 = -4.0;

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Φ̄(t)/φ(t) for t > 0, by the Laplace continued fraction (modified Lentz).
fn tail_ratio(t: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = t;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..10_000 {
        let a = k as f64;
        d = t + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = t + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let step = c * d;
        f *= step;
        if (step - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// ln Φ(x), accurate in both tails.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        -0.5 * x * x - LN_SQRT_2PI + tail_ratio(-x).ln()
    } else if x > 0.0 {
        (-0.5 * erfc(x / SQRT_2)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Inverse Mills ratio φ(x)/Φ(x).
pub fn inv_mills(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        1.0 / tail_ratio(-x)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

/// ln(Φ(x)/φ(x)), finite for every finite x.
pub fn log_cdf_over_pdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        tail_ratio(-x).ln()
    } else {
        log_norm_cdf(x) + 0.5 * x * x + LN_SQRT_2PI
    }
}

/// Raw moments `m[0..=kmax]` of N(c, 1) truncated to (0, ∞).
///
/// Uses m_k = c m_{k-1} + (k-1) m_{k-2} for moderate c. Deep in the lower
/// tail that recursion cancels, so the ratios r_k = m_k / m_{k-1} are taken
/// from the backward recursion r_k = k / (r_{k+1} - c) instead.
pub fn truncnorm_moments(c: f64, kmax: usize) -> Vec<f64> {
    let mut m = vec![1.0; kmax + 1];
    if kmax == 0 {
        return m;
    }
    if c >= RATIO_SWITCH {
        m[1] = c + inv_mills(c);
        for k in 2..=kmax {
            m[k] = c * m[k - 1] + (k - 1) as f64 * m[k - 2];
        }
        return m;
    }
    let x = -c;
    let ratios = |depth: usize| {
        let mut r = vec![0.0; depth + 1];
        for k in (1..depth).rev() {
            r[k] = k as f64 / (x + r[k + 1]);
        }
        r
    };
    let mut depth = 64 + kmax;
    let mut r = ratios(depth);
    loop {
        let finer = ratios(2 * depth);
        let settled = (1..=kmax).all(|k| (finer[k] - r[k]).abs() <= 1e-16 * finer[k]);
        r = finer;
        depth *= 2;
        if settled || depth > 1 << 16 {
            break;
        }
    }
    for k in 1..=kmax {
        m[k] = m[k - 1] * r[k];
    }
    m
}

/// ln(e^a + e^b).
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_is_continuous_at_tail_switch() {
        let x = TAIL_SWITCH;
        let series = -0.5 * x * x - LN_SQRT_2PI + tail_ratio(-x).ln();
        assert!((series - norm_cdf(x).ln()).abs() < 1e-13 * series.abs());
        let a = inv_mills(TAIL_SWITCH - 1e-12);
        let b = inv_mills(TAIL_SWITCH + 1e-12);
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn deep_tail_log_cdf_matches_asymptotic_series() {
        // ln Φ(-x) ≈ ln φ(x) - ln x + ln(1 - 1/x² + 3/x⁴ - 15/x⁶)
        let x: f64 = 40.0;
        let series = 1.0 - 1.0 / x.powi(2) + 3.0 / x.powi(4) - 15.0 / x.powi(6);
        let approx = -0.5 * x * x - LN_SQRT_2PI - x.ln() + series.ln();
        assert!((log_norm_cdf(-x) - approx).abs() < 1e-9);
    }

    #[test]
    fn truncnorm_moments_agree_across_switch() {
        let a = truncnorm_moments(RATIO_SWITCH + 1e-10, 4);
        let b = truncnorm_moments(RATIO_SWITCH - 1e-10, 4);
        for k in 0..=4 {
            assert!((a[k] - b[k]).abs() < 1e-8 * b[k], "k={k}: {} vs {}", a[k], b[k]);
        }
    }

    #[test]
    fn half_normal_moments() {
        let m = truncnorm_moments(0.0, 4);
        let s = (2.0 / std::f64::consts::PI).sqrt();
        assert!((m[1] - s).abs() < 1e-15);
        assert!((m[2] - 1.0).abs() < 1e-15);
        assert!((m[3] - 2.0 * s).abs() < 1e-14);
        assert!((m[4] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn far_tail_moments_approach_exponential() {
        // N(c,1) on (0,∞) with c → -∞ behaves like Exp(rate -c)
        let c = -1e4;
        let m = truncnorm_moments(c, 3);
        assert!((m[1] * 1e4 - 1.0).abs() < 1e-3);
        assert!((m[2] * 1e8 - 2.0).abs() < 1e-2);
    }
}
