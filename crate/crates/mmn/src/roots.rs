//! Bracketed scalar root finding.

use crate::error::{MmnError, Result};

/// Root of `f` on `[lo, hi]` by false-position (secant) steps with the
/// Illinois correction, falling back to bisection when the bracket fails to
/// halve. Requires a sign change over the bracket.
pub fn secant_bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(MmnError::RootNotBracketed { lo, hi });
    }
    let mut retained = 0i8;
    for _ in 0..500 {
        let width = b - a;
        if width.abs() <= tol {
            break;
        }
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if retained == -1 {
                fa *= 0.5;
            }
            retained = -1;
        } else {
            a = b;
            fa = fb;
            b = c;
            fb = fc;
            retained = 1;
        }
        if (b - a).abs() > 0.5 * width.abs() {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Widens `[lo, hi]` geometrically until `f` changes sign, never leaving
/// `[limit_lo, limit_hi]`.
pub fn expand_bracket<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    limit_lo: f64,
    limit_hi: f64,
) -> Result<(f64, f64)> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    for _ in 0..60 {
        if flo.signum() != fhi.signum() && flo.is_finite() && fhi.is_finite() {
            return Ok((lo, hi));
        }
        let span = hi - lo;
        if lo <= limit_lo && hi >= limit_hi {
            break;
        }
        lo = (lo - 0.6 * span).max(limit_lo);
        hi = (hi + 0.6 * span).min(limit_hi);
        flo = f(lo);
        fhi = f(hi);
    }
    Err(MmnError::RootNotBracketed { lo: limit_lo, hi: limit_hi })
}
