//! Gauss–Legendre rules and composite log-space integration with node doubling.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{MmnError, Result};

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = nf * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared instance of the n-point rule.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
    }

    /// ∫ f over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Node-doubling schedule for composite integration.
#[derive(Debug, Clone, Copy)]
pub struct Doubling {
    /// Nodes per panel on the first pass.
    pub base_nodes: usize,
    /// Maximum number of doublings after the first pass.
    pub max_doublings: usize,
    /// Relative change accepted as converged.
    pub target: f64,
    /// Relative change above which the last pass is rejected.
    pub failure: f64,
}

impl Default for Doubling {
    fn default() -> Self {
        Doubling { base_nodes: 16, max_doublings: 4, target: 1e-13, failure: 1e-9 }
    }
}

/// Log of the composite integral of `exp(g_k(x))` over the panels delimited by
/// `breaks`, for `k` integrands evaluated together. `g` fills one log value
/// per integrand at each abscissa; `-inf` marks a zero.
fn log_composite<G: Fn(f64, &mut [f64])>(g: &G, k: usize, breaks: &[f64], rule: &GaussLegendre) -> Vec<f64> {
    let npts = (breaks.len() - 1) * rule.nodes.len();
    let mut vals = vec![f64::NEG_INFINITY; npts * k];
    let mut buf = vec![0.0; k];
    let mut idx = 0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let log_half = half.ln();
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            g(mid + half * x, &mut buf);
            let lw = wt.ln() + log_half;
            for j in 0..k {
                vals[j * npts + idx] = buf[j] + lw;
            }
            idx += 1;
        }
    }
    (0..k)
        .map(|j| {
            let col = &vals[j * npts..(j + 1) * npts];
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi == f64::NEG_INFINITY || hi.is_nan() {
                return hi;
            }
            hi + col.iter().map(|v| (v - hi).exp()).sum::<f64>().ln()
        })
        .collect()
}

/// Log-integrals of several integrands sharing one panel layout, refined by
/// node doubling until every integrand settles.
pub fn log_integrate_many<G: Fn(f64, &mut [f64])>(
    g: G,
    k: usize,
    breaks: &[f64],
    plan: Doubling,
) -> Result<Vec<f64>> {
    let mut n = plan.base_nodes;
    let mut prev = log_composite(&g, k, breaks, &GaussLegendre::cached(n));
    let mut change = f64::INFINITY;
    for _ in 0..plan.max_doublings {
        n *= 2;
        let cur = log_composite(&g, k, breaks, &GaussLegendre::cached(n));
        change = cur
            .iter()
            .zip(&prev)
            .map(|(c, p)| if c == p { 0.0 } else { (c - p).exp_m1().abs() })
            .fold(0.0, f64::max);
        prev = cur;
        if change <= plan.target {
            return Ok(prev);
        }
    }
    if change <= plan.failure {
        Ok(prev)
    } else {
        Err(MmnError::QuadratureNotConverged(change))
    }
}

/// Single-integrand form of [`log_integrate_many`].
pub fn log_integrate<G: Fn(f64) -> f64>(g: G, breaks: &[f64], plan: Doubling) -> Result<f64> {
    log_integrate_many(|x, out: &mut [f64]| out[0] = g(x), 1, breaks, plan).map(|v| v[0])
}

/// Evenly spaced panel boundaries on [a, b] with width at most `width`,
/// capped at `max_panels` panels.
pub fn panel_breaks(a: f64, b: f64, width: f64, max_panels: usize) -> Vec<f64> {
    let count = (((b - a) / width).ceil() as usize).clamp(1, max_panels);
    (0..=count).map(|i| a + (b - a) * i as f64 / count as f64).collect()
}
