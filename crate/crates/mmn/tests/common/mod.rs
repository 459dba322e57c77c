//! Helpers shared by the integration tests.
#![allow(dead_code)]

use mmn::{MixingLaw, MmnParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Random valid parameters: scale matrix from a Wishart-like draw with
/// uneven marginal scales, δ at a random radius below 0.97 of the boundary.
pub fn random_params<R: Rng>(rng: &mut R, p: usize, law: MixingLaw) -> MmnParams {
    let a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scale = DVector::from_fn(p, |_, _| rng.random_range(0.3..3.0));
    let omega = DMatrix::from_diagonal(&scale) * (&a * a.transpose() + DMatrix::identity(p, p) * 0.5) * DMatrix::from_diagonal(&scale);
    let omega = 0.5 * (&omega + omega.transpose());
    let xi = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
    let w = omega.diagonal().map(f64::sqrt);
    let bar = DMatrix::from_fn(p, p, |i, j| omega[(i, j)] / (w[i] * w[j]));
    let root = bar.cholesky().unwrap().l();
    let dir = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
    let radius: f64 = rng.random_range(0.05..0.97);
    let delta = root * dir * radius;
    MmnParams::new(xi, omega, delta, law).unwrap()
}

/// Reads one of the bundled CSV data sets.
pub fn load(name: &str) -> DMatrix<f64> {
    let path = format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse().unwrap()).collect())
        .collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Composite Gauss–Legendre abscissae and weights on [lo, hi].
pub fn composite_nodes(lo: f64, hi: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let rule = mmn::quad::GaussLegendre::new(order);
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let mid = lo + h * (k as f64 + 0.5);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}
