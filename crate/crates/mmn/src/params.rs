//! Parameter model: validation, standardization, closure transforms,
//! canonical form and mode.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dist::Mmn;
use crate::error::{MmnError, Result};
use crate::mixing::MixingLaw;
use crate::roots::{expand_bracket, secant_bisect};

/// Parameters (ξ, Ω, δ) of an MMN law together with its mixing law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmnParams {
    pub xi: DVector<f64>,
    pub omega_mat: DMatrix<f64>,
    pub delta: DVector<f64>,
    pub law: MixingLaw,
}

/// The quantities ω, Ω̄, Σ_Y = Ω − ωδδᵀω and α = ωδ.
#[derive(Debug, Clone, PartialEq)]
pub struct StdDecomp {
    pub omega_diag: DVector<f64>,
    pub omega_bar: DMatrix<f64>,
    pub sigma_y: DMatrix<f64>,
    pub alpha: DVector<f64>,
}

/// Canonical transform Z* = A*(Y − ξ): identity scale, skewness on the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalInfo {
    pub transform_a: DMatrix<f64>,
    pub delta_star: f64,
    pub inverse_transform: DMatrix<f64>,
}

/// Cholesky factor of a symmetric matrix, rejecting pivots below
/// 1e-12·‖m‖∞ and asymmetry above 1e-10 relative.
pub(crate) fn checked_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(MmnError::DimensionMismatch(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(MmnError::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    let norm_inf = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * norm_inf.max(f64::MIN_POSITIVE) {
        return Err(MmnError::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| MmnError::NotPositiveDefinite(format!("{what} has a nonpositive pivot")))?;
    let tol = 1e-12 * norm_inf;
    let l = chol.l_dirty();
    if (0..m.nrows()).any(|j| l[(j, j)] * l[(j, j)] <= tol) {
        return Err(MmnError::NotPositiveDefinite(format!("{what} is numerically singular")));
    }
    Ok(chol)
}

impl MmnParams {
    /// Builds and validates a parameter set.
    pub fn new(xi: DVector<f64>, omega_mat: DMatrix<f64>, delta: DVector<f64>, law: MixingLaw) -> Result<Self> {
        let p = MmnParams { xi, omega_mat, delta, law };
        p.validate()?;
        Ok(p)
    }

    /// Multivariate normal N(ξ, Ω) as the δ = 0 member of the family.
    pub fn normal(xi: DVector<f64>, omega_mat: DMatrix<f64>) -> Result<Self> {
        let p = xi.len();
        Self::new(xi, omega_mat, DVector::zeros(p), MixingLaw::Exponential)
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// Checks every parameter constraint.
    pub fn validate(&self) -> Result<()> {
        let p = self.xi.len();
        if p == 0 {
            return Err(MmnError::DimensionMismatch("dimension must be at least 1".into()));
        }
        if self.omega_mat.nrows() != p || self.omega_mat.ncols() != p || self.delta.len() != p {
            return Err(MmnError::DimensionMismatch(format!(
                "xi has length {p}, Omega is {}x{}, delta has length {}",
                self.omega_mat.nrows(),
                self.omega_mat.ncols(),
                self.delta.len()
            )));
        }
        if self.xi.iter().chain(self.delta.iter()).any(|v| !v.is_finite()) {
            return Err(MmnError::DimensionMismatch("xi and delta must be finite".into()));
        }
        self.law.validate()?;
        checked_cholesky(&self.omega_mat, "Omega")?;
        if let Some(&d) = self.delta.iter().find(|d| d.abs() >= 1.0) {
            return Err(MmnError::SkewnessOutOfRange(d * d));
        }
        let q = self.delta_star_sq();
        if !(q < 1.0 - 1e-12) {
            return Err(MmnError::SkewnessOutOfRange(q));
        }
        checked_cholesky(&self.sigma_y(), "Sigma_Y")?;
        Ok(())
    }

    /// ω = diag(Ω)^{1/2} as a vector.
    pub fn omega_diag(&self) -> DVector<f64> {
        self.omega_mat.diagonal().map(f64::sqrt)
    }

    pub fn omega_bar(&self) -> DMatrix<f64> {
        let w = self.omega_diag();
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.omega_mat[(i, j)] / (w[i] * w[j]))
    }

    /// α = ωδ.
    pub fn alpha(&self) -> DVector<f64> {
        self.omega_diag().component_mul(&self.delta)
    }

    /// Σ_Y = Ω − ααᵀ.
    pub fn sigma_y(&self) -> DMatrix<f64> {
        let a = self.alpha();
        let s = &self.omega_mat - &a * a.transpose();
        0.5 * (&s + s.transpose())
    }

    pub fn std_decompose(&self) -> Result<StdDecomp> {
        self.validate()?;
        Ok(StdDecomp {
            omega_diag: self.omega_diag(),
            omega_bar: self.omega_bar(),
            sigma_y: self.sigma_y(),
            alpha: self.alpha(),
        })
    }

    /// δᵀΩ̄⁻¹δ.
    pub fn delta_star_sq(&self) -> f64 {
        if self.is_symmetric() {
            return 0.0;
        }
        match Cholesky::new(self.omega_bar()) {
            Some(c) => self.delta.dot(&c.solve(&self.delta)),
            None => f64::INFINITY,
        }
    }

    /// δ* = (δᵀΩ̄⁻¹δ)^{1/2}.
    pub fn delta_star(&self) -> f64 {
        self.delta_star_sq().sqrt()
    }

    /// True when δ = 0 (the normal member).
    pub fn is_symmetric(&self) -> bool {
        self.delta.iter().all(|d| *d == 0.0)
    }

    /// E(Y) = ξ + E(U) ωδ.
    pub fn mean(&self) -> DVector<f64> {
        &self.xi + self.alpha() * self.law.mean()
    }

    /// var(Y) = Ω + (var U − 1) ααᵀ.
    pub fn covariance(&self) -> DMatrix<f64> {
        let a = self.alpha();
        &self.omega_mat + (self.law.variance() - 1.0) * &a * a.transpose()
    }

    /// Parameters of T = c + AᵀY for a full-rank p×h matrix A.
    pub fn affine_transform(&self, a: &DMatrix<f64>, c: &DVector<f64>) -> Result<MmnParams> {
        let p = self.dim();
        let h = a.ncols();
        if a.nrows() != p || c.len() != h || h > p || h == 0 {
            return Err(MmnError::DimensionMismatch(format!(
                "A is {}x{}, c has length {}, dimension is {p}",
                a.nrows(),
                h,
                c.len()
            )));
        }
        let sv = a.clone().svd(false, false).singular_values;
        let smax = sv.max();
        if !(sv.min() > 1e-12 * smax) {
            return Err(MmnError::RankDeficient);
        }
        let at = a.transpose();
        let xi = c + &at * &self.xi;
        let om = &at * &self.omega_mat * a;
        let om = 0.5 * (&om + om.transpose());
        let w_t = om.diagonal().map(f64::sqrt);
        let delta = (&at * self.alpha()).component_div(&w_t);
        MmnParams::new(xi, om, delta, self.law)
    }

    /// Parameters of Y + W with W ~ N(μ, Σ) independent of Y.
    pub fn convolve_with_normal(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<MmnParams> {
        let p = self.dim();
        if mu.len() != p || sigma.nrows() != p || sigma.ncols() != p {
            return Err(MmnError::DimensionMismatch(format!("normal term must have dimension {p}")));
        }
        checked_cholesky(sigma, "Sigma")?;
        let om = &self.omega_mat + sigma;
        let w_y = om.diagonal().map(f64::sqrt);
        let delta = self.alpha().component_div(&w_y);
        MmnParams::new(&self.xi + mu, om, delta, self.law)
    }

    /// Canonical transform: Ω̄ = CᵀC, P orthogonal with first column ∝ C⁻ᵀδ,
    /// A* = (C⁻¹P)ᵀω⁻¹, so A*ΩA*ᵀ = I and A*ωδ = (δ*, 0, …, 0)ᵀ.
    pub fn canonical_form(&self) -> Result<CanonicalInfo> {
        self.validate()?;
        let p = self.dim();
        let w = self.omega_diag();
        let l = checked_cholesky(&self.omega_bar(), "Omega_bar")?.l();
        let l_inv = l.clone().try_inverse().ok_or(MmnError::NotPositiveDefinite("Omega_bar".into()))?;
        let v = &l_inv * &self.delta;
        let delta_star = v.norm();
        let p_mat = if delta_star > 0.0 { householder_completion(&(v / delta_star)) } else { DMatrix::identity(p, p) };
        let w_inv = DMatrix::from_diagonal(&w.map(|x| 1.0 / x));
        let transform_a = p_mat.transpose() * &l_inv * w_inv;
        let inverse_transform = DMatrix::from_diagonal(&w) * l * &p_mat;
        Ok(CanonicalInfo { transform_a, delta_star, inverse_transform })
    }

    /// Mode M₀ = ξ + (m₀*/δ*) ωδ, where m₀* is the mode of the univariate
    /// canonical law MMN(0, 1, δ*).
    pub fn mode(&self) -> Result<DVector<f64>> {
        self.validate()?;
        let ds = self.delta_star();
        if ds == 0.0 {
            return Ok(self.xi.clone());
        }
        let m0 = canonical_mode(ds, self.law)?;
        Ok(&self.xi + self.alpha() * (m0 / ds))
    }
}

/// Orthogonal matrix whose first column is the unit vector `v`, completed by
/// a Householder reflection; later columns have their first nonzero entry
/// positive.
fn householder_completion(v: &DVector<f64>) -> DMatrix<f64> {
    let p = v.len();
    let mut e1 = DVector::zeros(p);
    e1[0] = 1.0;
    // H = I − 2wwᵀ/wᵀw swaps e1 and ±v; choose the sign keeping ‖w‖ ≥ 1.
    let (w, flip) = if v[0] <= 0.0 { (&e1 - v, false) } else { (&e1 + v, true) };
    let ww = w.dot(&w);
    let mut h = DMatrix::identity(p, p) - (2.0 / ww) * &w * w.transpose();
    if flip {
        h.column_mut(0).neg_mut();
    }
    h.set_column(0, v);
    for j in 1..p {
        if let Some(first) = h.column(j).iter().find(|x| x.abs() > 1e-14).copied() {
            if first < 0.0 {
                h.column_mut(j).neg_mut();
            }
        }
    }
    h
}

/// Mode of the univariate canonical law MMN(0, 1, δ*; H), the root of
/// d/dz ln f(z) = (δ* E[U | z] − z) / (1 − δ*²).
pub fn canonical_mode(delta_star: f64, law: MixingLaw) -> Result<f64> {
    if delta_star == 0.0 {
        return Ok(0.0);
    }
    let uni = Mmn::new(MmnParams::new(
        DVector::from_element(1, 0.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, delta_star),
        law,
    )?)?;
    let score = |z: f64| uni.log_pdf_gradient(&DVector::from_element(1, z)).map(|g| g[0]).unwrap_or(f64::NAN);
    let start_hi = delta_star * law.mean() + 3.0;
    let limit_hi = 10f64.max(delta_star * law.mean() + 10.0);
    let (lo, hi) = expand_bracket(score, 0.0, start_hi, -10.0, limit_hi)?;
    secant_bisect(score, lo, hi, 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn row1() -> MmnParams {
        MmnParams::new(dvector![0.0, 0.0], dmatrix![1.0, 1.0; 1.0, 2.5], dvector![0.75, 0.985], MixingLaw::Exponential)
            .unwrap()
    }

    #[test]
    fn validation_examples() {
        assert!(MmnParams::normal(dvector![0.0, 0.0], DMatrix::identity(2, 2)).is_ok());
        let e = MmnParams::new(dvector![0.0, 0.0], DMatrix::identity(2, 2), dvector![1.0, 0.0], MixingLaw::Exponential);
        assert!(matches!(e, Err(MmnError::SkewnessOutOfRange(_))));
        let q = row1().delta_star_sq();
        // direct quadratic form: Ω̄ = [1, r; r, 1], r = 1/√2.5
        let r = 1.0 / 2.5f64.sqrt();
        let (d1, d2) = (0.75, 0.985);
        let direct = (d1 * d1 - 2.0 * r * d1 * d2 + d2 * d2) / (1.0 - r * r);
        assert!((q - direct).abs() < 1e-14 && (q - 0.997).abs() < 5e-4);
        let bad = MmnParams::new(dvector![0.0], dmatrix![-1.0], dvector![0.0], MixingLaw::Exponential);
        assert!(matches!(bad, Err(MmnError::NotPositiveDefinite(_))));
        let mismatch = MmnParams::new(dvector![0.0, 1.0], dmatrix![1.0], dvector![0.0], MixingLaw::Exponential);
        assert!(matches!(mismatch, Err(MmnError::DimensionMismatch(_))));
    }

    #[test]
    fn decomposition_examples() {
        let p = MmnParams::new(dvector![0.0, 0.0], DMatrix::identity(2, 2), dvector![0.5, 0.0], MixingLaw::Exponential)
            .unwrap();
        let d = p.std_decompose().unwrap();
        assert_eq!(d.omega_diag, dvector![1.0, 1.0]);
        assert!((d.sigma_y - dmatrix![0.75, 0.0; 0.0, 1.0]).amax() < 1e-15);
        assert_eq!(d.alpha, dvector![0.5, 0.0]);
        let t2 = MmnParams::new(
            dvector![5.0, 10.0, 15.0],
            DMatrix::from_diagonal(&dvector![0.4, 0.6, 1.0]),
            dvector![0.3, 0.7, 0.4],
            MixingLaw::Exponential,
        )
        .unwrap();
        let w = t2.omega_diag();
        assert!((w - dvector![0.4f64.sqrt(), 0.6f64.sqrt(), 1.0]).amax() < 1e-15);
        assert!((t2.omega_diag()[0] - 0.6325).abs() < 5e-5 && (t2.omega_diag()[1] - 0.7746).abs() < 5e-5);
        let ob = row1().omega_bar();
        assert!((ob[(0, 1)] - 1.0 / 2.5f64.sqrt()).abs() < 1e-15 && (ob[(0, 1)] - 0.6325).abs() < 5e-5);
    }

    #[test]
    fn affine_examples() {
        let p = row1();
        let same = p.affine_transform(&DMatrix::identity(2, 2), &dvector![0.0, 0.0]).unwrap();
        assert!((same.omega_mat - &p.omega_mat).amax() < 1e-15 && (same.delta - &p.delta).amax() < 1e-15);
        let ind = MmnParams::new(dvector![1.5, 0.0], DMatrix::identity(2, 2), dvector![0.5, 0.0], MixingLaw::Exponential)
            .unwrap();
        let m = ind.affine_transform(&dmatrix![1.0; 0.0], &dvector![0.0]).unwrap();
        assert_eq!((m.xi[0], m.omega_mat[(0, 0)], m.delta[0]), (1.5, 1.0, 0.5));
        let s = MmnParams::new(dvector![0.0, 0.0], DMatrix::identity(2, 2), dvector![0.3, 0.6], MixingLaw::Exponential)
            .unwrap();
        let t = s.affine_transform(&dmatrix![1.0, 0.0; 0.0, 2.0], &dvector![0.0, 0.0]).unwrap();
        assert!((t.omega_mat - dmatrix![1.0, 0.0; 0.0, 4.0]).amax() < 1e-15);
        assert!((t.delta - dvector![0.3, 0.6]).amax() < 1e-15);
        let rank1 = p.affine_transform(&dmatrix![1.0, 2.0; 1.0, 2.0], &dvector![0.0, 0.0]);
        assert_eq!(rank1, Err(MmnError::RankDeficient));
    }

    #[test]
    fn convolution_examples() {
        let p = MmnParams::new(dvector![0.0], dmatrix![1.0], dvector![0.5], MixingLaw::Exponential).unwrap();
        let c = p.convolve_with_normal(&dvector![0.0], &dmatrix![1.0]).unwrap();
        assert!((c.omega_mat[(0, 0)] - 2.0).abs() < 1e-15 && (c.delta[0] - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        let tiny = row1().convolve_with_normal(&dvector![0.0, 0.0], &(1e-8 * DMatrix::identity(2, 2))).unwrap();
        assert!((tiny.delta - row1().delta).amax() < 1e-4);
        let n = MmnParams::normal(dvector![0.0], dmatrix![1.0]).unwrap();
        assert_eq!(n.convolve_with_normal(&dvector![1.0], &dmatrix![2.0]).unwrap().delta[0], 0.0);
    }

    #[test]
    fn canonical_examples() {
        let p = MmnParams::new(dvector![0.0, 0.0], DMatrix::identity(2, 2), dvector![0.6, 0.0], MixingLaw::Exponential)
            .unwrap();
        let c = p.canonical_form().unwrap();
        assert!((c.delta_star - 0.6).abs() < 1e-15);
        assert!((c.transform_a.abs() - DMatrix::identity(2, 2)).amax() < 1e-15);
        let c1 = row1().canonical_form().unwrap();
        assert!((c1.delta_star - 0.9985).abs() < 5e-4);
        assert!((4.0 * c1.delta_star.powi(6) - 3.966).abs() < 5e-3);
        let n = MmnParams::normal(dvector![0.0, 0.0], dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap();
        let cn = n.canonical_form().unwrap();
        assert_eq!(cn.delta_star, 0.0);
        let white = &cn.transform_a * &n.omega_mat * cn.transform_a.transpose();
        assert!((white - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn canonical_invariants_trivariate() {
        let p = MmnParams::new(
            dvector![1.0, -2.0, 0.5],
            dmatrix![1.0, 1.0, 1.0; 1.0, 2.5, 1.0; 1.0, 1.0, 10.0],
            dvector![0.55, 0.05, -0.30],
            MixingLaw::Exponential,
        )
        .unwrap();
        let c = p.canonical_form().unwrap();
        let id = &c.transform_a * &p.omega_mat * c.transform_a.transpose();
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-10);
        let img = &c.transform_a * p.alpha();
        assert!((img[0] - c.delta_star).abs() < 1e-10 && img[1].abs() < 1e-10 && img[2].abs() < 1e-10);
        assert!((&c.transform_a * &c.inverse_transform - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn mode_examples() {
        let n = MmnParams::normal(dvector![1.0, 2.0], DMatrix::identity(2, 2)).unwrap();
        assert_eq!(n.mode().unwrap(), dvector![1.0, 2.0]);
        let u = MmnParams::new(dvector![0.0], dmatrix![1.0], dvector![0.5], MixingLaw::Exponential).unwrap();
        let m = u.mode().unwrap()[0];
        let dist = Mmn::new(u.clone()).unwrap();
        let g = dist.log_pdf_gradient(&dvector![m]).unwrap()[0];
        assert!(g.abs() < 1e-8, "gradient {g}");
        // dense grid argmax of the closed-form density
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=20_000 {
            let z = -2.0 + 4.0 * i as f64 / 20_000.0;
            let v = dist.log_pdf_closed(&dvector![z]).unwrap();
            if v > best {
                best = v;
                arg = z;
            }
        }
        assert!((arg - m).abs() <= 2e-4);
    }
}
