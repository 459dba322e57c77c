//! Kronecker-layout tensor moments of orders one to four.
//!
//! Layouts: M₁ is p×1, M₂ = E(YYᵀ) is p×p, M₃ = E((Y⊗Y)Yᵀ) is p²×p with
//! entry [(i·p + j), k] = E(YᵢYⱼY_k), and M₄ = E(YYᵀ ⊗ YYᵀ) is p²×p² with
//! entry [(i·p + k), (j·p + l)] = E(YᵢYⱼY_kY_l).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{MmnError, Result};
use crate::mixing::MixingLaw;
use crate::params::MmnParams;

/// Largest dimension accepted by [`commutation`].
pub const MAX_COMMUTATION_DIM: usize = 12;

/// First four tensor moments, raw or central.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub m1: DVector<f64>,
    pub m2: DMatrix<f64>,
    pub m3: DMatrix<f64>,
    pub m4: DMatrix<f64>,
    pub central: bool,
    /// E(Y), kept for central sets where m1 is zero.
    pub mean: DVector<f64>,
}

impl MomentSet {
    pub fn dim(&self) -> usize {
        self.m1.len()
    }

    /// var(Y) = M₂ − M₁M₁ᵀ for raw sets and M₂ for central ones.
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.central {
            self.m2.clone()
        } else {
            &self.m2 - &self.m1 * self.m1.transpose()
        }
    }
}

/// A ⊗ B.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-stacking vec(A).
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Commutation matrix U_{p,p} with U vec(A) = vec(Aᵀ) for p×p A.
pub fn commutation(p: usize) -> Result<DMatrix<f64>> {
    if p == 0 || p > MAX_COMMUTATION_DIM {
        return Err(MmnError::DimensionMismatch(format!(
            "commutation matrix supports 1 <= p <= {MAX_COMMUTATION_DIM}, got {p}"
        )));
    }
    let mut u = DMatrix::zeros(p * p, p * p);
    for i in 0..p {
        for j in 0..p {
            u[(j * p + i, i * p + j)] = 1.0;
        }
    }
    Ok(u)
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

fn k3(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b).kronecker(c)
}

/// Moments of the normalized X ~ MMN(0, Ω̄, δ; H) with Σ_X = Ω̄ − δδᵀ.
pub fn moments_x(omega_bar: &DMatrix<f64>, delta: &DVector<f64>, law: MixingLaw) -> Result<MomentSet> {
    let p = delta.len();
    if omega_bar.nrows() != p || omega_bar.ncols() != p {
        return Err(MmnError::DimensionMismatch(format!("Omega_bar must be {p}x{p}")));
    }
    law.validate()?;
    let chol = Cholesky::new(omega_bar.clone())
        .ok_or_else(|| MmnError::NotPositiveDefinite("Omega_bar".into()))?;
    let q = delta.dot(&chol.solve(delta));
    if !(q < 1.0) {
        return Err(MmnError::SkewnessOutOfRange(q));
    }
    let e = law.raw_moments();
    let sx = omega_bar - delta * delta.transpose();
    let d = col(delta);
    let dt = row(delta);
    let vs = col(&vec(&sx));
    let ip = DMatrix::identity(p, p);
    let i_d = kron(&ip, &d);
    let m1 = delta * e[1];
    let m2 = &sx + e[2] * &d * &dt;
    let m3 = e[1] * (kron(&d, &sx) + &vs * &dt + &i_d * &sx) + e[3] * &i_d * kron(&d, &dt);
    let u = commutation(p)?;
    let ipp = DMatrix::identity(p * p, p * p);
    let m4 = (&ipp + &u) * kron(&sx, &sx)
        + &vs * vs.transpose()
        + e[2]
            * (k3(&d, &dt, &sx)
                + k3(&d, &sx, &dt)
                + k3(&sx, &d, &dt)
                + k3(&dt, &sx, &d)
                + k3(&dt, &vs, &dt)
                + kron(&d, &d) * vs.transpose())
        + e[4] * kron(&(&d * &dt), &(&d * &dt));
    Ok(MomentSet { mean: m1.clone(), m1, m2, m3, m4, central: false })
}

/// Raw moments of Y = ξ + ωX from those of X.
pub fn moments_y(params: &MmnParams) -> Result<MomentSet> {
    params.validate()?;
    let x = moments_x(&params.omega_bar(), &params.delta, params.law)?;
    let w = DMatrix::from_diagonal(&params.omega_diag());
    let ww = kron(&w, &w);
    let xi = col(&params.xi);
    let xit = xi.transpose();
    let xx = &xi * &xit;
    let m1x = &w * col(&x.m1);
    let m1xt = m1x.transpose();
    let s2 = &w * &x.m2 * &w;
    let v2 = &ww * col(&vec(&x.m2));
    let s3 = &ww * &x.m3 * &w;
    let s3t = s3.transpose();

    let m1 = &params.xi + &w * &x.m1;
    let m2 = &xx + &xi * &m1xt + &m1x * &xit + &s2;
    let m3 = kron(&xx, &xi)
        + kron(&xx, &m1x)
        + kron(&(&xi * &m1xt), &xi)
        + kron(&m1x, &xx)
        + kron(&s2, &xi)
        + kron(&xi, &s2)
        + kron(&v2, &xit)
        + &s3;
    let m4 = kron(&xx, &xx)
        + kron(&xx, &(&xi * &m1xt))
        + kron(&xx, &(&m1x * &xit))
        + kron(&xx, &s2)
        + kron(&(&xi * &m1xt), &xx)
        + kron(&xi, &xi) * v2.transpose()
        + k3(&xi, &s2, &xit)
        + kron(&xi, &s3t)
        + kron(&(&m1x * &xit), &xx)
        + k3(&xit, &s2, &xi)
        + k3(&xit, &v2, &xit)
        + kron(&xit, &s3)
        + kron(&s2, &xx)
        + kron(&s3t, &xi)
        + kron(&s3, &xit)
        + &ww * &x.m4 * &ww;
    Ok(MomentSet { mean: m1.clone(), m1, m2, m3, m4, central: false })
}

/// Raw moments of an MMNE law from the exponential-specific closed forms,
/// written in terms of Σ_Y and α = ωδ. Independent of [`moments_y`].
pub fn moments_y_mmne(params: &MmnParams) -> Result<MomentSet> {
    params.validate()?;
    if params.law.normalized() != MixingLaw::Exponential {
        return Err(MmnError::UnsupportedLaw(params.law.name()));
    }
    let p = params.dim();
    let sy = params.sigma_y();
    let alpha = params.alpha();
    let a = col(&alpha);
    let at = a.transpose();
    let aa = &a * &at;
    let w = DMatrix::from_diagonal(&params.omega_diag());
    let ww = kron(&w, &w);
    let xi = col(&params.xi);
    let xit = xi.transpose();
    let xx = &xi * &xit;
    let s = &sy + 2.0 * &aa;
    let vs = col(&vec(&s));
    let ip = DMatrix::identity(p, p);

    let sx = params.omega_bar() - &params.delta * params.delta.transpose();
    let d = col(&params.delta);
    let dt = d.transpose();
    let vsx = col(&vec(&sx));
    let i_d = kron(&ip, &d);
    let m3x = kron(&d, &sx) + &vsx * &dt + &i_d * &sx + 6.0 * &i_d * kron(&d, &dt);
    let u = commutation(p)?;
    let ipp = DMatrix::identity(p * p, p * p);
    let m4x = (&ipp + &u) * kron(&sx, &sx)
        + &vsx * vsx.transpose()
        + 2.0
            * (k3(&d, &dt, &sx)
                + k3(&d, &sx, &dt)
                + k3(&sx, &d, &dt)
                + k3(&dt, &sx, &d)
                + k3(&dt, &vsx, &dt)
                + kron(&d, &d) * vsx.transpose())
        + 24.0 * kron(&(&d * &dt), &(&d * &dt));
    let s3 = &ww * &m3x * &w;
    let s3t = s3.transpose();

    let m1 = &params.xi + &alpha;
    let m2 = &xx + &xi * &at + &a * &xit + &s;
    let m3 = kron(&xx, &xi)
        + kron(&xx, &a)
        + kron(&(&xi * &at), &xi)
        + kron(&a, &xx)
        + kron(&s, &xi)
        + kron(&xi, &s)
        + kron(&vs, &xit)
        + kron(&a, &sy)
        + col(&vec(&sy)) * &at
        + kron(&ip, &a) * (&sy + 6.0 * &aa);
    let m4 = kron(&xx, &xx)
        + kron(&xx, &(&xi * &at))
        + kron(&xx, &(&a * &xit))
        + kron(&(&xi * &at), &xx)
        + kron(&xx, &s)
        + kron(&xi, &xi) * vs.transpose()
        + k3(&xi, &s, &xit)
        + kron(&xi, &s3t)
        + kron(&(&a * &xit), &xx)
        + k3(&xit, &s, &xi)
        + k3(&xit, &vs, &xit)
        + kron(&xit, &s3)
        + kron(&s, &xx)
        + kron(&s3t, &xi)
        + kron(&s3, &xit)
        + &ww * m4x * &ww;
    Ok(MomentSet { mean: m1.clone(), m1, m2, m3, m4, central: false })
}

/// Central moments from raw ones.
pub fn central_from_raw(ms: &MomentSet) -> Result<MomentSet> {
    if ms.central {
        return Err(MmnError::FlagMismatch);
    }
    let m = col(&ms.m1);
    let mt = m.transpose();
    let mm = &m * &mt;
    let m2 = &ms.m2;
    let m3 = &ms.m3;
    let m3t = m3.transpose();
    let v2 = col(&vec(m2));
    let c2 = m2 - &mm;
    let c3 = m3 - kron(m2, &m) - kron(&m, m2) - &v2 * &mt + 2.0 * kron(&mm, &m);
    let c4 = &ms.m4 - kron(&m3t, &m) - kron(m3, &mt) - kron(&m, &m3t) - kron(&mt, m3)
        + kron(m2, &mm)
        + kron(&m, &m) * v2.transpose()
        + k3(&m, m2, &mt)
        + k3(&mt, m2, &m)
        + k3(&mt, &v2, &mt)
        + kron(&mm, m2)
        - 3.0 * kron(&mm, &mm);
    Ok(MomentSet {
        m1: DVector::zeros(ms.dim()),
        m2: c2,
        m3: c3,
        m4: c4,
        central: true,
        mean: ms.m1.clone(),
    })
}

/// Moments of AY for an h×p matrix A.
pub fn transport_affine(ms: &MomentSet, a: &DMatrix<f64>) -> Result<MomentSet> {
    if a.ncols() != ms.dim() {
        return Err(MmnError::DimensionMismatch(format!("A has {} columns, moments have dimension {}", a.ncols(), ms.dim())));
    }
    let aa = kron(a, a);
    Ok(MomentSet {
        m1: a * &ms.m1,
        m2: a * &ms.m2 * a.transpose(),
        m3: &aa * &ms.m3 * a.transpose(),
        m4: &aa * &ms.m4 * aa.transpose(),
        central: ms.central,
        mean: a * &ms.mean,
    })
}

/// Third central moment of AᵀY (h² × h) from the raw moments of Y and a
/// p×h matrix A.
pub fn third_central_projected(raw: &MomentSet, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if raw.central {
        return Err(MmnError::FlagMismatch);
    }
    if a.nrows() != raw.dim() {
        return Err(MmnError::DimensionMismatch(format!("A has {} rows, moments have dimension {}", a.nrows(), raw.dim())));
    }
    let at = a.transpose();
    let b = &at * &raw.m2 * a;
    let e = &at * col(&raw.m1);
    let et_a = row(&raw.m1) * a;
    Ok(kron(&at, &at) * &raw.m3 * a - kron(&b, &e) - kron(&e, &b) - col(&vec(&b)) * et_a
        + 2.0 * kron(&(&e * e.transpose()), &e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn kronecker_helpers() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kron(&i2, &i2), DMatrix::identity(4, 4));
        let a = dmatrix![1.0, 2.0; 3.0, 4.0];
        let u = commutation(2).unwrap();
        assert_eq!(&u * vec(&a), vec(&dmatrix![1.0, 3.0; 2.0, 4.0]));
        assert_eq!(vec(&DMatrix::from_element(2, 2, 1.0)), dvector![1.0, 1.0, 1.0, 1.0]);
        assert!(commutation(13).is_err());
    }

    #[test]
    fn gaussian_moments_of_x() {
        let ob = dmatrix![1.0, 0.3; 0.3, 1.0];
        let x = moments_x(&ob, &dvector![0.0, 0.0], MixingLaw::Exponential).unwrap();
        assert_eq!(x.m1, dvector![0.0, 0.0]);
        assert_eq!(x.m2, ob);
        assert!(x.m3.amax() == 0.0);
        let u = commutation(2).unwrap();
        let v = col(&vec(&ob));
        let expect = (DMatrix::identity(4, 4) + u) * kron(&ob, &ob) + &v * v.transpose();
        assert!((x.m4 - expect).amax() < 1e-15);
    }

    #[test]
    fn scalar_examples() {
        let x = moments_x(&dmatrix![1.0], &dvector![0.5], MixingLaw::Exponential).unwrap();
        assert!((x.m3[(0, 0)] - 1.875).abs() < 1e-14);
        let p = MmnParams::new(dvector![0.0], dmatrix![1.0], dvector![0.5], MixingLaw::Exponential).unwrap();
        let c = central_from_raw(&moments_y(&p).unwrap()).unwrap();
        assert!((c.m3[(0, 0)] - 0.25).abs() < 1e-14);
        assert!(central_from_raw(&c).is_err());
        let n = MmnParams::normal(dvector![0.7], dmatrix![1.0]).unwrap();
        let cn = central_from_raw(&moments_y(&n).unwrap()).unwrap();
        assert!(cn.m3[(0, 0)].abs() < 1e-14 && (cn.m4[(0, 0)] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn mmne_mean_and_variance() {
        let p = MmnParams::new(
            dvector![5.0, 10.0, 15.0],
            DMatrix::from_diagonal(&dvector![0.4, 0.6, 1.0]),
            dvector![0.3, 0.7, 0.4],
            MixingLaw::Exponential,
        )
        .unwrap();
        let m = moments_y(&p).unwrap();
        let expect = dvector![5.0 + 0.4f64.sqrt() * 0.3, 10.0 + 0.6f64.sqrt() * 0.7, 15.0 + 0.4];
        assert!((&m.m1 - expect).amax() < 1e-14);
        assert!((m.covariance() - &p.omega_mat).amax() < 1e-13);
    }

    #[test]
    fn two_paths_agree() {
        let p = MmnParams::new(
            dvector![1.0, -2.0],
            dmatrix![1.0, 1.0; 1.0, 2.5],
            dvector![0.75, 0.985],
            MixingLaw::Exponential,
        )
        .unwrap();
        let a = moments_y(&p).unwrap();
        let b = moments_y_mmne(&p).unwrap();
        for (x, y) in [(&a.m2, &b.m2), (&a.m3, &b.m3), (&a.m4, &b.m4)] {
            assert!((x - y).amax() < 1e-10 * x.amax());
        }
    }

    #[test]
    fn projected_third_moment_matches_central() {
        let p = MmnParams::new(
            dvector![0.5, 1.0, -1.0],
            dmatrix![2.0, 0.3, 0.1; 0.3, 1.0, -0.2; 0.1, -0.2, 1.5],
            dvector![0.5, -0.3, 0.6],
            MixingLaw::Gamma { nu: 2.0 },
        )
        .unwrap();
        let raw = moments_y(&p).unwrap();
        let c = central_from_raw(&raw).unwrap();
        let t = third_central_projected(&raw, &DMatrix::identity(3, 3)).unwrap();
        assert!((t - &c.m3).amax() < 1e-10 * c.m3.amax().max(1.0));
        let same = transport_affine(&raw, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(same, raw);
    }
}
