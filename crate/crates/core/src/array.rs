//! Complex array algebra for a uniform linear array in the normalized angle
//! domain `u = sin(theta) / sin(theta_max)`.
//!
//! Lag vectors come in two flavours. A complex `M`-vector `c` with a real
//! zero-lag entry is the first column of a Hermitian Toeplitz matrix. Its
//! realified form is the real `(2M-1)`-vector
//!
//! ```text
//! [c_0, Re c_1, ..., Re c_{M-1}, Im c_1, ..., Im c_{M-1}]
//! ```
//!
//! and the two are related by [`realify`] / [`complex_embed`]. The real inner
//! product of realified vectors equals `Re(c^H d)`, which is what makes
//! `v^H T(f) v = <autocorr(v), realify(f)>` hold.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;
pub type RVector = DVector<f64>;
pub type RMatrix = DMatrix<f64>;

/// Largest imaginary part tolerated on a zero-lag entry before it is rejected.
pub const ZERO_LAG_IMAG_TOL: f64 = 1e-12;

/// Array response `a(u)` with entries `exp(j k pi u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    u: f64,
    entries: CVector,
}

impl SteeringVector {
    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn entries(&self) -> &CVector {
        &self.entries
    }

    pub fn into_entries(self) -> CVector {
        self.entries
    }

    /// Unit-norm copy, `a(u) / sqrt(M)`.
    pub fn normalized(&self) -> CVector {
        let scale = 1.0 / (self.entries.len() as f64).sqrt();
        self.entries.map(|z| z * scale)
    }
}

pub fn steering(u: f64, m: usize) -> Result<SteeringVector> {
    if m == 0 {
        return Err(Error::EmptyArray);
    }
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::AngleOutOfRange(u));
    }
    Ok(SteeringVector {
        u,
        entries: steering_entries(u, m),
    })
}

/// Unchecked `a(u)`; callers guarantee `m >= 1`. Any real `u` is accepted,
/// which the Fourier and trigonometric-polynomial code relies on.
pub(crate) fn steering_entries(u: f64, m: usize) -> CVector {
    CVector::from_fn(m, |k, _| Complex64::cis(k as f64 * PI * u))
}

/// Realified autocorrelation of a beam (or any feasible design point).
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrVec(RVector);

impl AutocorrVec {
    pub fn new(entries: RVector) -> Result<Self> {
        if entries.is_empty() || entries.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "autocorrelation vectors have odd length 2M-1, got {}",
                entries.len()
            )));
        }
        Ok(AutocorrVec(entries))
    }

    /// `e_1`: the autocorrelation of the first standard basis vector.
    pub fn unit_zero_lag(m: usize) -> Self {
        let mut r = RVector::zeros(2 * m - 1);
        r[0] = 1.0;
        AutocorrVec(r)
    }

    pub fn m(&self) -> usize {
        self.0.len().div_ceil(2)
    }

    pub fn zero_lag(&self) -> f64 {
        self.0[0]
    }

    /// Complex lag `k` of the embedded vector.
    pub fn lag(&self, k: usize) -> Complex64 {
        let m = self.m();
        if k == 0 {
            Complex64::new(self.0[0], 0.0)
        } else {
            Complex64::new(self.0[k], self.0[m - 1 + k])
        }
    }

    pub fn as_vector(&self) -> &RVector {
        &self.0
    }

    pub fn into_vector(self) -> RVector {
        self.0
    }

    pub fn to_complex(&self) -> CVector {
        embed_unchecked(&self.0)
    }

    /// `<r, realify(a(u))> = r_0 + sum_k r_k cos(k pi u) + r_{M-1+k} sin(k pi u)`,
    /// which equals `|v^H a(u)|^2` when `r = autocorr(v)`.
    pub fn trig_poly(&self, u: f64) -> f64 {
        trig_poly(&self.0, u)
    }
}

pub(crate) fn trig_poly(r: &RVector, u: f64) -> f64 {
    let m = r.len().div_ceil(2);
    let step = Complex64::cis(PI * u);
    let mut phase = Complex64::new(1.0, 0.0);
    let mut acc = r[0];
    for k in 1..m {
        phase *= step;
        acc += r[k] * phase.re + r[m - 1 + k] * phase.im;
    }
    acc
}

/// First column of a Hermitian Toeplitz covariance, i.e. the Fourier
/// coefficients of an angular power density.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzParam(CVector);

impl ToeplitzParam {
    pub fn new(mut f: CVector) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::EmptyArray);
        }
        if f[0].im.abs() > ZERO_LAG_IMAG_TOL {
            return Err(Error::ComplexZeroLag(f[0].im));
        }
        f[0].im = 0.0;
        Ok(ToeplitzParam(f))
    }

    pub fn zeros(m: usize) -> Self {
        ToeplitzParam(CVector::zeros(m))
    }

    /// `(1, 0, ..., 0)`, whose Toeplitz matrix is the identity.
    pub fn unit(m: usize) -> Self {
        let mut f = CVector::zeros(m);
        f[0] = Complex64::new(1.0, 0.0);
        ToeplitzParam(f)
    }

    pub fn from_realified(r: &RVector) -> Result<Self> {
        complex_embed(r).map(ToeplitzParam)
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    /// Zero-lag entry: total signal power.
    pub fn power(&self) -> f64 {
        self.0[0].re
    }

    pub fn coeffs(&self) -> &CVector {
        &self.0
    }

    pub fn realify(&self) -> RVector {
        realify_unchecked(&self.0)
    }

    pub fn toeplitz(&self) -> CMatrix {
        hermitian_toeplitz(&self.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        ToeplitzParam(self.0.map(|z| z * s))
    }
}

/// Autocorrelation `a_v` with `[a_v]_0 = |v|^2` and
/// `[a_v]_k = 2 sum_i v_{i+k} conj(v_i)`, returned in realified form.
pub fn autocorr(v: &CVector) -> AutocorrVec {
    let m = v.len();
    assert!(m > 0, "autocorrelation of an empty vector");
    let mut r = RVector::zeros(2 * m - 1);
    r[0] = v.norm_squared();
    for k in 1..m {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m - k {
            acc += v[i + k] * v[i].conj();
        }
        r[k] = 2.0 * acc.re;
        r[m - 1 + k] = 2.0 * acc.im;
    }
    AutocorrVec(r)
}

pub fn complex_embed(r: &RVector) -> Result<CVector> {
    if r.is_empty() || r.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "realified vectors have odd length 2M-1, got {}",
            r.len()
        )));
    }
    Ok(embed_unchecked(r))
}

fn embed_unchecked(r: &RVector) -> CVector {
    let m = r.len().div_ceil(2);
    CVector::from_fn(m, |k, _| {
        if k == 0 {
            Complex64::new(r[0], 0.0)
        } else {
            Complex64::new(r[k], r[m - 1 + k])
        }
    })
}

pub fn realify(c: &CVector) -> Result<RVector> {
    if c.is_empty() {
        return Err(Error::EmptyArray);
    }
    if c[0].im.abs() > ZERO_LAG_IMAG_TOL {
        return Err(Error::ComplexZeroLag(c[0].im));
    }
    Ok(realify_unchecked(c))
}

fn realify_unchecked(c: &CVector) -> RVector {
    let m = c.len();
    RVector::from_fn(2 * m - 1, |i, _| {
        if i == 0 {
            c[0].re
        } else if i < m {
            c[i].re
        } else {
            c[i - m + 1].im
        }
    })
}

/// Hermitian Toeplitz matrix with `[T]_{r,c} = f_{r-c}` for `r >= c`.
pub fn toeplitz(f: &ToeplitzParam) -> CMatrix {
    f.toeplitz()
}

/// Hermitian Toeplitz matrix from an arbitrary first column; the imaginary
/// part of the zero lag is ignored.
pub fn hermitian_toeplitz(col: &CVector) -> CMatrix {
    let m = col.len();
    CMatrix::from_fn(m, m, |r, c| {
        if r > c {
            col[r - c]
        } else if r < c {
            col[c - r].conj()
        } else {
            Complex64::new(col[0].re, 0.0)
        }
    })
}

/// Hermitian `T` with `v^H T v = <w, autocorr(v)>` for every `v`.
///
/// This is `T(complex_embed(w))`: the factor of two in the autocorrelation
/// lags is exactly what makes the off-diagonals appear once on each side.
pub fn quadratic_form_matrix(w: &RVector) -> CMatrix {
    hermitian_toeplitz(&embed_unchecked(w))
}

/// `v^H A v` for Hermitian `A` (imaginary rounding dropped).
pub fn hermitian_form(a: &CMatrix, v: &CVector) -> f64 {
    v.dotc(&(a * v)).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_cvector(rng: &mut ChaCha8Rng, m: usize) -> CVector {
        CVector::from_fn(m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn steering_examples() {
        let a = steering(0.0, 4).unwrap();
        assert!(a.entries().iter().all(|&z| z == c(1.0, 0.0)));

        let a = steering(1.0, 2).unwrap();
        assert_eq!(a.entries()[0], c(1.0, 0.0));
        assert!((a.entries()[1] - c(-1.0, 0.0)).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let u = rng.random_range(-1.0..=1.0);
            let a = steering(u, 17).unwrap();
            assert!((a.entries().norm_squared() - 17.0).abs() < 1e-12);
        }
    }

    #[test]
    fn steering_rejects_bad_input() {
        assert!(matches!(steering(1.0001, 4), Err(Error::AngleOutOfRange(_))));
        assert!(matches!(steering(f64::NAN, 4), Err(Error::AngleOutOfRange(_))));
        assert!(matches!(steering(0.2, 0), Err(Error::EmptyArray)));
    }

    #[test]
    fn autocorr_examples() {
        let mut e1 = CVector::zeros(5);
        e1[0] = c(1.0, 0.0);
        let r = autocorr(&e1);
        assert_eq!(r.as_vector(), &RVector::from_fn(9, |i, _| if i == 0 { 1.0 } else { 0.0 }));

        let s = 1.0 / 2f64.sqrt();
        let r = autocorr(&CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]));
        let expect = [1.0, 1.0, 0.0];
        for (a, b) in r.as_vector().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn embed_examples() {
        let r = RVector::from_vec(vec![1.0, 2.0, 3.0]);
        let cv = complex_embed(&r).unwrap();
        assert_eq!(cv.as_slice(), &[c(1.0, 0.0), c(2.0, 3.0)]);
        assert_eq!(realify(&cv).unwrap(), r);

        let z = complex_embed(&RVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(z.as_slice(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn embed_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..1000 {
            let m = 1 + i % 9;
            let r = RVector::from_fn(2 * m - 1, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let back = realify(&complex_embed(&r).unwrap()).unwrap();
            assert!((back - &r).amax() < 1e-14);
        }
    }

    #[test]
    fn realify_rejects_complex_zero_lag() {
        let v = CVector::from_vec(vec![c(1.0, 1e-9), c(0.5, 0.0)]);
        assert!(matches!(realify(&v), Err(Error::ComplexZeroLag(_))));
        let ok = CVector::from_vec(vec![c(1.0, 1e-13), c(0.5, 0.0)]);
        assert!(realify(&ok).is_ok());
        assert!(complex_embed(&RVector::zeros(4)).is_err());
    }

    #[test]
    fn toeplitz_examples() {
        let t = toeplitz(&ToeplitzParam::unit(4));
        assert_eq!(t, CMatrix::identity(4, 4));

        let f = ToeplitzParam::new(CVector::from_vec(vec![c(1.0, 0.0), c(0.5, 0.0)])).unwrap();
        let t = toeplitz(&f);
        let expect = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(1.0, 0.0)]);
        assert_eq!(t, expect);
    }

    #[test]
    fn toeplitz_is_hermitian_with_first_column_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut f = random_cvector(&mut rng, 7);
            f[0].im = 0.0;
            let t = toeplitz(&ToeplitzParam::new(f.clone()).unwrap());
            assert_eq!((&t - t.adjoint()).camax(), 0.0);
            assert_eq!(t.column(0).into_owned(), f);
        }
    }

    #[test]
    fn trig_poly_is_beam_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = random_cvector(&mut rng, 6);
        let r = autocorr(&v);
        for i in 0..1024 {
            let u = -1.0 + 2.0 * i as f64 / 1024.0;
            let gain = v.dotc(&steering_entries(u, 6)).norm_sqr();
            let p = r.trig_poly(u);
            assert!(p >= -1e-12);
            assert!((p - gain).abs() < 1e-12 * (1.0 + gain));
        }
    }

    #[test]
    fn quadratic_form_matrix_matches_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = RVector::from_fn(9, |_, _| rng.random::<f64>() - 0.5);
        let q = quadratic_form_matrix(&w);
        for _ in 0..10 {
            let v = random_cvector(&mut rng, 5);
            let lhs = hermitian_form(&q, &v);
            let rhs = w.dot(autocorr(&v).as_vector());
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
