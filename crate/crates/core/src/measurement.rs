//! Single-RF-chain noncoherent power measurements `r = |v^H y|^2`.
//!
//! With `y ~ CN(0, C)` the projection `v^H y` is circular Gaussian, so `r` is
//! exponential with mean `mu(v) = noise_var + v^H T(f) v` and variance
//! `mu(v)^2`. The training symbol is fixed to 1.

use crate::array::{autocorr, AutocorrVec, CVector, ToeplitzParam};
use crate::error::{Error, Result};

/// Largest deviation of `|v|` from 1 that is silently renormalized.
pub const BEAM_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub beam_autocorr: AutocorrVec,
    pub value: f64,
    pub snapshot_index: usize,
}

impl MeasurementRecord {
    pub fn new(beam: &CVector, value: f64, snapshot_index: usize) -> Result<Self> {
        let v = normalize_beam(beam)?;
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "measurement value must be nonnegative, got {value}"
            )));
        }
        Ok(MeasurementRecord {
            beam_autocorr: autocorr(&v),
            value,
            snapshot_index,
        })
    }
}

/// Rescales `v` to unit norm, failing if it was off by more than [`BEAM_NORM_TOL`].
pub fn normalize_beam(v: &CVector) -> Result<CVector> {
    let n = v.norm();
    if !((n - 1.0).abs() <= BEAM_NORM_TOL) {
        return Err(Error::NonUnitBeam(n));
    }
    Ok(v.unscale(n))
}

/// `mu(v) = noise_var + <autocorr(v), realify(f)>`. The measurement variance is `mu(v)^2`.
pub fn mean_power(v: &CVector, f: &ToeplitzParam, noise_var: f64) -> Result<f64> {
    if v.len() != f.m() {
        return Err(Error::DimensionMismatch { expected: f.m(), got: v.len() });
    }
    let v = normalize_beam(v)?;
    Ok(noise_var + autocorr(&v).as_vector().dot(&f.realify()))
}

/// Mean from a precomputed beam autocorrelation.
pub fn mean_from_autocorr(r: &AutocorrVec, f_realified: &crate::array::RVector, noise_var: f64) -> f64 {
    noise_var + r.as_vector().dot(f_realified)
}

/// `|v^H y|^2`.
pub fn take_measurement(v: &CVector, y: &CVector) -> Result<f64> {
    if v.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: v.len(), got: y.len() });
    }
    let v = normalize_beam(v)?;
    Ok(v.dotc(y).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{hermitian_form, CMatrix};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, m: usize) -> CVector {
        let v = CVector::from_fn(m, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        v.normalize()
    }

    #[test]
    fn noise_only_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_unit(&mut rng, 6);
        assert!((mean_power(&v, &ToeplitzParam::zeros(6), 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!((mean_power(&v, &ToeplitzParam::unit(6), 0.3).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn mean_matches_dense_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let g = random_unit(&mut rng, 7);
            let mut f = g.clone() * Complex64::new(2.0, 0.0);
            f[0] = Complex64::new(3.0, 0.0);
            let f = ToeplitzParam::new(f).unwrap();
            let v = random_unit(&mut rng, 7);
            let dense = 0.5 + hermitian_form(&f.toeplitz(), &v);
            assert!((mean_power(&v, &f, 0.5).unwrap() - dense).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_unit_beams() {
        let v = CVector::from_element(4, Complex64::new(1.0, 0.0));
        assert!(matches!(mean_power(&v, &ToeplitzParam::zeros(4), 1.0), Err(Error::NonUnitBeam(_))));
        let nearly = v.normalize() * Complex64::new(1.0 + 5e-7, 0.0);
        assert!(take_measurement(&nearly, &CMatrix::identity(4, 4).column(0).into_owned()).is_ok());
    }

    #[test]
    fn measurement_edge_cases() {
        let mut v = CVector::zeros(3);
        v[0] = Complex64::new(1.0, 0.0);
        let mut y = CVector::zeros(3);
        y[1] = Complex64::new(2.0, -1.0);
        assert_eq!(take_measurement(&v, &y).unwrap(), 0.0);

        let y = CVector::from_vec(vec![
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.0, 3.0),
        ]);
        let aligned = y.normalize();
        assert!((take_measurement(&aligned, &y).unwrap() - y.norm_squared()).abs() < 1e-12);
    }
}
