//! Ground-truth channel covariance from an angular power scenario and i.i.d.
//! array snapshots drawn from it.

use std::f64::consts::PI;

use nalgebra::{Cholesky, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{CMatrix, CVector, ToeplitzParam};
use crate::error::{Error, Result};

/// Uniform power level over a range of arrival angles, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngularSegment {
    pub theta_lo_deg: f64,
    pub theta_hi_deg: f64,
    pub level: f64,
}

/// Discrete path with complex Gaussian gain of the given variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointScatterer {
    pub theta_deg: f64,
    pub variance: f64,
}

fn default_theta_max() -> f64 {
    90.0
}

fn default_noise_var() -> f64 {
    1.0
}

/// Scenario file contents. When `snr_db` is present, segment levels and
/// scatterer variances are rescaled together so that `f_0 / noise_var`
/// equals `10^(snr_db / 10)` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "default_theta_max")]
    pub theta_max_deg: f64,
    #[serde(default)]
    pub segments: Vec<AngularSegment>,
    #[serde(default)]
    pub point_masses: Vec<PointScatterer>,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    /// The simulation setup with two 2-degree clusters at `[-50,-48]` and `[10,12]` degrees.
    pub fn two_cluster(m: usize, snr_db: f64) -> Self {
        ScenarioConfig {
            m,
            theta_max_deg: 90.0,
            segments: vec![
                AngularSegment { theta_lo_deg: -50.0, theta_hi_deg: -48.0, level: 1.0 },
                AngularSegment { theta_lo_deg: 10.0, theta_hi_deg: 12.0, level: 1.0 },
            ],
            point_masses: Vec::new(),
            snr_db: Some(snr_db),
            noise_var: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("M", "must be a positive integer"));
        }
        if !(self.theta_max_deg > 0.0 && self.theta_max_deg <= 90.0) {
            return Err(Error::config("theta_max_deg", "must lie in (0, 90]"));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::config("noise_var", "must be positive and finite"));
        }
        let tm = self.theta_max_deg;
        let in_range = |t: f64| t.is_finite() && t >= -tm && t <= tm;
        for (i, s) in self.segments.iter().enumerate() {
            if !in_range(s.theta_lo_deg) || !in_range(s.theta_hi_deg) {
                return Err(Error::config(
                    format!("segments[{i}]"),
                    format!("angles must lie within [-{tm}, {tm}] degrees"),
                ));
            }
            if s.theta_lo_deg >= s.theta_hi_deg {
                return Err(Error::config(
                    format!("segments[{i}]"),
                    "theta_lo_deg must be below theta_hi_deg",
                ));
            }
            if !(s.level >= 0.0 && s.level.is_finite()) {
                return Err(Error::config(format!("segments[{i}].level"), "must be nonnegative"));
            }
        }
        for (i, p) in self.point_masses.iter().enumerate() {
            if !in_range(p.theta_deg) {
                return Err(Error::config(
                    format!("point_masses[{i}].theta_deg"),
                    format!("must lie within [-{tm}, {tm}] degrees"),
                ));
            }
            if !(p.variance >= 0.0 && p.variance.is_finite()) {
                return Err(Error::config(
                    format!("point_masses[{i}].variance"),
                    "must be nonnegative",
                ));
            }
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::config("snr_db", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn angle_to_u(&self, theta_deg: f64) -> f64 {
        (theta_deg.to_radians().sin() / self.theta_max_deg.to_radians().sin()).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct USegment {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UPoint {
    pub u: f64,
    pub power: f64,
}

/// Angular power measure on `u in [-1, 1]`: piecewise-uniform segments plus
/// point masses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PowerDensity {
    pub segments: Vec<USegment>,
    pub points: Vec<UPoint>,
}

impl PowerDensity {
    pub fn total_power(&self) -> f64 {
        self.segments.iter().map(|s| s.level * (s.hi - s.lo)).sum::<f64>()
            + self.points.iter().map(|p| p.power).sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> Self {
        PowerDensity {
            segments: self
                .segments
                .iter()
                .map(|g| USegment { level: g.level * s, ..*g })
                .collect(),
            points: self.points.iter().map(|p| UPoint { power: p.power * s, ..*p }).collect(),
        }
    }

    /// Density value at `u`, ignoring point masses.
    pub fn level_at(&self, u: f64) -> f64 {
        self.segments
            .iter()
            .filter(|s| u >= s.lo && u < s.hi)
            .map(|s| s.level)
            .sum()
    }
}

pub fn scenario_to_density(cfg: &ScenarioConfig) -> Result<PowerDensity> {
    cfg.validate()?;
    let mut segments: Vec<USegment> = cfg
        .segments
        .iter()
        .map(|s| USegment {
            lo: cfg.angle_to_u(s.theta_lo_deg),
            hi: cfg.angle_to_u(s.theta_hi_deg),
            level: s.level,
        })
        .collect();
    // sin is increasing on [-90, 90], so the order is preserved; guard rounding anyway.
    for s in &mut segments {
        if s.lo > s.hi {
            std::mem::swap(&mut s.lo, &mut s.hi);
        }
    }
    let points = cfg
        .point_masses
        .iter()
        .map(|p| UPoint {
            u: cfg.angle_to_u(p.theta_deg),
            power: p.variance,
        })
        .collect();
    Ok(PowerDensity { segments, points })
}

/// `f_k = int gamma(u) exp(j k pi u) du`, exact for uniform segments and
/// point masses.
pub fn fourier_coeffs(density: &PowerDensity, m: usize) -> ToeplitzParam {
    let mut f = CVector::zeros(m);
    for s in &density.segments {
        f[0] += Complex64::new(s.level * (s.hi - s.lo), 0.0);
        for k in 1..m {
            let w = k as f64 * PI;
            let num = Complex64::cis(w * s.hi) - Complex64::cis(w * s.lo);
            f[k] += num / Complex64::new(0.0, w) * s.level;
        }
    }
    for p in &density.points {
        for k in 0..m {
            f[k] += Complex64::cis(k as f64 * PI * p.u) * p.power;
        }
    }
    f[0].im = 0.0;
    ToeplitzParam::new(f).expect("zero lag is real by construction")
}

/// Channel covariance `C = T(f) + noise_var I` with a sampling factor.
#[derive(Debug, Clone)]
pub struct TrueCovariance {
    f_true: ToeplitzParam,
    covariance: CMatrix,
    factor: CMatrix,
    noise_var: f64,
    snr: f64,
}

impl TrueCovariance {
    pub fn f_true(&self) -> &ToeplitzParam {
        &self.f_true
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.covariance
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Acquisition SNR `f_0 / noise_var`.
    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn m(&self) -> usize {
        self.f_true.m()
    }

    /// Signal part `T(f_true)`.
    pub fn signal_matrix(&self) -> CMatrix {
        self.f_true.toeplitz()
    }

    /// Eigenvalues of the signal part, in non-increasing order.
    pub fn signal_spectrum(&self) -> Vec<f64> {
        let mut eig = SymmetricEigen::new(self.signal_matrix()).eigenvalues.as_slice().to_vec();
        eig.sort_by(|a, b| b.total_cmp(a));
        eig
    }

    /// One snapshot `y ~ CN(0, C)`.
    pub fn sample_snapshot<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        let m = self.m();
        let z = CVector::from_fn(m, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        &self.factor * z
    }
}

pub fn build_covariance(f_true: &ToeplitzParam, noise_var: f64) -> Result<TrueCovariance> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::config("noise_var", "must be positive and finite"));
    }
    let signal = f_true.toeplitz();
    let m = f_true.m();
    let min_eig = SymmetricEigen::new(signal.clone()).eigenvalues.min();
    if min_eig < -1e-6 * f_true.power().max(0.0) - 1e-14 {
        return Err(Error::NotPsd { min_eig });
    }
    let covariance = signal + CMatrix::identity(m, m) * Complex64::new(noise_var, 0.0);
    let factor = Cholesky::new(covariance.clone())
        .ok_or_else(|| Error::Factorization("Cholesky of the channel covariance".into()))?
        .unpack();
    Ok(TrueCovariance {
        f_true: f_true.clone(),
        covariance,
        factor,
        noise_var,
        snr: f_true.power() / noise_var,
    })
}

/// Fully resolved scenario: the (power-normalized) density and the covariance it induces.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub density: PowerDensity,
    pub covariance: TrueCovariance,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let raw = scenario_to_density(cfg)?;
        let density = match cfg.snr_db {
            Some(snr_db) => {
                let total = raw.total_power();
                if total <= 0.0 {
                    return Err(Error::config(
                        "snr_db",
                        "cannot normalize a scenario without signal power",
                    ));
                }
                let target = cfg.noise_var * 10f64.powf(snr_db / 10.0);
                raw.scaled(target / total)
            }
            None => raw,
        };
        let mut f = fourier_coeffs(&density, cfg.m);
        if let Some(snr_db) = cfg.snr_db {
            // pin f_0 to the requested SNR without rounding drift from the rescale
            let target = cfg.noise_var * 10f64.powf(snr_db / 10.0);
            let mut c = f.coeffs().clone();
            c[0] = Complex64::new(target, 0.0);
            f = ToeplitzParam::new(c)?;
        }
        let covariance = build_covariance(&f, cfg.noise_var)?;
        Ok(Scenario {
            config: cfg.clone(),
            density,
            covariance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn angle_mapping() {
        let cfg = ScenarioConfig::two_cluster(20, 0.0);
        assert_eq!(cfg.angle_to_u(0.0), 0.0);
        assert!((cfg.angle_to_u(90.0) - 1.0).abs() < 1e-15);
        let mut c45 = cfg.clone();
        c45.theta_max_deg = 45.0;
        assert!((c45.angle_to_u(45.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_cluster_segments_in_u() {
        let d = scenario_to_density(&ScenarioConfig::two_cluster(20, 0.0)).unwrap();
        let expect = [(-0.76604, -0.74314), (0.17365, 0.20791)];
        for (s, (lo, hi)) in d.segments.iter().zip(expect) {
            assert!((s.lo - lo).abs() < 5e-6, "{} vs {lo}", s.lo);
            assert!((s.hi - hi).abs() < 5e-6, "{} vs {hi}", s.hi);
            assert_eq!(s.level, 1.0);
        }
    }

    #[test]
    fn rejects_out_of_range_angles() {
        let mut cfg = ScenarioConfig::two_cluster(8, 0.0);
        cfg.theta_max_deg = 40.0;
        let err = scenario_to_density(&cfg).unwrap_err();
        assert!(err.to_string().contains("segments[0]"), "{err}");

        let mut cfg = ScenarioConfig::two_cluster(8, 0.0);
        cfg.segments[1] = AngularSegment { theta_lo_deg: 12.0, theta_hi_deg: 10.0, level: 1.0 };
        assert!(scenario_to_density(&cfg).is_err());
    }

    #[test]
    fn uniform_density_is_white() {
        let d = PowerDensity {
            segments: vec![USegment { lo: -1.0, hi: 1.0, level: 0.7 }],
            points: vec![],
        };
        let f = fourier_coeffs(&d, 6);
        assert!((f.power() - 1.4).abs() < 1e-15);
        for k in 1..6 {
            assert!(f.coeffs()[k].norm() < 1e-15);
        }
    }

    #[test]
    fn half_segment_first_coefficient() {
        let d = PowerDensity {
            segments: vec![USegment { lo: 0.0, hi: 0.5, level: 1.0 }],
            points: vec![],
        };
        let f = fourier_coeffs(&d, 2);
        assert!((f.power() - 0.5).abs() < 1e-15);
        let expect = Complex64::new(1.0 / PI, 1.0 / PI);
        assert!((f.coeffs()[1] - expect).norm() < 1e-14);
    }

    #[test]
    fn point_mass_coefficients() {
        let d = PowerDensity {
            segments: vec![],
            points: vec![UPoint { u: 0.3, power: 1.0 }],
        };
        let f = fourier_coeffs(&d, 5);
        for k in 0..5 {
            let e = Complex64::cis(0.3 * k as f64 * PI);
            assert!((f.coeffs()[k] - e).norm() < 1e-14);
        }
    }

    #[test]
    fn pure_noise_covariance() {
        let cov = build_covariance(&ToeplitzParam::zeros(4), 0.5).unwrap();
        assert!((cov.matrix() - CMatrix::identity(4, 4) * Complex64::new(0.5, 0.0)).camax() < 1e-15);
        assert_eq!(cov.snr(), 0.0);
    }

    #[test]
    fn rejects_indefinite_parameter() {
        let f = ToeplitzParam::new(CVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
        ]))
        .unwrap();
        assert!(matches!(build_covariance(&f, 1.0), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn snr_normalization_round_trip() {
        for snr_db in [0.0, -10.0, -20.0] {
            let mut cfg = ScenarioConfig::two_cluster(20, snr_db);
            cfg.noise_var = 0.37;
            let s = Scenario::from_config(&cfg).unwrap();
            let target = 10f64.powf(snr_db / 10.0);
            assert!((s.covariance.snr() - target).abs() < 1e-12);
            let min_eig = SymmetricEigen::new(s.covariance.matrix().clone()).eigenvalues.min();
            assert!(min_eig >= cfg.noise_var - 1e-9);
        }
    }

    #[test]
    fn snapshots_are_deterministic() {
        let s = Scenario::from_config(&ScenarioConfig::two_cluster(8, 0.0)).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            assert_eq!(
                s.covariance.sample_snapshot(&mut a),
                s.covariance.sample_snapshot(&mut b)
            );
        }
    }

    #[test]
    fn white_snapshot_variance() {
        let cov = build_covariance(&ToeplitzParam::zeros(3), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let y = cov.sample_snapshot(&mut rng);
            for k in 0..3 {
                acc[k] += y[k].norm_sqr();
            }
        }
        for a in acc {
            assert!((a / n as f64 - 1.0).abs() < 0.02);
        }
    }
}
