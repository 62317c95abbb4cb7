//! Recovery of a unit beam from a feasible autocorrelation vector.
//!
//! The lags are first converted to the classical convention
//! `rho_k = sum_i v_{i+k} conj(v_i)`, giving the Laurent polynomial
//! `R(z) = sum_{|k| < M} rho_k z^k`, which is nonnegative on the unit circle.
//! Its roots come in pairs `(z, 1/conj(z))`; keeping one root of every pair
//! inside the closed unit disk yields `V(z) = sum_i v_i z^i` with `|V|^2 = R`
//! on the circle.

use nalgebra::Schur;
use num_complex::Complex64;

use crate::array::{trig_poly, AutocorrVec, CMatrix, CVector};
use crate::error::{Error, Result};

/// Points of the uniform `u` grid used to screen the spectrum before factoring.
pub const SPECTRUM_GRID: usize = 4096;

/// Negative spectrum dips up to this fraction of the zero lag are absorbed by
/// raising the zero lag; deeper dips are errors.
pub const CLAMP_TOL: f64 = 1e-6;

const LAG_CUTOFF: f64 = 1e-14;
const CIRCLE_BAND: f64 = 1e-6;

/// Minimum of `u -> <r, realify(a(u))>` on a uniform grid of `points` values of `u`
/// in `[-1, 1)`, returned as `(u, value)`.
pub fn min_spectrum(r: &AutocorrVec, points: usize) -> (f64, f64) {
    let v = r.as_vector();
    (0..points.max(1))
        .map(|i| {
            let u = -1.0 + 2.0 * i as f64 / points.max(1) as f64;
            (u, trig_poly(v, u))
        })
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Unit-norm `v` whose autocorrelation matches `r / r_0`.
///
/// The global phase is fixed so that the first nonzero entry of `v` is real and positive.
pub fn spectral_factor(r: &AutocorrVec) -> Result<CVector> {
    let m = r.m();
    let r0 = r.zero_lag();
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidArgument(format!("zero lag must be positive, got {r0}")));
    }
    let (u_min, min_val) = min_spectrum(r, SPECTRUM_GRID);
    if min_val < -CLAMP_TOL * r0 {
        return Err(Error::NegativeSpectrum { u: u_min, value: min_val });
    }
    let lift = if min_val < 0.0 { -min_val } else { 0.0 };

    let scale = r0 + lift;
    let mut rho: Vec<Complex64> = (0..m)
        .map(|k| if k == 0 { Complex64::new(1.0, 0.0) } else { r.lag(k) * (0.5 / scale) })
        .collect();
    while rho.len() > 1 && rho.last().is_some_and(|c| c.norm() < LAG_CUTOFF) {
        rho.pop();
    }
    let degree = rho.len() - 1;

    let mut v = CVector::zeros(m);
    if degree == 0 {
        v[0] = Complex64::new(1.0, 0.0);
        return Ok(v);
    }

    let roots = laurent_roots(&rho)?;
    let chosen = select_roots(&roots, degree);

    // V(z) = prod (z - z_i), ascending coefficients
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for z in &chosen {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * z;
        }
        poly = next;
    }
    for (i, c) in poly.into_iter().enumerate() {
        v[i] = c;
    }
    let norm = v.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Factorization("degenerate factor".into()));
    }
    v.unscale_mut(norm);
    if let Some(first) = v.iter().copied().find(|c| c.norm() > 1e-12) {
        let phase = first.conj() / first.norm();
        v *= phase;
    }
    Ok(v)
}

/// Roots of `z^K R(z)`, whose coefficient of `z^j` is `rho_{j-K}`.
fn laurent_roots(rho: &[Complex64]) -> Result<Vec<Complex64>> {
    let k = rho.len() - 1;
    let n = 2 * k;
    let coeff = |j: usize| -> Complex64 {
        if j >= k {
            rho[j - k]
        } else {
            rho[k - j].conj()
        }
    };
    let lead = coeff(n);
    let mut companion = CMatrix::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -coeff(n - 1 - j) / lead;
    }
    for i in 1..n {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    let eig = Schur::try_new(companion, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Factorization("companion eigenvalues did not converge".into()))?
        .eigenvalues()
        .ok_or_else(|| Error::Factorization("companion eigenvalues unavailable".into()))?;

    let coeffs: Vec<Complex64> = (0..=n).map(coeff).collect();
    Ok(eig.iter().map(|&z| polish_root(&coeffs, z)).collect())
}

fn polish_root(coeffs: &[Complex64], mut z: Complex64) -> Complex64 {
    for _ in 0..3 {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 1e-3 * (1.0 + z.norm()) {
            break;
        }
        z -= step;
    }
    z
}

/// One root from each `(z, 1/conj(z))` pair; roots on the circle appear twice
/// and are merged pairwise.
fn select_roots(roots: &[Complex64], degree: usize) -> Vec<Complex64> {
    let mut inside: Vec<Complex64> = Vec::with_capacity(degree);
    let mut near: Vec<Complex64> = Vec::new();
    for &z in roots {
        let mag = z.norm();
        if mag < 1.0 - CIRCLE_BAND {
            inside.push(z);
        } else if mag <= 1.0 + CIRCLE_BAND {
            near.push(z);
        }
    }
    if near.len().is_multiple_of(2) && inside.len() + near.len() / 2 == degree {
        near.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
        let paired = pair_on_circle(&near);
        inside.extend(paired);
        return inside;
    }
    let mut all = roots.to_vec();
    all.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    all.truncate(degree);
    all
}

/// Pairs angle-sorted near-circle roots with their neighbours, choosing the
/// cyclic offset with the smallest total angular gap.
fn pair_on_circle(sorted: &[Complex64]) -> Vec<Complex64> {
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let gap = |a: Complex64, b: Complex64| (b / a).arg().abs();
    let cost = |offset: usize| -> f64 {
        (0..n / 2)
            .map(|i| gap(sorted[(2 * i + offset) % n], sorted[(2 * i + 1 + offset) % n]))
            .sum()
    };
    let offset = if n > 2 && cost(1) < cost(0) { 1 } else { 0 };
    (0..n / 2)
        .map(|i| {
            let a = sorted[(2 * i + offset) % n];
            let b = sorted[(2 * i + 1 + offset) % n];
            let mid = (a / a.norm() + b / b.norm()) * 0.5;
            let dir = if mid.norm() > 0.0 { mid / mid.norm() } else { a / a.norm() };
            dir * (1.0 - 1e-7)
        })
        .collect()
}
