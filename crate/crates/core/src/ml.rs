//! Maximum-likelihood estimation of the Toeplitz parameter `f` from
//! exponential power measurements.
//!
//! The cost is
//!
//! ```text
//! L(f) = sum_l log(mu_l(f)) + r_l / mu_l(f),   mu_l(f) = noise_var + <a_l, realify(f)>
//! ```
//!
//! minimized over PSD Toeplitz `T(f)`. The PSD cone is represented by
//! nonnegative weights on a uniform grid of steering atoms, `f = sum_k w_k a(u_k)`,
//! so `mu_l = noise_var + (A w)_l` with `A_{lk} = |v_l^H a(u_k)|^2 >= 0`.
//!
//! Each CCCP step linearizes the concave `log` part at the current iterate and
//! minimizes the resulting convex surrogate over `w >= 0` with a
//! nonmonotone spectral projected-gradient method.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::array::{steering_entries, AutocorrVec, RMatrix, RVector, ToeplitzParam};
use crate::error::{Error, Result};
use crate::measurement::MeasurementRecord;

/// Measurements sharing one array size and noise level.
#[derive(Debug, Clone)]
pub struct LikelihoodData {
    m: usize,
    noise_var: f64,
    rows: Vec<MeasurementRecord>,
}

impl LikelihoodData {
    pub fn new(m: usize, noise_var: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyArray);
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::config("noise_var", "must be positive and finite"));
        }
        Ok(LikelihoodData { m, noise_var, rows: Vec::new() })
    }

    pub fn push(&mut self, record: MeasurementRecord) -> Result<()> {
        if record.beam_autocorr.m() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: record.beam_autocorr.m(),
            });
        }
        if !(record.value >= 0.0) {
            return Err(Error::InvalidArgument("measurement values must be nonnegative".into()));
        }
        self.rows.push(record);
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn rows(&self) -> &[MeasurementRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn means(&self, f: &ToeplitzParam) -> Result<Vec<f64>> {
        if f.m() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: f.m() });
        }
        let fr = f.realify();
        self.rows
            .iter()
            .enumerate()
            .map(|(row, rec)| {
                let mean = self.noise_var + rec.beam_autocorr.as_vector().dot(&fr);
                if mean > 0.0 {
                    Ok(mean)
                } else {
                    Err(Error::NonPositiveMean { row, mean })
                }
            })
            .collect()
    }
}

pub fn neg_log_likelihood(f: &ToeplitzParam, data: &LikelihoodData) -> Result<f64> {
    let means = data.means(f)?;
    Ok(data
        .rows
        .iter()
        .zip(&means)
        .map(|(rec, &mu)| mu.ln() + rec.value / mu)
        .sum())
}

/// Gradient of [`neg_log_likelihood`] with respect to `realify(f)`.
pub fn neg_log_likelihood_gradient(f: &ToeplitzParam, data: &LikelihoodData) -> Result<RVector> {
    let means = data.means(f)?;
    let mut g = RVector::zeros(2 * data.m - 1);
    for (rec, &mu) in data.rows.iter().zip(&means) {
        g.axpy(1.0 / mu - rec.value / (mu * mu), rec.beam_autocorr.as_vector(), 1.0);
    }
    Ok(g)
}

/// Hessian of the cost at `f` for the observed values:
/// `sum_l a_l a_l^T (2 r_l / mu_l - 1) / mu_l^2`.
pub fn observed_hessian(f: &ToeplitzParam, data: &LikelihoodData) -> Result<RMatrix> {
    let means = data.means(f)?;
    let n = 2 * data.m - 1;
    let mut h = RMatrix::zeros(n, n);
    for (rec, &mu) in data.rows.iter().zip(&means) {
        let a = rec.beam_autocorr.as_vector();
        h.ger((2.0 * rec.value / mu - 1.0) / (mu * mu), a, a, 1.0);
    }
    Ok(h)
}

/// Expectation of [`observed_hessian`] under the model at `f`:
/// `sum_l a_l a_l^T / mu_l^2`, which is also the accumulated Fisher information.
pub fn expected_hessian(f: &ToeplitzParam, data: &LikelihoodData) -> Result<RMatrix> {
    let means = data.means(f)?;
    let n = 2 * data.m - 1;
    let mut h = RMatrix::zeros(n, n);
    for (rec, &mu) in data.rows.iter().zip(&means) {
        let a = rec.beam_autocorr.as_vector();
        h.ger(1.0 / (mu * mu), a, a, 1.0);
    }
    Ok(h)
}

/// Uniform grid `u_k = -1 + 2k/G` with the realified atoms `realify(a(u_k))` as columns.
#[derive(Debug, Clone)]
pub struct AtomicGrid {
    m: usize,
    points: Vec<f64>,
    atoms: RMatrix,
}

impl AtomicGrid {
    pub fn uniform(m: usize, size: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyArray);
        }
        if size == 0 {
            return Err(Error::config("ml_grid_size", "must be positive"));
        }
        let points: Vec<f64> = (0..size).map(|k| -1.0 + 2.0 * k as f64 / size as f64).collect();
        let n = 2 * m - 1;
        let mut atoms = RMatrix::zeros(n, size);
        for (k, &u) in points.iter().enumerate() {
            let a = steering_entries(u, m);
            atoms[(0, k)] = 1.0;
            for j in 1..m {
                atoms[(j, k)] = a[j].re;
                atoms[(m - 1 + j, k)] = a[j].im;
            }
        }
        Ok(AtomicGrid { m, points, atoms })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Realified atoms, one column per grid point.
    pub fn atoms(&self) -> &RMatrix {
        &self.atoms
    }

    /// Row of the design matrix for one beam: `|v^H a(u_k)|^2` for every `k`.
    pub fn design_row(&self, beam: &AutocorrVec) -> Vec<f64> {
        self.atoms.tr_mul(beam.as_vector()).iter().copied().collect()
    }

    pub fn f_from_weights(&self, weights: &RVector) -> ToeplitzParam {
        ToeplitzParam::from_realified(&(&self.atoms * weights)).expect("odd-length realified vector")
    }
}

/// Nonnegative weights on an [`AtomicGrid`]; the implied `T(f)` is PSD by construction.
#[derive(Debug, Clone)]
pub struct AtomicGridRep {
    grid: Arc<AtomicGrid>,
    weights: RVector,
}

impl AtomicGridRep {
    pub fn new(grid: Arc<AtomicGrid>, weights: RVector) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: weights.len() });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("atomic weights must be nonnegative".into()));
        }
        Ok(AtomicGridRep { grid, weights })
    }

    /// Equal weights `1/G`, which represent `f = (1, 0, ..., 0)` exactly on a uniform grid.
    pub fn unit_power(grid: Arc<AtomicGrid>) -> Self {
        let g = grid.len();
        AtomicGridRep { grid, weights: RVector::from_element(g, 1.0 / g as f64) }
    }

    pub fn grid(&self) -> &Arc<AtomicGrid> {
        &self.grid
    }

    pub fn weights(&self) -> &RVector {
        &self.weights
    }

    pub fn f(&self) -> ToeplitzParam {
        self.grid.f_from_weights(&self.weights)
    }

    pub fn power(&self) -> f64 {
        self.weights.sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlOptions {
    /// Atomic grid size; `None` means `8 M`.
    pub grid_size: Option<usize>,
    pub max_outer: usize,
    /// Stop when the cost changes by less than this fraction of `max(1, |cost|)`.
    pub outer_rel_tol: f64,
    /// Projected-gradient stationarity target, relative to `1 + |surrogate|`.
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            grid_size: None,
            max_outer: 50,
            outer_rel_tol: 1e-6,
            inner_tol: 1e-7,
            max_inner: 500,
        }
    }
}

impl MlOptions {
    pub fn grid_for(&self, m: usize) -> Result<Arc<AtomicGrid>> {
        AtomicGrid::uniform(m, self.grid_size.unwrap_or(8 * m)).map(Arc::new)
    }
}

/// Likelihood restricted to grid weights, with the design matrix cached
/// row-major so measurements can be appended as they arrive.
#[derive(Debug, Clone)]
pub struct MlProblem {
    grid: Arc<AtomicGrid>,
    noise_var: f64,
    design: Vec<f64>,
    values: Vec<f64>,
}

/// Outcome of one CCCP step.
#[derive(Debug, Clone)]
pub struct CccpStep {
    pub weights: RVector,
    pub cost_before: f64,
    pub cost_after: f64,
    /// Convex surrogate at the new point; sits between the two costs.
    pub surrogate_after: f64,
    pub inner_iterations: usize,
    /// False when the inner solver hit its iteration cap; the best iterate is still returned.
    pub inner_converged: bool,
}

#[derive(Debug, Clone)]
pub struct MlEstimate {
    pub f: ToeplitzParam,
    pub rep: AtomicGridRep,
    pub outer_iterations: usize,
    pub cost_history: Vec<f64>,
    /// Number of CCCP steps whose inner solve stopped at the iteration cap.
    pub inner_warnings: usize,
    pub converged: bool,
}

impl MlProblem {
    pub fn new(grid: Arc<AtomicGrid>, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::config("noise_var", "must be positive and finite"));
        }
        Ok(MlProblem { grid, noise_var, design: Vec::new(), values: Vec::new() })
    }

    pub fn from_data(data: &LikelihoodData, grid: Arc<AtomicGrid>) -> Result<Self> {
        if grid.m() != data.m() {
            return Err(Error::DimensionMismatch { expected: data.m(), got: grid.m() });
        }
        let mut p = MlProblem::new(grid, data.noise_var())?;
        for rec in data.rows() {
            p.push(&rec.beam_autocorr, rec.value);
        }
        Ok(p)
    }

    pub fn push(&mut self, beam: &AutocorrVec, value: f64) {
        self.design.extend(self.grid.design_row(beam));
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grid(&self) -> &Arc<AtomicGrid> {
        &self.grid
    }

    fn means_into(&self, w: &[f64], out: &mut Vec<f64>) {
        let g = self.grid.len();
        out.clear();
        out.extend(self.design.chunks_exact(g).map(|row| {
            self.noise_var + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
        }));
    }

    /// `A^T coef`.
    fn transpose_apply(&self, coef: &[f64], out: &mut [f64]) {
        let g = self.grid.len();
        out.iter_mut().for_each(|x| *x = 0.0);
        for (row, &c) in self.design.chunks_exact(g).zip(coef) {
            if c != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += c * a;
                }
            }
        }
    }

    pub fn cost(&self, weights: &RVector) -> f64 {
        let mut mu = Vec::with_capacity(self.len());
        self.means_into(weights.as_slice(), &mut mu);
        mu.iter().zip(&self.values).map(|(m, r)| m.ln() + r / m).sum()
    }

    /// One CCCP step from `weights`: minimize the convex surrogate
    /// `sum_l r_l / mu_l(w) + mu_l(w) / mu_l(w_k) + log mu_l(w_k) - 1` over `w >= 0`.
    pub fn cccp_step(&self, weights: &RVector, opts: &MlOptions) -> CccpStep {
        let g = self.grid.len();
        let l = self.len();
        let mut mu_k = Vec::with_capacity(l);
        self.means_into(weights.as_slice(), &mut mu_k);
        let slope: Vec<f64> = mu_k.iter().map(|m| 1.0 / m).collect();
        let offset: f64 = mu_k.iter().map(|m| m.ln() - 1.0).sum();
        let cost_before: f64 = mu_k.iter().zip(&self.values).map(|(m, r)| m.ln() + r / m).sum();

        let mut mu = Vec::with_capacity(l);
        let mut coef = vec![0.0; l];
        let surrogate = |mu: &[f64]| -> f64 {
            offset
                + mu.iter()
                    .zip(&self.values)
                    .zip(&slope)
                    .map(|((m, r), s)| r / m + m * s)
                    .sum::<f64>()
        };
        let gradient = |mu: &[f64], coef: &mut Vec<f64>, out: &mut [f64]| {
            for ((c, m), (r, s)) in coef.iter_mut().zip(mu).zip(self.values.iter().zip(&slope)) {
                *c = s - r / (m * m);
            }
            self.transpose_apply(coef, out);
        };

        let mut w: Vec<f64> = weights.iter().map(|x| x.max(0.0)).collect();
        self.means_into(&w, &mut mu);
        let mut phi = surrogate(&mu);
        let mut grad = vec![0.0; g];
        gradient(&mu, &mut coef, &mut grad);

        let mut best_w = w.clone();
        let mut best_phi = phi;
        const MEMORY: usize = 10;
        let mut history = vec![phi];

        let pg_norm = |w: &[f64], grad: &[f64]| -> f64 {
            w.iter()
                .zip(grad)
                .map(|(x, d)| ((x - d).max(0.0) - x).abs())
                .fold(0.0, f64::max)
        };
        let mut crit = pg_norm(&w, &grad);
        let mut alpha = if crit > 0.0 { 1.0 / crit } else { 1.0 };
        let mut converged = crit <= opts.inner_tol * (1.0 + phi.abs());
        let mut iterations = 0;

        let mut trial = vec![0.0; g];
        let mut dir = vec![0.0; g];
        let mut grad_new = vec![0.0; g];
        let mut mu_new = Vec::with_capacity(l);
        while !converged && iterations < opts.max_inner {
            iterations += 1;
            for i in 0..g {
                dir[i] = (w[i] - alpha * grad[i]).max(0.0) - w[i];
            }
            let slope_dir: f64 = dir.iter().zip(&grad).map(|(d, gr)| d * gr).sum();
            if slope_dir >= 0.0 {
                break;
            }
            let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut theta = 1.0;
            let accepted = loop {
                for i in 0..g {
                    trial[i] = (w[i] + theta * dir[i]).max(0.0);
                }
                self.means_into(&trial, &mut mu_new);
                let phi_new = surrogate(&mu_new);
                if phi_new <= reference + 1e-4 * theta * slope_dir {
                    break Some(phi_new);
                }
                // safeguarded quadratic interpolation
                let denom = 2.0 * (phi_new - phi - theta * slope_dir);
                let t = if denom > 0.0 { -slope_dir * theta * theta / denom } else { 0.5 * theta };
                theta = t.clamp(0.1 * theta, 0.5 * theta);
                if theta < 1e-14 {
                    break None;
                }
            };
            let Some(phi_new) = accepted else { break };
            gradient(&mu_new, &mut coef, &mut grad_new);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..g {
                let s = trial[i] - w[i];
                ss += s * s;
                sy += s * (grad_new[i] - grad[i]);
            }
            alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e12 };
            std::mem::swap(&mut w, &mut trial);
            std::mem::swap(&mut grad, &mut grad_new);
            std::mem::swap(&mut mu, &mut mu_new);
            phi = phi_new;
            if phi < best_phi {
                best_phi = phi;
                best_w.copy_from_slice(&w);
            }
            history.push(phi);
            if history.len() > MEMORY {
                history.remove(0);
            }
            crit = pg_norm(&w, &grad);
            converged = crit <= opts.inner_tol * (1.0 + phi.abs());
        }
        if converged && phi <= best_phi {
            best_phi = phi;
            best_w.copy_from_slice(&w);
        }

        // never step to a worse surrogate value than the starting point
        let start_phi = surrogate(&mu_k);
        let (weights_out, surrogate_after) = if best_phi <= start_phi {
            (RVector::from_vec(best_w), best_phi)
        } else {
            (weights.map(|x| x.max(0.0)), start_phi)
        };
        let cost_after = self.cost(&weights_out);
        CccpStep {
            weights: weights_out,
            cost_before,
            cost_after,
            surrogate_after,
            inner_iterations: iterations,
            inner_converged: converged,
        }
    }

    /// CCCP from `start` (or the unit-power initialization) until the cost
    /// settles or the outer iteration cap is reached.
    pub fn estimate(&self, start: Option<&RVector>, opts: &MlOptions) -> Result<MlEstimate> {
        if self.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut w = match start {
            Some(s) if s.len() == self.grid.len() => s.map(|x| x.max(0.0)),
            Some(s) => {
                return Err(Error::DimensionMismatch { expected: self.grid.len(), got: s.len() })
            }
            None => AtomicGridRep::unit_power(self.grid.clone()).weights,
        };
        let mut cost = self.cost(&w);
        let mut history = vec![cost];
        let mut warnings = 0;
        let mut converged = false;
        let mut outer = 0;
        while outer < opts.max_outer {
            outer += 1;
            let step = self.cccp_step(&w, opts);
            if !step.inner_converged {
                warnings += 1;
            }
            let change = cost - step.cost_after;
            if step.cost_after <= cost {
                w = step.weights;
                cost = step.cost_after;
                history.push(cost);
            }
            if change.abs() < opts.outer_rel_tol * cost.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        let rep = AtomicGridRep { grid: self.grid.clone(), weights: w };
        Ok(MlEstimate {
            f: rep.f(),
            rep,
            outer_iterations: outer,
            cost_history: history,
            inner_warnings: warnings,
            converged,
        })
    }
}

pub fn cccp_ml_step(rep: &AtomicGridRep, data: &LikelihoodData, opts: &MlOptions) -> Result<CccpStep> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let problem = MlProblem::from_data(data, rep.grid.clone())?;
    Ok(problem.cccp_step(&rep.weights, opts))
}

/// ML estimate of `f`, optionally warm-started from a previous grid representation.
pub fn estimate_f(
    data: &LikelihoodData,
    opts: &MlOptions,
    warm_start: Option<&AtomicGridRep>,
) -> Result<MlEstimate> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let grid = match warm_start {
        Some(rep) => rep.grid.clone(),
        None => opts.grid_for(data.m())?,
    };
    let problem = MlProblem::from_data(data, grid)?;
    problem.estimate(warm_start.map(|r| &r.weights), opts)
}
