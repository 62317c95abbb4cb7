//! D-optimal next-beam selection.
//!
//! The next beam maximizes `r^T D r / <r, r_hat>^2` over the autocorrelation
//! set, where `D` is the (regularized) inverse Fisher information and
//! `r_hat = realify(f_hat) + noise_var e_1`. The ratio is handled with a
//! Dinkelbach iteration on `pi(lambda) = max_r r^T (D - lambda r_hat r_hat^T) r`;
//! each indefinite quadratic is maximized with a concave-convex procedure whose
//! concave subproblems only need a linear maximization oracle over the set.

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array::{
    autocorr, quadratic_form_matrix, steering_entries, trig_poly, AutocorrVec, CVector, RMatrix,
    RVector, ToeplitzParam,
};
use crate::error::{Error, Result};
use crate::measurement::normalize_beam;
use crate::spectral::{min_spectrum, spectral_factor, SPECTRUM_GRID};

/// Accumulated Fisher information `F` and its ridge-regularized inverse `D`.
#[derive(Debug, Clone)]
pub struct FisherState {
    m: usize,
    fim: RMatrix,
    inverse: RMatrix,
    count: usize,
}

impl FisherState {
    /// Empty state. With no information the inverse is taken to be the identity.
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyArray);
        }
        let n = 2 * m - 1;
        Ok(FisherState {
            m,
            fim: RMatrix::zeros(n, n),
            inverse: RMatrix::identity(n, n),
            count: 0,
        })
    }

    /// Information of all `beams` evaluated at the current estimate `f`.
    pub fn from_beams<'a>(
        m: usize,
        beams: impl IntoIterator<Item = &'a AutocorrVec>,
        f: &ToeplitzParam,
        noise_var: f64,
    ) -> Result<Self> {
        let mut state = FisherState::new(m)?;
        let fr = f.realify();
        for r in beams {
            state.add_unrefreshed(&fim_rank_one_autocorr(r, &fr, noise_var)?)?;
        }
        state.refresh_inverse();
        Ok(state)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn fim(&self) -> &RMatrix {
        &self.fim
    }

    pub fn inverse(&self) -> &RMatrix {
        &self.inverse
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `1e-8 * trace(F) / (2M - 1)`.
    pub fn ridge(&self) -> f64 {
        1e-8 * self.fim.trace() / (2 * self.m - 1) as f64
    }

    pub fn accumulate(&mut self, contribution: &RMatrix) -> Result<()> {
        self.add_unrefreshed(contribution)?;
        self.refresh_inverse();
        Ok(())
    }

    fn add_unrefreshed(&mut self, contribution: &RMatrix) -> Result<()> {
        if contribution.shape() != self.fim.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.fim.nrows(),
                got: contribution.nrows(),
            });
        }
        self.fim += contribution;
        self.count += 1;
        Ok(())
    }

    fn refresh_inverse(&mut self) {
        let n = self.fim.nrows();
        let eps = self.ridge();
        if !(eps > 0.0) {
            self.inverse = RMatrix::identity(n, n);
            return;
        }
        let mut reg = self.fim.clone();
        for i in 0..n {
            reg[(i, i)] += eps;
        }
        self.inverse = match reg.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => {
                let eig = SymmetricEigen::new(reg);
                let inv_vals = eig.eigenvalues.map(|x| 1.0 / x.max(eps));
                &eig.eigenvectors * RMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose()
            }
        };
        self.inverse = (&self.inverse + self.inverse.transpose()) * 0.5;
    }
}

/// Information carried by one measurement with beam `v`: `a a^T / mu(v)^2`.
pub fn fim_rank_one(v: &CVector, f: &ToeplitzParam, noise_var: f64) -> Result<RMatrix> {
    if v.len() != f.m() {
        return Err(Error::DimensionMismatch { expected: f.m(), got: v.len() });
    }
    let v = normalize_beam(v)?;
    fim_rank_one_autocorr(&autocorr(&v), &f.realify(), noise_var)
}

pub fn fim_rank_one_autocorr(r: &AutocorrVec, f_realified: &RVector, noise_var: f64) -> Result<RMatrix> {
    let a = r.as_vector();
    if a.len() != f_realified.len() {
        return Err(Error::DimensionMismatch { expected: f_realified.len(), got: a.len() });
    }
    let mu = noise_var + a.dot(f_realified);
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMean { row: 0, mean: mu });
    }
    Ok(a * a.transpose() / (mu * mu))
}

/// Outer approximations of the autocorrelation set
/// `{autocorr(v) : |v| = 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeasibleKind {
    /// The set itself; linear maximization is a Toeplitz eigenproblem.
    Autocorrelation,
    /// `r_0 = 1` and the beam pattern nonnegative at `grid` uniform points.
    GridHalfspaces { grid: usize },
    /// `r_0 = 1` and the order-`order` Toeplitz matrix of the classical lags PSD.
    /// Membership only.
    ToeplitzEmbed { order: usize },
}

#[derive(Debug, Clone)]
pub struct FeasibleSetApprox {
    kind: FeasibleKind,
    m: usize,
    grid_atoms: Option<RMatrix>,
}

const MEMBERSHIP_TOL: f64 = 1e-9;

impl FeasibleSetApprox {
    pub fn new(kind: FeasibleKind, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyArray);
        }
        let grid_atoms = match kind {
            FeasibleKind::Autocorrelation => None,
            FeasibleKind::GridHalfspaces { grid } => {
                if grid < 2 * m - 1 {
                    return Err(Error::config("feasible_grid", "must be at least 2M - 1 points"));
                }
                let n = 2 * m - 1;
                let mut atoms = RMatrix::zeros(n, grid);
                for i in 0..grid {
                    let a = steering_entries(-1.0 + 2.0 * i as f64 / grid as f64, m);
                    atoms[(0, i)] = 1.0;
                    for k in 1..m {
                        atoms[(k, i)] = a[k].re;
                        atoms[(m - 1 + k, i)] = a[k].im;
                    }
                }
                Some(atoms)
            }
            FeasibleKind::ToeplitzEmbed { order } => {
                if order < m {
                    return Err(Error::config("embed_order", "must be at least M"));
                }
                None
            }
        };
        Ok(FeasibleSetApprox { kind, m, grid_atoms })
    }

    pub fn autocorrelation(m: usize) -> Result<Self> {
        Self::new(FeasibleKind::Autocorrelation, m)
    }

    pub fn grid_halfspaces(m: usize, grid: usize) -> Result<Self> {
        Self::new(FeasibleKind::GridHalfspaces { grid }, m)
    }

    pub fn toeplitz_embed(m: usize, order: usize) -> Result<Self> {
        Self::new(FeasibleKind::ToeplitzEmbed { order }, m)
    }

    pub fn kind(&self) -> FeasibleKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Membership with an absolute tolerance of `1e-9`.
    pub fn contains(&self, r: &RVector) -> bool {
        if r.len() != 2 * self.m - 1 || (r[0] - 1.0).abs() > MEMBERSHIP_TOL {
            return false;
        }
        match self.kind {
            FeasibleKind::Autocorrelation => {
                let ac = AutocorrVec::new(r.clone()).expect("odd length");
                min_spectrum(&ac, SPECTRUM_GRID).1 >= -MEMBERSHIP_TOL
            }
            FeasibleKind::GridHalfspaces { .. } => {
                let atoms = self.grid_atoms.as_ref().expect("grid atoms");
                atoms.tr_mul(r).iter().all(|&x| x >= -MEMBERSHIP_TOL)
            }
            FeasibleKind::ToeplitzEmbed { order } => {
                let m = self.m;
                let col = CVector::from_fn(order, |k, _| {
                    if k == 0 {
                        r[0].into()
                    } else if k < m {
                        num_complex::Complex64::new(r[k], r[m - 1 + k]) * 0.5
                    } else {
                        0.0.into()
                    }
                });
                let t = crate::array::hermitian_toeplitz(&col);
                let min = t.symmetric_eigenvalues().min();
                min >= -MEMBERSHIP_TOL
            }
        }
    }

    /// A maximizer of `<w, r>` over the set.
    pub fn linear_oracle(&self, w: &RVector) -> Result<RVector> {
        if w.len() != 2 * self.m - 1 {
            return Err(Error::DimensionMismatch { expected: 2 * self.m - 1, got: w.len() });
        }
        match self.kind {
            FeasibleKind::Autocorrelation => {
                let t = quadratic_form_matrix(w);
                let eig = t.symmetric_eigen();
                let top = eig.eigenvalues.imax();
                Ok(autocorr(&eig.eigenvectors.column(top).into_owned()).into_vector())
            }
            FeasibleKind::GridHalfspaces { .. } => self.grid_lp(w),
            FeasibleKind::ToeplitzEmbed { .. } => Err(Error::NoLinearOracle("toeplitz_embed")),
        }
    }

    fn grid_lp(&self, w: &RVector) -> Result<RVector> {
        use minilp::{ComparisonOp, OptimizationDirection, Problem};
        let atoms = self.grid_atoms.as_ref().expect("grid atoms");
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..w.len())
            .map(|j| {
                let bounds = if j == 0 { (1.0, 1.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
                lp.add_var(w[j], bounds)
            })
            .collect();
        for col in atoms.column_iter() {
            let expr: Vec<_> = vars.iter().zip(col.iter()).map(|(&v, &a)| (v, a)).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, 0.0);
        }
        let sol = lp.solve().map_err(|e| Error::LinearProgram(e.to_string()))?;
        Ok(RVector::from_iterator(w.len(), vars.iter().map(|&v| sol[v])))
    }
}

/// Autocorrelation of a random unit beam with i.i.d. complex Gaussian entries.
pub fn random_feasible<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> RVector {
    let v = CVector::from_fn(m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        num_complex::Complex64::new(re, im)
    });
    autocorr(&v.normalize()).into_vector()
}

/// `r^T D r / <r, r_hat>^2`, rejecting points whose denominator `<r, r_hat>`
/// is below `noise_var / 2`.
pub fn d_criterion(r: &RVector, d: &RMatrix, r_hat: &RVector, noise_var: f64) -> Result<f64> {
    let den = r.dot(r_hat);
    if !(den >= 0.5 * noise_var) {
        return Err(Error::InfeasibleDesign { denominator: den });
    }
    let num = r.dot(&(d * r));
    Ok(num.max(0.0) / (den * den))
}

/// Concave part `N(r)` of a difference-of-convex quadratic.
#[derive(Debug, Clone)]
pub enum ConcavePart {
    /// `weight * (dir^T r)^2`
    RankOne { weight: f64, dir: RVector },
    /// `weight * |r|^2`
    Isotropic(f64),
}

impl ConcavePart {
    fn value(&self, r: &RVector) -> f64 {
        match self {
            ConcavePart::RankOne { weight, dir } => weight * dir.dot(r).powi(2),
            ConcavePart::Isotropic(w) => w * r.norm_squared(),
        }
    }

    fn gradient(&self, r: &RVector) -> RVector {
        match self {
            ConcavePart::RankOne { weight, dir } => dir * (2.0 * weight * dir.dot(r)),
            ConcavePart::Isotropic(w) => r * (2.0 * w),
        }
    }

    fn curvature(&self, d: &RVector) -> f64 {
        match self {
            ConcavePart::RankOne { weight, dir } => weight * dir.dot(d).powi(2),
            ConcavePart::Isotropic(w) => w * d.norm_squared(),
        }
    }
}

/// `Q(r) = r^T P r - N(r)` with `P` PSD and `N` a PSD quadratic.
#[derive(Debug, Clone)]
pub struct DcSplit {
    pub convex: RMatrix,
    pub concave: ConcavePart,
}

impl DcSplit {
    /// Shifts a symmetric `H` by its most negative eigenvalue: `P = H + rho I`, `N = rho |r|^2`.
    pub fn from_symmetric(h: &RMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::DimensionMismatch { expected: h.nrows(), got: h.ncols() });
        }
        let sym = (h + h.transpose()) * 0.5;
        let rho = (-sym.symmetric_eigenvalues().min()).max(0.0);
        let n = sym.nrows();
        Ok(DcSplit {
            convex: sym + RMatrix::identity(n, n) * rho,
            concave: ConcavePart::Isotropic(rho),
        })
    }

    /// Split of `D - lambda r_hat r_hat^T` that moves as much of the rank-one
    /// term into the convex part as `shift` (see [`safe_shift`]) allows.
    pub fn for_ratio(d: &RMatrix, r_hat: &RVector, lambda: f64, shift: f64) -> Self {
        let s = shift.min(lambda).max(0.0);
        DcSplit {
            convex: d - r_hat * r_hat.transpose() * s,
            concave: ConcavePart::RankOne { weight: lambda - s, dir: r_hat.clone() },
        }
    }

    pub fn objective(&self, r: &RVector) -> f64 {
        r.dot(&(&self.convex * r)) - self.concave.value(r)
    }
}

/// Largest `s` with `D - s r_hat r_hat^T` PSD: `1 / (r_hat^T D^+ r_hat)`, or 0 when
/// `r_hat` leaves the range of `D`.
pub fn safe_shift(d: &RMatrix, r_hat: &RVector) -> f64 {
    let eig = SymmetricEigen::new((d + d.transpose()) * 0.5);
    let top = eig.eigenvalues.max().max(0.0);
    if top == 0.0 {
        return 0.0;
    }
    let coords = eig.eigenvectors.tr_mul(r_hat);
    let mut quad = 0.0;
    let mut outside = 0.0;
    for (c, &lam) in coords.iter().zip(eig.eigenvalues.iter()) {
        if lam > 1e-12 * top {
            quad += c * c / lam;
        } else {
            outside += c * c;
        }
    }
    if outside > 1e-20 * r_hat.norm_squared() || quad <= 0.0 {
        0.0
    } else {
        (1.0 - 1e-10) / quad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOptions {
    /// CCCP starts: `e_1` first, then random feasible points.
    pub restarts: usize,
    pub max_cccp: usize,
    pub cccp_rel_tol: f64,
    /// Duality/Frank-Wolfe gap target for the concave subproblems, relative to `1 + |value|`.
    pub inner_gap_tol: f64,
    pub max_inner: usize,
    pub bisection_tol: f64,
    pub max_bisection: usize,
    /// Seed of the random restart points.
    pub seed: u64,
    /// Size of the `u` grid searched by the steering-beam fallback; `None` means `8 M`.
    pub fallback_grid: Option<usize>,
    /// Best steering beams (by criterion) added as starting points of the Dinkelbach probes that use restarts.
    pub steering_starts: usize,
    /// Best chain endpoints of one Dinkelbach probe carried into the next as starting points.
    pub carried_starts: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            restarts: 3,
            max_cccp: 100,
            cccp_rel_tol: 1e-8,
            inner_gap_tol: 1e-8,
            max_inner: 200,
            bisection_tol: 1e-6,
            max_bisection: 60,
            seed: 0x5eed,
            fallback_grid: None,
            steering_starts: 2,
            carried_starts: 1,
        }
    }
}

/// One CCCP chain.
#[derive(Debug, Clone)]
pub struct CccpRun {
    pub r: RVector,
    pub value: f64,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
    /// Steps whose raw objective fell more than `1e-9` below the previous one.
    pub raw_violations: usize,
}

#[derive(Debug, Clone)]
pub struct QuadraticMax {
    pub r: RVector,
    pub value: f64,
    pub runs: Vec<CccpRun>,
}

/// Maximizes `r^T H r` for symmetric, possibly indefinite `H` over the set.
pub fn max_indefinite_quadratic(
    h: &RMatrix,
    set: &FeasibleSetApprox,
    opts: &DesignOptions,
) -> Result<QuadraticMax> {
    let n = 2 * set.m() - 1;
    if h.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.nrows() });
    }
    maximize_split(&DcSplit::from_symmetric(h)?, set, opts, &[])
}

/// Best CCCP chain over the standard restarts plus any `warm` starting points.
pub fn maximize_split(
    split: &DcSplit,
    set: &FeasibleSetApprox,
    opts: &DesignOptions,
    warm: &[RVector],
) -> Result<QuadraticMax> {
    let m = set.m();
    let mut starts: Vec<RVector> = Vec::with_capacity(opts.restarts + warm.len());
    if opts.restarts > 0 {
        starts.push(AutocorrVec::unit_zero_lag(m).into_vector());
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 1..opts.restarts {
            starts.push(random_feasible(m, &mut rng));
        }
    }
    starts.extend(warm.iter().cloned());

    let mut runs = Vec::with_capacity(starts.len());
    let mut last_err = None;
    for start in starts {
        match cccp_chain(split, set, start, opts) {
            Ok(run) => runs.push(run),
            Err(e) => last_err = Some(e),
        }
    }
    let best = runs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    match best {
        Some(i) => Ok(QuadraticMax { r: runs[i].r.clone(), value: runs[i].value, runs }),
        None => Err(last_err.unwrap_or_else(|| Error::InvalidArgument("no CCCP starting points".into()))),
    }
}

fn cccp_chain(split: &DcSplit, set: &FeasibleSetApprox, start: RVector, opts: &DesignOptions) -> Result<CccpRun> {
    let mut r = start;
    let mut value = split.objective(&r);
    let mut history = vec![value];
    let mut raw_violations = 0;
    for _ in 0..opts.max_cccp {
        let g = &split.convex * &r * 2.0;
        let next = maximize_concave(&g, &split.concave, set, &r, opts)?;
        let next_value = split.objective(&next);
        if next_value < value - 1e-9 {
            raw_violations += 1;
        }
        if next_value <= value {
            break;
        }
        let gain = next_value - value;
        r = next;
        value = next_value;
        history.push(value);
        if gain <= opts.cccp_rel_tol * value.abs().max(1.0) {
            break;
        }
    }
    Ok(CccpRun { r, value, history, raw_violations })
}

/// Maximizes the concave `g^T r - N(r)` over the set, never returning a point
/// worse than `start`.
fn maximize_concave(
    g: &RVector,
    concave: &ConcavePart,
    set: &FeasibleSetApprox,
    start: &RVector,
    opts: &DesignOptions,
) -> Result<RVector> {
    let phi = |r: &RVector| g.dot(r) - concave.value(r);
    let (mut best, certified) = match concave {
        ConcavePart::RankOne { weight, dir } if *weight > 0.0 => {
            rank_one_dual(g, *weight, dir, set, start, opts)?
        }
        ConcavePart::RankOne { .. } => (set.linear_oracle(g)?, true),
        ConcavePart::Isotropic(w) if *w <= 0.0 => (set.linear_oracle(g)?, true),
        ConcavePart::Isotropic(_) => (start.clone(), false),
    };
    if phi(start) > phi(&best) {
        best = start.clone();
    }
    if certified {
        Ok(best)
    } else {
        frank_wolfe(g, concave, set, best, opts)
    }
}

/// Conditional gradient with exact line search on the concave quadratic.
fn frank_wolfe(
    g: &RVector,
    concave: &ConcavePart,
    set: &FeasibleSetApprox,
    mut r: RVector,
    opts: &DesignOptions,
) -> Result<RVector> {
    for _ in 0..opts.max_inner {
        let grad = g - concave.gradient(&r);
        let s = set.linear_oracle(&grad)?;
        let d = &s - &r;
        let gap = grad.dot(&d);
        let value = g.dot(&r) - concave.value(&r);
        if gap <= opts.inner_gap_tol * (1.0 + value.abs()) {
            break;
        }
        let curv = concave.curvature(&d);
        let t = if curv > 0.0 { (gap / (2.0 * curv)).min(1.0) } else { 1.0 };
        r += d * t;
    }
    Ok(r)
}

/// Solves `max g^T r - c (h^T r)^2` through its one-dimensional dual
/// `min_tau sigma(g - tau h) + tau^2 / (4c)`, where `sigma` is the support function.
/// The optimal `tau` is the root of the increasing `F(tau) = tau - 2c h^T r(tau)`,
/// with `r(tau)` a maximizer of `(g - tau h)^T r`. Returns the point and whether
/// the duality gap certified it.
fn rank_one_dual(
    g: &RVector,
    c: f64,
    h: &RVector,
    set: &FeasibleSetApprox,
    start: &RVector,
    opts: &DesignOptions,
) -> Result<(RVector, bool)> {
    let phi = |r: &RVector| g.dot(r) - c * h.dot(r).powi(2);
    let probe = |tau: f64| -> Result<(RVector, f64, f64, f64)> {
        let w = g - h * tau;
        let r = set.linear_oracle(&w)?;
        let y = h.dot(&r);
        let dual = w.dot(&r) + tau * tau / (4.0 * c);
        Ok((r, y, tau - 2.0 * c * y, dual))
    };

    // F grows at least as fast as tau, so one step of size |F(tau0)| brackets the root
    let tau0 = 2.0 * c * h.dot(start);
    let (r0, y0, f0, d0) = probe(tau0)?;
    if f0 == 0.0 {
        return Ok((r0, true));
    }
    let (r1, y1, f1, d1) = probe(tau0 - f0)?;
    let mut best_dual = d0.min(d1);
    let ((mut lo, mut r_lo, mut y_lo, mut f_lo), (mut hi, mut r_hi, mut y_hi, mut f_hi)) = if f0 < 0.0 {
        ((tau0, r0, y0, f0), (tau0 - f0, r1, y1, f1))
    } else {
        ((tau0 - f0, r1, y1, f1), (tau0, r0, y0, f0))
    };
    if f_lo == 0.0 {
        return Ok((r_lo, true));
    }
    if f_hi == 0.0 {
        return Ok((r_hi, true));
    }

    // best point on the segment between the two bracket solutions
    let mix = |r_lo: &RVector, y_lo: f64, r_hi: &RVector, y_hi: f64| -> RVector {
        let d = r_lo - r_hi;
        let dy = y_lo - y_hi;
        let gd = g.dot(&d);
        let theta = if dy.abs() > 0.0 {
            ((gd - 2.0 * c * dy * y_hi) / (2.0 * c * dy * dy)).clamp(0.0, 1.0)
        } else if gd > 0.0 {
            1.0
        } else {
            0.0
        };
        r_hi + d * theta
    };

    let mut side = 0i8;
    for _ in 0..100 {
        let candidate = mix(&r_lo, y_lo, &r_hi, y_hi);
        let primal = phi(&candidate);
        if best_dual - primal <= opts.inner_gap_tol * (1.0 + primal.abs()) {
            return Ok((candidate, true));
        }
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            return Ok((candidate, false));
        }
        let mut tau = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(tau > lo && tau < hi) {
            tau = 0.5 * (lo + hi);
        }
        let (r, y, f, dual) = probe(tau)?;
        best_dual = best_dual.min(dual);
        if f == 0.0 {
            return Ok((r, true));
        }
        if f < 0.0 {
            (lo, r_lo, y_lo, f_lo) = (tau, r, y, f);
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            (hi, r_hi, y_hi, f_hi) = (tau, r, y, f);
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok((mix(&r_lo, y_lo, &r_hi, y_hi), false))
}

#[derive(Debug, Clone)]
pub struct PiValue {
    pub value: f64,
    pub r: RVector,
}

/// `pi(lambda) = max_r r^T D r - lambda <r, r_hat>^2` as found by CCCP.
pub fn pi_value(
    d: &RMatrix,
    r_hat: &RVector,
    lambda: f64,
    set: &FeasibleSetApprox,
    opts: &DesignOptions,
) -> Result<PiValue> {
    let split = DcSplit::for_ratio(d, r_hat, lambda, safe_shift(d, r_hat));
    let steering = steering_candidates(set.m(), d, r_hat, opts.steering_starts);
    let best = maximize_split(&split, set, opts, &steering)?;
    Ok(PiValue { value: best.value, r: best.r })
}

#[derive(Debug, Clone)]
pub struct DinkelbachResult {
    pub r: RVector,
    pub lambda: f64,
    /// `pi` at the returned `lambda`.
    pub pi: f64,
    pub pi_zero: f64,
    pub steps: usize,
    /// Raw CCCP monotonicity violations across all inner solves.
    pub raw_violations: usize,
}

/// Root of `pi(lambda) = 0` on `[0, pi(0) / noise_var^2]` by Dinkelbach updates
/// `lambda <- ratio(r)`, safeguarded with bisection probes when progress stalls.
pub fn dinkelbach_solve(
    d: &RMatrix,
    r_hat: &RVector,
    set: &FeasibleSetApprox,
    noise_var: f64,
    opts: &DesignOptions,
) -> Result<DinkelbachResult> {
    let n = 2 * set.m() - 1;
    if d.nrows() != n || d.ncols() != n || r_hat.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: r_hat.len() });
    }
    if !(noise_var > 0.0) {
        return Err(Error::config("noise_var", "must be positive"));
    }
    let shift = safe_shift(d, r_hat);
    let ratio = |r: &RVector| -> f64 {
        let den = r.dot(r_hat);
        r.dot(&(d * r)) / (den * den)
    };
    let mut violations = 0;
    let mut probes = 0u64;
    // chain endpoints of the previous probe, kept as extra starting points
    let steering = steering_candidates(set.m(), d, r_hat, opts.steering_starts);
    let mut pool: Vec<RVector> = Vec::new();
    // fresh probes add the standard restarts to the warm starts
    let mut solve = |lambda: f64, best: &RVector, fresh: bool| -> Result<QuadraticMax> {
        let restarts = if fresh { opts.restarts } else { 0 };
        let probe_opts = DesignOptions { seed: opts.seed.wrapping_add(probes), restarts, ..opts.clone() };
        probes += 1;
        let mut warm: Vec<RVector> = if fresh { steering.clone() } else { Vec::new() };
        for cand in pool.iter().chain(std::iter::once(best)) {
            if warm.iter().all(|w| (w - cand).amax() > 1e-12) {
                warm.push(cand.clone());
            }
        }
        let res = maximize_split(&DcSplit::for_ratio(d, r_hat, lambda, shift), set, &probe_opts, &warm)?;
        violations += res.runs.iter().map(|r| r.raw_violations).sum::<usize>();
        let mut ends: Vec<&CccpRun> = res.runs.iter().collect();
        ends.sort_by(|a, b| b.value.total_cmp(&a.value));
        pool = ends.iter().take(opts.carried_starts).map(|run| run.r.clone()).collect();
        Ok(res)
    };

    let zero = solve(0.0, &AutocorrVec::unit_zero_lag(set.m()).into_vector(), true)?;
    let pi_zero = zero.value;
    if !(pi_zero > 0.0) {
        return Ok(DinkelbachResult {
            r: AutocorrVec::unit_zero_lag(set.m()).into_vector(),
            lambda: 0.0,
            pi: pi_zero.max(0.0),
            pi_zero,
            steps: 0,
            raw_violations: violations,
        });
    }
    let tol = opts.bisection_tol * pi_zero.max(1.0);
    let mut hi = pi_zero / (noise_var * noise_var);
    let mut best_r = zero.r;
    let mut lambda = ratio(&best_r).min(hi);
    let mut pi = f64::INFINITY;
    let mut steps = 0;
    let mut stalled = false;
    while steps < opts.max_bisection {
        steps += 1;
        if stalled {
            let mid = 0.5 * (lambda + hi);
            let res = solve(mid, &best_r, true)?;
            if res.value <= tol {
                hi = mid;
            } else {
                let q = ratio(&res.r);
                if q > lambda {
                    lambda = q;
                    best_r = res.r;
                }
            }
            stalled = false;
            continue;
        }
        let mut res = solve(lambda, &best_r, false)?;
        if res.value <= tol {
            // accept a root only after the restarts also fail to find a better ratio
            res = solve(lambda, &best_r, true)?;
            if res.value <= tol {
                pi = res.value;
                if ratio(&res.r) >= lambda {
                    best_r = res.r;
                }
                break;
            }
        }
        pi = res.value;
        let q = ratio(&res.r);
        if q > lambda {
            lambda = q;
            best_r = res.r;
        } else {
            stalled = true;
        }
        if hi - lambda <= 1e-12 * hi {
            break;
        }
    }
    if !(pi <= tol) {
        pi = solve(lambda, &best_r, false)?.value;
    }
    Ok(DinkelbachResult {
        r: best_r,
        lambda,
        pi,
        pi_zero,
        steps,
        raw_violations: violations,
    })
}

/// Autocorrelations of the `count` steering beams on an `8 M` grid with the largest criterion.
fn steering_candidates(m: usize, d: &RMatrix, r_hat: &RVector, count: usize) -> Vec<RVector> {
    if count == 0 {
        return Vec::new();
    }
    let grid = 8 * m;
    let mut scored: Vec<(f64, RVector)> = (0..grid)
        .map(|i| {
            let u = -1.0 + 2.0 * i as f64 / grid as f64;
            let r = autocorr(&steering_entries(u, m).unscale((m as f64).sqrt())).into_vector();
            let den = r.dot(r_hat);
            (r.dot(&(d * &r)) / (den * den), r)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().take(count).map(|(_, r)| r).collect()
}

/// Next beam and the autocorrelation it was factored from.
#[derive(Debug, Clone)]
pub struct BeamChoice {
    pub beam: CVector,
    pub autocorr: RVector,
    pub criterion: f64,
    /// Why the steering-beam fallback was used, if it was.
    pub fallback: Option<String>,
}

/// D-optimal next beam for the current information state and estimate.
pub fn next_beam(
    state: &FisherState,
    f_hat: &ToeplitzParam,
    noise_var: f64,
    set: &FeasibleSetApprox,
    opts: &DesignOptions,
) -> Result<BeamChoice> {
    let m = state.m();
    if f_hat.m() != m || set.m() != m {
        return Err(Error::DimensionMismatch { expected: m, got: f_hat.m() });
    }
    if state.count() < 2 * m - 1 {
        return Err(Error::InvalidArgument(format!(
            "beam design needs at least {} measurements, have {}",
            2 * m - 1,
            state.count()
        )));
    }
    let mut r_hat = f_hat.realify();
    r_hat[0] += noise_var;
    let d = state.inverse();
    let sol = dinkelbach_solve(d, &r_hat, set, noise_var, opts)?;

    let reason = match spectral_factor(&AutocorrVec::new(sol.r.clone())?) {
        Ok(v) => {
            let residual = (autocorr(&v).as_vector() - &sol.r).amax();
            if residual <= 1e-6 {
                let criterion = d_criterion(&sol.r, d, &r_hat, noise_var)?;
                return Ok(BeamChoice { beam: v, autocorr: sol.r, criterion, fallback: None });
            }
            format!("factorization residual {residual:.3e}")
        }
        Err(e) => e.to_string(),
    };

    let grid = opts.fallback_grid.unwrap_or(8 * m).max(1);
    let mut best: Option<(f64, CVector, RVector)> = None;
    for i in 0..grid {
        let u = -1.0 + 2.0 * i as f64 / grid as f64;
        let v = steering_entries(u, m).unscale((m as f64).sqrt());
        let r = autocorr(&v).into_vector();
        let crit = d_criterion(&r, d, &r_hat, noise_var)?;
        if best.as_ref().is_none_or(|b| crit > b.0) {
            best = Some((crit, v, r));
        }
    }
    let (criterion, beam, r) = best.expect("nonempty grid");
    Ok(BeamChoice { beam, autocorr: r, criterion, fallback: Some(reason) })
}

/// Beam pattern `<r, realify(a(u))>` of an autocorrelation vector.
pub fn beam_pattern(r: &RVector, u: f64) -> f64 {
    trig_poly(r, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::Rng;

    fn gaussian_unit(rng: &mut ChaCha8Rng, m: usize) -> CVector {
        CVector::from_fn(m, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        })
        .normalize()
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> RMatrix {
        let b = RMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        &b * b.transpose()
    }

    #[test]
    fn rank_one_fim_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = 5;
        let f = ToeplitzParam::unit(m).scaled(2.0);
        let v = gaussian_unit(&mut rng, m);
        let fim = fim_rank_one(&v, &f, 0.5).unwrap();
        let sv = fim.clone().singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[1] < 1e-12 * s[0]);
        let a = autocorr(&v);
        let mu = 0.5 + a.as_vector().dot(&f.realify());
        assert!((fim.trace() - a.as_vector().norm_squared() / (mu * mu)).abs() < 1e-12);
    }

    #[test]
    fn accumulation_grows_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 4;
        let f = ToeplitzParam::unit(m);
        let mut state = FisherState::new(m).unwrap();
        assert_eq!(state.inverse(), &RMatrix::identity(7, 7));
        state.accumulate(&RMatrix::zeros(7, 7)).unwrap();
        assert_eq!(state.fim(), &RMatrix::zeros(7, 7));
        for _ in 0..2 * m - 1 {
            let before = state.fim().clone();
            let v = gaussian_unit(&mut rng, m);
            state.accumulate(&fim_rank_one(&v, &f, 1.0).unwrap()).unwrap();
            for _ in 0..100 {
                let x = RVector::from_fn(7, |_, _| rng.sample::<f64, _>(StandardNormal));
                assert!(x.dot(&(state.fim() * &x)) >= x.dot(&(&before * &x)) - 1e-14);
            }
        }
        let eig = state.fim().symmetric_eigenvalues();
        assert!(eig.min() > 1e-8 * eig.max(), "rank deficient: {eig}");
        assert!(state.accumulate(&RMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn inverse_matches_ridge_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = FisherState::new(3).unwrap();
        state.accumulate(&random_psd(&mut rng, 5, 5)).unwrap();
        let eps = state.ridge();
        let reg = state.fim() + RMatrix::identity(5, 5) * eps;
        assert!((&reg * state.inverse() - RMatrix::identity(5, 5)).amax() < 1e-9);
    }

    #[test]
    fn membership_soundness() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 6;
        let sets = [
            FeasibleSetApprox::autocorrelation(m).unwrap(),
            FeasibleSetApprox::grid_halfspaces(m, 8 * m).unwrap(),
            FeasibleSetApprox::toeplitz_embed(m, m).unwrap(),
            FeasibleSetApprox::toeplitz_embed(m, 3 * m).unwrap(),
        ];
        for _ in 0..1000 {
            let r = random_feasible(m, &mut rng);
            for s in &sets {
                assert!(s.contains(&r), "{:?}", s.kind());
            }
        }
        let mut bad = RVector::zeros(2 * m - 1);
        bad[0] = 1.0;
        bad[1] = 3.0;
        for s in &sets {
            assert!(!s.contains(&bad), "{:?}", s.kind());
        }
    }

    #[test]
    fn embed_orders_nest() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 4;
        let small = FeasibleSetApprox::toeplitz_embed(m, 6).unwrap();
        let large = FeasibleSetApprox::toeplitz_embed(m, 14).unwrap();
        let mut inside_small_only = 0;
        for _ in 0..2000 {
            let mut r = RVector::from_fn(2 * m - 1, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            r[0] = 1.0;
            if large.contains(&r) {
                assert!(small.contains(&r));
            } else if small.contains(&r) {
                inside_small_only += 1;
            }
        }
        assert!(inside_small_only > 0);
    }

    #[test]
    fn oracles_maximize_over_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = 3;
        let exact = FeasibleSetApprox::autocorrelation(m).unwrap();
        let grid = FeasibleSetApprox::grid_halfspaces(m, 8 * m).unwrap();
        let embed = FeasibleSetApprox::toeplitz_embed(m, m).unwrap();
        assert!(matches!(embed.linear_oracle(&RVector::zeros(5)), Err(Error::NoLinearOracle(_))));
        for _ in 0..20 {
            let w = RVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let re = exact.linear_oracle(&w).unwrap();
            let rg = grid.linear_oracle(&w).unwrap();
            assert!(exact.contains(&re));
            assert!(grid.contains(&rg));
            // the grid set contains the exact set
            assert!(w.dot(&rg) >= w.dot(&re) - 1e-9);
            for _ in 0..200 {
                let s = random_feasible(m, &mut rng);
                assert!(w.dot(&re) >= w.dot(&s) - 1e-12);
            }
        }
    }

    #[test]
    fn strictly_concave_quadratic_picks_first_unit_vector() {
        for kind in [FeasibleKind::Autocorrelation, FeasibleKind::GridHalfspaces { grid: 40 }] {
            let set = FeasibleSetApprox::new(kind, 5).unwrap();
            let res = max_indefinite_quadratic(&-RMatrix::identity(9, 9), &set, &DesignOptions::default()).unwrap();
            assert!((res.value + 1.0).abs() < 1e-8, "{kind:?}: {}", res.value);
            assert!((res.r.clone() - AutocorrVec::unit_zero_lag(5).into_vector()).amax() < 1e-4);
        }
    }

    #[test]
    fn criterion_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 4;
        let f = ToeplitzParam::unit(m).scaled(0.7);
        let mut r_hat = f.realify();
        r_hat[0] += 0.3;
        let d = &r_hat * r_hat.transpose() * 2.5;
        for _ in 0..20 {
            let r = random_feasible(m, &mut rng);
            assert!((d_criterion(&r, &d, &r_hat, 0.3).unwrap() - 2.5).abs() < 1e-12);
            assert_eq!(d_criterion(&r, &RMatrix::zeros(7, 7), &r_hat, 0.3).unwrap(), 0.0);
        }
        let bad = RVector::zeros(7);
        assert!(matches!(d_criterion(&bad, &d, &r_hat, 0.3), Err(Error::InfeasibleDesign { .. })));
    }

    #[test]
    fn constant_ratio_solves_exactly() {
        let m = 3;
        let set = FeasibleSetApprox::autocorrelation(m).unwrap();
        let mut r_hat = ToeplitzParam::unit(m).realify();
        r_hat[0] += 1.0;
        let d = &r_hat * r_hat.transpose() * 4.0;
        let res = dinkelbach_solve(&d, &r_hat, &set, 1.0, &DesignOptions::default()).unwrap();
        assert!((res.lambda - 4.0).abs() < 1e-6, "{}", res.lambda);
    }

    #[test]
    fn degenerate_information_returns_first_unit_vector() {
        let set = FeasibleSetApprox::autocorrelation(3).unwrap();
        let r_hat = AutocorrVec::unit_zero_lag(3).into_vector();
        let res = dinkelbach_solve(&RMatrix::zeros(5, 5), &r_hat, &set, 1.0, &DesignOptions::default()).unwrap();
        assert_eq!(res.lambda, 0.0);
        assert_eq!(res.r, r_hat);
    }

    #[test]
    fn safe_shift_keeps_convex_part_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let d = random_psd(&mut rng, 7, 7);
            let r_hat = random_feasible(4, &mut rng) * 3.0;
            let s = safe_shift(&d, &r_hat);
            assert!(s > 0.0);
            let p = &d - &r_hat * r_hat.transpose() * s;
            let eig = p.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-9 * eig.max().abs(), "{}", eig.min());
            // not much slack left
            let p2 = &d - &r_hat * r_hat.transpose() * (s * 1.01);
            assert!(p2.symmetric_eigenvalues().min() < 0.0);
        }
    }

    #[test]
    fn next_beam_beats_steering_beams() {
        let m = 6;
        let grid = crate::ml::AtomicGrid::uniform(m, 8 * m).unwrap();
        let mut w = RVector::zeros(8 * m);
        w[13] = 5.0;
        let f_hat = grid.f_from_weights(&w);
        let mut state = FisherState::new(m).unwrap();
        let n = 2 * m - 1;
        for _ in 0..n {
            state.add_unrefreshed(&RMatrix::zeros(n, n)).unwrap();
        }
        state.inverse = RMatrix::identity(n, n);
        let set = FeasibleSetApprox::autocorrelation(m).unwrap();
        let choice = next_beam(&state, &f_hat, 1.0, &set, &DesignOptions::default()).unwrap();
        assert!(choice.fallback.is_none());
        assert!((choice.beam.norm() - 1.0).abs() < 1e-12);
        assert!((autocorr(&choice.beam).as_vector() - &choice.autocorr).amax() < 1e-6);
        let mut r_hat = f_hat.realify();
        r_hat[0] += 1.0;
        for k in 0..m {
            let u = -1.0 + 2.0 * k as f64 / m as f64;
            let r = autocorr(&crate::array::steering(u, m).unwrap().normalized()).into_vector();
            let c = d_criterion(&r, state.inverse(), &r_hat, 1.0).unwrap();
            assert!(choice.criterion >= c - 1e-9, "u = {u}: {c} > {}", choice.criterion);
        }
        let again = next_beam(&state, &f_hat, 1.0, &set, &DesignOptions::default()).unwrap();
        assert_eq!(again.beam, choice.beam);
    }

    #[test]
    fn next_beam_requires_initial_phase() {
        let state = FisherState::new(3).unwrap();
        let set = FeasibleSetApprox::autocorrelation(3).unwrap();
        let err = next_beam(&state, &ToeplitzParam::unit(3), 1.0, &set, &DesignOptions::default());
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
