//! End-to-end trials: the adaptive design loop, the exhaustive angular sweep,
//! subspace metrics against the true covariance, and reproducible CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::{autocorr, steering_entries, AutocorrVec, CMatrix, CVector, ToeplitzParam};
use crate::channel::{Scenario, ScenarioConfig};
use crate::design::{fim_rank_one_autocorr, next_beam, DesignOptions, FeasibleKind, FeasibleSetApprox, FisherState};
use crate::error::{Error, Result};
use crate::measurement::take_measurement;
use crate::ml::{MlOptions, MlProblem};

/// Columns are the `p` leading eigenvectors of the Hermitian `c`.
pub fn dominant_subspace(c: &CMatrix, p: usize) -> Result<CMatrix> {
    let m = c.nrows();
    if c.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: c.ncols() });
    }
    if p == 0 || p > m {
        return Err(Error::config("p", format!("must lie in 1..={m}")));
    }
    let eig = SymmetricEigen::new(c.clone());
    let order = descending_order(eig.eigenvalues.as_slice());
    Ok(CMatrix::from_fn(m, p, |i, j| eig.eigenvectors[(i, order[j])]))
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// `Re tr(U^H C U)`.
pub fn captured_power(c: &CMatrix, u: &CMatrix) -> f64 {
    (u.adjoint() * c * u).trace().re
}

fn top_eigen_sum(c: &CMatrix, p: usize) -> f64 {
    let mut vals: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.iter().take(p).sum()
}

/// Share of the total power captured by the best `p`-dimensional subspace.
pub fn efficiency_eta(c: &CMatrix, p: usize) -> Result<f64> {
    let m = c.nrows();
    if p == 0 || p > m {
        return Err(Error::config("p", format!("must lie in 1..={m}")));
    }
    if p == m {
        return Ok(1.0);
    }
    Ok(top_eigen_sum(c, p) / c.trace().re)
}

/// Power captured by `u_hat` relative to the best `p`-dimensional subspace of `c_true`.
pub fn gamma_metric(c_true: &CMatrix, u_hat: &CMatrix) -> Result<f64> {
    let m = c_true.nrows();
    if u_hat.nrows() != m {
        return Err(Error::DimensionMismatch { expected: m, got: u_hat.nrows() });
    }
    let p = u_hat.ncols();
    if p == 0 || p > m {
        return Err(Error::config("p", format!("must lie in 1..={m}")));
    }
    let gram = u_hat.adjoint() * u_hat - CMatrix::identity(p, p);
    let residual = gram.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual > 1e-6 {
        return Err(Error::NotOrthonormal(residual));
    }
    Ok(captured_power(c_true, u_hat) / top_eigen_sum(c_true, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Adaptive,
    Exhaustive,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adaptive => "adaptive",
            Algorithm::Exhaustive => "exhaustive",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based snapshot index.
    pub t: usize,
    /// Bin label for sweep beams, content hash for designed beams.
    pub beam: String,
    pub value: f64,
    pub gamma: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub scenario_fingerprint: String,
    pub p: usize,
    pub rows: Vec<TraceRow>,
}

impl ExperimentTrace {
    pub fn gammas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gamma).collect()
    }

    pub fn warning_count(&self) -> usize {
        self.rows.iter().filter(|r| r.warning.is_some()).count()
    }

    /// `t,beam,value,gamma,warning`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beam,value,gamma,warning\n");
        for r in &self.rows {
            let warning = r.warning.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(out, "{},{},{},{},{}", r.t, r.beam, r.value, r.gamma, warning);
        }
        out
    }
}

/// sha256 of the scenario's JSON form, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("serializable config");
    hex(&Sha256::digest(json.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn beam_hash(v: &CVector) -> String {
    let mut h = Sha256::new();
    for z in v.iter() {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    hex(&h.finalize()[..8])
}

/// Snapshot and beam generators of one trial. Both algorithms draw their
/// snapshots from the same stream, so they see identical channel realizations.
fn trial_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut snapshots = ChaCha8Rng::seed_from_u64(seed);
    snapshots.set_stream(0);
    let mut beams = ChaCha8Rng::seed_from_u64(seed);
    beams.set_stream(1);
    (snapshots, beams)
}

fn gaussian_beam(rng: &mut ChaCha8Rng, m: usize) -> CVector {
    loop {
        let v = CVector::from_fn(m, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        });
        let n = v.norm();
        if n > 0.0 {
            return v.unscale(n);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveOptions {
    pub ml: MlOptions,
    pub design: DesignOptions,
    pub feasible_set: FeasibleKind,
    /// Rebuild the Fisher information from all beams at the current estimate
    /// every this many snapshots; rank-one updates in between.
    pub fim_refresh: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            ml: MlOptions::default(),
            design: DesignOptions::default(),
            feasible_set: FeasibleKind::Autocorrelation,
            fim_refresh: 10,
        }
    }
}

fn check_run(cfg: &ScenarioConfig, horizon: usize, p: usize) -> Result<()> {
    cfg.validate()?;
    if horizon == 0 {
        return Err(Error::config("T", "must be at least 1"));
    }
    if p == 0 || p > cfg.m {
        return Err(Error::config("p", format!("must lie in 1..={}", cfg.m)));
    }
    Ok(())
}

/// Adaptive design loop: `2M - 1` random beams, then D-optimal beams designed
/// from the running ML estimate. Row `t` reports the subspace of the estimate
/// built from the first `t` measurements.
pub fn run_adaptive(
    cfg: &ScenarioConfig,
    horizon: usize,
    p: usize,
    seed: u64,
    opts: &AdaptiveOptions,
) -> Result<ExperimentTrace> {
    check_run(cfg, horizon, p)?;
    let m = cfg.m;
    let initial = 2 * m - 1;
    if horizon < initial {
        return Err(Error::config(
            "T",
            format!("adaptive runs need T >= 2M - 1 = {initial} for the random initial phase, got {horizon}"),
        ));
    }
    if opts.fim_refresh == 0 {
        return Err(Error::config("fim_refresh", "must be at least 1"));
    }
    let scenario = Scenario::from_config(cfg)?;
    let truth = &scenario.covariance;
    let noise_var = truth.noise_var();
    let set = FeasibleSetApprox::new(opts.feasible_set, m)?;
    let mut problem = MlProblem::new(opts.ml.grid_for(m)?, noise_var)?;
    let (mut snap_rng, mut beam_rng) = trial_rngs(seed);

    let mut beams: Vec<AutocorrVec> = Vec::with_capacity(horizon);
    let mut weights = None;
    let mut f_hat = ToeplitzParam::zeros(m);
    let mut state = FisherState::new(m)?;
    let mut rows = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        let mut warnings: Vec<String> = Vec::new();
        let v = if t <= initial {
            gaussian_beam(&mut beam_rng, m)
        } else {
            match next_beam(&state, &f_hat, noise_var, &set, &opts.design) {
                Ok(choice) => {
                    if let Some(reason) = choice.fallback {
                        warnings.push(format!("steering fallback: {reason}"));
                    }
                    choice.beam
                }
                Err(e) => {
                    warnings.push(format!("design failed, random beam used: {e}"));
                    gaussian_beam(&mut beam_rng, m)
                }
            }
        };
        let y = truth.sample_snapshot(&mut snap_rng);
        let value = take_measurement(&v, &y)?;
        let r = autocorr(&v);
        problem.push(&r, value);
        beams.push(r);

        match problem.estimate(weights.as_ref(), &opts.ml) {
            Ok(est) => {
                if est.inner_warnings > 0 {
                    warnings.push(format!("ml inner solver capped in {} steps", est.inner_warnings));
                }
                f_hat = est.f;
                weights = Some(est.rep.weights().clone());
            }
            Err(e) => warnings.push(format!("ml estimate kept: {e}")),
        }

        if t == initial || t % opts.fim_refresh == 0 {
            state = FisherState::from_beams(m, beams.iter(), &f_hat, noise_var)?;
        } else {
            let last = beams.last().expect("just pushed");
            state.accumulate(&fim_rank_one_autocorr(last, &f_hat.realify(), noise_var)?)?;
        }

        let mut c_hat = f_hat.toeplitz();
        for i in 0..m {
            c_hat[(i, i)] += Complex64::new(noise_var, 0.0);
        }
        let u_hat = dominant_subspace(&c_hat, p)?;
        let gamma = gamma_metric(truth.matrix(), &u_hat)?;
        rows.push(TraceRow {
            t,
            beam: beam_hash(&v),
            value,
            gamma,
            warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
        });
    }
    Ok(ExperimentTrace {
        algorithm: Algorithm::Adaptive,
        seed,
        scenario_fingerprint: config_hash(cfg),
        p,
        rows,
    })
}

/// Bin centres `-theta_max + 2 i theta_max / M` in degrees.
pub fn sweep_bins(cfg: &ScenarioConfig) -> Vec<f64> {
    let m = cfg.m;
    (0..m)
        .map(|i| -cfg.theta_max_deg + 2.0 * i as f64 * cfg.theta_max_deg / m as f64)
        .collect()
}

/// Orthonormal basis of the steering vectors at the given normalized angles.
fn steering_basis(us: &[f64], m: usize) -> CMatrix {
    let a = CMatrix::from_fn(m, us.len(), |i, j| steering_entries(us[j], m)[i]);
    a.qr().q()
}

/// Exhaustive sweep: bin `t mod M` at snapshot `t`, per-bin running mean power,
/// and the top-`p` bins re-selected after every completed sweep.
pub fn run_exhaustive(cfg: &ScenarioConfig, horizon: usize, p: usize, seed: u64) -> Result<ExperimentTrace> {
    check_run(cfg, horizon, p)?;
    let m = cfg.m;
    let scenario = Scenario::from_config(cfg)?;
    let truth = &scenario.covariance;
    let us: Vec<f64> = sweep_bins(cfg).iter().map(|&th| cfg.angle_to_u(th)).collect();
    let beams: Vec<CVector> = us.iter().map(|&u| steering_entries(u, m).unscale((m as f64).sqrt())).collect();
    let (mut snap_rng, _) = trial_rngs(seed);

    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    let mut u_hat: Option<CMatrix> = None;
    let mut rows = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let bin = (t - 1) % m;
        let y = truth.sample_snapshot(&mut snap_rng);
        let value = take_measurement(&beams[bin], &y)?;
        sums[bin] += value;
        counts[bin] += 1;

        if t % m == 0 || t < m {
            // visited bins by decreasing mean power, unvisited bins last, ties by index
            let mut order: Vec<usize> = (0..m).collect();
            let score = |i: usize| if counts[i] > 0 { sums[i] / counts[i] as f64 } else { f64::NEG_INFINITY };
            order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
            let chosen: Vec<f64> = order[..p].iter().map(|&i| us[i]).collect();
            u_hat = Some(steering_basis(&chosen, m));
        }
        let gamma = gamma_metric(truth.matrix(), u_hat.as_ref().expect("set on the first snapshot"))?;
        rows.push(TraceRow { t, beam: format!("bin{bin}"), value, gamma, warning: None });
    }
    Ok(ExperimentTrace {
        algorithm: Algorithm::Exhaustive,
        seed,
        scenario_fingerprint: config_hash(cfg),
        p,
        rows,
    })
}

/// Per-snapshot mean and population standard deviation of `gamma` over traces.
pub fn summarize(traces: &[ExperimentTrace]) -> Vec<(f64, f64)> {
    let Some(first) = traces.first() else { return Vec::new() };
    let n = traces.len() as f64;
    (0..first.rows.len())
        .map(|i| {
            let mean = traces.iter().map(|t| t.rows[i].gamma).sum::<f64>() / n;
            let var = traces.iter().map(|t| (t.rows[i].gamma - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmSelection {
    Adaptive,
    Exhaustive,
    Both,
}

impl AlgorithmSelection {
    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgorithmSelection::Adaptive => vec![Algorithm::Adaptive],
            AlgorithmSelection::Exhaustive => vec![Algorithm::Exhaustive],
            AlgorithmSelection::Both => vec![Algorithm::Adaptive, Algorithm::Exhaustive],
        }
    }
}

/// Everything needed to reproduce one batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub scenario: ScenarioConfig,
    pub algorithms: AlgorithmSelection,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub p: usize,
    pub repetitions: usize,
    /// Repetition `i` uses seed `seed + i`.
    pub seed: u64,
    #[serde(default)]
    pub adaptive: AdaptiveOptions,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        check_run(&self.scenario, self.horizon, self.p)?;
        if self.repetitions == 0 {
            return Err(Error::config("repetitions", "must be at least 1"));
        }
        let initial = 2 * self.scenario.m - 1;
        if self.algorithms != AlgorithmSelection::Exhaustive && self.horizon < initial {
            return Err(Error::config(
                "T",
                format!(
                    "adaptive runs need T >= 2M - 1 = {initial} for the random initial phase, got {}",
                    self.horizon
                ),
            ));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// SNR label used in file names: the configured value, or the realized one to 0.1 dB.
    pub fn snr_label(&self) -> Result<String> {
        Ok(match self.scenario.snr_db {
            Some(s) => format!("{s}"),
            None => {
                let sc = Scenario::from_config(&self.scenario)?;
                format!("{:.1}", 10.0 * sc.covariance.snr().log10())
            }
        })
    }
}

/// Traces of every repetition, ordered by repetition index.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub adaptive: Vec<ExperimentTrace>,
    pub exhaustive: Vec<ExperimentTrace>,
}

impl Comparison {
    pub fn traces(&self, algorithm: Algorithm) -> &[ExperimentTrace] {
        match algorithm {
            Algorithm::Adaptive => &self.adaptive,
            Algorithm::Exhaustive => &self.exhaustive,
        }
    }

    /// `t,mean_<algo>,std_<algo>`
    pub fn series_csv(&self, algorithm: Algorithm) -> String {
        let name = algorithm.name();
        let mut out = format!("t,mean_{name},std_{name}\n");
        for (i, (mean, std)) in summarize(self.traces(algorithm)).iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, mean, std);
        }
        out
    }

    /// `t,mean_adaptive,std_adaptive,mean_exhaustive,std_exhaustive`
    pub fn comparison_csv(&self) -> String {
        let a = summarize(&self.adaptive);
        let e = summarize(&self.exhaustive);
        let mut out = String::from("t,mean_adaptive,std_adaptive,mean_exhaustive,std_exhaustive\n");
        for (i, ((ma, sa), (me, se))) in a.iter().zip(&e).enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", i + 1, ma, sa, me, se);
        }
        out
    }
}

/// Runs every repetition of the selected algorithms, in parallel over at most
/// `threads` workers (all available cores when `None`).
pub fn run_comparison(spec: &RunSpec, threads: Option<usize>) -> Result<Comparison> {
    spec.validate()?;
    let algos = spec.algorithms.algorithms();
    let jobs: Vec<(Algorithm, u64)> = algos
        .iter()
        .flat_map(|&a| spec.seeds().into_iter().map(move |s| (a, s)))
        .collect();
    let run = |&(algo, seed): &(Algorithm, u64)| match algo {
        Algorithm::Adaptive => run_adaptive(&spec.scenario, spec.horizon, spec.p, seed, &spec.adaptive),
        Algorithm::Exhaustive => run_exhaustive(&spec.scenario, spec.horizon, spec.p, seed),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<ExperimentTrace>> = pool.install(|| jobs.par_iter().map(run).collect());
    let mut cmp = Comparison { adaptive: Vec::new(), exhaustive: Vec::new() };
    for res in results {
        let trace = res?;
        match trace.algorithm {
            Algorithm::Adaptive => cmp.adaptive.push(trace),
            Algorithm::Exhaustive => cmp.exhaustive.push(trace),
        }
    }
    Ok(cmp)
}

/// Written next to the CSVs of one run; re-running its `spec` reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub spec: RunSpec,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub snr_label: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn file_name(spec: &RunSpec) -> Result<String> {
        Ok(format!("manifest_{}db_{}.json", spec.snr_label()?, spec.seed))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs `spec` and writes `{algo}_{snr}db_{seed}.csv` for each algorithm,
/// `comparison_{snr}db_{seed}.csv` when both ran, and the manifest.
pub fn execute(spec: &RunSpec, out_dir: &Path, threads: Option<usize>) -> Result<(RunManifest, PathBuf)> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cmp = run_comparison(spec, threads)?;
    write_outputs(spec, &cmp, out_dir)
}

/// Writes the CSVs and manifest of an already computed comparison.
pub fn write_outputs(spec: &RunSpec, cmp: &Comparison, out_dir: &Path) -> Result<(RunManifest, PathBuf)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let snr = spec.snr_label()?;
    let mut outputs = Vec::new();
    for algo in spec.algorithms.algorithms() {
        let name = format!("{}_{}db_{}.csv", algo.name(), snr, spec.seed);
        write_file(&out_dir.join(&name), &cmp.series_csv(algo))?;
        outputs.push(name);
    }
    if spec.algorithms == AlgorithmSelection::Both {
        let name = format!("comparison_{}db_{}.csv", snr, spec.seed);
        write_file(&out_dir.join(&name), &cmp.comparison_csv())?;
        outputs.push(name);
    }
    let manifest = RunManifest {
        spec: spec.clone(),
        config_hash: config_hash(spec),
        seeds: spec.seeds(),
        snr_label: snr,
        outputs,
    };
    let path = out_dir.join(RunManifest::file_name(spec)?);
    let json = serde_json::to_string_pretty(&manifest)?;
    write_file(&path, &(json + "\n"))?;
    Ok((manifest, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PointScatterer;

    fn real_diag(d: &[f64]) -> CMatrix {
        CMatrix::from_fn(d.len(), d.len(), |i, j| if i == j { d[i].into() } else { 0.0.into() })
    }

    #[test]
    fn diagonal_subspace() {
        let c = real_diag(&[3.0, 2.0, 1.0]);
        let u = dominant_subspace(&c, 2).unwrap();
        assert!((captured_power(&c, &u) - 5.0).abs() < 1e-12);
        assert!(u[(2, 0)].norm() < 1e-12 && u[(2, 1)].norm() < 1e-12);
        let full = dominant_subspace(&c, 3).unwrap();
        assert!((captured_power(&c, &full) - 6.0).abs() < 1e-12);
        assert!(dominant_subspace(&c, 0).is_err());
        assert!(dominant_subspace(&c, 4).is_err());
    }

    #[test]
    fn eta_edge_cases() {
        let c = CMatrix::identity(5, 5);
        assert!((efficiency_eta(&c, 2).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(efficiency_eta(&real_diag(&[4.0, 1.0]), 2).unwrap(), 1.0);
    }

    #[test]
    fn gamma_of_trailing_subspace() {
        let c = real_diag(&[10.0, 5.0, 1.0, 0.5]);
        let trailing = CMatrix::from_fn(4, 2, |i, j| if i == j + 2 { 1.0.into() } else { 0.0.into() });
        assert!((gamma_metric(&c, &trailing).unwrap() - 1.5 / 15.0).abs() < 1e-12);
        let best = dominant_subspace(&c, 2).unwrap();
        assert!((gamma_metric(&c, &best).unwrap() - 1.0).abs() < 1e-12);
        let not_orth = CMatrix::from_element(4, 1, 1.0.into());
        assert!(matches!(gamma_metric(&c, &not_orth), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn sweep_bins_follow_the_partition() {
        let cfg = ScenarioConfig::two_cluster(4, 0.0);
        assert_eq!(sweep_bins(&cfg), vec![-90.0, -45.0, 0.0, 45.0]);
    }

    #[test]
    fn exhaustive_full_span_after_first_sweep() {
        let cfg = ScenarioConfig::two_cluster(6, 0.0);
        let trace = run_exhaustive(&cfg, 20, 6, 3).unwrap();
        for row in &trace.rows[5..] {
            assert!((row.gamma - 1.0).abs() < 1e-9);
        }
        assert_eq!(trace.rows.len(), 20);
        assert_eq!(trace.rows[7].beam, "bin1");
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = ScenarioConfig {
            point_masses: vec![PointScatterer { theta_deg: 20.0, variance: 1.0 }],
            segments: Vec::new(),
            ..ScenarioConfig::two_cluster(4, 10.0)
        };
        let opts = AdaptiveOptions::default();
        let a = run_adaptive(&cfg, 12, 1, 5, &opts).unwrap();
        let b = run_adaptive(&cfg, 12, 1, 5, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        for row in &a.rows {
            assert!((0.0..=1.0 + 1e-9).contains(&row.gamma));
        }
    }

    #[test]
    fn adaptive_rejects_short_horizons() {
        let cfg = ScenarioConfig::two_cluster(20, 0.0);
        let err = run_adaptive(&cfg, 5, 2, 0, &AdaptiveOptions::default()).unwrap_err();
        assert!(err.to_string().contains("T"), "{err}");
    }

    #[test]
    fn single_repetition_has_zero_spread() {
        let spec = RunSpec {
            scenario: ScenarioConfig::two_cluster(3, 0.0),
            algorithms: AlgorithmSelection::Exhaustive,
            horizon: 9,
            p: 1,
            repetitions: 1,
            seed: 4,
            adaptive: AdaptiveOptions::default(),
        };
        let cmp = run_comparison(&spec, Some(1)).unwrap();
        let csv = cmp.series_csv(Algorithm::Exhaustive);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,mean_exhaustive,std_exhaustive");
        assert_eq!(lines.len(), 10);
        for l in &lines[1..] {
            assert!(l.ends_with(",0"), "{l}");
        }
    }
}
