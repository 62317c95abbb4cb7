mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asl_core::channel::{Scenario, ScenarioConfig};
use asl_core::experiments::{
    run_comparison, summarize, write_outputs, AdaptiveOptions, AlgorithmSelection, RunManifest, RunSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "asl", version, about = "Adaptive beam design experiments for channel subspace estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected algorithms on one scenario and write CSVs plus a manifest.
    Run {
        /// Scenario JSON file.
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Repeat a run for several SNR values and write a combined summary.
    SweepSnr {
        config: PathBuf,
        /// Comma-separated SNR values in dB, e.g. "0,-10,-20".
        #[arg(long, allow_hyphen_values = true)]
        snrs: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Render result CSVs as an SVG chart.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = plot::Kind::Gamma)]
        kind: plot::Kind,
    },
    /// Eigenvalues of a scenario's channel covariance as `index,eigenvalue` CSV.
    Spectrum {
        config: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the spec stored in a manifest.
    Replay {
        manifest: PathBuf,
        /// Defaults to the manifest's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Adaptive,
    Exhaustive,
    Both,
}

impl From<Algo> for AlgorithmSelection {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Adaptive => AlgorithmSelection::Adaptive,
            Algo::Exhaustive => AlgorithmSelection::Exhaustive,
            Algo::Both => AlgorithmSelection::Both,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = Algo::Both)]
    algo: Algo,
    /// Number of snapshots per trial.
    #[arg(long = "T", default_value_t = 400)]
    horizon: usize,
    /// Dimension of the estimated subspace.
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Seed of the first repetition; defaults to the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl RunArgs {
    fn spec(&self, scenario: ScenarioConfig) -> Result<RunSpec> {
        let spec = RunSpec {
            seed: self.seed.unwrap_or(scenario.seed),
            scenario,
            algorithms: self.algo.into(),
            horizon: self.horizon,
            p: self.p,
            repetitions: self.reps,
            adaptive: AdaptiveOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: ScenarioConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn threads() -> Result<Option<usize>> {
    match std::env::var("ASL_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("ASL_THREADS must be a positive integer, got {s:?}"),
        },
        Err(_) => Ok(None),
    }
}

fn cmd_run(config: &Path, args: &RunArgs) -> Result<()> {
    let spec = args.spec(load_config(config)?)?;
    let cmp = run_comparison(&spec, threads()?)?;
    let (manifest, path) = write_outputs(&spec, &cmp, &args.out_dir)?;
    for name in &manifest.outputs {
        println!("{}", args.out_dir.join(name).display());
    }
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepManifest {
    snrs_db: Vec<f64>,
    seed: u64,
    runs: Vec<String>,
    summary: String,
}

fn parse_snrs(list: &str) -> std::result::Result<Vec<f64>, String> {
    let items: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err("--snrs needs at least one value".into());
    }
    items
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| format!("--snrs: {s:?} is not a number")))
        .collect()
}

fn cmd_sweep(config: &Path, snrs: &[f64], args: &RunArgs) -> Result<()> {
    let base = load_config(config)?;
    let threads = threads()?;
    let mut runs = Vec::new();
    let mut columns: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut seed = 0;
    for &snr in snrs {
        let spec = args.spec(ScenarioConfig { snr_db: Some(snr), ..base.clone() })?;
        seed = spec.seed;
        let cmp = run_comparison(&spec, threads)?;
        let (manifest, path) = write_outputs(&spec, &cmp, &args.out_dir)?;
        for algo in spec.algorithms.algorithms() {
            let label = format!("{}_{}db", algo.name(), manifest.snr_label);
            columns.push((label, summarize(cmp.traces(algo))));
        }
        for name in &manifest.outputs {
            println!("{}", args.out_dir.join(name).display());
        }
        println!("{}", path.display());
        runs.push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }

    let mut csv = String::from("t");
    for (label, _) in &columns {
        let _ = write!(csv, ",mean_{label},std_{label}");
    }
    csv.push('\n');
    for t in 0..args.horizon {
        let _ = write!(csv, "{}", t + 1);
        for (_, series) in &columns {
            let (mean, std) = series[t];
            let _ = write!(csv, ",{mean},{std}");
        }
        csv.push('\n');
    }
    let summary = format!("sweep_{seed}.csv");
    let summary_path = args.out_dir.join(&summary);
    std::fs::write(&summary_path, csv).with_context(|| format!("cannot write {}", summary_path.display()))?;
    println!("{}", summary_path.display());

    let manifest = SweepManifest { snrs_db: snrs.to_vec(), seed, runs, summary };
    let path = args.out_dir.join(format!("sweep_manifest_{seed}.json"));
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_spectrum(config: &Path, out: Option<&Path>) -> Result<()> {
    let scenario = Scenario::from_config(&load_config(config)?)?;
    let mut csv = String::from("index,eigenvalue\n");
    for (i, value) in scenario.covariance.signal_spectrum().iter().enumerate() {
        let _ = writeln!(csv, "{},{}", i + 1, value);
    }
    match out {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_replay(manifest_path: &Path, out_dir: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(manifest_path)
        .with_context(|| format!("cannot read manifest {}", manifest_path.display()))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", manifest_path.display()))?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => manifest_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let cmp = run_comparison(&manifest.spec, threads()?)?;
    let (written, path) = write_outputs(&manifest.spec, &cmp, &dir)?;
    for name in &written.outputs {
        println!("{}", dir.join(name).display());
    }
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, run } => cmd_run(config, run),
        Command::SweepSnr { config, snrs, run } => match parse_snrs(snrs) {
            Ok(list) => cmd_sweep(config, &list, run),
            Err(msg) => {
                use clap::CommandFactory;
                Cli::command().error(clap::error::ErrorKind::ValueValidation, msg).exit()
            }
        },
        Command::Plot { csv, out, kind } => plot::render(csv, out, *kind),
        Command::Spectrum { config, out } => cmd_spectrum(config, out.as_deref()),
        Command::Replay { manifest, out_dir } => cmd_replay(manifest, out_dir.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
