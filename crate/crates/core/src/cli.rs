//! Command-line entry points: `fit`, `simulate`, and `summarize`, plus the
//! CSV/JSON input and output formats they share.
//!
//! Input CSV schema: header `time,event,x1..xp`, one observation per row,
//! positive decimal times, 0/1 events, `#` starts a comment line. Output
//! formats: one JSON snapshot per line in `samples.jsonl` so consumers can
//! stream, CSV for tabular summaries, JSON for structured reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::engine::{self, DiagnosticsReport, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::{standardize_with, ColumnStats, Dataset, ModelState, PriorConfig, RawData};
use crate::oracle;
use crate::postprocess::{
    self, apply_ordering, pooled_submodel_probabilities, CurvePoint, MeanSurvival, SubmodelProb,
};
use crate::survdist::DistKind;

/// Top-level configuration file: prior hyperparameters plus sampler settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Parser)]
#[command(
    name = "polyhazard",
    version,
    about = "Model-averaged polyhazard survival analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a CSV dataset and write posterior output.
    Fit(FitArgs),
    /// Generate synthetic survival data in the fit input schema.
    Simulate(SimulateArgs),
    /// Summarize a fit output directory into survival and hazard reports.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV (header `time,event,x1..xp`).
    #[arg(long)]
    pub data: PathBuf,
    /// JSON configuration file; missing fields take defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured chain count.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generator name: `supplement` or `weibull`.
    #[arg(long)]
    pub gen: String,
    #[arg(long)]
    pub n: usize,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Weibull shape (weibull generator only).
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    /// Weibull rate (weibull generator only).
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Exponential censoring rate; 0 disables censoring.
    #[arg(long, default_value_t = 0.0)]
    pub censor_rate: f64,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Fit output directory.
    #[arg(long)]
    pub run: PathBuf,
    /// JSON covariate profile on the original scale, e.g. `{"x1": 1.0}`.
    /// Missing covariates sit at the sample mean.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Second profile; summaries then include differences and hazard ratios.
    #[arg(long)]
    pub contrast: Option<PathBuf>,
    /// Upper integration limit for mean survival (default: 10x the largest
    /// observed time).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of grid points for hazard curves.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
}

/// Run manifest: everything needed to interpret the sampler output, plus the
/// covariate standardization so profiles can be given on the original scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: FitConfig,
    pub config_hash: String,
    pub n: usize,
    pub p: usize,
    pub columns: Vec<ColumnStats>,
    pub max_time: f64,
}

/// FNV-1a over the canonical JSON encoding of the resolved configuration.
fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Parse the fit input CSV with 1-based physical line numbers in errors.
pub fn read_data_csv(path: &Path) -> Result<RawData> {
    let text = fs::read_to_string(path)?;
    let mut names: Option<Vec<String>> = None;
    let mut raw = RawData::default();
    let mut data_rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        match &names {
            None => {
                if fields.len() < 2 || fields[0] != "time" || fields[1] != "event" {
                    return Err(Error::Schema(format!(
                        "header must start with `time,event`, got `{trimmed}`"
                    )));
                }
                names = Some(fields[2..].iter().map(|s| s.to_string()).collect());
            }
            Some(cols) => {
                if fields.len() != cols.len() + 2 {
                    return Err(Error::Input {
                        line: line_no,
                        message: format!(
                            "expected {} fields, found {}",
                            cols.len() + 2,
                            fields.len()
                        ),
                    });
                }
                let time: f64 = fields[0].parse().map_err(|_| Error::Input {
                    line: line_no,
                    message: format!("time `{}` is not a number", fields[0]),
                })?;
                if !(time.is_finite() && time > 0.0) {
                    return Err(Error::Input {
                        line: line_no,
                        message: format!("time must be finite and positive, got {time}"),
                    });
                }
                let event = match fields[1] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Input {
                            line: line_no,
                            message: format!("event `{other}` must be 0 or 1"),
                        })
                    }
                };
                let mut row = Vec::with_capacity(cols.len());
                for (j, f) in fields[2..].iter().enumerate() {
                    let v: f64 = f.parse().map_err(|_| Error::Input {
                        line: line_no,
                        message: format!("covariate {} `{f}` is not a number", cols[j]),
                    })?;
                    row.push(v);
                }
                raw.times.push(time);
                raw.events.push(event);
                raw.covariates.push(row);
                data_rows += 1;
            }
        }
    }
    let names = names.ok_or_else(|| Error::Schema("missing header line".into()))?;
    if data_rows < 2 {
        return Err(Error::Schema(format!(
            "need at least 2 data rows, found {data_rows}"
        )));
    }
    raw.names = names;
    Ok(raw)
}

/// Write a raw dataset in the fit input schema.
pub fn write_data_csv(path: &Path, raw: &RawData) -> Result<()> {
    let mut out = String::from("time,event");
    for name in &raw.names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..raw.times.len() {
        out.push_str(&format!("{},{}", raw.times[i], u8::from(raw.events[i])));
        for v in &raw.covariates[i] {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Worker cap: `POLYHAZ_THREADS` when set, else available parallelism.
pub fn max_workers() -> usize {
    std::env::var("POLYHAZ_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Serialize)]
struct SampleRow<'a> {
    chain: usize,
    #[serde(flatten)]
    state: &'a ModelState,
}

#[derive(Serialize)]
struct EventRow<'a> {
    chain: usize,
    clock: f64,
    #[serde(flatten)]
    kind: &'a engine::EventKind,
}

#[derive(Serialize, Deserialize)]
struct DiagnosticsFile {
    per_chain: Vec<DiagnosticsReport>,
    pooled: DiagnosticsReport,
}

fn write_submodels_csv(path: &Path, probs: &[SubmodelProb]) -> Result<()> {
    let mut out = String::from("model,probability,snapshot_probability\n");
    for p in probs {
        out.push_str(&format!(
            "{},{},{}\n",
            p.label, p.occupancy, p.snapshot_fraction
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_submodels_csv(path: &Path) -> Result<Vec<SubmodelProb>> {
    let text =
        fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Schema(format!("bad submodels row `{line}`")));
        }
        out.push(SubmodelProb {
            label: f[0].to_string(),
            occupancy: f[1]
                .parse()
                .map_err(|_| Error::Schema("bad probability".into()))?,
            snapshot_fraction: f[2]
                .parse()
                .map_err(|_| Error::Schema("bad snapshot probability".into()))?,
        });
    }
    Ok(out)
}

/// Fit the model and write all run artifacts.
pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let config_text = fs::read_to_string(&args.config)?;
    let mut config: FitConfig = serde_json::from_str(&config_text)?;
    if let Some(chains) = args.chains {
        config.sampler.chains = chains;
    }
    if let Some(seed) = args.seed {
        config.sampler.seed = seed;
    }
    config.prior.validate()?;
    config.sampler.validate()?;

    let raw = read_data_csv(&args.data)?;
    let data = Dataset::new(raw)?;

    fs::create_dir_all(&args.out)?;
    let runs = match engine::run(&config.sampler, &config.prior, &data, max_workers()) {
        Ok(runs) => runs,
        Err(err) => {
            if let Error::ChainAborted { state_json, .. } = &err {
                // Leave the failing state behind for debugging.
                let _ = fs::write(args.out.join("aborted_state.json"), state_json);
            }
            return Err(err);
        }
    };

    // samples.jsonl: one snapshot per line, chains in order.
    let mut samples = fs::File::create(args.out.join("samples.jsonl"))?;
    for run in &runs {
        for state in &run.skeleton.samples {
            let row = SampleRow {
                chain: run.chain,
                state,
            };
            writeln!(samples, "{}", serde_json::to_string(&row)?)?;
        }
    }

    if config.sampler.emit_skeleton {
        let mut skel = fs::File::create(args.out.join("skeleton.jsonl"))?;
        for run in &runs {
            for event in &run.skeleton.events {
                let row = EventRow {
                    chain: run.chain,
                    clock: event.clock,
                    kind: &event.kind,
                };
                writeln!(skel, "{}", serde_json::to_string(&row)?)?;
            }
        }
    }

    let diag = DiagnosticsFile {
        per_chain: runs.iter().map(|r| r.diagnostics.report()).collect(),
        pooled: engine::pooled_diagnostics(&runs).report(),
    };
    fs::write(
        args.out.join("diagnostics.json"),
        serde_json::to_string_pretty(&diag)?,
    )?;

    let skeletons: Vec<_> = runs.iter().map(|r| &r.skeleton).collect();
    let probs = pooled_submodel_probabilities(&skeletons);
    write_submodels_csv(&args.out.join("submodels.csv"), &probs)?;

    let canonical = serde_json::to_string(&config)?;
    let manifest = Manifest {
        config_hash: fnv1a_hex(canonical.as_bytes()),
        config,
        n: data.n(),
        p: data.p(),
        columns: data.columns().to_vec(),
        max_time: data.max_time(),
    };
    fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Generate a dataset CSV.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let raw = match args.gen.as_str() {
        "supplement" => oracle::simulate_supplement_data(args.n, args.seed)?,
        "weibull" => oracle::simulate_polyhazard(
            &[(DistKind::Weibull, args.nu, args.mu)],
            args.censor_rate,
            args.n,
            args.seed,
        )?,
        other => {
            return Err(Error::Config(format!(
                "unknown generator `{other}` (expected `supplement` or `weibull`)"
            )))
        }
    };
    write_data_csv(&args.out, &raw)?;
    Ok(())
}

/// Summary report produced by `summarize`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryReport {
    pub profile: BTreeMap<String, f64>,
    pub mean_survival: postprocess::SummaryStats,
    pub truncated_fraction: f64,
    pub contrast: Option<BTreeMap<String, f64>>,
    pub mean_survival_contrast: Option<postprocess::SummaryStats>,
    /// Posterior summary of `E[Y | profile] - E[Y | contrast]`.
    pub difference: Option<postprocess::SummaryStats>,
    pub horizon: f64,
    pub n_samples: usize,
    pub submodels: Vec<SubmodelProb>,
}

fn load_profile(
    path: Option<&PathBuf>,
    columns: &[ColumnStats],
) -> Result<(BTreeMap<String, f64>, Vec<f64>)> {
    let mut named = BTreeMap::new();
    if let Some(p) = path {
        let text = fs::read_to_string(p)?;
        let value: BTreeMap<String, f64> = serde_json::from_str(&text)?;
        for key in value.keys() {
            if !columns.iter().any(|c| &c.name == key) {
                return Err(Error::Schema(format!(
                    "profile names unknown covariate `{key}`"
                )));
            }
        }
        named = value;
    }
    let raw: Vec<f64> = columns
        .iter()
        .map(|c| named.get(&c.name).copied().unwrap_or(c.mean))
        .collect();
    let standardized = standardize_with(columns, &raw)?;
    let full: BTreeMap<String, f64> = columns
        .iter()
        .zip(&raw)
        .map(|(c, &v)| (c.name.clone(), v))
        .collect();
    Ok((full, standardized))
}

fn load_samples(run_dir: &Path) -> Result<Vec<ModelState>> {
    let path = run_dir.join("samples.jsonl");
    let text = fs::read_to_string(&path)
        .map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    #[derive(Deserialize)]
    struct Row {
        #[serde(flatten)]
        state: ModelState,
    }
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(line)?;
        let mut state = row.state;
        apply_ordering(&mut state);
        out.push(state);
    }
    if out.is_empty() {
        return Err(Error::Schema("samples.jsonl holds no snapshots".into()));
    }
    Ok(out)
}

fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut out = String::from("y,mean,lo,hi\n");
    for p in curve {
        out.push_str(&format!("{},{},{},{}\n", p.y, p.mean, p.lo, p.hi));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Post-process a fit directory into mean-survival and hazard summaries.
pub fn cmd_summarize(args: &SummarizeArgs) -> Result<()> {
    let manifest_path = args.run.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(
        &fs::read_to_string(&manifest_path)
            .map_err(|_| Error::MissingArtifact(manifest_path.display().to_string()))?,
    )?;
    let samples = load_samples(&args.run)?;
    let submodels = read_submodels_csv(&args.run.join("submodels.csv"))?;

    let (profile_named, profile_std) = load_profile(args.profile.as_ref(), &manifest.columns)?;
    let horizon = args.horizon.unwrap_or(10.0 * manifest.max_time.max(1.0));
    let ms: MeanSurvival = postprocess::mean_survival(&samples, &profile_std, horizon)?;

    let grid_n = args.grid.max(2);
    let t_max = manifest.max_time.max(1.0);
    let grid: Vec<f64> = (1..=grid_n)
        .map(|i| t_max * i as f64 / grid_n as f64)
        .collect();
    let hazard = postprocess::hazard_curve(&samples, &profile_std, &grid)?;
    write_curve_csv(&args.run.join("hazard_curve.csv"), &hazard)?;

    let mut report = SummaryReport {
        profile: profile_named,
        mean_survival: ms.stats.clone(),
        truncated_fraction: ms.truncated_fraction,
        contrast: None,
        mean_survival_contrast: None,
        difference: None,
        horizon,
        n_samples: samples.len(),
        submodels,
    };

    if args.contrast.is_some() {
        let (contrast_named, contrast_std) =
            load_profile(args.contrast.as_ref(), &manifest.columns)?;
        let ms_c = postprocess::mean_survival(&samples, &contrast_std, horizon)?;
        let diffs: Vec<f64> = ms
            .per_sample
            .iter()
            .zip(&ms_c.per_sample)
            .map(|(a, b)| a - b)
            .collect();
        let ratio = postprocess::hazard_ratio_curve(&samples, &profile_std, &contrast_std, &grid)?;
        write_curve_csv(&args.run.join("hazard_ratio.csv"), &ratio)?;
        report.contrast = Some(contrast_named);
        report.mean_survival_contrast = Some(ms_c.stats);
        report.difference = Some(postprocess::summarize(&diffs));
    }

    fs::write(
        args.run.join("summary.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}

/// Map an error to the documented process exit code: 2 for input problems,
/// 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input { .. }
        | Error::Schema(_)
        | Error::Config(_)
        | Error::MissingArtifact(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::Domain(_)
        | Error::Numerical { .. }
        | Error::Capacity { .. }
        | Error::ChainAborted { .. } => 3,
    }
}

pub fn run_command(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Summarize(args) => cmd_summarize(args),
    }
}
