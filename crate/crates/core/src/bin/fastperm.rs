use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use fastperm::error::{Error, Result};
use fastperm::io;
use fastperm::nulldist::{MaxMode, Tail};
use fastperm::permcore::{LabeledDataset, StatisticKind};
use fastperm::pipeline::{self, Mode, RunConfig, RunReport};
use fastperm::rmt::{self, SweepConfig};
use fastperm::subspace::BasisInit;
use fastperm::synth::{self, SyntheticConfig};

const WORKERS_ENV: &str = "FASTPERM_WORKERS";

#[derive(Parser)]
#[command(name = "fastperm", version, about = "Max-statistic permutation testing with low-rank null recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact permutation null.
    Full(RunArgs),
    /// Train on full trials, recover the rest from sparse samples.
    Fast(FastArgs),
    /// Full and fast side by side, or a sweep over sampling rates.
    Compare(CompareArgs),
    /// Spectral checks of the spiked noise model from a sweep file.
    Rmt(RmtArgs),
    /// Write a synthetic low-rank-plus-noise dataset.
    Synth(SynthArgs),
}

fn enum_arg<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// CSV (rows = subjects) or binary `.bin` matrix.
    #[arg(long)]
    data: Option<PathBuf>,
    /// One 0/1 label per subject; optional when the CSV has a `label` column.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// TOML file of run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    training_trials: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    training_rate: Option<f64>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    bin_width: Option<f64>,
    /// Repeat for several levels.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mask_seed: Option<u64>,
    /// one_sided | two_sided
    #[arg(long, value_parser = enum_arg::<Tail>)]
    tail: Option<Tail>,
    /// upper | absolute
    #[arg(long, value_parser = enum_arg::<MaxMode>)]
    max_mode: Option<MaxMode>,
    /// pooled | welch
    #[arg(long, value_parser = enum_arg::<StatisticKind>)]
    statistic: Option<StatisticKind>,
    /// truncated_svd | random
    #[arg(long, value_parser = enum_arg::<BasisInit>)]
    basis_init: Option<BasisInit>,
    /// Report JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    thresholds_csv: Option<PathBuf>,
    #[arg(long)]
    null_csv: Option<PathBuf>,
    #[arg(long)]
    null_json: Option<PathBuf>,
}

#[derive(Args)]
struct FastArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the trained basis and residual model here.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Skip training and recover every trial with this bundle.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sweep the twenty standard rates instead of a single comparison.
    #[arg(long)]
    sweep: bool,
    /// Explicit sweep rates (comma separated); implies --sweep.
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    #[arg(long)]
    sweep_csv: Option<PathBuf>,
}

#[derive(Args)]
struct RmtArgs {
    /// TOML sweep: v, t, lambdas, delta, sigma2 and/or sigma2_fractions, draws, seed.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    subjects: usize,
    #[arg(long, default_value_t = 10_000)]
    features: usize,
    #[arg(long, default_value_t = 5)]
    planted_rank: usize,
    #[arg(long, default_value_t = 1.0)]
    signal_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.0)]
    group_effect: f64,
    #[arg(long, default_value_t = 0)]
    effect_features: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `.csv` (labels embedded) or `.bin` (labels written next to it).
    #[arg(long)]
    out: PathBuf,
    /// Label file for binary output; defaults to `<out>.labels`.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::InvalidParameter(format!("{WORKERS_ENV} must be a positive integer"))),
        Err(_) => Ok(None),
    }
}

impl RunArgs {
    fn config(&self, mode: Mode) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => toml::from_str::<RunConfig>(&std::fs::read_to_string(p)?)
                .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?,
            None => RunConfig::default(),
        };
        c.mode = mode;
        if self.data.is_some() {
            c.data_path.clone_from(&self.data);
        }
        if self.labels.is_some() {
            c.label_path.clone_from(&self.labels);
        }
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value {
                    c.$field = v;
                }
            };
        }
        set!(trial_count, self.trials);
        set!(training_trials, self.training_trials);
        set!(sampling_rate, self.rate);
        set!(passes, self.passes);
        set!(bin_width, self.bin_width);
        set!(master_seed, self.seed);
        set!(mask_seed, self.mask_seed);
        set!(tail, self.tail);
        set!(max_mode, self.max_mode);
        set!(statistic, self.statistic);
        set!(basis_init, self.basis_init);
        if self.rank.is_some() {
            c.rank = self.rank;
        }
        if self.training_rate.is_some() {
            c.training_rate = self.training_rate;
        }
        if !self.alphas.is_empty() {
            c.alpha_levels.clone_from(&self.alphas);
        }
        c.workers = workers_from_env()?;
        Ok(c)
    }

    fn dataset(&self, config: &RunConfig) -> Result<LabeledDataset> {
        let data = config
            .data_path
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("no --data given".into()))?;
        io::ingest(data, config.label_path.as_deref())
    }

    fn emit(&self, report: &RunReport) -> Result<()> {
        match &self.out {
            Some(p) => io::write_report(p, report)?,
            None => println!("{}", report.to_json()?),
        }
        if let Some(p) = &self.thresholds_csv {
            io::write_thresholds_csv(p, report)?;
        }
        if self.null_csv.is_some() || self.null_json.is_some() {
            let null = report.null()?;
            if let Some(p) = &self.null_csv {
                io::write_null_histogram(p, &null)?;
            }
            if let Some(p) = &self.null_json {
                io::write_null_json(p, &null, &report.config.alpha_levels, report.config.tail)?;
            }
        }
        Ok(())
    }
}

fn write_json_or_stdout<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Full(args) => {
            let config = args.config(Mode::Full)?;
            let data = args.dataset(&config)?;
            args.emit(&pipeline::run_full(&data, &config)?.report)
        }
        Command::Fast(args) => {
            let config = args.run.config(Mode::Fast)?;
            let data = args.run.dataset(&config)?;
            let bundle = args.model.as_deref().map(io::load_bundle).transpose()?;
            let out = pipeline::run_fast(&data, &config, bundle.as_ref())?;
            if let Some(p) = &args.save_model {
                io::save_bundle(p, &out.bundle)?;
            }
            args.run.emit(&out.report)
        }
        Command::Compare(args) => {
            let config = args.run.config(Mode::Compare)?;
            let data = args.run.dataset(&config)?;
            if args.sweep || !args.rates.is_empty() {
                let rates = if args.rates.is_empty() {
                    pipeline::standard_rates()
                } else {
                    args.rates.clone()
                };
                let sweep = pipeline::rate_sweep(&data, &config, &rates)?;
                if let Some(p) = &args.sweep_csv {
                    io::write_sweep_csv(p, &sweep)?;
                }
                write_json_or_stdout(args.run.out.as_deref(), &sweep)
            } else {
                args.run.emit(&pipeline::run_compare(&data, &config)?.report)
            }
        }
        Command::Rmt(args) => {
            let sweep: SweepConfig = toml::from_str(&std::fs::read_to_string(&args.config)?)
                .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
            let workers = workers_from_env()?;
            let rows = fastperm::parallel::run(workers, || rmt::run_sweep(&sweep))?;
            if let Some(p) = &args.out_csv {
                io::write_spectral_csv(p, &rows)?;
            }
            write_json_or_stdout(args.out.as_deref(), &rows)
        }
        Command::Synth(args) => {
            let config = SyntheticConfig {
                subjects: args.subjects,
                features: args.features,
                planted_rank: args.planted_rank,
                signal_scale: args.signal_scale,
                noise_sd: args.noise_sd,
                group_effect: args.group_effect,
                effect_features: args.effect_features,
                seed: args.seed,
            };
            let data = synth::generate(&config)?;
            if args.out.extension().and_then(|e| e.to_str()) == Some("bin") {
                io::write_binary_matrix(&args.out, data.values())?;
                let labels = args
                    .labels_out
                    .unwrap_or_else(|| args.out.with_extension("labels"));
                io::write_labels(&labels, data.labels())
            } else {
                io::write_csv_dataset(&args.out, &data)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            let body = serde_json::json!({
                "error": { "category": category.as_str(), "message": e.to_string() }
            });
            eprintln!("{body}");
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
