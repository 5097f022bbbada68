//! Batch pipeline from a CSV time series to a fitted kernel, a Stan program
//! and an extrapolation report.

mod config;
mod ingest;
mod pipeline;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gpcompose::codegen::ProgramGrams;
use gpcompose::gp::sample_mvn;
use gpcompose::search::Operator;
use gpcompose::TimeSeriesDataset;
use serde::Deserialize;

use config::{Mode, RunConfig, SearchSettings, Split};

#[derive(Parser)]
#[command(name = "gpcompose", version, about = "Compositional GP kernels for time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a kernel structure and fit it.
    Fit(RunArgs),
    /// Fit a given kernel and emit its Stan program and data file.
    Compile(RunArgs),
    /// Draw from an emitted program's posterior.
    Sample(SampleArgs),
    /// Full pipeline: model, program, predictions, plot.
    Report(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "time")]
    time_column: String,
    #[arg(long, default_value = "value")]
    value_column: String,
    /// Number of trailing rows held out as test data.
    #[arg(long, conflicts_with = "test_fraction")]
    test_count: Option<usize>,
    /// Fraction of trailing rows held out (default 0.1).
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Kernel expression; omit to run structure search.
    #[arg(long)]
    kernel: Option<String>,
    /// Keep the kernel's hyperparameters as written.
    #[arg(long, requires = "kernel")]
    no_fit: bool,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    beam_width: usize,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 400)]
    max_iters: usize,
    /// Comma-separated subset of +,*,CP,CW.
    #[arg(long, value_delimiter = ',', default_value = "+,*,CP,CW")]
    operators: Vec<String>,
    /// Comma-separated subset of WN,C,LIN,SE,PER.
    #[arg(long, value_delimiter = ',', default_value = "WN,C,LIN,SE,PER")]
    base_kernels: Vec<String>,
    /// Observation noise variance (initial value unless --fixed-noise).
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long)]
    fixed_noise: bool,
    #[arg(long, short)]
    output: PathBuf,
    /// Random seed; a random one is chosen and logged if omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    interval_level: f64,
    /// Intervals without observation noise.
    #[arg(long)]
    latent_only: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let operators = self
            .operators
            .iter()
            .map(|s| Operator::from_symbol(s.trim()).with_context(|| format!("unknown operator `{s}`")))
            .collect::<Result<Vec<_>>>()?;
        let split = match (self.test_count, self.test_fraction) {
            (Some(n), _) => Split::Count(n),
            (None, Some(f)) => Split::Fraction(f),
            (None, None) => Split::Fraction(0.1),
        };
        let seed = self.seed.unwrap_or_else(|| {
            let s = rand::random::<u64>() >> 11;
            eprintln!("{}", serde_json::json!({ "seed": s }));
            s
        });
        Ok(RunConfig {
            input: self.input,
            time_column: self.time_column,
            value_column: self.value_column,
            split,
            mode: match self.kernel {
                Some(kernel) => Mode::Fixed { kernel, no_fit: self.no_fit },
                None => Mode::Search,
            },
            search: SearchSettings {
                max_depth: self.max_depth,
                beam_width: self.beam_width,
                restarts: self.restarts,
                max_iters: self.max_iters,
                operators,
                base_kernels: self.base_kernels.iter().map(|s| s.trim().to_string()).collect(),
                noise: self.noise,
                fixed_noise: self.fixed_noise,
            },
            output: self.output,
            seed,
            interval_level: self.interval_level,
            latent_only: self.latent_only,
        })
    }
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Emitted program.
    #[arg(long)]
    program: PathBuf,
    /// Companion data file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Deserialize)]
#[allow(non_snake_case)]
struct DataFile {
    N1: usize,
    x1: Vec<f64>,
    y1: Vec<f64>,
    N2: usize,
    x2: Vec<f64>,
}

fn run_sample(args: &SampleArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.program)
        .with_context(|| format!("cannot read {}", args.program.display()))?;
    let raw = std::fs::read_to_string(&args.data).with_context(|| format!("cannot read {}", args.data.display()))?;
    let d: DataFile = serde_json::from_str(&raw).context("malformed data file")?;
    if d.x1.len() != d.N1 || d.y1.len() != d.N1 || d.x2.len() != d.N2 {
        bail!("data file sizes disagree with N1/N2");
    }
    let times = d.x1.iter().chain(&d.x2).copied().collect();
    let values = d.y1.iter().copied().chain(std::iter::repeat(0.0).take(d.N2)).collect();
    let data = TimeSeriesDataset::new(times, values, d.N1)?;
    let (mu, l) = ProgramGrams::evaluate_text(&text, &data)?.mu_and_factor()?;
    let draws = sample_mvn(&mu, &l, args.draws, args.seed);

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["draw".to_string()];
    header.extend((1..=d.N2).map(|i| format!("y2[{i}]")));
    w.write_record(&header)?;
    for (r, row) in draws.row_iter().enumerate() {
        let mut rec = vec![(r + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    std::fs::create_dir_all(&args.output)?;
    pipeline::write_atomic(&args.output, "draws.csv", &w.into_inner()?)?;
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(e) = e.downcast_ref::<gpcompose::Error>() {
        e.kind()
    } else if e.chain().any(|c| c.is::<std::io::Error>()) {
        "io"
    } else {
        "invalid_input"
    }
}

fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message.replace('\n', " ") });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string().lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => a.into_config().and_then(|c| pipeline::run_fit(&c)).map(drop),
        Command::Compile(a) => a.into_config().and_then(|c| pipeline::run_compile(&c)).map(drop),
        Command::Report(a) => a.into_config().and_then(|c| pipeline::run_report(&c)).map(drop),
        Command::Sample(a) => run_sample(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
