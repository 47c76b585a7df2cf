mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{CliError, Outcome};

/// Harmonic intelligibility enhancement experiments.
#[derive(Debug, Parser)]
#[command(name = "isetk", version, about)]
struct Cli {
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for every random choice (EEMD noise, noise offsets).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mix a clean utterance with noise at a target SNR.
    Mix(MixArgs),
    /// Enhance the voiced frames of a recording.
    Enhance(EnhanceArgs),
    /// Write the frame-level pitch track of a recording as CSV.
    Pitch(PitchArgs),
    /// Score every manifest cell and write the CSV reports.
    Evaluate(EvaluateArgs),
    /// Greedy gain search on a training manifest.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic corpus, speech-shaped noise and manifests.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct MixArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub noise: PathBuf,
    /// Target SNR in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub snr: f64,
    /// Output WAV; a `.json` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Fixed noise offset in samples instead of a seeded random one.
    #[arg(long)]
    pub offset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Voicing label file (`start end V|U` per line); the detector is used
    /// when absent.
    #[arg(long)]
    pub vuv: Option<PathBuf>,
    /// `ise_asd`, `gtf_f0`, `unit`, or a profile JSON file.
    #[arg(long)]
    pub profile: Option<String>,
    /// Metadata JSON path (default: output path with `.json`).
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Fail unless the output matches the input to 1e-6 away from the edges.
    #[arg(long)]
    pub verify_identity: bool,
}

#[derive(Debug, Args)]
pub struct PitchArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub vuv: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV with `clean_path,vuv_path,noise_path,snr_db,methods`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Profile JSON replacing the built-in ISE_ASD gains.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV with `clean_path,noise_path,snr_db`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of harmonic filters to calibrate.
    #[arg(long, short = 'L', default_value_t = 10)]
    pub harmonics: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Utterance duration in seconds.
    #[arg(long, default_value_t = 2.5)]
    pub secs: f64,
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
    /// SNRs for the generated evaluation manifest.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', default_values_t = [-10.0, -5.0, 0.0, 5.0])]
    pub snr: Vec<f64>,
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let file = match &cli.config {
        Some(p) => config::FileConfig::load(p)?,
        None => config::FileConfig::default(),
    };
    let settings = file.resolve(cli.seed, cli.jobs);
    if let Some(jobs) = settings.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Command::Mix(a) => commands::mix(&a, &settings),
        Command::Enhance(a) => commands::enhance(&a, &settings),
        Command::Pitch(a) => commands::pitch(&a, &settings),
        Command::Evaluate(a) => commands::evaluate(&a, &settings),
        Command::Calibrate(a) => commands::calibrate(&a, &settings),
        Command::Synth(a) => commands::synth(&a, &settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Failed { code, message }) => {
            eprintln!("isetk: {message}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("isetk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
