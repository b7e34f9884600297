use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Collapse detection and guarded regeneration for vocoder output.
#[derive(Debug, Parser)]
#[command(name = "vocguard", version)]
struct Cli {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads for corpus-level commands.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mu-law code and decoded amplitude of every sample, as CSV.
    Mulaw {
        #[arg(long, value_name = "WAV")]
        input: PathBuf,
    },
    /// Amplitude envelope of a file or span, as CSV.
    Envelope(EnvelopeArgs),
    /// Frame-wise LPC coefficients and residual variance, as CSV.
    Lpc(LpcArgs),
    /// Per-segment collapse verdicts for a candidate against its reference, as JSON.
    Detect(DetectArgs),
    /// Guarded regeneration of a reference with an optional injected collapse.
    RegenSim(RegenSimArgs),
    /// Writes a synthetic labeled corpus of candidate/reference pairs.
    SynthCorpus(SynthCorpusArgs),
    /// Detection error tradeoff over a labeled corpus, as CSV.
    EvalDet(EvalDetArgs),
}

#[derive(Debug, Args)]
struct EnvelopeArgs {
    #[arg(long, value_name = "WAV")]
    input: PathBuf,
    /// First sample of the span.
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Span length; defaults to the rest of the file.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    peak_window: Option<usize>,
    #[arg(long, value_name = "HZ")]
    cutoff: Option<f64>,
    /// Full-wave rectification instead of the analytic-signal magnitude.
    #[arg(long)]
    rectify: bool,
}

#[derive(Debug, Args)]
struct LpcArgs {
    #[arg(long, value_name = "WAV")]
    input: PathBuf,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    frame_shift: Option<usize>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long, value_name = "WAV")]
    cand: PathBuf,
    #[arg(long = "ref", value_name = "WAV")]
    reference: PathBuf,
    #[arg(long)]
    seg_len: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Full-wave rectification instead of the analytic-signal magnitude.
    #[arg(long)]
    rectify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Inject {
    #[value(name = "typeI")]
    TypeI,
    #[value(name = "typeII")]
    TypeII,
    None,
}

#[derive(Debug, Args)]
struct RegenSimArgs {
    #[arg(long = "ref", value_name = "WAV")]
    reference: PathBuf,
    /// Output waveform.
    #[arg(long, value_name = "WAV")]
    out: Option<PathBuf>,
    /// Report file; printed to stdout when absent.
    #[arg(long, value_name = "JSON")]
    report: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    seg_len: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Control factor schedule, comma separated.
    #[arg(long, value_delimiter = ',', value_name = "R1,R2,..")]
    rho: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Inject::None)]
    inject: Inject,
    /// First sample of the injected region; defaults to a quarter into the second segment.
    #[arg(long, value_name = "SAMPLE")]
    inject_at: Option<usize>,
    /// Region length; defaults to 1500 (type I) or 600 (type II).
    #[arg(long, value_name = "COUNT")]
    inject_len: Option<usize>,
    /// Burst amplitude or impulse height relative to the reference peak.
    #[arg(long)]
    inject_factor: Option<f64>,
    /// Impulse count for type II injection.
    #[arg(long, default_value_t = 6)]
    impulses: usize,
}

#[derive(Debug, Args)]
struct SynthCorpusArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Share of collapsed utterances.
    #[arg(long, default_value_t = 0.3)]
    fraction: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LevelArg {
    Segment,
    Utterance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatArg {
    Env,
    Maxpow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TypeArg {
    All,
    #[value(name = "typeI")]
    TypeI,
    #[value(name = "typeII")]
    TypeII,
}

#[derive(Debug, Args)]
struct EvalDetArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = LevelArg::Segment)]
    level: LevelArg,
    #[arg(long, value_enum, default_value_t = StatArg::Env)]
    stat: StatArg,
    #[arg(long = "type", value_enum, default_value_t = TypeArg::All)]
    kind: TypeArg,
    /// Evenly spaced thresholds across the observed range.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(2..))]
    points: u32,
    #[arg(long)]
    seg_len: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
