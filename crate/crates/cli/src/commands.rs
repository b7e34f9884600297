use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use vocguard::constraint::RhoSchedule;
use vocguard::detector::{
    detect, evaluate_det, read_corpus, synth_corpus, write_corpus, CollapseStatistic, EnvStatistic,
    Level, MaxPowStatistic, ThresholdGrid, TypeFilter,
};
use vocguard::envelope::extract_envelope;
use vocguard::generator::{generate_with_guard, CollapseKind, CollapsePlan, SegmentOutcome};
use vocguard::lpc::analyze_reference;
use vocguard::signal::{mulaw_decode, mulaw_encode, SegmentSpec, Waveform};
use vocguard::wav::{read_wav, write_wav};
use vocguard::Config;

use crate::{
    Cli, Command, DetectArgs, EnvelopeArgs, EvalDetArgs, Inject, LevelArg, LpcArgs, RegenSimArgs,
    StatArg, SynthCorpusArgs, TypeArg,
};

const SCHEMA: u32 = 1;
const TYPE_I_INJECT_LEN: usize = 1500;
const TYPE_II_INJECT_LEN: usize = 600;
const TYPE_I_INJECT_FACTOR: f64 = 3.0;
const TYPE_II_INJECT_FACTOR: f64 = 2.5;

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => Config::from_json_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => Config::default(),
    };
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()
            .context("starting worker pool")?;
    }
    match cli.command {
        Command::Mulaw { input } => mulaw(&input),
        Command::Envelope(args) => envelope(args, cfg),
        Command::Lpc(args) => lpc(args, cfg),
        Command::Detect(args) => detect_cmd(args, cfg),
        Command::RegenSim(args) => regen_sim(args, cfg),
        Command::SynthCorpus(args) => synth(args, cfg),
        Command::EvalDet(args) => eval_det(args, cfg),
    }
}

/// Writes data to stdout. A reader that stops early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn read_input(path: &Path, cfg: &Config) -> Result<Waveform> {
    read_wav(path, Some(cfg.sample_rate_hz)).with_context(|| format!("reading {}", path.display()))
}

fn validated(cfg: Config) -> Result<Config> {
    cfg.validate()?;
    Ok(cfg)
}

fn mulaw(input: &Path) -> Result<()> {
    let w = read_wav(input, None).with_context(|| format!("reading {}", input.display()))?;
    let mut csv = String::from("sample_index,code,decoded\n");
    for (i, &x) in w.samples().iter().enumerate() {
        let code = mulaw_encode(x);
        writeln!(csv, "{i},{},{}", code.index(), mulaw_decode(code))?;
    }
    emit(&csv)
}

fn envelope(args: EnvelopeArgs, mut cfg: Config) -> Result<()> {
    if let Some(v) = args.peak_window {
        cfg.peak_window = v;
    }
    if let Some(v) = args.cutoff {
        cfg.lpf_cutoff_hz = v;
    }
    if args.rectify {
        cfg.use_hilbert = false;
    }
    let cfg = validated(cfg)?;
    let w = read_input(&args.input, &cfg)?;
    let length = match args.length {
        Some(l) => l,
        None => w.len().checked_sub(args.start).with_context(|| {
            format!(
                "start {} is past the end of {} samples",
                args.start,
                w.len()
            )
        })?,
    };
    let span = SegmentSpec::new(args.start, length);
    let env = extract_envelope(&w, span, &cfg.envelope_params())?;
    let mut csv = String::from("sample_index,envelope_value\n");
    for (k, v) in env.values.iter().enumerate() {
        writeln!(csv, "{},{v}", span.start + k)?;
    }
    emit(&csv)
}

fn lpc(args: LpcArgs, mut cfg: Config) -> Result<()> {
    if let Some(v) = args.order {
        cfg.lpc_order = v;
    }
    if let Some(v) = args.frame_len {
        cfg.lpc_frame_len = v;
    }
    if let Some(v) = args.frame_shift {
        cfg.lpc_frame_shift = v;
    }
    let cfg = validated(cfg)?;
    let w = read_input(&args.input, &cfg)?;
    let analysis = analyze_reference(&w, &cfg.lpc_config())?;
    let mut csv = String::from("frame_index,start");
    for i in 1..=cfg.lpc_order {
        write!(csv, ",a_{i}")?;
    }
    csv.push_str(",residual_variance\n");
    for (k, frame) in analysis.frames.iter().enumerate() {
        write!(csv, "{k},{}", frame.start)?;
        for a in &frame.coeffs {
            write!(csv, ",{a}")?;
        }
        writeln!(csv, ",{}", frame.residual_variance)?;
    }
    emit(&csv)
}

#[derive(Serialize)]
struct DetectSegment {
    start: usize,
    length: usize,
    statistic: f64,
    flagged: bool,
}

#[derive(Serialize)]
struct DetectOutput {
    schema: u32,
    sample_rate_hz: u32,
    seg_len: usize,
    threshold: f64,
    utterance_flagged: bool,
    flagged_count: usize,
    segments: Vec<DetectSegment>,
}

fn detect_cmd(args: DetectArgs, mut cfg: Config) -> Result<()> {
    if let Some(v) = args.seg_len {
        cfg.seg_len = v;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if args.rectify {
        cfg.use_hilbert = false;
    }
    let cfg = validated(cfg)?;
    let cand = read_input(&args.cand, &cfg)?;
    let reference = read_input(&args.reference, &cfg)?;
    let report = detect(
        &cand,
        &reference,
        cfg.seg_len,
        &cfg.envelope_params(),
        cfg.threshold,
    )?;
    let out = DetectOutput {
        schema: SCHEMA,
        sample_rate_hz: cfg.sample_rate_hz,
        seg_len: cfg.seg_len,
        threshold: cfg.threshold,
        utterance_flagged: report.utterance_flagged,
        flagged_count: report.flagged_count(),
        segments: report
            .verdicts
            .iter()
            .map(|v| DetectSegment {
                start: v.start,
                length: v.length,
                statistic: v.statistic,
                flagged: v.flagged,
            })
            .collect(),
    };
    emit(&(serde_json::to_string_pretty(&out)? + "\n"))
}

#[derive(Serialize)]
struct RegenReport<'a> {
    schema: u32,
    seed: u64,
    sample_rate_hz: u32,
    seg_len: usize,
    threshold: f64,
    rho_schedule: &'a [f64],
    inject: Option<CollapsePlan>,
    regenerated: usize,
    residual: usize,
    segments: &'a [SegmentOutcome],
}

fn injection_plan(
    args: &RegenSimArgs,
    seg_len: usize,
    len: usize,
    seed: u64,
) -> Result<Option<CollapsePlan>> {
    let (kind, default_len, default_factor) = match args.inject {
        Inject::None => return Ok(None),
        Inject::TypeI => (CollapseKind::TypeI, TYPE_I_INJECT_LEN, TYPE_I_INJECT_FACTOR),
        Inject::TypeII => (
            CollapseKind::TypeII,
            TYPE_II_INJECT_LEN,
            TYPE_II_INJECT_FACTOR,
        ),
    };
    let plan = CollapsePlan {
        kind,
        region: SegmentSpec::new(
            args.inject_at.unwrap_or(seg_len + seg_len / 4),
            args.inject_len.unwrap_or(default_len),
        ),
        amplitude_factor: args.inject_factor.unwrap_or(default_factor),
        impulse_count: if kind == CollapseKind::TypeII {
            args.impulses
        } else {
            0
        },
        seed,
    };
    plan.validate(len)
        .with_context(|| format!("injected region of a {len}-sample reference"))?;
    Ok(Some(plan))
}

fn regen_sim(args: RegenSimArgs, mut cfg: Config) -> Result<()> {
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.seg_len {
        cfg.seg_len = v;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = &args.rho {
        cfg.rho_schedule = RhoSchedule::new(v.clone())?;
    }
    let cfg = validated(cfg)?;
    let reference = read_input(&args.reference, &cfg)?;
    let plan = injection_plan(&args, cfg.seg_len, reference.len(), cfg.seed)?;

    let analysis = analyze_reference(&reference, &cfg.lpc_config())?;
    let model = cfg.simulated_vocoder(&reference, plan.as_slice(), cfg.seed)?;
    let mut state = cfg.generator_state(cfg.seed)?;
    let guard = cfg.guard_config();
    let (out, report) = generate_with_guard(
        &model,
        &mut state,
        reference.len(),
        &reference,
        &analysis,
        &guard,
    )?;

    let residual = report.segments.iter().filter(|s| s.residual).count();
    let json = serde_json::to_string_pretty(&RegenReport {
        schema: SCHEMA,
        seed: cfg.seed,
        sample_rate_hz: cfg.sample_rate_hz,
        seg_len: cfg.seg_len,
        threshold: cfg.threshold,
        rho_schedule: cfg.rho_schedule.values(),
        inject: plan,
        regenerated: report.regenerated(),
        residual,
        segments: &report.segments,
    })? + "\n";

    if let Some(path) = &args.out {
        write_wav(path, &out).with_context(|| format!("writing {}", path.display()))?;
    }
    eprintln!(
        "{} segments, {} regenerated, {} residual",
        report.segments.len(),
        report.regenerated(),
        residual
    );
    match &args.report {
        Some(path) => {
            fs::write(path, json).with_context(|| format!("writing {}", path.display()))?
        }
        None => emit(&json)?,
    }
    Ok(())
}

fn synth(args: SynthCorpusArgs, mut cfg: Config) -> Result<()> {
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let cfg = validated(cfg)?;
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let pairs = synth_corpus(args.n, args.fraction, cfg.seed, cfg.sample_rate_hz)?;
    let labels = write_corpus(&args.out, &pairs, cfg.seed)
        .with_context(|| format!("writing corpus to {}", args.out.display()))?;
    let collapsed = labels
        .utterances
        .iter()
        .filter(|u| !u.regions.is_empty())
        .count();
    eprintln!(
        "wrote {} utterances ({collapsed} collapsed) to {}",
        labels.utterances.len(),
        args.out.display()
    );
    Ok(())
}

fn eval_det(args: EvalDetArgs, mut cfg: Config) -> Result<()> {
    if let Some(v) = args.seg_len {
        cfg.seg_len = v;
    }
    let cfg = validated(cfg)?;
    let (labels, pairs) = read_corpus(&args.corpus)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    if labels.sample_rate_hz != cfg.sample_rate_hz {
        bail!(
            "corpus sample rate {} Hz differs from configured {} Hz",
            labels.sample_rate_hz,
            cfg.sample_rate_hz
        );
    }
    let env = EnvStatistic {
        seg_len: cfg.seg_len,
        params: cfg.envelope_params(),
    };
    let maxpow = MaxPowStatistic {
        seg_len: cfg.seg_len,
    };
    let stat: &dyn CollapseStatistic = match args.stat {
        StatArg::Env => &env,
        StatArg::Maxpow => &maxpow,
    };
    let level = match args.level {
        LevelArg::Segment => Level::Segment,
        LevelArg::Utterance => Level::Utterance,
    };
    let filter = match args.kind {
        TypeArg::All => TypeFilter::All,
        TypeArg::TypeI => TypeFilter::TypeI,
        TypeArg::TypeII => TypeFilter::TypeII,
    };
    let curve = evaluate_det(
        &pairs,
        stat,
        level,
        filter,
        &ThresholdGrid::Linear(args.points as usize),
    )?;
    let mut csv = String::from("threshold,fa_rate,fr_rate\n");
    for p in &curve.points {
        writeln!(csv, "{},{},{}", p.threshold, p.fa_rate, p.fr_rate)?;
    }
    writeln!(
        csv,
        "# eer={} threshold={} fa_rate={} fr_rate={} collapsed={} clean={}",
        curve.eer,
        curve.eer_point.threshold,
        curve.eer_point.fa_rate,
        curve.eer_point.fr_rate,
        curve.collapsed_items,
        curve.clean_items
    )?;
    emit(&csv)
}
