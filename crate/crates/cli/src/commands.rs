use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use harmvoc::arma::{fit_cascade, targets_from_harmonics, ArmaCascade, ArmaFrame};
use harmvoc::config::PipelineConfig;
use harmvoc::error::{Error, Result};
use harmvoc::fixtures::{FixtureKind, FixtureSpec};
use harmvoc::format::{read_cascade, read_f0, read_harmonics, write_cascade, write_f0, write_harmonics};
use harmvoc::harmonics::F0Track;
use harmvoc::metrics::{frame_mcd, mel_cepstrum, rtf, snr_samples, vuv_rate, f0_rmse, MetricReport, MEL_COEFFS};
use harmvoc::modify::{parse_schedule, ScaleSchedule};
use harmvoc::qhm::{analyze as run_analysis, detect_f0, AdaptiveMode};
use harmvoc::signal::{FrameGrid, SignalBuffer};
use harmvoc::synth::{synthesize_arma, synthesize_qhm};
use harmvoc::wav::{read_wav, write_wav};

pub enum Status {
    Ok,
    /// Output was written but quality checks failed.
    Flagged(String),
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// `dir/name.wav` -> `dir/name.<suffix>`, dropping a `.harmonics` or
/// `.cascade` infix from the stem.
fn derived(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let stem = stem.strip_suffix(".harmonics").or_else(|| stem.strip_suffix(".cascade")).unwrap_or(stem);
    input.with_file_name(format!("{stem}.{suffix}"))
}

fn load_f0(explicit: Option<PathBuf>, beside: &Path, grid: &FrameGrid) -> Result<F0Track> {
    let path = explicit.unwrap_or_else(|| derived(beside, "f0.csv"));
    read_f0(&path, grid).map_err(|e| match e {
        Error::Io(io) => Error::Format(format!("cannot read f0 track {}: {io}", path.display())),
        other => other,
    })
}

fn mean_voiced(track: &F0Track) -> Option<f64> {
    let voiced: Vec<f64> = track.values.iter().copied().filter(|v| *v > 0.0).collect();
    (!voiced.is_empty()).then(|| voiced.iter().sum::<f64>() / voiced.len() as f64)
}

#[derive(Args)]
pub struct AnalyzeArgs {
    input: PathBuf,
    /// Harmonics file (default: INPUT stem + .harmonics.json|bin).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Where to write the f0 track (default: INPUT stem + .f0.csv).
    #[arg(long)]
    f0_out: Option<PathBuf>,
    /// Use this f0 track instead of running the detector.
    #[arg(long)]
    f0_file: Option<PathBuf>,
    /// Adaptive refinement: aqhm or eaqhm.
    #[arg(long)]
    adaptive: Option<String>,
    /// Iteration cap for adaptive refinement.
    #[arg(long)]
    adaptive_iters: Option<usize>,
}

pub fn analyze(args: AnalyzeArgs, config: &PipelineConfig) -> Result<Status> {
    let mut config = config.clone();
    if let Some(mode) = &args.adaptive {
        config.adaptive = Some(mode.parse::<AdaptiveMode>()?);
    }
    if let Some(n) = args.adaptive_iters {
        config.adaptive_iters = n;
    }
    config.validate()?;
    let buffer = read_wav(&args.input)?;
    let acfg = config.analysis();
    let f0 = match &args.f0_file {
        Some(p) => Some(read_f0(p, &acfg.grid_for(&buffer)?)?),
        None => None,
    };
    let result = run_analysis(&buffer, &acfg, f0)?;
    let out = args.output.unwrap_or_else(|| derived(&args.input, &format!("harmonics.{}", config.format.extension())));
    let f0_out = args.f0_out.unwrap_or_else(|| derived(&args.input, "f0.csv"));
    write_harmonics(&out, &result.harmonics, config.format)?;
    write_f0(&f0_out, &result.f0)?;

    let n = result.f0.len();
    let voiced = result.f0.values.iter().filter(|v| **v > 0.0).count();
    let failed: Vec<usize> = result.flags.iter().enumerate().filter(|(_, f)| f.failed).map(|(l, _)| l).collect();
    let regularized = result.flags.iter().filter(|f| f.regularized).count();
    let amp_only = result.flags.iter().filter(|f| f.amplitude_only).count();
    println!("frames            {n}");
    println!("voiced            {voiced}");
    match mean_voiced(&result.f0) {
        Some(m) => println!("mean f0 (voiced)  {m:.3} Hz"),
        None => println!("mean f0 (voiced)  -"),
    }
    println!("max components    {}", result.harmonics.max_components());
    println!("regularized       {regularized}");
    println!("amplitude-only    {amp_only}");
    if !result.adaptive_snr.is_empty() {
        let snrs: Vec<String> = result.adaptive_snr.iter().map(|s| format!("{s:.2}")).collect();
        println!("adaptive SNR (dB) {}", snrs.join(" -> "));
    }
    println!("wrote {} and {}", out.display(), f0_out.display());
    if failed.is_empty() {
        Ok(Status::Ok)
    } else {
        Ok(Status::Flagged(format!("{} frames failed: {:?}", failed.len(), failed)))
    }
}

#[derive(Args)]
pub struct FitArgs {
    harmonics: PathBuf,
    /// f0 track on the same grid (default: sibling .f0.csv).
    #[arg(long)]
    f0: Option<PathBuf>,
    /// Cascade file (default: stem + .cascade.json|bin).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// lm or gd.
    #[arg(long)]
    method: Option<String>,
    /// Optimizer iteration cap per frame.
    #[arg(long)]
    max_steps: Option<usize>,
}

pub fn fit_envelope(args: FitArgs, config: &PipelineConfig) -> Result<Status> {
    let mut options = config.fit;
    if let Some(m) = &args.method {
        options.method = m.parse()?;
    }
    if let Some(s) = args.max_steps {
        options.max_steps = s;
    }
    let set = read_harmonics(&args.harmonics)?;
    let f0 = load_f0(args.f0, &args.harmonics, &set.grid)?;
    let targets = targets_from_harmonics(&set, &f0, &config.rule)?;
    let fit = fit_cascade(&targets, &f0, config.orders, &options)?;
    let out = args
        .output
        .unwrap_or_else(|| derived(&args.harmonics, &format!("cascade.{}", config.format.extension())));
    write_cascade(&out, &fit.cascade, config.format)?;

    let mut per_target: Vec<f64> = fit
        .outcomes
        .iter()
        .zip(&targets)
        .filter(|(_, t)| !t.is_empty())
        .map(|(o, t)| o.loss / t.len() as f64)
        .collect();
    per_target.sort_by(f64::total_cmp);
    let fitted = per_target.len();
    let above = fit.frames_above(&targets, config.fit_loss_threshold);
    let count = |f: fn(&harmvoc::arma::FitOutcome) -> bool| fit.outcomes.iter().filter(|o| f(o)).count();
    println!("frames            {}", fit.outcomes.len());
    if fitted > 0 {
        println!("loss/target median {:.3e}", per_target[fitted / 2]);
        println!("loss/target max    {:.3e}", per_target[fitted - 1]);
    }
    println!("degenerate        {}", count(|o| o.degenerate));
    println!("underdetermined   {}", count(|o| o.underdetermined));
    println!("stalled           {}", count(|o| o.stalled));
    println!("above threshold   {} (> {:e} per target)", above.len(), config.fit_loss_threshold);
    if !above.is_empty() {
        let shown: Vec<String> = above.iter().take(20).map(|l| l.to_string()).collect();
        println!("  frames: {}{}", shown.join(" "), if above.len() > 20 { " ..." } else { "" });
    }
    println!("wrote {}", out.display());
    if fitted > 0 && above.len() as f64 > 0.05 * fitted as f64 {
        Ok(Status::Flagged(format!("{} of {fitted} frames exceed the fit-loss threshold", above.len())))
    } else {
        Ok(Status::Ok)
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// Cascade file.
    #[arg(required_unless_present = "from_harmonics", conflicts_with = "from_harmonics")]
    cascade: Option<PathBuf>,
    /// Render a harmonics file directly instead of a cascade.
    #[arg(long)]
    from_harmonics: Option<PathBuf>,
    /// f0 track (default: sibling .f0.csv).
    #[arg(long)]
    f0: Option<PathBuf>,
    /// Output WAV file.
    #[arg(short, long)]
    output: PathBuf,
}

fn report_written(path: &Path, buffer: &SignalBuffer, clipped: usize) {
    println!("samples           {}", buffer.len());
    println!("duration          {:.6} s", buffer.duration());
    if clipped > 0 {
        println!("clipped samples   {clipped}");
    }
    println!("wrote {}", path.display());
}

pub fn synth(args: SynthArgs, config: &PipelineConfig) -> Result<Status> {
    let buffer = match (&args.from_harmonics, &args.cascade) {
        (Some(h), _) => synthesize_qhm(&read_harmonics(h)?)?,
        (None, Some(c)) => {
            let cascade = read_cascade(c)?;
            let f0 = load_f0(args.f0, c, &cascade.grid)?;
            synthesize_arma(&cascade, &f0, &config.rule)?
        }
        (None, None) => return Err(usage("synth needs a cascade file or --from-harmonics")),
    };
    let clipped = write_wav(&buffer, &args.output, config.write_options())?;
    report_written(&args.output, &buffer, clipped);
    Ok(Status::Ok)
}

#[derive(Args)]
pub struct ModifyArgs {
    cascade: PathBuf,
    /// f0 track (default: sibling .f0.csv).
    #[arg(long)]
    f0: Option<PathBuf>,
    /// Constant pitch-scale factor.
    #[arg(long, conflicts_with = "schedule")]
    rho: Option<f64>,
    /// Constant time-scale factor.
    #[arg(long, conflicts_with = "schedule")]
    beta: Option<f64>,
    /// Breakpoint file with `time beta rho` lines.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Voicing override: one 0/1 value per frame (whitespace or commas).
    #[arg(long)]
    vuv: Option<PathBuf>,
    /// Output WAV file.
    #[arg(short, long)]
    output: PathBuf,
}

fn read_vuv(path: &Path, n: usize) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path)?;
    let flags = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Format(format!("voicing file: '{other}' is not 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    if flags.len() != n {
        return Err(Error::LengthMismatch { what: "voicing flags vs frames", left: flags.len(), right: n });
    }
    Ok(flags)
}

pub fn modify(args: ModifyArgs, config: &PipelineConfig) -> Result<Status> {
    let cascade = read_cascade(&args.cascade)?;
    let f0 = load_f0(args.f0, &args.cascade, &cascade.grid)?;
    let mut schedule = match &args.schedule {
        Some(p) => ScaleSchedule::from_breakpoints(&parse_schedule(&std::fs::read_to_string(p)?)?, &f0)?,
        None => ScaleSchedule::constant(&f0, args.beta.unwrap_or(1.0), args.rho.unwrap_or(1.0))?,
    };
    if let Some(p) = &args.vuv {
        let voiced = read_vuv(p, f0.len())?;
        schedule = ScaleSchedule::new(schedule.betas, schedule.rhos, voiced)?;
    }
    let out = harmvoc::modify::modify(&cascade, &f0, &schedule, &config.rule)?;
    let clipped = write_wav(&out.buffer, &args.output, config.write_options())?;
    report_written(&args.output, &out.buffer, clipped);
    let acfg = config.analysis();
    let detected = detect_f0(&out.buffer, &acfg.grid_for(&out.buffer)?, &acfg.pitch)?;
    match mean_voiced(&detected) {
        Some(m) => println!("mean detected f0  {m:.3} Hz"),
        None => println!("mean detected f0  - (no voiced frames)"),
    }
    if !out.silent_frames.is_empty() {
        println!("silent frames     {} (every shifted harmonic above the limit)", out.silent_frames.len());
    }
    Ok(Status::Ok)
}

#[derive(Args)]
pub struct EvalArgs {
    generated: PathBuf,
    reference: PathBuf,
    /// Pitch-scale factor applied to the reference f0.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Time-scale factor between reference and generated signal.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Write the report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-frame f0 and MCD trajectories as CSV.
    #[arg(long)]
    frames_csv: Option<PathBuf>,
}

/// Metrics of `generated` against `reference`; frame `l` of the generated
/// grid is paired with the reference frame nearest `t_l / beta`.
pub fn evaluate(
    generated: &SignalBuffer,
    reference: &SignalBuffer,
    rho: f64,
    beta: f64,
    config: &PipelineConfig,
) -> Result<(MetricReport, Vec<[f64; 4]>)> {
    if generated.sample_rate() != reference.sample_rate() {
        return Err(usage("signals have different sample rates"));
    }
    if !(rho > 0.0 && beta > 0.0) {
        return Err(usage("rho and beta must be positive"));
    }
    let acfg = config.analysis();
    let grid_g = acfg.grid_for(generated)?;
    let grid_r = acfg.grid_for(reference)?;
    let f0_g = detect_f0(generated, &grid_g, &acfg.pitch)?;
    let f0_r = detect_f0(reference, &grid_r, &acfg.pitch)?;
    let pairs: Vec<(usize, usize)> = grid_g
        .centers()
        .iter()
        .enumerate()
        .map(|(l, t)| (l, (t / beta / grid_r.frame_shift()).round() as usize))
        .take_while(|(_, m)| *m < grid_r.len())
        .collect();
    if pairs.is_empty() {
        return Err(Error::Undefined("no overlapping frames"));
    }
    let n = pairs.len();
    let shared = FrameGrid::new(
        grid_g.centers()[..n].to_vec(),
        grid_g.frame_shift(),
        grid_g.half_window(),
        grid_g.window(),
        grid_g.sample_rate(),
    )?;
    let gen_track = F0Track::new(shared.clone(), pairs.iter().map(|(l, _)| f0_g.values[*l]).collect())?;
    let ref_track = F0Track::new(shared, pairs.iter().map(|(_, m)| f0_r.values[*m]).collect())?;
    let cep_g = mel_cepstrum(generated, &grid_g, MEL_COEFFS)?;
    let cep_r = mel_cepstrum(reference, &grid_r, MEL_COEFFS)?;
    let paired_g: Vec<Vec<f64>> = pairs.iter().map(|(l, _)| cep_g[*l].clone()).collect();
    let paired_r: Vec<Vec<f64>> = pairs.iter().map(|(_, m)| cep_r[*m].clone()).collect();
    let per_frame = frame_mcd(&paired_g, &paired_r)?;
    let hop = (grid_g.frame_shift() * generated.sample_rate() as f64).round() as usize;
    let common = generated.len().min(reference.len());
    let snr = if beta == 1.0 && generated.len().abs_diff(reference.len()) < hop.max(1) {
        Some(snr_samples(&generated.samples()[..common], &reference.samples()[..common])?)
    } else {
        None
    };
    let report = MetricReport {
        vuv_rate: vuv_rate(&gen_track, &ref_track)?,
        f0_rmse: f0_rmse(&gen_track, &ref_track, &vec![rho; n])?,
        mcd: per_frame.iter().sum::<f64>() / n as f64,
        snr,
        ..MetricReport::default()
    };
    let rows = (0..n)
        .map(|i| [gen_track.grid.centers()[i], gen_track.values[i], ref_track.values[i], per_frame[i]])
        .collect();
    Ok((report, rows))
}

pub fn eval(args: EvalArgs, config: &PipelineConfig) -> Result<Status> {
    let generated = read_wav(&args.generated)?;
    let reference = read_wav(&args.reference)?;
    let (report, rows) = evaluate(&generated, &reference, args.rho, args.beta, config)?;
    print!("{}", report.to_table());
    if let Some(p) = &args.json {
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if let Some(p) = &args.frames_csv {
        let mut text = String::from("time,f0_generated,f0_reference,mcd\n");
        for r in rows {
            text.push_str(&format!("{},{},{},{}\n", r[0], r[1], r[2], r[3]));
        }
        std::fs::write(p, text)?;
    }
    Ok(Status::Ok)
}

#[derive(Args)]
pub struct BenchArgs {
    input: PathBuf,
    /// Timed runs per stage (after one warmup).
    #[arg(long, default_value_t = harmvoc::metrics::RTF_RUNS)]
    runs: usize,
    /// Skip timing the envelope fit; synthesis then uses a flat cascade.
    #[arg(long)]
    skip_fit: bool,
}

pub fn bench(args: BenchArgs, config: &PipelineConfig) -> Result<Status> {
    let buffer = read_wav(&args.input)?;
    let seconds = buffer.duration();
    let acfg = config.analysis();
    // single-threaded unless --threads asks otherwise
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.max(1))
        .build()
        .map_err(|e| usage(e.to_string()))?;
    pool.install(|| {
        let analysis = run_analysis(&buffer, &acfg, None)?;
        let analysis_rtf = rtf(|| run_analysis(&buffer, &acfg, None).map(drop), seconds, args.runs)?;
        let targets = targets_from_harmonics(&analysis.harmonics, &analysis.f0, &config.rule)?;
        let (cascade, fit_rtf) = if args.skip_fit {
            let flat = ArmaFrame::identity(0.01, config.orders);
            (ArmaCascade::constant(analysis.f0.grid.clone(), config.orders, flat)?, None)
        } else {
            let fit = fit_cascade(&targets, &analysis.f0, config.orders, &config.fit)?;
            let timing = rtf(|| fit_cascade(&targets, &analysis.f0, config.orders, &config.fit).map(drop), seconds, args.runs)?;
            (fit.cascade, Some(timing.median))
        };
        let synth_rtf = rtf(|| synthesize_arma(&cascade, &analysis.f0, &config.rule).map(drop), seconds, args.runs)?;
        let overall = rtf(
            || {
                let a = run_analysis(&buffer, &acfg, None)?;
                synthesize_arma(&cascade, &a.f0, &config.rule).map(drop)
            },
            seconds,
            args.runs,
        )?;
        let threads = rayon::current_num_threads();
        println!("input {:.3} s, {} thread(s), median of {} runs", seconds, threads, args.runs);
        println!("{:<28} {:>10}", "stage", "RTF");
        println!("{:<28} {:>10.4}", "analysis", analysis_rtf.median);
        match fit_rtf {
            Some(v) => println!("{:<28} {:>10.4}", "envelope fit", v),
            None => println!("{:<28} {:>10}", "envelope fit", "-"),
        }
        println!("{:<28} {:>10.4}", "synthesis", synth_rtf.median);
        println!("{:<28} {:>10.4}", "overall (analysis+synthesis)", overall.median);
        Ok(Status::Ok)
    })
}

#[derive(Clone, Copy, ValueEnum)]
pub enum KindArg {
    Tone,
    Multisine,
    Chirp,
    Am,
    Vowel,
    Noise,
}

#[derive(Args)]
pub struct FixtureArgs {
    #[arg(value_enum)]
    kind: KindArg,
    /// Output WAV file.
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth JSON (default: OUTPUT with a .json extension).
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Defaults to the configured sample rate.
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Tone or AM carrier frequency (Hz).
    #[arg(long, default_value_t = 200.0)]
    frequency: f64,
    /// Fundamental for multisine, chirp start and vowel (Hz).
    #[arg(long)]
    f0: Option<f64>,
    /// Chirp end frequency (Hz).
    #[arg(long, default_value_t = 300.0)]
    f_end: f64,
    /// Number of harmonics for multisine and chirp.
    #[arg(long, default_value_t = 10)]
    harmonics: usize,
    /// Comma-separated harmonic amplitudes (default 0.3/k).
    #[arg(long)]
    amplitudes: Option<String>,
    /// Comma-separated harmonic phases in radians (default 0).
    #[arg(long)]
    phases: Option<String>,
    /// Tone, AM and noise amplitude.
    #[arg(long, default_value_t = 0.5)]
    amplitude: f64,
    /// AM modulation depth.
    #[arg(long, default_value_t = 0.5)]
    depth: f64,
    /// AM modulation rate (Hz).
    #[arg(long, default_value_t = 4.0)]
    rate: f64,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("bad {what} value '{s}'"))))
        .collect()
}

pub fn gen_fixture(args: FixtureArgs, config: &PipelineConfig) -> Result<Status> {
    let fs = args.sample_rate.unwrap_or(config.sample_rate);
    let amplitudes = match &args.amplitudes {
        Some(t) => parse_list(t, "amplitude")?,
        None => (1..=args.harmonics).map(|k| 0.3 / k as f64).collect(),
    };
    let phases = match &args.phases {
        Some(t) => parse_list(t, "phase")?,
        None => vec![0.0; amplitudes.len()],
    };
    let spec = match args.kind {
        KindArg::Tone => FixtureSpec {
            sample_rate: fs,
            duration: args.duration,
            kind: FixtureKind::Tone { frequency: args.frequency, amplitude: args.amplitude, phase: 0.0 },
        },
        KindArg::Multisine => FixtureSpec {
            sample_rate: fs,
            duration: args.duration,
            kind: FixtureKind::Multisine { f0: args.f0.unwrap_or(200.0), amplitudes, phases },
        },
        KindArg::Chirp => FixtureSpec {
            sample_rate: fs,
            duration: args.duration,
            kind: FixtureKind::Chirp { f_start: args.f0.unwrap_or(150.0), f_end: args.f_end, amplitudes },
        },
        KindArg::Am => FixtureSpec {
            sample_rate: fs,
            duration: args.duration,
            kind: FixtureKind::Am { carrier: args.frequency, amplitude: args.amplitude, depth: args.depth, rate: args.rate },
        },
        KindArg::Vowel => FixtureSpec::vowel(args.f0.unwrap_or(150.0), args.duration, fs)?,
        KindArg::Noise => FixtureSpec {
            sample_rate: fs,
            duration: args.duration,
            kind: FixtureKind::Noise { amplitude: args.amplitude, seed: config.seed },
        },
    };
    let (buffer, truth) = spec.generate()?;
    let clipped = write_wav(&buffer, &args.output, config.write_options())?;
    let sidecar = args.sidecar.unwrap_or_else(|| args.output.with_extension("json"));
    std::fs::write(&sidecar, serde_json::to_string_pretty(&truth)? + "\n")?;
    report_written(&args.output, &buffer, clipped);
    println!("wrote {}", sidecar.display());
    Ok(Status::Ok)
}
