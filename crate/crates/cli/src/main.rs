mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use harmvoc::config::PipelineConfig;
use harmvoc::Error;

#[derive(Parser)]
#[command(name = "harmvoc", version, about = "Quasi-harmonic analysis, ARMA envelopes and resynthesis")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Flags override the config file, which
/// overrides built-in defaults.
#[derive(Args, Debug, Default)]
pub struct GlobalArgs {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generated noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seconds between frame centers.
    #[arg(long, global = true)]
    frame_shift: Option<f64>,
    /// Full analysis window length in seconds.
    #[arg(long, global = true)]
    window_length: Option<f64>,
    /// hann, hamming or gaussian:SIGMA.
    #[arg(long, global = true)]
    window: Option<String>,
    /// ARMA orders as P,Q,r.
    #[arg(long, global = true)]
    orders: Option<String>,
    /// Hz kept free below Nyquist when counting harmonics.
    #[arg(long, global = true)]
    k_guard: Option<f64>,
    /// Cap on the number of harmonics per frame.
    #[arg(long, global = true)]
    max_components: Option<usize>,
    /// f0 search range as MIN,MAX in Hz.
    #[arg(long, global = true)]
    f0_range: Option<String>,
    /// Output format for harmonics and cascade files.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Bin,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate f0 and quasi-harmonic parameters of a WAV file.
    Analyze(commands::AnalyzeArgs),
    /// Fit a cascaded ARMA envelope to every frame of a harmonics file.
    FitEnvelope(commands::FitArgs),
    /// Render a cascade (or, with --from-harmonics, a harmonics file) to WAV.
    Synth(commands::SynthArgs),
    /// Time- and pitch-scale a cascade and render it.
    Modify(commands::ModifyArgs),
    /// Compare a generated signal against a reference.
    Eval(commands::EvalArgs),
    /// Time analysis, fitting and synthesis on one input.
    Bench(commands::BenchArgs),
    /// Write a synthetic test signal and its ground-truth sidecar.
    GenFixture(commands::FixtureArgs),
}

impl GlobalArgs {
    fn config(&self) -> harmvoc::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| c.set(k, &v));
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("threads", self.threads.map(|v| v.to_string()))?;
        set("frame_shift", self.frame_shift.map(|v| v.to_string()))?;
        set("window_length", self.window_length.map(|v| v.to_string()))?;
        set("window", self.window.clone())?;
        set("orders", self.orders.clone())?;
        set("k_guard", self.k_guard.map(|v| v.to_string()))?;
        set("max_components", self.max_components.map(|v| v.to_string()))?;
        set("f0_range", self.f0_range.clone())?;
        set(
            "format",
            self.format.map(|f| match f {
                FormatArg::Json => "json".into(),
                FormatArg::Bin => "bin".into(),
            }),
        )?;
        c.validate()?;
        Ok(c)
    }
}

/// 2 for usage and I/O problems, 1 for numerical failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::AudioRead { .. }
        | Error::AudioWrite { .. }
        | Error::UnsupportedFormat(_)
        | Error::EmptyAudio(_)
        | Error::LengthMismatch { .. }
        | Error::Format(_)
        | Error::Config(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.global.config().and_then(|config| {
        if config.threads > 0 {
            // only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
        }
        match cli.command {
            Command::Analyze(a) => commands::analyze(a, &config),
            Command::FitEnvelope(a) => commands::fit_envelope(a, &config),
            Command::Synth(a) => commands::synth(a, &config),
            Command::Modify(a) => commands::modify(a, &config),
            Command::Eval(a) => commands::eval(a, &config),
            Command::Bench(a) => commands::bench(a, &config),
            Command::GenFixture(a) => commands::gen_fixture(a, &config),
        }
    });
    match result {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Flagged(msg)) => {
            eprintln!("harmvoc: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("harmvoc: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
