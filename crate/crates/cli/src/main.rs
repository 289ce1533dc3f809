//! `nirs-twin`: simulate, process, replay, serve, selftest and bench from the shell.
//!
//! Exit status is 0 on success, 1 on a runtime error and 2 on a usage error.

use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nirs_core::io::{write_markers_csv, write_truth_csv, LogHeader, RawLogWriter, SessionPaths};
use nirs_core::physio::protocol::{PhaseSpec, ProtocolTimeline};
use nirs_core::selftest::run_selftest;
use nirs_core::wire::{encode_frame_into, FrameStreamParser, StreamItem, FRAME_LEN};
use nirs_core::{process_pipeline, RecordingConfig, Simulation, SimulationConfig};
use nirs_service::export::{process_log, ExportOptions};
use nirs_service::server::session_dir_name;
use nirs_service::{SessionManager, SessionSpec, SourceSpec, DEFAULT_PORT, PORT_ENV};

#[derive(Debug, Parser)]
#[command(name = "nirs-twin", version, about = "Digital twin of a wearable dual-wavelength fNIRS headband")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a recording: raw log, ground truth and markers.
    Simulate(SimulateArgs),
    /// Run the processing pipeline over a raw log and write CSV exports.
    Process(ProcessArgs),
    /// Serve a recorded log to stream subscribers at a chosen speed.
    Replay(ReplayArgs),
    /// Run the session service.
    Serve(ServeArgs),
    /// Run the built-in invariant checks.
    Selftest,
    /// Measure frame throughput through encode, decode and the pipeline.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    /// TOML simulation config; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Protocol phases, e.g. `baseline:20,task:120,rest:60`.
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<ProtocolTimeline>,
    /// Subject age in years (selects the differential pathlength factor).
    #[arg(long)]
    age: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Seconds of acquisition; defaults to the protocol length.
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory [default: ./sessions/<timestamp>]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProcessArgs {
    /// Raw log to process.
    log: PathBuf,
    /// Output directory [default: the log's directory]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Subject age in years; overrides the value stored in the log.
    #[arg(long)]
    age: Option<f64>,
    /// Also write every frame as CSV.
    #[arg(long)]
    raw_csv: bool,
}

#[derive(Debug, Args)]
struct NetArgs {
    #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Raw log to replay.
    log: PathBuf,
    #[command(flatten)]
    net: NetArgs,
    /// Playback speed as a multiple of real time; 0 replays unpaced.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Session output directory [default: ./sessions/<timestamp>]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Parent directory for session recordings.
    #[arg(long, value_name = "DIR", default_value = "sessions")]
    out: PathBuf,
    /// Start a simulated session immediately.
    #[arg(long, conflicts_with = "serial")]
    sim: bool,
    /// Start a passthrough session on this serial device immediately.
    #[arg(long, value_name = "PATH")]
    serial: Option<PathBuf>,
    #[command(flatten)]
    sim_args: SimArgs,
    /// Pacing of the simulated session.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Seconds of simulated acquisition pushed through the path.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_protocol(s: &str) -> Result<ProtocolTimeline, String> {
    s.parse().map_err(|e: nirs_core::physio::SimError| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Process(args) => process(args),
        Command::Replay(args) => replay(args),
        Command::Serve(args) => serve(args),
        Command::Selftest => selftest(),
        Command::Bench(args) => bench(args),
    }
}

fn default_out() -> PathBuf {
    Path::new("sessions").join(session_dir_name())
}

impl SimArgs {
    fn config(&self) -> Result<SimulationConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                SimulationConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => SimulationConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(protocol) = &self.protocol {
            config.protocol = protocol.phases().to_vec();
        }
        if let Some(age) = self.age {
            config.age_years = age;
        }
        Ok(config)
    }
}

/// Trims or stretches the protocol so it lasts `duration_s`: later phases are
/// cut short, and the final phase absorbs any extra time.
fn fit_protocol(phases: &[PhaseSpec], duration_s: f64) -> Vec<PhaseSpec> {
    let mut out = Vec::new();
    let mut start = 0.0;
    for p in phases {
        if start >= duration_s {
            break;
        }
        out.push(PhaseSpec::new(p.label, p.duration_s.min(duration_s - start)));
        start += p.duration_s;
    }
    if let Some(last) = out.last_mut() {
        last.duration_s += (duration_s - start).max(0.0);
    }
    out
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = args.sim.config()?;
    if let Some(duration) = args.duration {
        if !(duration > 0.0 && duration.is_finite()) {
            bail!("--duration must be a positive number of seconds");
        }
        config.protocol = fit_protocol(&config.protocol, duration);
    }
    let out = args.out.unwrap_or_else(default_out);
    let mut sim = Simulation::new(config).context("building simulation")?;
    let paths = SessionPaths::new(&out);
    paths.ensure()?;

    let header = LogHeader {
        source: "sim".into(),
        config: serde_json::to_value(RecordingConfig::from_simulation(&sim))?,
        markers: sim.markers(),
    };
    let mut writer = RawLogWriter::create(&paths.raw_log(), &header)?;
    let total_us = (sim.timeline().total_duration_s() * 1e6).round() as u64;
    let mut write_error = None;
    sim.run(total_us, |frame| {
        if write_error.is_none() {
            write_error = writer.write_frame(&frame).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let frames = writer.frames_written();
    writer.flush()?;
    write_truth_csv(paths.create(&paths.truth_csv())?, sim.truth())?;
    write_markers_csv(paths.create(&paths.markers_csv())?, &sim.markers())?;
    println!("wrote {frames} frames to {}", paths.raw_log().display());
    Ok(())
}

fn process(args: ProcessArgs) -> Result<()> {
    let out = match args.out {
        Some(dir) => dir,
        None => args.log.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let options = ExportOptions { age_years: args.age, raw_csv: args.raw_csv };
    let report =
        process_log(&args.log, &out, &options).with_context(|| format!("processing {}", args.log.display()))?;
    println!("processed {} frames into {}", report.frames, out.display());
    match &report.output.heart_rate {
        Ok(hr) => println!("mean heart rate {:.1} bpm", hr.mean_bpm()),
        Err(e) => println!("heart rate unavailable: {e}"),
    }
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn replay(args: ReplayArgs) -> Result<()> {
    if !(args.speed >= 0.0 && args.speed.is_finite()) {
        bail!("--speed must be zero or positive");
    }
    let out = args.out.unwrap_or_else(default_out);
    let sessions_dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let manager = Arc::new(SessionManager::new());
    let spec =
        SessionSpec { speed: args.speed, ..SessionSpec::new(SourceSpec::Replay { path: args.log.clone() }, &out) };

    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.net.bind, args.net.port))
            .await
            .with_context(|| format!("binding {}:{}", args.net.bind, args.net.port))?;
        log::info!("replaying {} on http://{}", args.log.display(), listener.local_addr()?);
        manager.start(spec)?;
        let session = manager.current().expect("session just started");
        let done = tokio::task::spawn_blocking(move || session.wait());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(nirs_service::serve(listener, manager.clone(), sessions_dir, async {
            rx.await.ok();
        }));
        let summary = tokio::select! {
            summary = done => Some(summary?),
            _ = tokio::signal::ctrl_c() => None,
        };
        let summary = match summary {
            Some(s) => s,
            None => manager.stop()?,
        };
        tx.send(()).ok();
        server.await??;
        println!("replayed {} frames into {}", summary.frames_recorded, summary.dir.display());
        if let Some(e) = summary.error {
            bail!("replay stopped early: {e}");
        }
        Ok(())
    })
}

fn serve(args: ServeArgs) -> Result<()> {
    if !(args.speed >= 0.0 && args.speed.is_finite()) {
        bail!("--speed must be zero or positive");
    }
    let manager = Arc::new(SessionManager::new());
    let source = match (&args.serial, args.sim) {
        (Some(path), _) => Some(SourceSpec::Serial { path: path.clone() }),
        (None, true) => Some(SourceSpec::Sim(Box::new(args.sim_args.config()?))),
        (None, false) => None,
    };

    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.net.bind, args.net.port))
            .await
            .with_context(|| format!("binding {}:{}", args.net.bind, args.net.port))?;
        log::info!("serving on http://{}", listener.local_addr()?);
        if let Some(source) = source {
            let spec = SessionSpec { speed: args.speed, ..SessionSpec::new(source, args.out.join(session_dir_name())) };
            manager.start(spec)?;
        }
        let shutdown = async {
            tokio::signal::ctrl_c().await.ok();
        };
        nirs_service::serve(listener, manager.clone(), args.out.clone(), shutdown).await?;
        if let Some(session) = manager.current() {
            let summary = tokio::task::spawn_blocking(move || session.stop()).await?;
            log::info!("session {} stopped with {} frames recorded", summary.session_id, summary.frames_recorded);
        }
        Ok(())
    })
}

fn selftest() -> Result<()> {
    let checks = run_selftest();
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        bail!("{failed} selftest checks failed");
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        bail!("--duration must be a positive number of seconds");
    }
    let mut config = SimulationConfig { seed: args.seed, ..SimulationConfig::default() };
    config.protocol = fit_protocol(&config.protocol, args.duration);
    let mut sim = Simulation::new(config)?;
    let frames = sim.run_protocol()?;
    let markers = sim.markers();
    let pipeline = sim.pipeline_config();

    let start = Instant::now();
    let mut bytes = vec![0u8; frames.len() * FRAME_LEN];
    for (f, chunk) in frames.iter().zip(bytes.chunks_exact_mut(FRAME_LEN)) {
        encode_frame_into(f, chunk.try_into().expect("chunk is one frame"));
    }
    let encoded = start.elapsed();
    let mut parser = FrameStreamParser::new();
    let mut decoded = Vec::with_capacity(frames.len());
    parser.feed_with(&bytes, |item| {
        if let StreamItem::Frame(f) = item {
            decoded.push(f);
        }
    });
    let parsed = start.elapsed();
    if decoded != frames {
        bail!("decoded frames differ from the encoded ones");
    }
    let output = process_pipeline(&decoded, sim.layout(), sim.optics(), &pipeline, &markers)?;
    let total = start.elapsed();

    let n = frames.len() as f64;
    let rate = n / total.as_secs_f64();
    println!("frames: {}", frames.len());
    println!(
        "encode: {:.3} s, decode: {:.3} s, pipeline: {:.3} s",
        encoded.as_secs_f64(),
        (parsed - encoded).as_secs_f64(),
        (total - parsed).as_secs_f64()
    );
    println!("throughput: {rate:.0} frames/s ({:.1}x real time)", rate / 1000.0);
    println!("channels processed: {}", output.hemo.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nirs_core::physio::protocol::PhaseLabel;

    fn labels(phases: &[PhaseSpec]) -> Vec<(PhaseLabel, f64)> {
        phases.iter().map(|p| (p.label, p.duration_s)).collect()
    }

    #[test]
    fn protocol_is_cut_or_stretched_to_the_duration() {
        let default = ProtocolTimeline::default().phases().to_vec();
        assert_eq!(labels(&fit_protocol(&default, 200.0)), labels(&default));
        assert_eq!(labels(&fit_protocol(&default, 30.0)), [(PhaseLabel::Baseline, 20.0), (PhaseLabel::Task, 10.0)]);
        assert_eq!(labels(&fit_protocol(&default, 10.0)), [(PhaseLabel::Baseline, 10.0)]);
        assert_eq!(labels(&fit_protocol(&default, 260.0)).last(), Some(&(PhaseLabel::Rest, 120.0)));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
