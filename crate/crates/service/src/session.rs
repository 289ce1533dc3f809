//! Session orchestration: one frame source feeding a lossless recorder, a
//! droppable live processor and the subscriber hub.
//!
//! The source thread hands every frame to the recorder through a bounded queue
//! with a blocking send, so the recorder never loses frames and back-pressures
//! the source instead. The processor queue uses `try_send` and counts what it
//! drops. Subscribers read from a broadcast hub where a slow reader loses its
//! oldest records without affecting anyone else.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::{BufWriter, Read, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};
use nirs_core::dsp::pipeline::baseline_from_markers;
use nirs_core::ecu::{CommandReceiver, Ecu, EcuStatus, Received};
use nirs_core::io::{write_truth_csv, LogHeader, RawLog, RawLogWriter, SessionPaths};
use nirs_core::physio::hemo::HemoGroundTruth;
use nirs_core::types::Marker;
use nirs_core::wire::{encode_ack, encode_command, Ack, AckStatus, Command, FrameStreamParser, StreamItem};
use nirs_core::{
    process_pipeline, DeviceConfig, Frame, OpticalTable, PipelineConfig, RecordingConfig, SensorLayout, Simulation,
    SimulationConfig,
};
use parking_lot::Mutex;
use tokio::sync::broadcast;

use crate::control::{ControlDocument, ControlError};
use crate::export::{process_log, recording_markers, recording_pipeline_config, ExportOptions};
use crate::record::{
    AckRecord, ChannelTail, ProcessedRecord, RawRecord, SessionState, SourceKind, StatusRecord, StreamRecord,
    SCHEMA_VERSION,
};

pub const PROCESSED_INTERVAL: Duration = Duration::from_millis(500);
pub const STATUS_INTERVAL: Duration = Duration::from_secs(1);
/// Raw records are decimated to at most 50 per second.
pub const RAW_INTERVAL: Duration = Duration::from_millis(20);
/// Longest stretch of recent data the live processor reprocesses.
pub const LIVE_WINDOW_S: f64 = 120.0;
pub const COMMAND_TIMEOUT: Duration = Duration::from_secs(2);
pub const HUB_CAPACITY: usize = 1024;
const RECORDER_QUEUE: usize = 8192;
const PROCESSOR_QUEUE: usize = 8192;
const SIM_CHUNK_US: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("a session is already streaming")]
    Busy,
    #[error("no session")]
    NoSession,
    #[error("session is not streaming")]
    NotStreaming,
    #[error("{0} sources do not accept commands")]
    NoCommands(&'static str),
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("device did not acknowledge within {0:?}")]
    Timeout(Duration),
    #[error("marker time must be a non-negative number of seconds")]
    NegativeTime,
    #[error("recorder: {0}")]
    Recorder(String),
}

/// Byte endpoints of an attached device.
pub struct DevicePort {
    pub reader: Box<dyn Read + Send>,
    pub writer: Box<dyn Write + Send>,
}

impl std::fmt::Debug for DevicePort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("DevicePort")
    }
}

#[derive(Debug)]
pub enum SourceSpec {
    Sim(Box<SimulationConfig>),
    Replay {
        path: PathBuf,
    },
    /// A serial device node (or anything else readable and writable) speaking the wire protocol.
    Serial {
        path: PathBuf,
    },
    Port(DevicePort),
}

impl SourceSpec {
    pub fn kind(&self) -> SourceKind {
        match self {
            SourceSpec::Sim(_) => SourceKind::Sim,
            SourceSpec::Replay { .. } => SourceKind::Replay,
            SourceSpec::Serial { .. } | SourceSpec::Port(_) => SourceKind::SerialPassthrough,
        }
    }
}

#[derive(Debug)]
pub struct SessionSpec {
    pub source: SourceSpec,
    pub out_dir: PathBuf,
    /// Playback rate relative to real time; 0 runs as fast as possible.
    pub speed: f64,
    /// Stops a simulated source after this much session time.
    pub duration_s: Option<f64>,
    pub export_raw_csv: bool,
}

impl SessionSpec {
    pub fn new(source: SourceSpec, out_dir: impl Into<PathBuf>) -> Self {
        SessionSpec { source, out_dir: out_dir.into(), speed: 1.0, duration_s: None, export_raw_csv: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionSummary {
    pub session_id: u64,
    pub dir: PathBuf,
    pub frames_produced: u64,
    pub frames_recorded: u64,
    pub processing_dropped: u64,
    pub error: Option<String>,
    pub export_error: Option<String>,
}

type AckReply = Sender<Ack>;

struct Shared {
    id: u64,
    kind: SourceKind,
    paths: SessionPaths,
    state: Mutex<SessionState>,
    device: Mutex<Ecu>,
    pipeline: PipelineConfig,
    markers: Mutex<Vec<Marker>>,
    error: Mutex<Option<String>>,
    t0_us: AtomicU64,
    latest_us: AtomicU64,
    frames_produced: AtomicU64,
    frames_recorded: AtomicU64,
    processing_dropped: AtomicU64,
    stop: AtomicBool,
    hub: broadcast::Sender<Arc<StreamRecord>>,
}

impl Shared {
    fn t_s(&self) -> f64 {
        let t0 = self.t0_us.load(Ordering::Acquire);
        if t0 == u64::MAX {
            return 0.0;
        }
        self.latest_us.load(Ordering::Acquire).saturating_sub(t0) as f64 * 1e-6
    }

    fn publish(&self, record: StreamRecord) {
        // No subscribers is not an error.
        let _ = self.hub.send(Arc::new(record));
    }

    fn status(&self) -> StatusRecord {
        let mut device: EcuStatus = self.device.lock().status();
        device.time_us = self.latest_us.load(Ordering::Acquire);
        StatusRecord {
            t_s: self.t_s(),
            schema_version: SCHEMA_VERSION,
            session_id: self.id,
            source: self.kind,
            state: *self.state.lock(),
            device,
            markers: self.markers.lock().clone(),
            frames_recorded: self.frames_recorded.load(Ordering::Acquire),
            processing_dropped: self.processing_dropped.load(Ordering::Acquire),
            error: self.error.lock().clone(),
        }
    }

    fn publish_status(&self) {
        self.publish(StreamRecord::Status(Box::new(self.status())));
    }

    fn fail(&self, message: String) {
        log::error!("session {}: {message}", self.id);
        self.error.lock().get_or_insert(message);
        self.stop.store(true, Ordering::Release);
    }

    /// Records an acknowledged command: mirrors it into the settings snapshot on
    /// success and publishes the ack followed by a fresh status record.
    fn acknowledged(&self, cmd: Option<&Command>, ack: Ack) {
        if let (Some(cmd), AckStatus::Ok) = (cmd, ack.status) {
            let mut quiet = |_: nirs_core::ChannelId, _: nirs_core::Wavelength, _: u64| 0.0;
            self.device.lock().handle_command(cmd, &mut quiet);
        }
        self.publish(StreamRecord::Ack(AckRecord::new(ack, self.t_s())));
        self.publish_status();
    }
}

/// Per-frame fan-out shared by all sources.
struct FrameSink {
    shared: Arc<Shared>,
    recorder: Sender<Frame>,
    processor: Sender<Frame>,
    last_raw: Option<Instant>,
}

impl FrameSink {
    /// False once the recorder is gone and the source should stop.
    fn push(&mut self, frame: Frame) -> bool {
        let s = &self.shared;
        if s.t0_us.load(Ordering::Acquire) == u64::MAX {
            s.t0_us.store(frame.timestamp_us, Ordering::Release);
        }
        s.latest_us.store(frame.timestamp_us, Ordering::Release);
        s.frames_produced.fetch_add(1, Ordering::AcqRel);
        if self.last_raw.is_none_or(|t| t.elapsed() >= RAW_INTERVAL) {
            self.last_raw = Some(Instant::now());
            s.publish(StreamRecord::Raw(RawRecord::from_frame(&frame, s.t_s())));
        }
        match self.processor.try_send(frame.clone()) {
            Ok(()) | Err(TrySendError::Disconnected(_)) => {}
            Err(TrySendError::Full(_)) => {
                s.processing_dropped.fetch_add(1, Ordering::AcqRel);
            }
        }
        self.recorder.send(frame).is_ok()
    }
}

/// How commands reach the device.
enum Commander {
    Channel(Sender<(Command, AckReply)>),
    Port { writer: Mutex<Box<dyn Write + Send>>, pending: Arc<Mutex<VecDeque<(Command, AckReply)>>> },
    None,
}

pub struct Session {
    shared: Arc<Shared>,
    commander: Commander,
    supervisor: Mutex<Option<JoinHandle<SessionSummary>>>,
    summary: Mutex<Option<SessionSummary>>,
}

impl Session {
    pub fn id(&self) -> u64 {
        self.shared.id
    }

    pub fn kind(&self) -> SourceKind {
        self.shared.kind
    }

    pub fn state(&self) -> SessionState {
        *self.shared.state.lock()
    }

    pub fn status(&self) -> StatusRecord {
        self.shared.status()
    }

    pub fn pipeline_config(&self) -> &PipelineConfig {
        &self.shared.pipeline
    }

    pub fn paths(&self) -> &SessionPaths {
        &self.shared.paths
    }

    pub fn markers(&self) -> Vec<Marker> {
        self.shared.markers.lock().clone()
    }

    pub fn device_config(&self) -> nirs_core::EcuConfig {
        self.shared.device.lock().config().clone()
    }

    /// Validates and sends a command document, waiting for the device's ack.
    pub fn control(&self, doc: &ControlDocument) -> Result<AckRecord, SessionError> {
        if self.state() != SessionState::Streaming {
            return Err(SessionError::NotStreaming);
        }
        let cmd = doc.to_command(&self.device_config())?;
        self.command(cmd)
    }

    pub fn command(&self, cmd: Command) -> Result<AckRecord, SessionError> {
        let (tx, rx) = bounded(1);
        match &self.commander {
            Commander::Channel(chan) => chan.send((cmd, tx)).map_err(|_| SessionError::NotStreaming)?,
            Commander::Port { writer, pending } => {
                pending.lock().push_back((cmd, tx));
                let mut w = writer.lock();
                w.write_all(&encode_command(&cmd))
                    .and_then(|()| w.flush())
                    .map_err(|e| SessionError::SourceUnavailable(e.to_string()))?;
            }
            Commander::None => return Err(SessionError::NoCommands("replay")),
        }
        let ack = rx.recv_timeout(COMMAND_TIMEOUT).map_err(|_| SessionError::Timeout(COMMAND_TIMEOUT))?;
        Ok(AckRecord::new(ack, self.shared.t_s()))
    }

    /// Inserts a marker after any existing markers at the same time.
    pub fn annotate(&self, label: &str, t_s: f64) -> Result<Vec<Marker>, SessionError> {
        if !(t_s >= 0.0) || !t_s.is_finite() {
            return Err(SessionError::NegativeTime);
        }
        let mut markers = self.shared.markers.lock();
        let at = markers.partition_point(|m| m.t_s <= t_s);
        markers.insert(at, Marker::new(label, t_s));
        let out = markers.clone();
        drop(markers);
        self.shared.publish_status();
        Ok(out)
    }

    /// Blocks until the source has finished on its own (replay end, duration reached).
    pub fn wait(&self) -> SessionSummary {
        if let Some(handle) = self.supervisor.lock().take() {
            let summary = handle.join().unwrap_or_else(|_| panic!("session supervisor panicked"));
            *self.summary.lock() = Some(summary);
        }
        self.summary.lock().clone().expect("summary stored once the supervisor finished")
    }

    pub fn stop(&self) -> SessionSummary {
        self.shared.stop.store(true, Ordering::Release);
        self.wait()
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
    }
}

/// Owns at most one streaming session and the hub every session publishes to.
pub struct SessionManager {
    next_id: AtomicU64,
    current: Mutex<Option<Arc<Session>>>,
    hub: broadcast::Sender<Arc<StreamRecord>>,
}

impl Default for SessionManager {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionManager {
    pub fn new() -> Self {
        let (hub, _) = broadcast::channel(HUB_CAPACITY);
        SessionManager { next_id: AtomicU64::new(1), current: Mutex::new(None), hub }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<StreamRecord>> {
        self.hub.subscribe()
    }

    pub fn subscriber_count(&self) -> usize {
        self.hub.receiver_count()
    }

    pub fn current(&self) -> Option<Arc<Session>> {
        self.current.lock().clone()
    }

    pub fn start(&self, spec: SessionSpec) -> Result<u64, SessionError> {
        let mut current = self.current.lock();
        if current.as_ref().is_some_and(|s| s.state() == SessionState::Streaming) {
            return Err(SessionError::Busy);
        }
        if !(spec.speed >= 0.0) || !spec.speed.is_finite() {
            return Err(SessionError::InvalidConfig(format!("speed {} must be finite and non-negative", spec.speed)));
        }
        let id = self.next_id.load(Ordering::Acquire);
        let session = launch(id, spec, self.hub.clone())?;
        self.next_id.store(id + 1, Ordering::Release);
        *current = Some(Arc::new(session));
        Ok(id)
    }

    pub fn stop(&self) -> Result<SessionSummary, SessionError> {
        let session = self.current().ok_or(SessionError::NoSession)?;
        Ok(session.stop())
    }

    pub fn control(&self, doc: &ControlDocument) -> Result<AckRecord, SessionError> {
        self.current().ok_or(SessionError::NoSession)?.control(doc)
    }

    pub fn annotate(&self, label: &str, t_s: f64) -> Result<Vec<Marker>, SessionError> {
        self.current().ok_or(SessionError::NoSession)?.annotate(label, t_s)
    }
}

struct Prepared {
    device: DeviceConfig,
    pipeline: PipelineConfig,
    markers: Vec<Marker>,
    header_config: serde_json::Value,
    truth: Option<HemoGroundTruth>,
    runner: Runner,
}

enum Runner {
    Sim(Box<Simulation>),
    Replay(Vec<Frame>),
    Port(Box<dyn Read + Send>, Option<Box<dyn Write + Send>>),
}

fn prepare(source: SourceSpec) -> Result<Prepared, SessionError> {
    let optics = OpticalTable::standard();
    match source {
        SourceSpec::Sim(cfg) => {
            let sim = Simulation::new(*cfg).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
            let rec = RecordingConfig::from_simulation(&sim);
            Ok(Prepared {
                device: rec.device.clone(),
                pipeline: rec.pipeline.clone(),
                markers: sim.markers(),
                header_config: serde_json::to_value(&rec).expect("config serializes"),
                truth: Some(sim.truth().clone()),
                runner: Runner::Sim(Box::new(sim)),
            })
        }
        SourceSpec::Replay { path } => {
            let log = RawLog::read(&path).map_err(|e| SessionError::SourceUnavailable(e.to_string()))?;
            let (frames, stats, trailing) = log.frames_lenient();
            if stats.crc_failures + stats.invalid_frames > 0 || trailing > 0 {
                log::warn!("{}: replaying {} frames past corrupt or partial data", path.display(), frames.len());
            }
            let device = serde_json::from_value::<RecordingConfig>(log.header.config.clone())
                .map(|r| r.device)
                .unwrap_or_default();
            Ok(Prepared {
                device,
                pipeline: recording_pipeline_config(&log, &optics),
                markers: recording_markers(&log, &path).map_err(|e| SessionError::SourceUnavailable(e.to_string()))?,
                header_config: log.header.config.clone(),
                truth: None,
                runner: Runner::Replay(frames),
            })
        }
        SourceSpec::Serial { path } => {
            let open = || OpenOptions::new().read(true).write(true).open(&path);
            let reader = open().map_err(|e| SessionError::SourceUnavailable(format!("{}: {e}", path.display())))?;
            let writer = reader.try_clone().map_err(|e| SessionError::SourceUnavailable(e.to_string()))?;
            port_prepared(Box::new(reader), Box::new(writer), &optics)
        }
        SourceSpec::Port(port) => port_prepared(port.reader, port.writer, &optics),
    }
}

fn port_prepared(
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    optics: &OpticalTable,
) -> Result<Prepared, SessionError> {
    let device = DeviceConfig::default();
    let pipeline = PipelineConfig {
        calibration: nirs_core::dsp::FrontEndCalibration::from_device(&device.afe, optics),
        ..PipelineConfig::default()
    };
    let rec = RecordingConfig { device: device.clone(), pipeline: pipeline.clone(), simulation: None };
    Ok(Prepared {
        device,
        pipeline,
        markers: Vec::new(),
        header_config: serde_json::to_value(&rec).expect("config serializes"),
        truth: None,
        runner: Runner::Port(reader, Some(writer)),
    })
}

fn launch(id: u64, spec: SessionSpec, hub: broadcast::Sender<Arc<StreamRecord>>) -> Result<Session, SessionError> {
    let kind = spec.source.kind();
    let mut prepared = prepare(spec.source)?;
    let paths = SessionPaths::new(&spec.out_dir);
    paths.ensure().map_err(|e| SessionError::Recorder(e.to_string()))?;
    let header = LogHeader {
        source: serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        config: prepared.header_config.clone(),
        markers: prepared.markers.clone(),
    };
    let writer = RawLogWriter::create(&paths.raw_log(), &header).map_err(|e| SessionError::Recorder(e.to_string()))?;
    let ecu = Ecu::new(prepared.device.ecu.clone()).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;

    let shared = Arc::new(Shared {
        id,
        kind,
        paths,
        state: Mutex::new(SessionState::Streaming),
        device: Mutex::new(ecu),
        pipeline: prepared.pipeline.clone(),
        markers: Mutex::new(prepared.markers.clone()),
        error: Mutex::new(None),
        t0_us: AtomicU64::new(u64::MAX),
        latest_us: AtomicU64::new(0),
        frames_produced: AtomicU64::new(0),
        frames_recorded: AtomicU64::new(0),
        processing_dropped: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        hub,
    });

    let (rec_tx, rec_rx) = bounded(RECORDER_QUEUE);
    let (proc_tx, proc_rx) = bounded(PROCESSOR_QUEUE);
    let sink = FrameSink { shared: shared.clone(), recorder: rec_tx, processor: proc_tx, last_raw: None };

    let recorder = {
        let shared = shared.clone();
        std::thread::Builder::new()
            .name(format!("recorder-{id}"))
            .spawn(move || record(&shared, writer, rec_rx))
            .expect("spawn recorder")
    };
    let processor = {
        let shared = shared.clone();
        std::thread::Builder::new()
            .name(format!("processor-{id}"))
            .spawn(move || process_live(&shared, proc_rx))
            .expect("spawn processor")
    };

    let (commander, source) = match std::mem::replace(&mut prepared.runner, Runner::Replay(Vec::new())) {
        Runner::Sim(sim) => {
            let (cmd_tx, cmd_rx) = bounded(16);
            let (speed, duration) = (spec.speed, spec.duration_s);
            let handle = std::thread::Builder::new()
                .name(format!("sim-{id}"))
                .spawn(move || run_sim(*sim, sink, cmd_rx, speed, duration))
                .expect("spawn sim");
            (Commander::Channel(cmd_tx), handle)
        }
        Runner::Replay(frames) => {
            let speed = spec.speed;
            let handle = std::thread::Builder::new()
                .name(format!("replay-{id}"))
                .spawn(move || run_replay(frames, sink, speed))
                .expect("spawn replay");
            (Commander::None, handle)
        }
        Runner::Port(reader, writer) => {
            let pending = Arc::new(Mutex::new(VecDeque::new()));
            let pending_reader = pending.clone();
            let handle = std::thread::Builder::new()
                .name(format!("port-{id}"))
                .spawn(move || run_port(reader, sink, pending_reader))
                .expect("spawn port reader");
            let writer = writer.expect("port has a writer");
            (Commander::Port { writer: Mutex::new(writer), pending }, handle)
        }
    };

    let truth = prepared.truth.take();
    let export_raw_csv = spec.export_raw_csv;
    let supervisor = {
        let shared = shared.clone();
        std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || {
                if source.join().is_err() {
                    shared.fail("source thread panicked".into());
                }
                let recorded = recorder.join().unwrap_or_else(|_| Err("recorder panicked".into()));
                let _ = processor.join();
                if let Err(e) = recorded {
                    shared.fail(e);
                }
                let export_error = finish(&shared, truth.as_ref(), export_raw_csv).err();
                *shared.state.lock() = SessionState::Stopped;
                shared.publish_status();
                SessionSummary {
                    session_id: shared.id,
                    dir: shared.paths.dir.clone(),
                    frames_produced: shared.frames_produced.load(Ordering::Acquire),
                    frames_recorded: shared.frames_recorded.load(Ordering::Acquire),
                    processing_dropped: shared.processing_dropped.load(Ordering::Acquire),
                    error: shared.error.lock().clone(),
                    export_error,
                }
            })
            .expect("spawn supervisor")
    };

    shared.publish_status();
    Ok(Session { shared, commander, supervisor: Mutex::new(Some(supervisor)), summary: Mutex::new(None) })
}

/// Writes every frame to the raw log; flushes whenever the queue runs dry.
fn record(
    shared: &Shared,
    mut writer: RawLogWriter<BufWriter<std::fs::File>>,
    frames: Receiver<Frame>,
) -> Result<(), String> {
    let result = (|| {
        loop {
            let frame = match frames.try_recv() {
                Ok(f) => f,
                Err(_) => {
                    writer.flush()?;
                    match frames.recv() {
                        Ok(f) => f,
                        Err(_) => break,
                    }
                }
            };
            writer.write_frame(&frame)?;
            shared.frames_recorded.fetch_add(1, Ordering::AcqRel);
        }
        writer.flush()
    })();
    result.map_err(|e| {
        // Unblock the source, which may be waiting on a full queue.
        shared.stop.store(true, Ordering::Release);
        drop(frames);
        format!("raw log write failed: {e}")
    })
}

fn finish(shared: &Shared, truth: Option<&HemoGroundTruth>, raw_csv: bool) -> Result<(), String> {
    let paths = &shared.paths;
    nirs_core::io::write_markers_csv(
        paths.create(&paths.markers_csv()).map_err(|e| e.to_string())?,
        &shared.markers.lock(),
    )
    .map_err(|e| e.to_string())?;
    if let Some(truth) = truth {
        write_truth_csv(paths.create(&paths.truth_csv()).map_err(|e| e.to_string())?, truth)
            .map_err(|e| e.to_string())?;
    }
    if shared.frames_recorded.load(Ordering::Acquire) == 0 {
        return Ok(());
    }
    let options = ExportOptions { age_years: None, raw_csv };
    process_log(&paths.raw_log(), &paths.dir, &options).map(|_| ()).map_err(|e| e.to_string())
}

fn run_sim(
    mut sim: Simulation,
    mut sink: FrameSink,
    commands: Receiver<(Command, AckReply)>,
    speed: f64,
    duration_s: Option<f64>,
) {
    let shared = sink.shared.clone();
    let end_us = duration_s.map(|d| (d * 1e6).round() as u64);
    let started = Instant::now();
    let start_us = sim.time_us();
    let mut firmware = CommandReceiver::new();
    let mut link = FrameStreamParser::new();
    let mut alive = true;
    while alive && !shared.stop.load(Ordering::Acquire) {
        while let Ok((cmd, reply)) = commands.try_recv() {
            // The command crosses the wire in both directions.
            let mut acks = Vec::new();
            for received in firmware.feed(&encode_command(&cmd)) {
                let ack = match received {
                    Received::Command(c) => sim.handle_command(&c).ack,
                    Received::Rejected(ack) => ack,
                };
                acks.extend(link.feed(&encode_ack(&ack)));
            }
            for item in acks {
                if let StreamItem::Ack(ack) = item {
                    shared.acknowledged(Some(&cmd), ack);
                    let _ = reply.send(ack);
                }
            }
        }
        let elapsed = sim.time_us() - start_us;
        let chunk = match end_us {
            Some(end) if elapsed >= end => break,
            Some(end) => SIM_CHUNK_US.min(end - elapsed),
            None => SIM_CHUNK_US,
        };
        if let Err(e) = sim.run(chunk, |f| alive &= sink.push(f)) {
            shared.fail(e.to_string());
            break;
        }
        if speed > 0.0 {
            let due = Duration::from_secs_f64((sim.time_us() - start_us) as f64 * 1e-6 / speed);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
    }
}

fn run_replay(frames: Vec<Frame>, mut sink: FrameSink, speed: f64) {
    let shared = sink.shared.clone();
    let started = Instant::now();
    let first_us = frames.first().map_or(0, |f| f.timestamp_us);
    for frame in frames {
        if shared.stop.load(Ordering::Acquire) {
            break;
        }
        if speed > 0.0 {
            let due = Duration::from_secs_f64(frame.timestamp_us.saturating_sub(first_us) as f64 * 1e-6 / speed);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if !sink.push(frame) {
            break;
        }
    }
}

fn run_port(mut reader: Box<dyn Read + Send>, mut sink: FrameSink, pending: Arc<Mutex<VecDeque<(Command, AckReply)>>>) {
    let shared = sink.shared.clone();
    let mut parser = FrameStreamParser::new();
    let mut buf = vec![0u8; 4096];
    while !shared.stop.load(Ordering::Acquire) {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => {
                shared.fail(format!("device read failed: {e}"));
                break;
            }
        };
        let mut alive = true;
        parser.feed_with(&buf[..n], |item| match item {
            StreamItem::Frame(f) => alive &= sink.push(f),
            StreamItem::Ack(ack) => {
                let mut queue = pending.lock();
                let waiting = queue.iter().position(|(c, _)| c.id() as u8 == ack.cmd_id).and_then(|i| queue.remove(i));
                drop(queue);
                shared.acknowledged(waiting.as_ref().map(|(c, _)| c), ack);
                if let Some((_, reply)) = waiting {
                    let _ = reply.send(ack);
                }
            }
        });
        if !alive {
            break;
        }
    }
}

/// Reprocesses the most recent window at a fixed wall-clock cadence and
/// publishes the samples that are new since the previous record. Also emits the
/// periodic status record.
fn process_live(shared: &Shared, frames: Receiver<Frame>) {
    let layout = SensorLayout::harness();
    let optics = OpticalTable::standard();
    let capacity = (LIVE_WINDOW_S * 1000.0) as usize;
    let mut window: VecDeque<Frame> = VecDeque::with_capacity(capacity);
    let mut next_processed = Instant::now() + PROCESSED_INTERVAL;
    let mut next_status = Instant::now() + STATUS_INTERVAL;
    let mut emitted_until = f64::NEG_INFINITY;
    let mut open = true;
    while open {
        let deadline = next_processed.min(next_status);
        match frames.recv_deadline(deadline) {
            Ok(f) => {
                if window.len() == capacity {
                    window.pop_front();
                }
                window.push_back(f);
                while let Ok(f) = frames.try_recv() {
                    if window.len() == capacity {
                        window.pop_front();
                    }
                    window.push_back(f);
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => open = false,
        }
        let now = Instant::now();
        if now >= next_processed {
            next_processed = now + PROCESSED_INTERVAL;
            let record = processed_record(shared, window.make_contiguous(), &layout, &optics, &mut emitted_until);
            shared.publish(StreamRecord::Processed(record));
        }
        if now >= next_status {
            next_status = now + STATUS_INTERVAL;
            shared.publish_status();
        }
    }
}

fn processed_record(
    shared: &Shared,
    frames: &[Frame],
    layout: &SensorLayout,
    optics: &OpticalTable,
    emitted_until: &mut f64,
) -> ProcessedRecord {
    let t_s = shared.t_s();
    let mut record = ProcessedRecord { t_s, channels: Vec::new(), heart_rate_bpm: None };
    let Some(first) = frames.first() else { return record };
    let t0 = shared.t0_us.load(Ordering::Acquire);
    let window_start_s = first.timestamp_us.saturating_sub(t0) as f64 * 1e-6;
    let window_len_s = frames.last().map_or(0, |f| f.timestamp_us - first.timestamp_us) as f64 * 1e-6;

    let shifted: Vec<Marker> =
        shared.markers.lock().iter().map(|m| Marker::new(m.label.clone(), m.t_s - window_start_s)).collect();
    let mut config = shared.pipeline.clone();
    if config.baseline_window_s.is_none() {
        config.baseline_window_s =
            baseline_from_markers(&shifted).filter(|&(a, b)| b > 0.0 && a < window_len_s).map(|(a, b)| (a.max(0.0), b));
    }
    let Ok(out) = process_pipeline(frames, layout, optics, &config, &[]) else { return record };
    record.heart_rate_bpm = out.heart_rate.as_ref().ok().map(|hr| hr.mean_bpm()).filter(|b| b.is_finite());
    let offset = t0 as f64 * 1e-6;
    let mut newest = *emitted_until;
    for h in &out.hemo {
        let mut tail =
            ChannelTail { channel: h.channel.index() as u8, t_s: Vec::new(), hbo_um: Vec::new(), hbr_um: Vec::new() };
        for i in 0..h.timestamps_s.len() {
            let t = h.timestamps_s[i] - offset;
            if t > *emitted_until {
                tail.t_s.push(t);
                tail.hbo_um.push(h.hbo_um[i]);
                tail.hbr_um.push(h.hbr_um[i]);
                newest = newest.max(t);
            }
        }
        record.channels.push(tail);
    }
    *emitted_until = newest;
    record
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim_spec(dir: &std::path::Path, duration_s: f64) -> SessionSpec {
        SessionSpec {
            speed: 0.0,
            duration_s: Some(duration_s),
            ..SessionSpec::new(SourceSpec::Sim(Box::default()), dir)
        }
    }

    #[test]
    fn ids_are_monotonic_and_sessions_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let manager = SessionManager::new();
        let live = SessionSpec { speed: 1.0, duration_s: None, ..sim_spec(&dir.path().join("a"), 0.0) };
        assert_eq!(manager.start(live), Ok(1));
        assert_eq!(manager.start(sim_spec(&dir.path().join("b"), 1.0)), Err(SessionError::Busy));
        manager.stop().unwrap();
        assert_eq!(manager.start(sim_spec(&dir.path().join("c"), 0.5)), Ok(2));
        let summary = manager.current().unwrap().wait();
        assert_eq!(summary.session_id, 2);
        assert_eq!(summary.frames_recorded, 500);
    }

    #[test]
    fn missing_replay_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let manager = SessionManager::new();
        let spec = SessionSpec::new(SourceSpec::Replay { path: dir.path().join("nope.bin") }, dir.path());
        assert!(matches!(manager.start(spec), Err(SessionError::SourceUnavailable(_))));
        assert!(manager.current().is_none());
    }

    #[test]
    fn annotations_stay_sorted_and_reject_negative_times() {
        let dir = tempfile::tempdir().unwrap();
        let manager = SessionManager::new();
        manager.start(SessionSpec { speed: 1.0, duration_s: None, ..sim_spec(dir.path(), 0.0) }).unwrap();
        let s = manager.current().unwrap();
        let before = s.markers().len();
        s.annotate("task", 20.0).unwrap();
        let markers = s.annotate("probe", 20.0).unwrap();
        assert_eq!(markers.len(), before + 2);
        assert!(markers.windows(2).all(|w| w[0].t_s <= w[1].t_s));
        let at_20: Vec<&str> = markers.iter().filter(|m| m.t_s == 20.0).map(|m| m.label.as_str()).collect();
        assert_eq!(at_20, ["task", "task", "probe"]);
        assert_eq!(s.annotate("x", -1.0), Err(SessionError::NegativeTime));
        manager.stop().unwrap();
        assert!(s.annotate("after", 1.0).is_ok());
    }

    #[test]
    fn replay_sources_refuse_commands() {
        let dir = tempfile::tempdir().unwrap();
        let manager = SessionManager::new();
        manager.start(sim_spec(&dir.path().join("rec"), 0.2)).unwrap();
        manager.current().unwrap().wait();
        let log = dir.path().join("rec").join("raw.bin");
        manager
            .start(SessionSpec {
                speed: 1.0,
                ..SessionSpec::new(SourceSpec::Replay { path: log }, dir.path().join("rep"))
            })
            .unwrap();
        let doc = ControlDocument::StatusReq {};
        assert_eq!(manager.control(&doc), Err(SessionError::NoCommands("replay")));
        manager.stop().unwrap();
    }
}
