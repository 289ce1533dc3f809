//! Live stream records. Each record serializes to a single JSON line.

use nirs_core::ecu::{command_name, EcuStatus};
use nirs_core::types::Marker;
use nirs_core::wire::{Ack, AckStatus};
use nirs_core::Frame;
use serde::{Deserialize, Serialize};

/// Version of the record and command document shapes in `schema/stream.v1.json`.
pub const SCHEMA_VERSION: u32 = 1;

/// The checked-in JSON Schema describing records and command documents.
pub const SCHEMA_JSON: &str = include_str!("../schema/stream.v1.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamRecord {
    Raw(RawRecord),
    Processed(ProcessedRecord),
    Status(Box<StatusRecord>),
    Ack(AckRecord),
    /// Sent to a subscriber that fell behind; `dropped` counts its lost records so far.
    Lag {
        t_s: f64,
        dropped: u64,
    },
}

impl StreamRecord {
    pub fn t_s(&self) -> f64 {
        match self {
            StreamRecord::Raw(r) => r.t_s,
            StreamRecord::Processed(r) => r.t_s,
            StreamRecord::Status(r) => r.t_s,
            StreamRecord::Ack(r) => r.t_s,
            StreamRecord::Lag { t_s, .. } => *t_s,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StreamRecord::Raw(_) => "raw",
            StreamRecord::Processed(_) => "processed",
            StreamRecord::Status(_) => "status",
            StreamRecord::Ack(_) => "ack",
            StreamRecord::Lag { .. } => "lag",
        }
    }

    /// One line of newline-delimited JSON, including the trailing newline.
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("records always serialize");
        line.push('\n');
        line
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub t_s: f64,
    pub seq: u32,
    pub wavelength_nm: u32,
    pub mux_idx: Vec<u8>,
    pub samples: Vec<u16>,
}

impl RawRecord {
    pub fn from_frame(frame: &Frame, t_s: f64) -> Self {
        RawRecord {
            t_s,
            seq: frame.seq,
            wavelength_nm: frame.wavelength.nm(),
            mux_idx: frame.mux_idx.to_vec(),
            samples: frame.samples.to_vec(),
        }
    }
}

/// Newest hemodynamic samples of every channel since the previous processed record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessedRecord {
    pub t_s: f64,
    pub channels: Vec<ChannelTail>,
    pub heart_rate_bpm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelTail {
    pub channel: u8,
    pub t_s: Vec<f64>,
    pub hbo_um: Vec<f64>,
    pub hbr_um: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Streaming,
    Stopped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Sim,
    Replay,
    SerialPassthrough,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub t_s: f64,
    pub schema_version: u32,
    pub session_id: u64,
    pub source: SourceKind,
    pub state: SessionState,
    pub device: EcuStatus,
    pub markers: Vec<Marker>,
    pub frames_recorded: u64,
    pub processing_dropped: u64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AckRecord {
    pub t_s: f64,
    pub command: String,
    pub cmd_id: u8,
    pub status: AckStatus,
}

impl AckRecord {
    pub fn new(ack: Ack, t_s: f64) -> Self {
        AckRecord { t_s, command: command_name(ack.cmd_id).to_string(), cmd_id: ack.cmd_id, status: ack.status }
    }
}
