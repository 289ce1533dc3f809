use std::fmt;

use serde::{Deserialize, Serialize};

pub const GROUPS: usize = 8;
pub const DETECTORS_PER_GROUP: usize = 3;
pub const CHANNELS: usize = GROUPS * DETECTORS_PER_GROUP;

/// Largest 12-bit ADC code.
pub const ADC_MAX_CODE: u16 = 4095;

/// The two emitter wavelengths of the dual-wavelength LED package.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Wavelength {
    Nm660,
    Nm940,
}

impl Wavelength {
    pub const ALL: [Wavelength; 2] = [Wavelength::Nm660, Wavelength::Nm940];

    pub fn nm(self) -> u32 {
        match self {
            Wavelength::Nm660 => 660,
            Wavelength::Nm940 => 940,
        }
    }

    pub fn from_nm(nm: u32) -> Option<Self> {
        match nm {
            660 => Some(Wavelength::Nm660),
            940 => Some(Wavelength::Nm940),
            _ => None,
        }
    }

    /// Index into per-wavelength arrays; also the on-wire code (0 = 660 nm, 1 = 940 nm).
    pub fn index(self) -> usize {
        match self {
            Wavelength::Nm660 => 0,
            Wavelength::Nm940 => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn other(self) -> Self {
        match self {
            Wavelength::Nm660 => Wavelength::Nm940,
            Wavelength::Nm940 => Wavelength::Nm660,
        }
    }
}

impl From<Wavelength> for u32 {
    fn from(wl: Wavelength) -> u32 {
        wl.nm()
    }
}

impl TryFrom<u32> for Wavelength {
    type Error = String;

    fn try_from(nm: u32) -> Result<Self, Self::Error> {
        Wavelength::from_nm(nm).ok_or_else(|| format!("unsupported wavelength {nm} nm"))
    }
}

impl fmt::Display for Wavelength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nm", self.nm())
    }
}

/// Detector channel index, 0–23, group-major: `channel = group * 3 + mux position`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ChannelId(u8);

impl ChannelId {
    pub fn new(id: usize) -> Option<Self> {
        (id < CHANNELS).then_some(ChannelId(id as u8))
    }

    pub fn from_parts(group: usize, mux: usize) -> Option<Self> {
        if group < GROUPS && mux < DETECTORS_PER_GROUP {
            Some(ChannelId((group * DETECTORS_PER_GROUP + mux) as u8))
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn group(self) -> usize {
        self.index() / DETECTORS_PER_GROUP
    }

    /// Position of this detector on its group's 3:1 multiplexer.
    pub fn mux_position(self) -> usize {
        self.index() % DETECTORS_PER_GROUP
    }

    pub fn all() -> impl Iterator<Item = ChannelId> {
        (0..CHANNELS as u8).map(ChannelId)
    }
}

impl From<ChannelId> for u8 {
    fn from(ch: ChannelId) -> u8 {
        ch.0
    }
}

impl TryFrom<u8> for ChannelId {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        ChannelId::new(v as usize).ok_or_else(|| format!("channel id {v} out of range"))
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

/// One 1 kHz telemetry record: the latest filtered value of every channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u32,
    pub timestamp_us: u64,
    pub wavelength: Wavelength,
    /// Multiplexer position currently selected on each group.
    pub mux_idx: [u8; GROUPS],
    /// ADC-code samples, group-major.
    pub samples: [u16; CHANNELS],
}

impl Frame {
    pub fn zeroed(seq: u32, timestamp_us: u64) -> Self {
        Frame { seq, timestamp_us, wavelength: Wavelength::Nm660, mux_idx: [0; GROUPS], samples: [0; CHANNELS] }
    }

    /// True when `channel` was the selected input of its group's multiplexer in this frame.
    pub fn is_fresh(&self, channel: ChannelId) -> bool {
        self.mux_idx[channel.group()] as usize == channel.mux_position()
    }

    pub fn sample(&self, channel: ChannelId) -> u16 {
        self.samples[channel.index()]
    }
}

/// A labelled point on the session clock, e.g. the start of a protocol phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub label: String,
    pub t_s: f64,
}

impl Marker {
    pub fn new(label: impl Into<String>, t_s: f64) -> Self {
        Marker { label: label.into(), t_s }
    }
}
