//! Operator command documents and their translation into wire commands.
//!
//! A document is a single-key JSON object named after the command, e.g.
//! `{"set_emitter": {"group": 0, "wavelength_nm": 940, "duty": 2048}}`. Structural
//! problems (unknown command, bad group, unknown wavelength) are rejected here;
//! value ranges such as duty or PWM frequency are the device's to judge.

use nirs_core::ecu::EcuConfig;
use nirs_core::wire::{Command, MUX_AUTO};
use nirs_core::{Wavelength, DETECTORS_PER_GROUP, GROUPS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("malformed command document: {0}")]
    Malformed(String),
    #[error("group {0} out of range 0..{GROUPS}")]
    Group(u8),
    #[error("wavelength {0} nm is not 660 or 940")]
    Wavelength(u32),
    #[error("mux channel must be 0..{DETECTORS_PER_GROUP} or \"auto\"")]
    MuxChannel,
    #[error("cutoff must be a non-negative number of hertz")]
    Cutoff,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuxChannel {
    Index(u8),
    Word(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlDocument {
    /// Omitted fields keep their current values; group defaults to 0 and
    /// wavelength to 940 nm.
    SetEmitter {
        #[serde(default)]
        group: Option<u8>,
        #[serde(default)]
        wavelength_nm: Option<u32>,
        #[serde(default)]
        duty: Option<u16>,
        #[serde(default)]
        freq_hz: Option<u16>,
        #[serde(default)]
        phase: Option<u16>,
    },
    MuxOverride {
        group: u8,
        channel: MuxChannel,
    },
    SetIirCutoff {
        cutoff_hz: f64,
    },
    Stream {
        on: bool,
    },
    StatusReq {},
}

impl ControlDocument {
    pub fn parse(text: &str) -> Result<Self, ControlError> {
        serde_json::from_str(text).map_err(|e| ControlError::Malformed(e.to_string()))
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, ControlError> {
        serde_json::from_value(value).map_err(|e| ControlError::Malformed(e.to_string()))
    }

    /// Validates the document and resolves omitted fields against `current`.
    pub fn to_command(&self, current: &EcuConfig) -> Result<Command, ControlError> {
        let group = |g: u8| if (g as usize) < GROUPS { Ok(g) } else { Err(ControlError::Group(g)) };
        Ok(match self {
            ControlDocument::SetEmitter { group: g, wavelength_nm, duty, freq_hz, phase } => {
                let g = group(g.unwrap_or(0))?;
                let nm = wavelength_nm.unwrap_or(940);
                let wl = Wavelength::from_nm(nm).ok_or(ControlError::Wavelength(nm))?;
                let now = current.emitters[g as usize][wl.index()];
                Command::set_emitter(
                    g,
                    wl,
                    duty.unwrap_or(now.duty),
                    freq_hz.unwrap_or(now.freq_hz),
                    phase.unwrap_or(now.phase),
                )
            }
            ControlDocument::MuxOverride { group: g, channel } => {
                let channel = match channel {
                    MuxChannel::Index(c) if (*c as usize) < DETECTORS_PER_GROUP => *c,
                    MuxChannel::Word(w) if w == "auto" => MUX_AUTO,
                    _ => return Err(ControlError::MuxChannel),
                };
                Command::MuxOverride { group: group(*g)?, channel }
            }
            ControlDocument::SetIirCutoff { cutoff_hz } => {
                let centi = (cutoff_hz * 100.0).round();
                if !(centi >= 0.0 && centi <= f64::from(u32::MAX)) {
                    return Err(ControlError::Cutoff);
                }
                Command::SetIirCutoff { centi_hz: centi as u32 }
            }
            ControlDocument::Stream { on } => Command::Stream { on: u8::from(*on) },
            ControlDocument::StatusReq {} => Command::StatusReq,
        })
    }
}
