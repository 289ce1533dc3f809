use serde::{Deserialize, Serialize};

use super::{crc16, WireError};
use crate::types::Wavelength;

pub const COMMAND_MAGIC: u8 = 0xC3;
pub const ACK_MAGIC: u8 = 0x3C;
pub const ACK_LEN: usize = 5;
/// `MUX_OVERRIDE` channel value that restores automatic cycling.
pub const MUX_AUTO: u8 = 0xFF;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CommandId {
    SetEmitter = 0x01,
    MuxOverride = 0x02,
    SetIirCutoff = 0x03,
    Stream = 0x04,
    StatusReq = 0x05,
}

impl CommandId {
    pub fn from_u8(id: u8) -> Option<Self> {
        Some(match id {
            0x01 => CommandId::SetEmitter,
            0x02 => CommandId::MuxOverride,
            0x03 => CommandId::SetIirCutoff,
            0x04 => CommandId::Stream,
            0x05 => CommandId::StatusReq,
            _ => return None,
        })
    }

    pub fn payload_len(self) -> u8 {
        match self {
            CommandId::SetEmitter => 8,
            CommandId::MuxOverride => 2,
            CommandId::SetIirCutoff => 4,
            CommandId::Stream => 1,
            CommandId::StatusReq => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CommandId::SetEmitter => "set_emitter",
            CommandId::MuxOverride => "mux_override",
            CommandId::SetIirCutoff => "set_iir_cutoff",
            CommandId::Stream => "stream",
            CommandId::StatusReq => "status_req",
        }
    }
}

/// A control command. Field values are carried as raw wire values; range checks
/// belong to the device, which answers out-of-range values with a bad-param ack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    SetEmitter {
        group: u8,
        /// 0 = 660 nm, 1 = 940 nm.
        wavelength: u8,
        duty: u16,
        freq_hz: u16,
        phase: u16,
    },
    MuxOverride {
        group: u8,
        channel: u8,
    },
    SetIirCutoff {
        centi_hz: u32,
    },
    Stream {
        on: u8,
    },
    StatusReq,
}

impl Command {
    pub fn set_emitter(group: u8, wavelength: Wavelength, duty: u16, freq_hz: u16, phase: u16) -> Self {
        Command::SetEmitter { group, wavelength: wavelength.index() as u8, duty, freq_hz, phase }
    }

    pub fn id(&self) -> CommandId {
        match self {
            Command::SetEmitter { .. } => CommandId::SetEmitter,
            Command::MuxOverride { .. } => CommandId::MuxOverride,
            Command::SetIirCutoff { .. } => CommandId::SetIirCutoff,
            Command::Stream { .. } => CommandId::Stream,
            Command::StatusReq => CommandId::StatusReq,
        }
    }
}

pub fn encode_command(cmd: &Command) -> Vec<u8> {
    let id = cmd.id();
    let mut out = Vec::with_capacity(5 + id.payload_len() as usize);
    out.extend_from_slice(&[COMMAND_MAGIC, id as u8, id.payload_len()]);
    match *cmd {
        Command::SetEmitter { group, wavelength, duty, freq_hz, phase } => {
            out.extend_from_slice(&[group, wavelength]);
            out.extend_from_slice(&duty.to_le_bytes());
            out.extend_from_slice(&freq_hz.to_le_bytes());
            out.extend_from_slice(&phase.to_le_bytes());
        }
        Command::MuxOverride { group, channel } => out.extend_from_slice(&[group, channel]),
        Command::SetIirCutoff { centi_hz } => out.extend_from_slice(&centi_hz.to_le_bytes()),
        Command::Stream { on } => out.push(on),
        Command::StatusReq => {}
    }
    let crc = crc16(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Decodes one command from the front of `bytes`, returning it with the number of
/// bytes consumed.
pub fn decode_command(bytes: &[u8]) -> Result<(Command, usize), WireError> {
    let header = bytes.get(..3).ok_or(WireError::Truncated { needed: 3, got: bytes.len() })?;
    if header[0] != COMMAND_MAGIC {
        return Err(WireError::BadMagic(header[0]));
    }
    let (raw_id, declared) = (header[1], header[2]);
    let total = 3 + declared as usize + 2;
    if bytes.len() < total {
        return Err(WireError::Truncated { needed: total, got: bytes.len() });
    }
    let received = u16::from_le_bytes([bytes[total - 2], bytes[total - 1]]);
    let computed = crc16(&bytes[..total - 2]);
    if received != computed {
        return Err(WireError::CrcMismatch { computed, received });
    }
    let id = CommandId::from_u8(raw_id).ok_or(WireError::UnknownCommand(raw_id))?;
    if declared != id.payload_len() {
        return Err(WireError::LengthMismatch { id: raw_id, declared, expected: id.payload_len() });
    }
    let p = &bytes[3..3 + declared as usize];
    let u16_at = |i: usize| u16::from_le_bytes([p[i], p[i + 1]]);
    let cmd = match id {
        CommandId::SetEmitter => {
            Command::SetEmitter { group: p[0], wavelength: p[1], duty: u16_at(2), freq_hz: u16_at(4), phase: u16_at(6) }
        }
        CommandId::MuxOverride => Command::MuxOverride { group: p[0], channel: p[1] },
        CommandId::SetIirCutoff => Command::SetIirCutoff { centi_hz: u32::from_le_bytes(p.try_into().unwrap()) },
        CommandId::Stream => Command::Stream { on: p[0] },
        CommandId::StatusReq => Command::StatusReq,
    };
    Ok((cmd, total))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum AckStatus {
    Ok = 0,
    BadCrc = 1,
    BadParam = 2,
}

impl AckStatus {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(AckStatus::Ok),
            1 => Some(AckStatus::BadCrc),
            2 => Some(AckStatus::BadParam),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// Echo of the command id byte, which may be an unknown id.
    pub cmd_id: u8,
    pub status: AckStatus,
}

pub fn encode_ack(ack: &Ack) -> [u8; ACK_LEN] {
    let mut out = [ACK_MAGIC, ack.cmd_id, ack.status as u8, 0, 0];
    let crc = crc16(&out[..3]);
    out[3..].copy_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_ack(bytes: &[u8]) -> Result<Ack, WireError> {
    if bytes.len() < ACK_LEN {
        return Err(WireError::Truncated { needed: ACK_LEN, got: bytes.len() });
    }
    if bytes[0] != ACK_MAGIC {
        return Err(WireError::BadMagic(bytes[0]));
    }
    let received = u16::from_le_bytes([bytes[3], bytes[4]]);
    let computed = crc16(&bytes[..3]);
    if received != computed {
        return Err(WireError::CrcMismatch { computed, received });
    }
    let status = AckStatus::from_u8(bytes[2]).ok_or(WireError::InvalidField("ack status"))?;
    Ok(Ack { cmd_id: bytes[1], status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn status_req_is_five_bytes() {
        let bytes = encode_command(&Command::StatusReq);
        assert_eq!(bytes.len(), 5);
        assert_eq!(&bytes[..3], &[0xC3, 0x05, 0x00]);
        assert_eq!(decode_command(&bytes).unwrap(), (Command::StatusReq, 5));
    }

    #[test]
    fn set_emitter_layout() {
        let cmd = Command::set_emitter(0, Wavelength::Nm940, 4095, 1526, 0);
        let bytes = encode_command(&cmd);
        assert_eq!(&bytes[..11], &[0xC3, 0x01, 0x08, 0x00, 0x01, 0xFF, 0x0F, 0xF6, 0x05, 0x00, 0x00]);
        assert_eq!(bytes.len(), 13);
        assert_eq!(decode_command(&bytes).unwrap(), (cmd, 13));
    }

    #[test]
    fn declared_length_must_match() {
        // STREAM with a 2-byte payload and a valid CRC.
        let mut bytes = vec![COMMAND_MAGIC, 0x04, 0x02, 0x01, 0x00];
        let crc = crc16(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_command(&bytes), Err(WireError::LengthMismatch { id: 0x04, declared: 2, expected: 1 }));
    }

    #[test]
    fn unknown_id_and_bad_crc() {
        let mut bytes = vec![COMMAND_MAGIC, 0x7F, 0x00];
        let crc = crc16(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_command(&bytes), Err(WireError::UnknownCommand(0x7F)));

        let mut bytes = encode_command(&Command::Stream { on: 1 });
        bytes[3] = 0;
        assert!(matches!(decode_command(&bytes), Err(WireError::CrcMismatch { .. })));
    }

    #[test]
    fn ack_round_trip() {
        for status in [AckStatus::Ok, AckStatus::BadCrc, AckStatus::BadParam] {
            let ack = Ack { cmd_id: 0x02, status };
            let bytes = encode_ack(&ack);
            assert_eq!(bytes[0], 0x3C);
            assert_eq!(decode_ack(&bytes).unwrap(), ack);
        }
    }

    fn any_command() -> impl Strategy<Value = Command> {
        prop_oneof![
            (any::<u8>(), any::<u8>(), any::<u16>(), any::<u16>(), any::<u16>()).prop_map(
                |(group, wavelength, duty, freq_hz, phase)| Command::SetEmitter {
                    group,
                    wavelength,
                    duty,
                    freq_hz,
                    phase
                }
            ),
            (any::<u8>(), any::<u8>()).prop_map(|(group, channel)| Command::MuxOverride { group, channel }),
            any::<u32>().prop_map(|centi_hz| Command::SetIirCutoff { centi_hz }),
            any::<u8>().prop_map(|on| Command::Stream { on }),
            Just(Command::StatusReq),
        ]
    }

    proptest! {
        #[test]
        fn command_round_trip(cmd in any_command()) {
            let bytes = encode_command(&cmd);
            prop_assert_eq!(decode_command(&bytes).unwrap(), (cmd, bytes.len()));
        }
    }
}
