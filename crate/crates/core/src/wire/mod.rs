//! Telemetry and control framing.
//!
//! All multi-byte fields are little-endian. Frames are a fixed 74 bytes:
//!
//! | offset | size | field |
//! |--------|------|-------|
//! | 0      | 2    | magic `A5 5A` |
//! | 2      | 1    | version (`0x01`) |
//! | 3      | 1    | flags, bit 0: 0 = 660 nm, 1 = 940 nm |
//! | 4      | 4    | sequence number |
//! | 8      | 8    | timestamp, µs |
//! | 16     | 8    | mux position per group |
//! | 24     | 48   | 24 samples, u16 each |
//! | 72     | 2    | CRC-16/CCITT-FALSE over bytes 0–71 |

mod command;
mod crc;
mod frame;
mod parser;

pub use command::{
    decode_ack, decode_command, encode_ack, encode_command, Ack, AckStatus, Command, CommandId, ACK_LEN, ACK_MAGIC,
    COMMAND_MAGIC, MUX_AUTO,
};
pub use crc::crc16;
pub use frame::{decode_frame, encode_frame, encode_frame_into, FRAME_LEN, FRAME_MAGIC, FRAME_VERSION};
pub use parser::{FrameStreamParser, ParserStats, StreamItem};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad magic {0:#04x}")]
    BadMagic(u8),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("crc mismatch: computed {computed:#06x}, received {received:#06x}")]
    CrcMismatch { computed: u16, received: u16 },
    #[error("sample {index} = {value} exceeds 12-bit range")]
    SampleOutOfRange { index: usize, value: u16 },
    #[error("mux index {value} on group {group} out of range")]
    MuxOutOfRange { group: usize, value: u8 },
    #[error("reserved flag bits set: {0:#04x}")]
    BadFlags(u8),
    #[error("unknown command id {0:#04x}")]
    UnknownCommand(u8),
    #[error("command {id:#04x} declares length {declared}, expected {expected}")]
    LengthMismatch { id: u8, declared: u8, expected: u8 },
    #[error("invalid field value: {0}")]
    InvalidField(&'static str),
}
