use super::{decode_ack, decode_frame, Ack, WireError, ACK_LEN, ACK_MAGIC, FRAME_LEN, FRAME_MAGIC};
use crate::types::Frame;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StreamItem {
    Frame(Frame),
    Ack(Ack),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParserStats {
    pub frames: u64,
    pub acks: u64,
    /// Contiguous spans of skipped bytes.
    pub resyncs: u64,
    pub skipped_bytes: u64,
    pub crc_failures: u64,
    /// Candidates rejected for reasons other than CRC (version, ranges).
    pub invalid_frames: u64,
}

/// Incremental scanner over a device byte stream.
///
/// Bytes are consumed only once a decision is possible, so feeding a stream in
/// arbitrary chunks yields the same items and statistics as feeding it whole.
/// On a failed candidate the scanner advances a single byte.
#[derive(Debug, Default)]
pub struct FrameStreamParser {
    buf: Vec<u8>,
    pos: usize,
    skipping: bool,
    stats: ParserStats,
}

impl FrameStreamParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> ParserStats {
        self.stats
    }

    /// Bytes retained while waiting for the rest of a candidate.
    pub fn pending(&self) -> &[u8] {
        &self.buf[self.pos..]
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Vec<StreamItem> {
        let mut out = Vec::new();
        self.feed_with(bytes, |item| out.push(item));
        out
    }

    pub fn feed_with(&mut self, bytes: &[u8], mut sink: impl FnMut(StreamItem)) {
        self.buf.extend_from_slice(bytes);
        while let Some(step) = self.step() {
            if let Some(item) = step {
                sink(item);
            }
        }
        if self.pos > 4096 && self.pos * 2 > self.buf.len() {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
    }

    /// `None` when more input is needed; `Some(None)` when a byte was skipped.
    fn step(&mut self) -> Option<Option<StreamItem>> {
        let rest = &self.buf[self.pos..];
        let first = *rest.first()?;
        if first == FRAME_MAGIC[0] {
            let second = *rest.get(1)?;
            if second == FRAME_MAGIC[1] {
                if rest.len() < FRAME_LEN {
                    return None;
                }
                return Some(match decode_frame(rest) {
                    Ok(frame) => {
                        self.accept(FRAME_LEN);
                        self.stats.frames += 1;
                        Some(StreamItem::Frame(frame))
                    }
                    Err(err) => {
                        if matches!(err, WireError::CrcMismatch { .. }) {
                            self.stats.crc_failures += 1;
                        } else {
                            self.stats.invalid_frames += 1;
                        }
                        self.skip();
                        None
                    }
                });
            }
        } else if first == ACK_MAGIC {
            if rest.len() < ACK_LEN {
                return None;
            }
            if let Ok(ack) = decode_ack(rest) {
                self.accept(ACK_LEN);
                self.stats.acks += 1;
                return Some(Some(StreamItem::Ack(ack)));
            }
        }
        self.skip();
        Some(None)
    }

    fn accept(&mut self, len: usize) {
        self.pos += len;
        self.skipping = false;
    }

    fn skip(&mut self) {
        if !self.skipping {
            self.skipping = true;
            self.stats.resyncs += 1;
        }
        self.stats.skipped_bytes += 1;
        self.pos += 1;
    }
}
