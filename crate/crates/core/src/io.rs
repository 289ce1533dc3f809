//! Session files: the raw frame log and the CSV exports.
//!
//! A raw log starts with an 8-byte magic, a u16 format version and a u32 header
//! length (little-endian), then that many bytes of JSON header (configuration
//! snapshot and markers), then the encoded frames back to back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::heart::HeartRate;
use crate::dsp::HemoSeries;
use crate::physio::hemo::HemoGroundTruth;
use crate::types::{ChannelId, Frame, Marker};
use crate::wire::{encode_frame_into, FrameStreamParser, ParserStats, StreamItem, FRAME_LEN};

pub const RAW_LOG_MAGIC: [u8; 8] = *b"NIRSLOG\0";
pub const RAW_LOG_VERSION: u16 = 1;
const PREFIX_LEN: usize = 8 + 2 + 4;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a raw session log: {0}")]
    BadHeader(String),
    #[error("raw log header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("raw log has {trailing} trailing bytes or {corrupt} corrupt spans")]
    Corrupt { trailing: usize, corrupt: u64 },
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Everything needed to reprocess a recording.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub source: String,
    /// Free-form configuration snapshot.
    pub config: serde_json::Value,
    #[serde(default)]
    pub markers: Vec<Marker>,
}

pub struct RawLogWriter<W: Write> {
    out: W,
    frames: u64,
    buf: [u8; FRAME_LEN],
}

impl RawLogWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, IoError> {
        RawLogWriter::new(create(path)?, header)
    }
}

impl<W: Write> RawLogWriter<W> {
    pub fn new(mut out: W, header: &LogHeader) -> Result<Self, IoError> {
        let json = serde_json::to_vec(header)?;
        out.write_all(&RAW_LOG_MAGIC)?;
        out.write_all(&RAW_LOG_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u32).to_le_bytes())?;
        out.write_all(&json)?;
        Ok(RawLogWriter { out, frames: 0, buf: [0; FRAME_LEN] })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), IoError> {
        encode_frame_into(frame, &mut self.buf);
        self.out.write_all(&self.buf)?;
        self.frames += 1;
        Ok(())
    }

    pub fn write_encoded(&mut self, bytes: &[u8; FRAME_LEN]) -> Result<(), IoError> {
        self.out.write_all(bytes)?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        Ok(self.out.flush()?)
    }

    pub fn into_inner(mut self) -> Result<W, IoError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// A raw log split into its header and the frame bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct RawLog {
    pub header: LogHeader,
    pub header_len: usize,
    pub frame_bytes: Vec<u8>,
}

impl RawLog {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        let mut bytes = Vec::new();
        BufReader::new(open(path)?).read_to_end(&mut bytes)?;
        RawLog::parse(bytes)
    }

    pub fn parse(mut bytes: Vec<u8>) -> Result<Self, IoError> {
        if bytes.len() < PREFIX_LEN || bytes[..8] != RAW_LOG_MAGIC {
            return Err(IoError::BadHeader("missing magic".into()));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != RAW_LOG_VERSION {
            return Err(IoError::BadHeader(format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
        let header_len = PREFIX_LEN + len;
        if bytes.len() < header_len {
            return Err(IoError::BadHeader("truncated header".into()));
        }
        let header = serde_json::from_slice(&bytes[PREFIX_LEN..header_len])?;
        let frame_bytes = bytes.split_off(header_len);
        Ok(RawLog { header, header_len, frame_bytes })
    }

    /// Decodes every frame; any corruption or partial trailing frame is an error.
    pub fn frames(&self) -> Result<Vec<Frame>, IoError> {
        let (frames, stats, trailing) = self.frames_lenient();
        if trailing != 0 || stats.crc_failures + stats.invalid_frames + stats.resyncs > 0 {
            return Err(IoError::Corrupt {
                trailing,
                corrupt: stats.crc_failures + stats.invalid_frames + stats.resyncs,
            });
        }
        Ok(frames)
    }

    /// Decodes whatever frames survive, with the parser's diagnostics and the
    /// number of undecoded trailing bytes.
    pub fn frames_lenient(&self) -> (Vec<Frame>, ParserStats, usize) {
        let mut parser = FrameStreamParser::new();
        let mut frames = Vec::with_capacity(self.frame_bytes.len() / FRAME_LEN);
        parser.feed_with(&self.frame_bytes, |item| {
            if let StreamItem::Frame(f) = item {
                frames.push(f);
            }
        });
        (frames, parser.stats(), parser.pending().len())
    }
}

pub fn write_raw_csv<W: Write>(out: W, frames: &[Frame]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp_us", "seq", "wavelength_nm", "group", "mux_ch", "channel", "adc_code"])?;
    for f in frames {
        for c in ChannelId::all() {
            w.write_record(&[
                f.timestamp_us.to_string(),
                f.seq.to_string(),
                f.wavelength.nm().to_string(),
                c.group().to_string(),
                c.mux_position().to_string(),
                c.index().to_string(),
                f.sample(c).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_processed_csv<W: Write>(out: W, hemo: &[HemoSeries]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "channel", "dhbo_um", "dhbr_um", "dhbo_cbsi_um", "dhbr_cbsi_um"])?;
    for h in hemo {
        for i in 0..h.len() {
            w.write_record(&[
                format!("{:.6}", h.timestamps_s[i]),
                h.channel.index().to_string(),
                format!("{:.6}", h.hbo_um[i]),
                format!("{:.6}", h.hbr_um[i]),
                format!("{:.6}", h.hbo_cbsi_um[i]),
                format!("{:.6}", h.hbr_cbsi_um[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_csv<W: Write>(out: W, truth: &HemoGroundTruth) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "channel", "dhbo_um", "dhbr_um"])?;
    for c in ChannelId::all() {
        for i in 0..truth.len() {
            w.write_record(&[
                format!("{:.6}", truth.time_s(i)),
                c.index().to_string(),
                format!("{:.6}", truth.hbo_um[c.index()][i]),
                format!("{:.6}", truth.hbr_um[c.index()][i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_markers_csv<W: Write>(out: W, markers: &[Marker]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "t_s"])?;
    for m in markers {
        w.write_record(&[m.label.clone(), format!("{:.6}", m.t_s)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_markers_csv<R: Read>(input: R) -> Result<Vec<Marker>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let mut markers = Vec::new();
    for row in r.deserialize() {
        markers.push(row?);
    }
    Ok(markers)
}

pub fn write_heart_rate_csv<W: Write>(out: W, hr: &HeartRate) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "bpm"])?;
    for (t, bpm) in &hr.bpm {
        w.write_record(&[format!("{t:.6}"), format!("{bpm:.3}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Standard file names inside a session directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionPaths {
    pub dir: PathBuf,
}

impl SessionPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SessionPaths { dir: dir.into() }
    }

    pub fn raw_log(&self) -> PathBuf {
        self.dir.join("raw.bin")
    }
    pub fn raw_csv(&self) -> PathBuf {
        self.dir.join("raw.csv")
    }
    pub fn processed_csv(&self) -> PathBuf {
        self.dir.join("processed.csv")
    }
    pub fn truth_csv(&self) -> PathBuf {
        self.dir.join("truth.csv")
    }
    pub fn markers_csv(&self) -> PathBuf {
        self.dir.join("markers.csv")
    }
    pub fn heart_rate_csv(&self) -> PathBuf {
        self.dir.join("heart_rate.csv")
    }

    pub fn ensure(&self) -> Result<(), IoError> {
        std::fs::create_dir_all(&self.dir).map_err(|source| IoError::File { path: self.dir.clone(), source })
    }

    pub fn create(&self, path: &Path) -> Result<BufWriter<File>, IoError> {
        create(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Wavelength;

    fn frames(n: u32) -> Vec<Frame> {
        (0..n)
            .map(|i| {
                let mut f = Frame::zeroed(i, u64::from(i) * 1000);
                f.wavelength = if i % 2 == 0 { Wavelength::Nm660 } else { Wavelength::Nm940 };
                f.samples = std::array::from_fn(|c| ((i as usize * 24 + c) % 4096) as u16);
                f
            })
            .collect()
    }

    #[test]
    fn raw_log_round_trip() {
        let header = LogHeader {
            source: "sim".into(),
            config: serde_json::json!({"seed": 7}),
            markers: vec![Marker::new("task", 20.0)],
        };
        let mut w = RawLogWriter::new(Vec::new(), &header).unwrap();
        for f in frames(100) {
            w.write_frame(&f).unwrap();
        }
        let bytes = w.into_inner().unwrap();
        let log = RawLog::parse(bytes.clone()).unwrap();
        assert_eq!(log.header, header);
        assert_eq!(log.frame_bytes.len(), 100 * FRAME_LEN);
        assert_eq!(log.header_len + log.frame_bytes.len(), bytes.len());
        assert_eq!(log.frames().unwrap(), frames(100));
    }

    #[test]
    fn corrupt_logs_are_reported() {
        assert!(matches!(RawLog::parse(b"garbage".to_vec()), Err(IoError::BadHeader(_))));
        let mut w = RawLogWriter::new(Vec::new(), &LogHeader::default()).unwrap();
        for f in frames(3) {
            w.write_frame(&f).unwrap();
        }
        let mut bytes = w.into_inner().unwrap();
        bytes.truncate(bytes.len() - 10);
        let log = RawLog::parse(bytes).unwrap();
        assert!(matches!(log.frames(), Err(IoError::Corrupt { trailing: 64, .. })));
        assert_eq!(log.frames_lenient().0.len(), 2);
    }

    #[test]
    fn raw_csv_has_one_row_per_channel_per_frame() {
        let mut out = Vec::new();
        write_raw_csv(&mut out, &frames(10)).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "timestamp_us,seq,wavelength_nm,group,mux_ch,channel,adc_code");
        assert_eq!(lines.len(), 1 + 10 * 24);
        assert_eq!(lines[1 + 24 + 5], "1000,1,940,1,2,5,29");
    }

    #[test]
    fn markers_csv_round_trip() {
        let markers = vec![Marker::new("baseline", 0.0), Marker::new("task", 20.0), Marker::new("task", 20.0)];
        let mut out = Vec::new();
        write_markers_csv(&mut out, &markers).unwrap();
        assert_eq!(read_markers_csv(out.as_slice()).unwrap(), markers);
    }
}
