//! Virtual-clock emulation of the acquisition firmware.
//!
//! Every sampling tick (200 µs by default) the eight multiplexed channels are
//! converted and smoothed with a one-pole low-pass. Every logging tick (1 ms) a
//! frame carrying the latest smoothed value of all 24 channels is emitted. The
//! multiplexers step every `mux_dwell_ms`; the emitters alternate wavelength every
//! `wavelength_period_ms`, starting with 660 nm.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physio::adc::adc_quantize;
use crate::types::{ChannelId, Frame, Wavelength, ADC_MAX_CODE, CHANNELS, DETECTORS_PER_GROUP, GROUPS};
use crate::wire::{decode_command, Ack, AckStatus, Command, CommandId, WireError, COMMAND_MAGIC, MUX_AUTO};

pub const DUTY_MAX: u16 = 4095;
pub const PHASE_MAX: u16 = 4095;
pub const PWM_FREQ_MIN_HZ: u16 = 24;
pub const PWM_FREQ_MAX_HZ: u16 = 1526;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EcuError {
    #[error("sampling rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("cutoff must be non-negative, got {0}")]
    InvalidCutoff(f64),
    #[error("smoothing coefficient {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("invalid ECU configuration: {0}")]
    InvalidConfig(String),
    #[error("duration must be positive")]
    ZeroDuration,
}

/// `α = 1 − exp(−2π·f_c / f_s)`.
pub fn iir_alpha(cutoff_hz: f64, rate_hz: f64) -> Result<f64, EcuError> {
    if !(rate_hz > 0.0) {
        return Err(EcuError::InvalidRate(rate_hz));
    }
    if !(cutoff_hz >= 0.0) {
        return Err(EcuError::InvalidCutoff(cutoff_hz));
    }
    Ok(-(-std::f64::consts::TAU * cutoff_hz / rate_hz).exp_m1())
}

/// One step of the smoothing filter, `y = α·x + (1 − α)·y_prev`.
pub fn iir_step(y_prev: f64, x: f64, alpha: f64) -> Result<f64, EcuError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(EcuError::AlphaOutOfRange(alpha));
    }
    Ok(smooth(y_prev, x, alpha))
}

#[inline]
fn smooth(y_prev: f64, x: f64, alpha: f64) -> f64 {
    alpha * x + (1.0 - alpha) * y_prev
}

/// Anything that can produce the analog voltage at a detector's ADC pin.
pub trait AnalogSource {
    fn sample(&mut self, channel: ChannelId, wavelength: Wavelength, time_us: u64) -> f64;

    /// Called when an emitter's PWM duty changes; `drive` is the duty fraction.
    fn set_emitter_drive(&mut self, _group: usize, _wavelength: Wavelength, _drive: f64) {}
}

impl<F: FnMut(ChannelId, Wavelength, u64) -> f64> AnalogSource for F {
    fn sample(&mut self, channel: ChannelId, wavelength: Wavelength, time_us: u64) -> f64 {
        self(channel, wavelength, time_us)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmitterSetting {
    pub duty: u16,
    pub freq_hz: u16,
    pub phase: u16,
    pub enabled: bool,
}

impl Default for EmitterSetting {
    fn default() -> Self {
        EmitterSetting { duty: DUTY_MAX, freq_hz: 1000, phase: 0, enabled: true }
    }
}

impl EmitterSetting {
    /// Time-averaged optical output as a fraction of full drive.
    pub fn drive(&self) -> f64 {
        if self.enabled {
            f64::from(self.duty) / f64::from(DUTY_MAX)
        } else {
            0.0
        }
    }

    pub fn in_range(&self) -> bool {
        self.duty <= DUTY_MAX && (PWM_FREQ_MIN_HZ..=PWM_FREQ_MAX_HZ).contains(&self.freq_hz) && self.phase <= PHASE_MAX
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcuConfig {
    pub sample_rate_hz: u32,
    pub logging_rate_hz: u32,
    pub mux_dwell_ms: u32,
    pub wavelength_period_ms: u32,
    pub iir_cutoff_hz: f64,
    /// Indexed `[group][wavelength]`.
    pub emitters: [[EmitterSetting; 2]; GROUPS],
    pub mux_override: [Option<u8>; GROUPS],
    pub streaming: bool,
}

impl Default for EcuConfig {
    fn default() -> Self {
        EcuConfig {
            sample_rate_hz: 5000,
            logging_rate_hz: 1000,
            mux_dwell_ms: 5,
            wavelength_period_ms: 15,
            iir_cutoff_hz: 20.0,
            emitters: [[EmitterSetting::default(); 2]; GROUPS],
            mux_override: [None; GROUPS],
            streaming: true,
        }
    }
}

impl EcuConfig {
    pub fn validate(&self) -> Result<(), EcuError> {
        let bad = |m: String| Err(EcuError::InvalidConfig(m));
        if self.sample_rate_hz == 0 || 1_000_000 % self.sample_rate_hz != 0 {
            return bad(format!("sample rate {} Hz must divide 1 MHz", self.sample_rate_hz));
        }
        if self.logging_rate_hz == 0 || self.sample_rate_hz % self.logging_rate_hz != 0 {
            return bad(format!("logging rate {} Hz must divide the sample rate", self.logging_rate_hz));
        }
        if self.mux_dwell_ms == 0 || self.wavelength_period_ms == 0 {
            return bad("mux dwell and wavelength period must be positive".into());
        }
        if self.wavelength_period_ms % (self.mux_dwell_ms * DETECTORS_PER_GROUP as u32) != 0 {
            return bad("wavelength period must span whole mux cycles".into());
        }
        if !(self.iir_cutoff_hz >= 0.0 && self.iir_cutoff_hz <= f64::from(self.sample_rate_hz) / 2.0) {
            return bad(format!("iir cutoff {} Hz", self.iir_cutoff_hz));
        }
        if self.emitters.iter().flatten().any(|e| !e.in_range()) {
            return bad("emitter setting out of range".into());
        }
        if self.mux_override.iter().flatten().any(|&m| m as usize >= DETECTORS_PER_GROUP) {
            return bad("mux override position out of range".into());
        }
        Ok(())
    }

    pub fn sample_period_us(&self) -> u64 {
        1_000_000 / u64::from(self.sample_rate_hz)
    }

    pub fn logging_period_us(&self) -> u64 {
        1_000_000 / u64::from(self.logging_rate_hz)
    }

    pub fn mux_dwell_us(&self) -> u64 {
        u64::from(self.mux_dwell_ms) * 1000
    }

    pub fn wavelength_period_us(&self) -> u64 {
        u64::from(self.wavelength_period_ms) * 1000
    }
}

/// Settings snapshot reported in answer to a status request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcuStatus {
    pub time_us: u64,
    pub next_seq: u32,
    pub streaming: bool,
    pub iir_cutoff_hz: f64,
    pub iir_alpha: f64,
    pub mux_dwell_ms: u32,
    pub wavelength_period_ms: u32,
    pub mux_override: [Option<u8>; GROUPS],
    pub emitters: [[EmitterSetting; 2]; GROUPS],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutcome {
    pub ack: Ack,
    pub status: Option<EcuStatus>,
}

#[derive(Clone, Debug)]
pub struct Ecu {
    config: EcuConfig,
    time_us: u64,
    seq: u32,
    alpha: f64,
    y: [[f64; 2]; CHANNELS],
    primed: [[bool; 2]; CHANNELS],
}

impl Ecu {
    pub fn new(config: EcuConfig) -> Result<Self, EcuError> {
        config.validate()?;
        let alpha = iir_alpha(config.iir_cutoff_hz, f64::from(config.sample_rate_hz))?;
        Ok(Ecu { config, time_us: 0, seq: 0, alpha, y: [[0.0; 2]; CHANNELS], primed: [[false; 2]; CHANNELS] })
    }

    pub fn config(&self) -> &EcuConfig {
        &self.config
    }

    /// Virtual time of the next sampling tick.
    pub fn time_us(&self) -> u64 {
        self.time_us
    }

    pub fn next_seq(&self) -> u32 {
        self.seq
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mux_index(&self, group: usize, time_us: u64) -> u8 {
        match self.config.mux_override[group] {
            Some(pinned) => pinned,
            None => ((time_us / self.config.mux_dwell_us()) % DETECTORS_PER_GROUP as u64) as u8,
        }
    }

    pub fn wavelength_at(&self, time_us: u64) -> Wavelength {
        if (time_us / self.config.wavelength_period_us()) % 2 == 0 {
            Wavelength::Nm660
        } else {
            Wavelength::Nm940
        }
    }

    /// Runs the clock for `duration_us` and collects the emitted frames.
    pub fn step<S: AnalogSource + ?Sized>(&mut self, source: &mut S, duration_us: u64) -> Result<Vec<Frame>, EcuError> {
        let mut frames = Vec::with_capacity((duration_us / self.config.logging_period_us()) as usize + 1);
        self.run(source, duration_us, |f| frames.push(f))?;
        Ok(frames)
    }

    /// Runs the clock for `duration_us`, handing each frame to `sink` as it is logged.
    pub fn run<S: AnalogSource + ?Sized>(
        &mut self,
        source: &mut S,
        duration_us: u64,
        mut sink: impl FnMut(Frame),
    ) -> Result<(), EcuError> {
        if duration_us == 0 {
            return Err(EcuError::ZeroDuration);
        }
        let end = self.time_us + duration_us;
        let (tick, log) = (self.config.sample_period_us(), self.config.logging_period_us());
        while self.time_us < end {
            let t = self.time_us;
            let wl = self.wavelength_at(t);
            let w = wl.index();
            let mut mux = [0u8; GROUPS];
            for (g, m) in mux.iter_mut().enumerate() {
                *m = self.mux_index(g, t);
                let ch = ChannelId::from_parts(g, *m as usize).expect("mux position in range");
                let code = f64::from(adc_quantize(source.sample(ch, wl, t), 3.3, 12));
                let c = ch.index();
                self.y[c][w] = if self.primed[c][w] { smooth(self.y[c][w], code, self.alpha) } else { code };
                self.primed[c][w] = true;
            }
            if t % log == 0 && self.config.streaming {
                let samples = std::array::from_fn(|c| self.y[c][w].round().clamp(0.0, f64::from(ADC_MAX_CODE)) as u16);
                sink(Frame { seq: self.seq, timestamp_us: t, wavelength: wl, mux_idx: mux, samples });
                self.seq = self.seq.wrapping_add(1);
            }
            self.time_us += tick;
        }
        Ok(())
    }

    pub fn status(&self) -> EcuStatus {
        EcuStatus {
            time_us: self.time_us,
            next_seq: self.seq,
            streaming: self.config.streaming,
            iir_cutoff_hz: self.config.iir_cutoff_hz,
            iir_alpha: self.alpha,
            mux_dwell_ms: self.config.mux_dwell_ms,
            wavelength_period_ms: self.config.wavelength_period_ms,
            mux_override: self.config.mux_override,
            emitters: self.config.emitters,
        }
    }

    /// Applies a decoded, CRC-valid command. Out-of-range values leave the state
    /// untouched and are answered with a bad-param ack.
    pub fn handle_command<S: AnalogSource + ?Sized>(&mut self, cmd: &Command, source: &mut S) -> CommandOutcome {
        let ok = self.apply(cmd, source);
        let ack = Ack { cmd_id: cmd.id() as u8, status: if ok { AckStatus::Ok } else { AckStatus::BadParam } };
        let status = (ok && matches!(cmd, Command::StatusReq)).then(|| self.status());
        CommandOutcome { ack, status }
    }

    fn apply<S: AnalogSource + ?Sized>(&mut self, cmd: &Command, source: &mut S) -> bool {
        match *cmd {
            Command::SetEmitter { group, wavelength, duty, freq_hz, phase } => {
                let setting = EmitterSetting { duty, freq_hz, phase, enabled: true };
                let Some(wl) = Wavelength::from_index(wavelength as usize) else { return false };
                if group as usize >= GROUPS || !setting.in_range() {
                    return false;
                }
                self.config.emitters[group as usize][wl.index()] = setting;
                source.set_emitter_drive(group as usize, wl, setting.drive());
                true
            }
            Command::MuxOverride { group, channel } => {
                if group as usize >= GROUPS {
                    return false;
                }
                self.config.mux_override[group as usize] = match channel {
                    MUX_AUTO => None,
                    c if (c as usize) < DETECTORS_PER_GROUP => Some(c),
                    _ => return false,
                };
                true
            }
            Command::SetIirCutoff { centi_hz } => {
                let cutoff = f64::from(centi_hz) / 100.0;
                if cutoff > f64::from(self.config.sample_rate_hz) / 2.0 {
                    return false;
                }
                match iir_alpha(cutoff, f64::from(self.config.sample_rate_hz)) {
                    Ok(a) => {
                        self.alpha = a;
                        self.config.iir_cutoff_hz = cutoff;
                        true
                    }
                    Err(_) => false,
                }
            }
            Command::Stream { on } => match on {
                0 | 1 => {
                    self.config.streaming = on == 1;
                    true
                }
                _ => false,
            },
            Command::StatusReq => true,
        }
    }
}

/// Byte-level command intake of the firmware: buffers partial input, answers
/// corrupted commands with bad-crc and unknown or malformed ones with bad-param.
#[derive(Clone, Debug, Default)]
pub struct CommandReceiver {
    buf: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Received {
    Command(Command),
    Rejected(Ack),
}

impl CommandReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Vec<Received> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < self.buf.len() {
            if self.buf[pos] != COMMAND_MAGIC {
                pos += 1;
                continue;
            }
            match decode_command(&self.buf[pos..]) {
                Ok((cmd, used)) => {
                    out.push(Received::Command(cmd));
                    pos += used;
                }
                Err(WireError::Truncated { .. }) => break,
                Err(e) => {
                    let cmd_id = self.buf[pos + 1];
                    let status = match e {
                        WireError::CrcMismatch { .. } => AckStatus::BadCrc,
                        _ => AckStatus::BadParam,
                    };
                    out.push(Received::Rejected(Ack { cmd_id, status }));
                    // A malformed command's extent is trusted only after its CRC
                    // checked out; otherwise resume scanning right after the magic.
                    pos += match e {
                        WireError::UnknownCommand(_) | WireError::LengthMismatch { .. } => {
                            5 + self.buf[pos + 2] as usize
                        }
                        _ => 1,
                    };
                }
            }
        }
        self.buf.drain(..pos.min(self.buf.len()));
        out
    }
}

/// Maps a command id byte to its name, or `"unknown"`.
pub fn command_name(id: u8) -> &'static str {
    CommandId::from_u8(id).map_or("unknown", CommandId::name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::encode_command;

    fn flat(v: f64) -> impl FnMut(ChannelId, Wavelength, u64) -> f64 {
        move |_, _, _| v
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(iir_alpha(0.0, 1000.0).unwrap(), 0.0);
        // 1 − e^(−0.04π)
        assert!((iir_alpha(20.0, 1000.0).unwrap() - 0.118_088_621_701_823_66).abs() < 1e-15);
        assert!((1.0 - iir_alpha(1e9, 1000.0).unwrap()).abs() < 1e-12);
        assert!(iir_alpha(1.0, 0.0).is_err());
        assert!(iir_alpha(-1.0, 10.0).is_err());
    }

    #[test]
    fn step_examples() {
        assert_eq!(iir_step(0.1, 0.7, 1.0).unwrap(), 0.7);
        assert_eq!(iir_step(0.3, 0.9, 0.0).unwrap(), 0.3);
        assert_eq!(iir_step(0.0, 1.0, 0.5).unwrap(), 0.5);
        assert!(iir_step(0.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn one_second_is_one_thousand_frames() {
        let mut ecu = Ecu::new(EcuConfig::default()).unwrap();
        let frames = ecu.step(&mut flat(1.0), 1_000_000).unwrap();
        assert_eq!(frames.len(), 1000);
        assert!(frames.iter().enumerate().all(|(i, f)| f.seq == i as u32 && f.timestamp_us == i as u64 * 1000));
    }

    #[test]
    fn mux_changes_every_five_frames_and_wavelength_every_fifteen() {
        let mut ecu = Ecu::new(EcuConfig::default()).unwrap();
        let frames = ecu.step(&mut flat(1.0), 30_000).unwrap();
        assert_eq!(frames.len(), 30);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.mux_idx, [((i / 5) % 3) as u8; 8]);
            let wl = if i < 15 { Wavelength::Nm660 } else { Wavelength::Nm940 };
            assert_eq!(f.wavelength, wl);
        }
    }

    #[test]
    fn constant_input_gives_constant_code() {
        let mut ecu = Ecu::new(EcuConfig::default()).unwrap();
        let frames = ecu.step(&mut flat(1.65), 60_000).unwrap();
        // After every pair has been visited, all samples hold the quantized level.
        assert!(frames[30..].iter().all(|f| f.samples.iter().all(|&s| s == 2048)));
    }

    #[test]
    fn set_emitter_ranges() {
        let mut ecu = Ecu::new(EcuConfig::default()).unwrap();
        let mut src = flat(1.0);
        let out = ecu.handle_command(&Command::set_emitter(0, Wavelength::Nm940, 4095, 1526, 0), &mut src);
        assert_eq!(out.ack.status, AckStatus::Ok);
        assert_eq!(ecu.config().emitters[0][1], EmitterSetting { duty: 4095, freq_hz: 1526, phase: 0, enabled: true });
        let before = ecu.config().clone();
        for bad in [
            Command::set_emitter(0, Wavelength::Nm940, 2048, 2000, 0),
            Command::set_emitter(0, Wavelength::Nm940, 2048, 23, 0),
            Command::set_emitter(0, Wavelength::Nm940, 4096, 100, 0),
            Command::set_emitter(8, Wavelength::Nm940, 100, 100, 0),
            Command::SetEmitter { group: 0, wavelength: 2, duty: 1, freq_hz: 100, phase: 0 },
        ] {
            assert_eq!(ecu.handle_command(&bad, &mut src).ack.status, AckStatus::BadParam);
        }
        assert_eq!(ecu.config(), &before);
    }

    #[test]
    fn mux_override_pins_and_restores() {
        let mut ecu = Ecu::new(EcuConfig::default()).unwrap();
        let mut src = flat(1.0);
        assert_eq!(
            ecu.handle_command(&Command::MuxOverride { group: 3, channel: 2 }, &mut src).ack.status,
            AckStatus::Ok
        );
        let frames = ecu.step(&mut src, 20_000).unwrap();
        assert!(frames.iter().all(|f| f.mux_idx[3] == 2));
        assert_eq!(
            ecu.handle_command(&Command::MuxOverride { group: 3, channel: MUX_AUTO }, &mut src).ack.status,
            AckStatus::Ok
        );
        let frames = ecu.step(&mut src, 20_000).unwrap();
        assert_eq!(frames[0].mux_idx[3], frames[0].mux_idx[0]);
        assert!(frames.iter().all(|f| f.mux_idx[3] == f.mux_idx[0]));
        for bad in [Command::MuxOverride { group: 9, channel: 0 }, Command::MuxOverride { group: 0, channel: 3 }] {
            assert_eq!(ecu.handle_command(&bad, &mut src).ack.status, AckStatus::BadParam);
        }
    }

    #[test]
    fn iir_cutoff_stream_and_status() {
        let mut ecu = Ecu::new(EcuConfig::default()).unwrap();
        let mut src = flat(1.0);
        assert_eq!(ecu.handle_command(&Command::SetIirCutoff { centi_hz: 1000 }, &mut src).ack.status, AckStatus::Ok);
        assert_eq!(ecu.alpha(), iir_alpha(10.0, 5000.0).unwrap());
        assert_eq!(
            ecu.handle_command(&Command::SetIirCutoff { centi_hz: 300_000 }, &mut src).ack.status,
            AckStatus::BadParam
        );
        assert_eq!(ecu.handle_command(&Command::Stream { on: 0 }, &mut src).ack.status, AckStatus::Ok);
        assert!(ecu.step(&mut src, 10_000).unwrap().is_empty());
        assert_eq!(ecu.handle_command(&Command::Stream { on: 1 }, &mut src).ack.status, AckStatus::Ok);
        let f = ecu.step(&mut src, 2_000).unwrap();
        assert_eq!(f[0].seq, 0);
        let out = ecu.handle_command(&Command::StatusReq, &mut src);
        let status = out.status.unwrap();
        assert_eq!(status.iir_cutoff_hz, 10.0);
        assert_eq!(status.next_seq, 2);
    }

    #[test]
    fn receiver_classifies_bytes() {
        let mut rx = CommandReceiver::new();
        let good = encode_command(&Command::StatusReq);
        let mut corrupt = encode_command(&Command::Stream { on: 1 });
        corrupt[3] ^= 0xFF;
        let mut bytes = vec![0x00, 0x11];
        bytes.extend_from_slice(&corrupt);
        bytes.extend_from_slice(&good);
        let (a, b) = bytes.split_at(6);
        let mut got = rx.feed(a);
        got.extend(rx.feed(b));
        assert_eq!(
            got,
            vec![
                Received::Rejected(Ack { cmd_id: 0x04, status: AckStatus::BadCrc }),
                Received::Command(Command::StatusReq)
            ]
        );
        let mut unknown = vec![COMMAND_MAGIC, 0x7E, 0x00];
        let crc = crate::wire::crc16(&unknown);
        unknown.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(rx.feed(&unknown), vec![Received::Rejected(Ack { cmd_id: 0x7E, status: AckStatus::BadParam })]);
        assert_eq!(command_name(0x7E), "unknown");
    }
}
