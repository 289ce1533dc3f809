//! The simulated subject wired to the simulated detectors: a sampler the ECU can
//! read at any virtual time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::afe::AnalogChannel;
use super::cardiac::CardiacParams;
use super::forward::{forward_beer_lambert, od_to_intensity};
use super::hemo::{synth_hemodynamics, HemoGroundTruth};
use super::layout::SensorLayout;
use super::optics::OpticalTable;
use super::SimError;
use crate::config::{DeviceConfig, SimulationConfig};
use crate::ecu::AnalogSource;
use crate::types::{ChannelId, Wavelength, CHANNELS, GROUPS};

/// Seed stream offsets so hemodynamics and electronic noise never share a generator.
const NOISE_STREAM: u64 = 0x006e_6f69_7365;

/// All 48 detector chains, advanced together on the ECU sampling clock.
///
/// Each (channel, wavelength) pair owns its own analog chain state; noise is drawn
/// only for the samples the ECU actually converts.
pub struct VirtualHead {
    tick_us: u64,
    next_tick_us: u64,
    truth_rate_hz: f64,
    /// Detected level at full drive, TIA output volts, `[channel][wavelength][sample]`.
    level: Vec<[Vec<f64>; 2]>,
    baseline: Vec<[f64; 2]>,
    drive: [[f64; 2]; GROUPS],
    cardiac: CardiacParams,
    chains: Vec<[AnalogChannel; 2]>,
    clean: Vec<[f64; 2]>,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl VirtualHead {
    pub fn new(
        truth: &HemoGroundTruth,
        layout: &SensorLayout,
        optics: &OpticalTable,
        device: &DeviceConfig,
        age_years: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        device.afe.validate()?;
        let rate = f64::from(device.ecu.sample_rate_hz);
        if device.ecu.sample_rate_hz == 0 || 1_000_000 % device.ecu.sample_rate_hz != 0 {
            return Err(SimError::InvalidParameter(format!("sample rate {rate} Hz")));
        }
        let od = forward_beer_lambert(truth, layout, optics, age_years)?;
        let level = ChannelId::all()
            .map(|c| Wavelength::ALL.map(|wl| od_to_intensity(od.series(c, wl), optics.baseline(c, wl))))
            .collect();
        let baseline = ChannelId::all().map(|c| Wavelength::ALL.map(|wl| optics.baseline(c, wl))).collect();
        let drive = std::array::from_fn(|g| Wavelength::ALL.map(|wl| device.ecu.emitters[g][wl.index()].drive()));
        let noise =
            Normal::new(0.0, device.afe.noise_sigma_v).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
        Ok(VirtualHead {
            tick_us: 1_000_000 / u64::from(device.ecu.sample_rate_hz),
            next_tick_us: 0,
            truth_rate_hz: truth.sample_rate_hz,
            level,
            baseline,
            drive,
            cardiac: device.cardiac.clone(),
            chains: (0..CHANNELS).map(|_| std::array::from_fn(|_| AnalogChannel::new(&device.afe, rate))).collect(),
            clean: vec![[0.0; 2]; CHANNELS],
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM),
        })
    }

    /// Synthesizes the subject described by `cfg` and wires it up. Returns the
    /// ground truth alongside so callers can export it.
    pub fn from_config(
        cfg: &SimulationConfig,
        layout: &SensorLayout,
        optics: &OpticalTable,
    ) -> Result<(Self, HemoGroundTruth), SimError> {
        let truth = synth_hemodynamics(&cfg.timeline()?, layout, &cfg.hemo, cfg.seed)?;
        let head = VirtualHead::new(&truth, layout, optics, &cfg.device, cfg.age_years, cfg.seed)?;
        Ok((head, truth))
    }

    /// TIA-output voltage of one chain at `t_s`: attenuated light plus pulsation.
    pub fn input_v(&self, channel: ChannelId, wavelength: Wavelength, t_s: f64) -> f64 {
        let (c, w) = (channel.index(), wavelength.index());
        let drive = self.drive[channel.group()][w];
        let series = &self.level[c][w];
        let pos = (t_s * self.truth_rate_hz).max(0.0);
        let i = pos.floor() as usize;
        let level = match (series.get(i), series.get(i + 1)) {
            (Some(&a), Some(&b)) => a + (b - a) * (pos - i as f64),
            (Some(&a), None) => a,
            _ => series.last().copied().unwrap_or(self.baseline[c][w]),
        };
        drive * (level + self.cardiac.additive_v(self.baseline[c][w], t_s))
    }

    /// Steps every chain through all sampling ticks up to and including `time_us`.
    pub fn advance_to(&mut self, time_us: u64) {
        while self.next_tick_us <= time_us {
            let t_s = self.next_tick_us as f64 * 1e-6;
            let pulse = self.cardiac.waveform(t_s);
            let pos = (t_s * self.truth_rate_hz).max(0.0);
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            for c in ChannelId::all() {
                let ci = c.index();
                for w in 0..2 {
                    let series = &self.level[ci][w];
                    let level = match (series.get(i), series.get(i + 1)) {
                        (Some(&a), Some(&b)) => a + (b - a) * frac,
                        _ => series.last().copied().unwrap_or(self.baseline[ci][w]),
                    };
                    let pulsation = self.cardiac.modulation * self.baseline[ci][w] * pulse;
                    let x = self.drive[c.group()][w] * (level + pulsation);
                    self.clean[ci][w] = self.chains[ci][w].step(x);
                }
            }
            self.next_tick_us += self.tick_us;
        }
    }

    /// Noise-free amplifier output of the most recent tick, before the rails.
    pub fn clean_output(&self, channel: ChannelId, wavelength: Wavelength) -> f64 {
        self.clean[channel.index()][wavelength.index()]
    }

    /// Output of the most recent tick with a fresh noise draw and rail clamping.
    pub fn read(&mut self, channel: ChannelId, wavelength: Wavelength) -> f64 {
        let noise = self.noise.sample(&mut self.rng);
        let (c, w) = (channel.index(), wavelength.index());
        self.chains[c][w].finish(self.clean[c][w], noise)
    }

    pub fn drive(&self, group: usize, wavelength: Wavelength) -> f64 {
        self.drive[group][wavelength.index()]
    }
}

impl AnalogSource for VirtualHead {
    fn sample(&mut self, channel: ChannelId, wavelength: Wavelength, time_us: u64) -> f64 {
        self.advance_to(time_us);
        self.read(channel, wavelength)
    }

    fn set_emitter_drive(&mut self, group: usize, wavelength: Wavelength, drive: f64) {
        if group < GROUPS {
            self.drive[group][wavelength.index()] = drive.clamp(0.0, 1.0);
        }
    }
}
