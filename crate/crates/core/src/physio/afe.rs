//! Photodiode front end: transimpedance stage, AC coupling, gain and DC offset.
//!
//! The chain is stepped at the ECU sampling rate. The TIA pole (13 kHz) and the
//! output anti-alias filter sit above that rate's Nyquist band and are carried as
//! parameters only; in band the TIA is a flat gain.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;

/// Output noise σ that puts the default simulator at its reference bench SNR.
/// Produced by `cargo run --release -p nirs-core --example calibrate_noise`.
pub const CALIBRATED_NOISE_SIGMA_V: f64 = 2.753_734e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AfeParams {
    pub tia_gain_ohm: f64,
    pub tia_bandwidth_hz: f64,
    pub ac_couple_cutoff_hz: f64,
    pub ac_gain_v_per_v: f64,
    pub dc_offset_v: f64,
    pub output_lpf_cutoff_hz: f64,
    pub dark_current_a: f64,
    pub supply_v: f64,
    pub noise_sigma_v: f64,
}

impl Default for AfeParams {
    fn default() -> Self {
        AfeParams {
            tia_gain_ohm: 60.4e3,
            tia_bandwidth_hz: 13175.0,
            ac_couple_cutoff_hz: 0.0796,
            ac_gain_v_per_v: 101.0,
            dc_offset_v: 1.65,
            output_lpf_cutoff_hz: 1000.0,
            dark_current_a: 2e-9,
            supply_v: 3.3,
            noise_sigma_v: CALIBRATED_NOISE_SIGMA_V,
        }
    }
}

impl AfeParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("tia_gain_ohm", self.tia_gain_ohm),
            ("tia_bandwidth_hz", self.tia_bandwidth_hz),
            ("ac_couple_cutoff_hz", self.ac_couple_cutoff_hz),
            ("ac_gain_v_per_v", self.ac_gain_v_per_v),
            ("output_lpf_cutoff_hz", self.output_lpf_cutoff_hz),
            ("supply_v", self.supply_v),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dark_current_a >= 0.0) || !(self.noise_sigma_v >= 0.0) {
            return Err(SimError::InvalidParameter("dark current and noise σ must be non-negative".into()));
        }
        if !(self.dc_offset_v > 0.0 && self.dc_offset_v < self.supply_v) {
            return Err(SimError::InvalidParameter(format!("dc offset {} outside the supply range", self.dc_offset_v)));
        }
        Ok(())
    }

    /// TIA output contributed by the photodiode dark current.
    pub fn dark_offset_v(&self) -> f64 {
        self.dark_current_a * self.tia_gain_ohm
    }

    /// AC-coupling time constant RC, s.
    pub fn ac_time_constant_s(&self) -> f64 {
        1.0 / (std::f64::consts::TAU * self.ac_couple_cutoff_hz)
    }
}

/// Discrete first-order RC high-pass, `y[n] = a·(y[n−1] + x[n] − x[n−1])` with
/// `a = RC / (RC + Δt)`. The first input primes the state as if it had been
/// applied forever, so a constant input produces zero output from the start.
#[derive(Clone, Debug, PartialEq)]
pub struct HighPass {
    a: f64,
    x_prev: f64,
    y_prev: f64,
    primed: bool,
}

impl HighPass {
    pub fn new(cutoff_hz: f64, rate_hz: f64) -> Self {
        let rc = 1.0 / (std::f64::consts::TAU * cutoff_hz);
        let dt = 1.0 / rate_hz;
        HighPass { a: rc / (rc + dt), x_prev: 0.0, y_prev: 0.0, primed: false }
    }

    pub fn coefficient(&self) -> f64 {
        self.a
    }

    pub fn step(&mut self, x: f64) -> f64 {
        if !self.primed {
            self.primed = true;
            self.x_prev = x;
        }
        self.y_prev = self.a * (self.y_prev + x - self.x_prev);
        self.x_prev = x;
        self.y_prev
    }

    /// Clears the state so the next input primes it again.
    pub fn reset(&mut self) {
        self.primed = false;
        self.y_prev = 0.0;
    }
}

/// One detector chain from TIA output to the ADC pin, without noise.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalogChannel {
    hp: HighPass,
    gain: f64,
    offset: f64,
    dark: f64,
    supply: f64,
}

impl AnalogChannel {
    pub fn new(afe: &AfeParams, rate_hz: f64) -> Self {
        AnalogChannel {
            hp: HighPass::new(afe.ac_couple_cutoff_hz, rate_hz),
            gain: afe.ac_gain_v_per_v,
            offset: afe.dc_offset_v,
            dark: afe.dark_offset_v(),
            supply: afe.supply_v,
        }
    }

    /// Advances one sample with TIA-output input `tia_v` and returns the
    /// unclamped, noise-free amplifier output.
    pub fn step(&mut self, tia_v: f64) -> f64 {
        self.offset + self.gain * self.hp.step(tia_v + self.dark)
    }

    /// Adds output-referred noise and applies the supply rails.
    pub fn finish(&self, clean_v: f64, noise_v: f64) -> f64 {
        (clean_v + noise_v).clamp(0.0, self.supply)
    }
}

/// Runs a whole series through the chain. `optical` is the detected light level
/// (TIA output volts), `additive` the pulsatile and drift components summed before
/// the coupling capacitor. Pass `rng = None` for the noise-free response.
pub fn analog_front_end<R: Rng>(
    optical: &[f64],
    additive: &[f64],
    afe: &AfeParams,
    rate_hz: f64,
    rng: Option<&mut R>,
) -> Result<Vec<f64>, SimError> {
    afe.validate()?;
    if !(rate_hz > 0.0) {
        return Err(SimError::InvalidParameter(format!("rate {rate_hz} Hz")));
    }
    if !additive.is_empty() && additive.len() != optical.len() {
        return Err(SimError::InvalidParameter("additive series length differs from optical".into()));
    }
    let mut chain = AnalogChannel::new(afe, rate_hz);
    let normal = Normal::new(0.0, afe.noise_sigma_v).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    let mut rng = rng;
    Ok(optical
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let clean = chain.step(x + additive.get(i).copied().unwrap_or(0.0));
            let noise = rng.as_deref_mut().map_or(0.0, |r| normal.sample(r));
            chain.finish(clean, noise)
        })
        .collect())
}
