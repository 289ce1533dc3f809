//! Bench signal-to-noise measurement of the simulated front end.
//!
//! SNR = 10·log10(P_signal / P_noise) with mean-removed powers. On the bench the
//! signal is the noise-free amplifier output of a resting subject (pulsation on a
//! steady light level) and the noise is the difference between the noisy and the
//! noise-free output. A channel's powers are averaged over both wavelengths.

use serde::{Deserialize, Serialize};

use super::head::VirtualHead;
use super::hemo::{ActivationSet, HemoParams};
use super::layout::SensorLayout;
use super::optics::OpticalTable;
use super::protocol::{PhaseLabel, PhaseSpec};
use super::SimError;
use crate::config::{DeviceConfig, SimulationConfig};
use crate::types::{ChannelId, Wavelength, CHANNELS};

pub const REFERENCE_SNR_DB: f64 = 52.302;
pub const BENCH_DURATION_S: f64 = 10.0;
pub const BENCH_SEED: u64 = 0x5eed;

fn centered_power(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64
}

pub fn measure_snr(signal: &[f64], noise: &[f64]) -> Result<f64, SimError> {
    if signal.is_empty() || noise.is_empty() {
        return Err(SimError::DegenerateNoise);
    }
    let pn = centered_power(noise);
    if !(pn > 0.0) {
        return Err(SimError::DegenerateNoise);
    }
    Ok(10.0 * (centered_power(signal) / pn).log10())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub per_channel_db: Vec<f64>,
    pub mean_db: f64,
    pub min_db: f64,
    pub max_db: f64,
}

/// Runs the resting bench recording and reports per-channel SNR.
pub fn snr_bench(
    device: &DeviceConfig,
    optics: &OpticalTable,
    duration_s: f64,
    seed: u64,
) -> Result<SnrReport, SimError> {
    let cfg = SimulationConfig {
        device: device.clone(),
        protocol: vec![PhaseSpec::new(PhaseLabel::Baseline, duration_s)],
        hemo: HemoParams { activation_um: 0.0, activated: ActivationSet::None, ..HemoParams::default() },
        seed,
        ..SimulationConfig::default()
    };
    let layout = SensorLayout::harness();
    let (mut head, _) = VirtualHead::from_config(&cfg, &layout, optics)?;
    let tick_us = 1_000_000 / u64::from(device.ecu.sample_rate_hz);
    let n = (duration_s * 1e6 / tick_us as f64) as usize;
    let mut clean = vec![[Vec::with_capacity(n), Vec::with_capacity(n)]; CHANNELS];
    let mut noise = vec![[Vec::with_capacity(n), Vec::with_capacity(n)]; CHANNELS];
    for k in 0..n as u64 {
        head.advance_to(k * tick_us);
        for c in ChannelId::all() {
            for wl in Wavelength::ALL {
                let s = head.clean_output(c, wl);
                let noisy = head.read(c, wl);
                clean[c.index()][wl.index()].push(s);
                noise[c.index()][wl.index()].push(noisy - s);
            }
        }
    }
    let mut per_channel_db = Vec::with_capacity(CHANNELS);
    for c in 0..CHANNELS {
        let ps = (centered_power(&clean[c][0]) + centered_power(&clean[c][1])) / 2.0;
        let pn = (centered_power(&noise[c][0]) + centered_power(&noise[c][1])) / 2.0;
        if !(pn > 0.0) {
            return Err(SimError::DegenerateNoise);
        }
        per_channel_db.push(10.0 * (ps / pn).log10());
    }
    let mean_db = per_channel_db.iter().sum::<f64>() / CHANNELS as f64;
    let min_db = per_channel_db.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_db = per_channel_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SnrReport { per_channel_db, mean_db, min_db, max_db })
}

/// Bisects the output noise σ (in log space) until the bench mean SNR hits `target_db`.
pub fn calibrate_noise_sigma(device: &DeviceConfig, optics: &OpticalTable, target_db: f64) -> Result<f64, SimError> {
    let mean_at = |sigma: f64| -> Result<f64, SimError> {
        let mut d = device.clone();
        d.afe.noise_sigma_v = sigma;
        Ok(snr_bench(&d, optics, BENCH_DURATION_S, BENCH_SEED)?.mean_db)
    };
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e-1f64.ln());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        // Higher σ, lower SNR.
        if mean_at(mid.exp())? > target_db {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-7 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
