use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layout::{Region, SensorLayout};
use super::protocol::{PhaseLabel, ProtocolTimeline};
use super::SimError;
use crate::types::{ChannelId, CHANNELS};

/// Which channels carry the task-evoked response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationSet {
    Region(Region),
    Channels(Vec<ChannelId>),
    All,
    None,
}

impl ActivationSet {
    pub fn resolve(&self, layout: &SensorLayout) -> [bool; CHANNELS] {
        let mut active = [false; CHANNELS];
        match self {
            ActivationSet::Region(r) => layout.channels_in(*r).into_iter().for_each(|c| active[c.index()] = true),
            ActivationSet::Channels(chs) => chs.iter().for_each(|c| active[c.index()] = true),
            ActivationSet::All => active = [true; CHANNELS],
            ActivationSet::None => {}
        }
        active
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HemoParams {
    /// Plateau ΔHbO of a sustained task block, µM.
    pub activation_um: f64,
    /// ΔHbR = −ratio · ΔHbO for the evoked part.
    pub hbr_ratio: f64,
    /// Peak drift per chromophore as a fraction of `activation_um`.
    pub drift_fraction: f64,
    pub hrf_peak_s: f64,
    pub sample_rate_hz: f64,
    pub activated: ActivationSet,
}

impl Default for HemoParams {
    fn default() -> Self {
        HemoParams {
            activation_um: 1.0,
            hbr_ratio: 1.0 / 3.0,
            drift_fraction: 0.05,
            hrf_peak_s: 6.0,
            sample_rate_hz: 50.0,
            activated: ActivationSet::Region(Region::Frontal),
        }
    }
}

/// Per-channel concentration changes on a uniform grid starting at t = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct HemoGroundTruth {
    pub sample_rate_hz: f64,
    pub hbo_um: Vec<Vec<f64>>,
    pub hbr_um: Vec<Vec<f64>>,
    pub activated: [bool; CHANNELS],
}

impl HemoGroundTruth {
    pub fn len(&self) -> usize {
        self.hbo_um.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time_s(&self, index: usize) -> f64 {
        index as f64 / self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for c in ChannelId::all() {
            let (o, r) = (&self.hbo_um[c.index()], &self.hbr_um[c.index()]);
            if o.len() != r.len() || o.len() != self.len() {
                return Err(SimError::TruthShape(c));
            }
        }
        Ok(())
    }
}

/// Shape parameter of the gamma-density response; the scale follows from the peak time.
const HRF_SHAPE: f64 = 7.0;
const HRF_LENGTH_S: f64 = 32.0;
const DRIFT_COMPONENTS: usize = 3;
const DRIFT_BAND_HZ: (f64, f64) = (0.001, 0.008);

/// Unit-area gamma impulse response `t^(k−1)·e^(−t/θ)` sampled at `rate_hz`, mode at `peak_s`.
pub fn gamma_hrf(peak_s: f64, rate_hz: f64) -> Vec<f64> {
    let scale = peak_s / (HRF_SHAPE - 1.0);
    let n = (HRF_LENGTH_S * rate_hz).ceil() as usize;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate_hz / scale;
            t.powf(HRF_SHAPE - 1.0) * (-t).exp()
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Task-evoked response: boxcar over every task phase convolved with the gamma response.
/// ΔHbR is the scaled mirror image plus independent slow drift on both chromophores.
pub fn synth_hemodynamics(
    timeline: &ProtocolTimeline,
    layout: &SensorLayout,
    params: &HemoParams,
    seed: u64,
) -> Result<HemoGroundTruth, SimError> {
    if !(params.activation_um >= 0.0) || !params.activation_um.is_finite() {
        return Err(SimError::InvalidParameter(format!("activation {} µM", params.activation_um)));
    }
    if !(params.sample_rate_hz > 0.0) || !(params.hrf_peak_s > 0.0) || !(params.hbr_ratio >= 0.0) {
        return Err(SimError::InvalidParameter("hemodynamic rates, peak and ratio must be positive".into()));
    }
    let rate = params.sample_rate_hz;
    let n = (timeline.total_duration_s() * rate).round() as usize;
    let boxcar: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            f64::from(u8::from(timeline.windows_of(PhaseLabel::Task).any(|w| w.contains(t))))
        })
        .collect();
    let hrf = gamma_hrf(params.hrf_peak_s, rate);
    let response: Vec<f64> = (0..n)
        .map(|i| {
            let taps = hrf.len().min(i + 1);
            params.activation_um * (0..taps).map(|k| hrf[k] * boxcar[i - k]).sum::<f64>()
        })
        .collect();

    let active = params.activated.resolve(layout);
    let drift_amp = params.drift_fraction * params.activation_um / DRIFT_COMPONENTS as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drift = || -> Vec<f64> {
        let comps: Vec<(f64, f64)> = (0..DRIFT_COMPONENTS)
            .map(|_| {
                let f = rng.random_range(DRIFT_BAND_HZ.0..DRIFT_BAND_HZ.1);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (f, phase)
            })
            .collect();
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                comps.iter().map(|(f, ph)| drift_amp * (std::f64::consts::TAU * f * t + ph).sin()).sum()
            })
            .collect()
    };

    let mut hbo_um = Vec::with_capacity(CHANNELS);
    let mut hbr_um = Vec::with_capacity(CHANNELS);
    for c in ChannelId::all() {
        let (d_o, d_r) = (drift(), drift());
        let gain = if active[c.index()] { 1.0 } else { 0.0 };
        hbo_um.push((0..n).map(|i| gain * response[i] + d_o[i]).collect());
        hbr_um.push((0..n).map(|i| -params.hbr_ratio * gain * response[i] + d_r[i]).collect());
    }
    Ok(HemoGroundTruth { sample_rate_hz: rate, hbo_um, hbr_um, activated: active })
}
