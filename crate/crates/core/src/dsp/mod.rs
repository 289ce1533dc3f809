//! Host-side processing from frames to hemodynamics.

pub mod butterworth;
pub mod cbsi;
pub mod demux;
pub mod heart;
pub mod intensity;
pub mod mbll;
pub mod pipeline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physio::SimError;
use crate::types::ChannelId;

pub use butterworth::{bandpass_zero_phase, ButterworthBandpass};
pub use cbsi::{cbsi, CbsiOutput};
pub use demux::{demux_channels, ChannelSeries, DemuxOutput, Schedule};
pub use heart::{estimate_heart_rate, HeartRate};
pub use intensity::{intensity_to_dod, reconstruct_intensity, FrontEndCalibration};
pub use mbll::{dpf_lookup, mbll_invert};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("series too short: need more than {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("band {lo_hz}–{hi_hz} Hz not inside (0, {nyquist_hz}) Hz")]
    BandOutsideNyquist { lo_hz: f64, hi_hz: f64, nyquist_hz: f64 },
    #[error("filter order must be at least 1")]
    InvalidOrder,
    #[error("non-positive intensity {value} at sample {index}")]
    NonPositiveIntensity { index: usize, value: f64 },
    #[error("baseline window {0:?} s contains no samples")]
    EmptyBaseline((f64, f64)),
    #[error("extinction matrix condition number {0:.3e} too large")]
    IllConditioned(f64),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sampling rate {0} Hz too low")]
    RateTooLow(f64),
    #[error("no heartbeats detected")]
    NoPeaks,
    #[error("no samples for {0} at {1} nm")]
    NoData(ChannelId, u32),
    #[error(transparent)]
    Optics(#[from] SimError),
}

/// Concentration changes for one channel on the 660 nm visit timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HemoSeries {
    pub channel: ChannelId,
    pub timestamps_s: Vec<f64>,
    pub hbo_um: Vec<f64>,
    pub hbr_um: Vec<f64>,
    pub hbo_cbsi_um: Vec<f64>,
    pub hbr_cbsi_um: Vec<f64>,
    /// CBSI weighting; `None` when ΔHbR had no variance and the inputs were passed through.
    pub cbsi_beta: Option<f64>,
}

impl HemoSeries {
    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }

    /// Mean ΔHbO and ΔHbR over `[start_s, end_s)`.
    pub fn window_mean(&self, start_s: f64, end_s: f64) -> Option<(f64, f64)> {
        let idx: Vec<usize> =
            (0..self.len()).filter(|&i| self.timestamps_s[i] >= start_s && self.timestamps_s[i] < end_s).collect();
        if idx.is_empty() {
            return None;
        }
        let n = idx.len() as f64;
        Some((
            idx.iter().map(|&i| self.hbo_um[i]).sum::<f64>() / n,
            idx.iter().map(|&i| self.hbr_um[i]).sum::<f64>() / n,
        ))
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}
