//! Heart rate from the pulsatile component of a raw detector series.

use serde::{Deserialize, Serialize};

use super::butterworth::ButterworthBandpass;
use super::DspError;

pub const MIN_RATE_HZ: f64 = 6.0;
pub const MIN_DURATION_S: f64 = 5.0;
/// Peaks must stand out by this fraction of the band-passed RMS.
pub const PROMINENCE_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeartRateParams {
    pub band_hz: (f64, f64),
    pub refractory_s: f64,
    pub filter_order: usize,
}

impl Default for HeartRateParams {
    fn default() -> Self {
        HeartRateParams { band_hz: (0.5, 3.0), refractory_s: 0.33, filter_order: 4 }
    }
}

/// Beat times and the instantaneous rate at each beat after the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeartRate {
    pub peak_times_s: Vec<f64>,
    /// `(time of the later beat, 60 / interval)`.
    pub bpm: Vec<(f64, f64)>,
}

impl HeartRate {
    pub fn mean_bpm(&self) -> f64 {
        self.bpm.iter().map(|b| b.1).sum::<f64>() / self.bpm.len() as f64
    }
}

/// `x` is sampled uniformly at `fs_hz`, starting at `t0_s`.
pub fn estimate_heart_rate(x: &[f64], fs_hz: f64, t0_s: f64, params: &HeartRateParams) -> Result<HeartRate, DspError> {
    if !(fs_hz > MIN_RATE_HZ) {
        return Err(DspError::RateTooLow(fs_hz));
    }
    let needed = (MIN_DURATION_S * fs_hz).ceil() as usize;
    if x.len() < needed {
        return Err(DspError::TooShort { needed, got: x.len() });
    }
    let filter = ButterworthBandpass::design(params.filter_order, params.band_hz.0, params.band_hz.1, fs_hz)?;
    let y = filter.filtfilt(x)?;
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(rms > 1e-9 * scale) {
        return Err(DspError::NoPeaks);
    }
    let distance = (params.refractory_s * fs_hz).ceil() as usize;
    let peaks = find_peaks(&y, PROMINENCE_FRACTION * rms, distance.max(1));
    if peaks.len() < 2 {
        return Err(DspError::NoPeaks);
    }
    let peak_times_s: Vec<f64> = peaks.iter().map(|&i| t0_s + refine(&y, i) / fs_hz).collect();
    let bpm = peak_times_s.windows(2).map(|w| (w[1], 60.0 / (w[1] - w[0]))).collect();
    Ok(HeartRate { peak_times_s, bpm })
}

/// Sub-sample peak position from a parabola through the three samples around `i`.
fn refine(y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= y.len() {
        return i as f64;
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        i as f64
    } else {
        i as f64 + 0.5 * (a - c) / den
    }
}

/// Local maxima with at least `min_prominence`, thinned so no two are closer than
/// `distance` samples (taller peaks win).
pub fn find_peaks(y: &[f64], min_prominence: f64, distance: usize) -> Vec<usize> {
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if y[i] > y[i - 1] {
            // Plateaus count once, at their middle.
            let mut j = i;
            while j + 1 < y.len() && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < y.len() && y[j + 1] < y[i] {
                candidates.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    candidates.retain(|&p| prominence(y, p) >= min_prominence);

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| y[candidates[b]].partial_cmp(&y[candidates[a]]).unwrap());
    let mut keep = vec![true; candidates.len()];
    for &k in &order {
        if !keep[k] {
            continue;
        }
        let p = candidates[k];
        for (m, &q) in candidates.iter().enumerate() {
            if m != k && keep[m] && q.abs_diff(p) < distance {
                keep[m] = false;
            }
        }
    }
    candidates.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

/// Height above the higher of the two bases reachable without climbing above the peak.
fn prominence(y: &[f64], p: usize) -> f64 {
    let h = y[p];
    let mut left_min = h;
    for &v in y[..p].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &y[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
