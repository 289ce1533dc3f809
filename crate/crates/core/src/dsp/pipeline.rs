//! End-to-end host processing: demux → light level → ΔOD → band-pass → MBLL → CBSI,
//! plus heart rate from the unfiltered short-channel series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::butterworth::ButterworthBandpass;
use super::cbsi::cbsi;
use super::demux::{demux_channels, DemuxOutput, Schedule, SeqGap};
use super::heart::{estimate_heart_rate, HeartRate, HeartRateParams};
use super::intensity::{intensity_to_dod, reconstruct_intensity, window_indices, FrontEndCalibration};
use super::mbll::{dpf_lookup, mbll_invert};
use super::{DspError, HemoSeries};
use crate::physio::layout::SensorLayout;
use crate::physio::optics::OpticalTable;
use crate::types::{ChannelId, Frame, Marker, Wavelength};

/// Length of the fallback baseline when no markers say otherwise, s.
pub const DEFAULT_BASELINE_S: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub filter_order: usize,
    pub age_years: f64,
    /// Reference window relative to the first frame; `None` derives it from the markers.
    pub baseline_window_s: Option<(f64, f64)>,
    pub cardiac_band_hz: (f64, f64),
    pub peak_refractory_s: f64,
    pub heart_rate_channel: ChannelId,
    pub heart_rate_wavelength: Wavelength,
    pub schedule: Schedule,
    pub calibration: FrontEndCalibration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            band_lo_hz: 0.01,
            band_hi_hz: 0.5,
            filter_order: 4,
            age_years: 25.0,
            baseline_window_s: None,
            cardiac_band_hz: (0.5, 3.0),
            peak_refractory_s: 0.33,
            heart_rate_channel: ChannelId::new(0).expect("channel 0"),
            heart_rate_wavelength: Wavelength::Nm940,
            schedule: Schedule::default(),
            calibration: FrontEndCalibration::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Demux,
    Intensity,
    OpticalDensity,
    Bandpass,
    Mbll,
    Cbsi,
    HeartRate,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage:?} stage{}: {source}", channel.map(|c| format!(" ({c})")).unwrap_or_default())]
pub struct PipelineError {
    pub stage: Stage,
    pub channel: Option<ChannelId>,
    pub source: DspError,
}

impl PipelineError {
    fn at(stage: Stage, channel: Option<ChannelId>) -> impl FnOnce(DspError) -> Self {
        move |source| PipelineError { stage, channel, source }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    /// One entry per channel that had data, in channel order.
    pub hemo: Vec<HemoSeries>,
    pub heart_rate: Result<HeartRate, DspError>,
    pub sample_rate_hz: f64,
    /// Absolute reference window used for ΔOD, s.
    pub baseline_window_s: (f64, f64),
    pub gaps: Vec<SeqGap>,
    pub stale_discarded: usize,
    pub missing_channels: Vec<ChannelId>,
}

impl PipelineOutput {
    pub fn channel(&self, channel: ChannelId) -> Option<&HemoSeries> {
        self.hemo.iter().find(|h| h.channel == channel)
    }
}

/// Baseline window from phase markers: from the `baseline` marker (or the start)
/// to the next marker. `None` when the markers do not bound a baseline.
pub fn baseline_from_markers(markers: &[Marker]) -> Option<(f64, f64)> {
    let mut sorted: Vec<&Marker> = markers.iter().collect();
    sorted.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
    let start = sorted.iter().find(|m| m.label == "baseline").map_or(0.0, |m| m.t_s);
    let end = sorted.iter().find(|m| m.t_s > start && m.label != "baseline")?.t_s;
    Some((start, end))
}

/// Linear interpolation of `(xs, ys)` at `at`, holding the end values outside.
pub fn interpolate(xs: &[f64], ys: &[f64], at: &[f64]) -> Vec<f64> {
    let mut k = 0;
    at.iter()
        .map(|&x| {
            if x <= xs[0] {
                return ys[0];
            }
            if x >= xs[xs.len() - 1] {
                return ys[ys.len() - 1];
            }
            while xs[k + 1] < x {
                k += 1;
            }
            let f = (x - xs[k]) / (xs[k + 1] - xs[k]);
            ys[k] + (ys[k + 1] - ys[k]) * f
        })
        .collect()
}

/// Runs the whole chain over a recorded frame sequence. `markers` are relative to
/// the first frame and only consulted when the config has no explicit baseline.
pub fn process_pipeline(
    frames: &[Frame],
    layout: &SensorLayout,
    optics: &OpticalTable,
    config: &PipelineConfig,
    markers: &[Marker],
) -> Result<PipelineOutput, PipelineError> {
    let demux = demux_channels(frames, &config.schedule);
    process_demuxed(&demux, frames.first().map_or(0, |f| f.timestamp_us), layout, optics, config, markers)
}

pub fn process_demuxed(
    demux: &DemuxOutput,
    start_us: u64,
    layout: &SensorLayout,
    optics: &OpticalTable,
    config: &PipelineConfig,
    markers: &[Marker],
) -> Result<PipelineOutput, PipelineError> {
    let t0 = start_us as f64 * 1e-6;
    let rel = config.baseline_window_s.or_else(|| baseline_from_markers(markers)).unwrap_or((0.0, DEFAULT_BASELINE_S));
    let baseline = (t0 + rel.0, t0 + rel.1);
    let fs = demux.sample_rate_hz;
    let filter = ButterworthBandpass::design(config.filter_order, config.band_lo_hz, config.band_hi_hz, fs)
        .map_err(PipelineError::at(Stage::Bandpass, None))?;
    let dpf = [
        dpf_lookup(optics, config.age_years, 660.0).map_err(PipelineError::at(Stage::Mbll, None))?,
        dpf_lookup(optics, config.age_years, 940.0).map_err(PipelineError::at(Stage::Mbll, None))?,
    ];

    let mut hemo = Vec::new();
    let mut missing_channels = Vec::new();
    for c in ChannelId::all() {
        let (s660, s940) = (demux.get(c, Wavelength::Nm660), demux.get(c, Wavelength::Nm940));
        if s660.is_empty() || s940.is_empty() {
            missing_channels.push(c);
            continue;
        }
        let mut od = Vec::with_capacity(2);
        for s in [s660, s940] {
            let some = Some(c);
            let base = window_indices(&s.timestamps_s, baseline);
            if base.is_empty() {
                return Err(PipelineError::at(Stage::Intensity, some)(DspError::EmptyBaseline(baseline)));
            }
            let level = config.calibration.resting_level(c, s.wavelength);
            let intensity = reconstruct_intensity(&s.timestamps_s, &s.values, level, &config.calibration, &base)
                .map_err(PipelineError::at(Stage::Intensity, some))?;
            let d = intensity_to_dod(&s.timestamps_s, &intensity, baseline)
                .map_err(PipelineError::at(Stage::OpticalDensity, some))?;
            od.push(filter.filtfilt(&d).map_err(PipelineError::at(Stage::Bandpass, some))?);
        }
        let od940 = interpolate(&s940.timestamps_s, &od[1], &s660.timestamps_s);
        let (hbo, hbr) = mbll_invert(&od[0], &od940, optics, layout.detector(c).distance_cm, dpf[0], dpf[1])
            .map_err(PipelineError::at(Stage::Mbll, Some(c)))?;
        let corrected = cbsi(&hbo, &hbr).map_err(PipelineError::at(Stage::Cbsi, Some(c)))?;
        hemo.push(HemoSeries {
            channel: c,
            timestamps_s: s660.timestamps_s.clone(),
            hbo_um: hbo,
            hbr_um: hbr,
            hbo_cbsi_um: corrected.hbo,
            hbr_cbsi_um: corrected.hbr,
            cbsi_beta: corrected.beta,
        });
    }

    let hr_series = demux.get(config.heart_rate_channel, config.heart_rate_wavelength);
    let heart_rate = if hr_series.is_empty() {
        Err(DspError::NoData(config.heart_rate_channel, config.heart_rate_wavelength.nm()))
    } else {
        let params = HeartRateParams {
            band_hz: config.cardiac_band_hz,
            refractory_s: config.peak_refractory_s,
            filter_order: config.filter_order,
        };
        estimate_heart_rate(&hr_series.values, fs, hr_series.timestamps_s[0], &params)
    };

    Ok(PipelineOutput {
        hemo,
        heart_rate,
        sample_rate_hz: fs,
        baseline_window_s: baseline,
        gaps: demux.gaps.clone(),
        stale_discarded: demux.stale_discarded,
        missing_channels,
    })
}
