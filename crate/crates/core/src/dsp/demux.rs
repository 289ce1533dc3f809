//! Splits the frame stream into one series per (channel, wavelength).
//!
//! A *visit* is a run of consecutive frames in which a channel is selected under
//! one wavelength. The first frame of every visit still carries the value from
//! before the switch and is discarded as stale; the rest are averaged to one
//! value. Visits are placed on a grid of schedule cycles (one mux sweep under each
//! wavelength), so every pair gets one value per cycle; cycles a pair missed are
//! linearly interpolated and flagged.

use serde::{Deserialize, Serialize};

use crate::types::{ChannelId, Frame, Wavelength, CHANNELS, DETECTORS_PER_GROUP};

/// Multiplexer and wavelength timing of the acquisition firmware.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub mux_dwell_ms: u32,
    pub wavelength_period_ms: u32,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { mux_dwell_ms: 5, wavelength_period_ms: 15 }
    }
}

impl Schedule {
    /// Time for every pair to be visited once, µs.
    pub fn cycle_us(&self) -> u64 {
        2 * u64::from(self.wavelength_period_ms.max(self.mux_dwell_ms * DETECTORS_PER_GROUP as u32)) * 1000
    }

    pub fn pair_rate_hz(&self) -> f64 {
        1e6 / self.cycle_us() as f64
    }
}

/// Fresh samples of one pair, before visit averaging.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawSamples {
    pub seq: Vec<u32>,
    pub timestamps_us: Vec<u64>,
    pub codes: Vec<u16>,
    pub stale: Vec<bool>,
}

/// Visit-averaged, uniformly gridded series of one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSeries {
    pub channel: ChannelId,
    pub wavelength: Wavelength,
    pub timestamps_s: Vec<f64>,
    /// Mean ADC code of each visit.
    pub values: Vec<f64>,
    /// True where the value was interpolated across a missed visit.
    pub filled: Vec<bool>,
}

impl ChannelSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqGap {
    pub after_seq: u32,
    pub missing: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemuxOutput {
    /// Indexed `channel·2 + wavelength`.
    pub series: Vec<ChannelSeries>,
    pub gaps: Vec<SeqGap>,
    pub stale_discarded: usize,
    pub sample_rate_hz: f64,
}

impl DemuxOutput {
    pub fn get(&self, channel: ChannelId, wavelength: Wavelength) -> &ChannelSeries {
        &self.series[channel.index() * 2 + wavelength.index()]
    }
}

fn pair_index(channel: ChannelId, wavelength: Wavelength) -> usize {
    channel.index() * 2 + wavelength.index()
}

/// Assigns each frame's fresh samples to their pair and marks visit starts stale.
pub fn demux_raw(frames: &[Frame]) -> (Vec<RawSamples>, Vec<SeqGap>) {
    let mut raw = vec![RawSamples::default(); CHANNELS * 2];
    let mut gaps = Vec::new();
    let mut prev: Option<&Frame> = None;
    for f in frames {
        let contiguous = prev.is_some_and(|p| p.seq.wrapping_add(1) == f.seq);
        if let Some(p) = prev.filter(|_| !contiguous) {
            gaps.push(SeqGap { after_seq: p.seq, missing: f.seq.wrapping_sub(p.seq).wrapping_sub(1) });
        }
        for c in ChannelId::all() {
            if !f.is_fresh(c) {
                continue;
            }
            let continues = contiguous && prev.is_some_and(|p| p.is_fresh(c) && p.wavelength == f.wavelength);
            let r = &mut raw[pair_index(c, f.wavelength)];
            r.seq.push(f.seq);
            r.timestamps_us.push(f.timestamp_us);
            r.codes.push(f.sample(c));
            r.stale.push(!continues);
        }
        prev = Some(f);
    }
    (raw, gaps)
}

struct Visit {
    slot: i64,
    t_us: f64,
    value: f64,
}

fn visits(raw: &RawSamples, cycle_us: u64) -> Vec<Visit> {
    let mut out: Vec<Visit> = Vec::new();
    let mut i = 0;
    while i < raw.codes.len() {
        let start = i;
        i += 1;
        while i < raw.codes.len() && !raw.stale[i] {
            i += 1;
        }
        let fresh: Vec<usize> = (start + 1..i).collect();
        if fresh.is_empty() {
            continue;
        }
        let n = fresh.len() as f64;
        let value = fresh.iter().map(|&k| f64::from(raw.codes[k])).sum::<f64>() / n;
        let t_us = fresh.iter().map(|&k| raw.timestamps_us[k] as f64).sum::<f64>() / n;
        let slot = (raw.timestamps_us[start] / cycle_us) as i64;
        match out.last_mut() {
            // Several visits inside one cycle (pinned multiplexer) merge into one value.
            Some(last) if last.slot == slot => {
                last.value = (last.value + value) / 2.0;
                last.t_us = (last.t_us + t_us) / 2.0;
            }
            _ => out.push(Visit { slot, t_us, value }),
        }
    }
    out
}

/// Demultiplexes `frames` (in sequence order, gaps allowed) into 48 gridded series.
/// Pairs never visited (e.g. behind a pinned multiplexer) come back empty.
pub fn demux_channels(frames: &[Frame], schedule: &Schedule) -> DemuxOutput {
    let cycle_us = schedule.cycle_us();
    let (raw, gaps) = demux_raw(frames);
    let stale_discarded = raw.iter().map(|r| r.stale.iter().filter(|&&s| s).count()).sum();
    let per_pair: Vec<Vec<Visit>> = raw.iter().map(|r| visits(r, cycle_us)).collect();

    // Common slot range: cycles in which every visited pair has a value at or
    // before and at or after, so nothing is extrapolated.
    let visited = per_pair.iter().filter(|v| !v.is_empty());
    let first = visited.clone().map(|v| v[0].slot).max();
    let last = visited.map(|v| v[v.len() - 1].slot).min();

    let series = ChannelId::all()
        .flat_map(|c| Wavelength::ALL.map(move |wl| (c, wl)))
        .map(|(c, wl)| {
            let v = &per_pair[pair_index(c, wl)];
            let mut s =
                ChannelSeries { channel: c, wavelength: wl, timestamps_s: vec![], values: vec![], filled: vec![] };
            if let (Some(first), Some(last), false) = (first, last, v.is_empty()) {
                grid(v, first, last, cycle_us, &mut s);
            }
            s
        })
        .collect();
    DemuxOutput { series, gaps, stale_discarded, sample_rate_hz: schedule.pair_rate_hz() }
}

fn grid(v: &[Visit], first: i64, last: i64, cycle_us: u64, s: &mut ChannelSeries) {
    let cycle = cycle_us as f64;
    let mut k = 0;
    for slot in first..=last {
        while k + 1 < v.len() && v[k + 1].slot <= slot {
            k += 1;
        }
        if v[k].slot == slot {
            s.timestamps_s.push(v[k].t_us * 1e-6);
            s.values.push(v[k].value);
            s.filled.push(false);
            continue;
        }
        let (a, b) = (&v[k], v.get(k + 1).unwrap_or(&v[k]));
        let frac = if b.slot > a.slot { (slot - a.slot) as f64 / (b.slot - a.slot) as f64 } else { 0.0 };
        let offset = a.t_us - a.slot as f64 * cycle;
        s.timestamps_s.push((slot as f64 * cycle + offset) * 1e-6);
        s.values.push(a.value + (b.value - a.value) * frac);
        s.filled.push(true);
    }
}
