//! Quick invariant checks runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dsp::{cbsi, demux_channels, estimate_heart_rate, heart::HeartRateParams, mbll_invert, Schedule};
use crate::ecu::{iir_alpha, Ecu, EcuConfig};
use crate::physio::forward::mbll_forward_sample;
use crate::physio::optics::{Chromophore, OpticalTable};
use crate::types::{Frame, Wavelength};
use crate::wire::{crc16, decode_frame, encode_frame, FrameStreamParser, StreamItem};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check { name, passed, detail: detail.into() }
}

fn random_frame(rng: &mut impl Rng, seq: u32) -> Frame {
    Frame {
        seq,
        timestamp_us: rng.random(),
        wavelength: if rng.random() { Wavelength::Nm940 } else { Wavelength::Nm660 },
        mux_idx: std::array::from_fn(|_| rng.random_range(0..3)),
        samples: std::array::from_fn(|_| rng.random_range(0..=4095)),
    }
}

pub fn run_selftest() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let mut out = Vec::new();

    out.push(check("crc16 check value", crc16(b"123456789") == 0x29B1, format!("{:#06x}", crc16(b"123456789"))));

    let frames: Vec<Frame> = (0..10_000).map(|i| random_frame(&mut rng, i)).collect();
    let roundtrip = frames.iter().all(|f| decode_frame(&encode_frame(f)).as_ref() == Ok(f));
    out.push(check("frame round trip", roundtrip, "10000 random frames"));

    let mut stream = Vec::new();
    for (i, f) in frames[..100].iter().enumerate() {
        stream.extend_from_slice(&encode_frame(f));
        if i % 10 == 5 {
            stream.extend((0..7).map(|_| rng.random::<u8>()));
        }
    }
    let mut parser = FrameStreamParser::new();
    let got: Vec<Frame> = parser
        .feed(&stream)
        .into_iter()
        .filter_map(|i| if let StreamItem::Frame(f) = i { Some(f) } else { None })
        .collect();
    out.push(check(
        "parser resync",
        got == frames[..100],
        format!("{} of 100 frames, {} resyncs", got.len(), parser.stats().resyncs),
    ));

    let alpha = iir_alpha(20.0, 1000.0).unwrap_or(f64::NAN);
    let mut y = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        y = alpha * f64::from(u8::from(k == 0)) + (1.0 - alpha) * y;
        worst = worst.max((y - alpha * (1.0 - alpha).powi(k)).abs());
    }
    out.push(check("iir impulse response", worst < 1e-12, format!("max deviation {worst:.2e}")));

    let count =
        Ecu::new(EcuConfig::default()).and_then(|mut e| e.step(&mut |_, _, _| 1.0, 1_000_000)).map_or(0, |f| f.len());
    out.push(check("1 s emits 1000 frames", count == 1000, format!("{count} frames")));

    let sched_frames =
        Ecu::new(EcuConfig::default()).and_then(|mut e| e.step(&mut |_, _, _| 1.0, 30_000)).unwrap_or_default();
    let demux = demux_channels(&sched_frames, &Schedule::default());
    let all_once = demux.series.iter().all(|s| s.len() == 1);
    out.push(check("one visit per pair per 30 ms", all_once, format!("{} pairs", demux.series.len())));

    let optics = OpticalTable::standard();
    let mut max_err: f64 = 0.0;
    for _ in 0..1000 {
        let (o, r) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let od = |nm: u32, dpf: f64| {
            mbll_forward_sample(
                optics.epsilon(Chromophore::HbO, nm).unwrap_or(f64::NAN),
                optics.epsilon(Chromophore::HbR, nm).unwrap_or(f64::NAN),
                o,
                r,
                3.5,
                dpf,
            )
        };
        match mbll_invert(&[od(660, 6.0)], &[od(940, 5.5)], &optics, 3.5, 6.0, 5.5) {
            Ok((ho, hr)) => max_err = max_err.max((ho[0] - o).abs()).max((hr[0] - r).abs()),
            Err(_) => max_err = f64::INFINITY,
        }
    }
    out.push(check("mbll round trip", max_err < 1e-9, format!("max error {max_err:.2e} µM")));

    let s: Vec<f64> = (0..500).map(|i| (i as f64 * 0.03).sin()).collect();
    let r: Vec<f64> = s.iter().map(|v| -v / 4.0).collect();
    let fixed = cbsi(&s, &r).map(|c| c.hbo == s && c.hbr == r).unwrap_or(false);
    out.push(check("cbsi fixed point", fixed, "β = 4"));

    let fs = 1000.0 / 30.0;
    let pulse: Vec<f64> = (0..1000).map(|i| (std::f64::consts::TAU * 1.2 * i as f64 / fs).sin()).collect();
    let hr = estimate_heart_rate(&pulse, fs, 0.0, &HeartRateParams::default());
    let (ok, detail) = match &hr {
        Ok(h) => (h.bpm.iter().all(|b| (b.1 - 72.0).abs() < 1.0), format!("mean {:.2} bpm", h.mean_bpm())),
        Err(e) => (false, e.to_string()),
    };
    out.push(check("heart rate 72 bpm", ok, detail));

    out
}
