//! From ADC codes back to light level, then to optical density change.
//!
//! The detector chain is AC-coupled (first-order high-pass, τ = RC), which would
//! erase the slow hemodynamic signal. Because that high-pass obeys
//! `dx/dt = dy/dt + y/τ`, the light level is recovered from the amplifier output
//! `y` as `x(t) = x₀ + y(t) + (1/τ)·∫y dt`, with `x₀` the calibrated resting level.

use serde::{Deserialize, Serialize};

use super::DspError;
use crate::physio::afe::AfeParams;
use crate::physio::optics::OpticalTable;
use crate::types::{ChannelId, Wavelength, ADC_MAX_CODE, CHANNELS};

/// What the host knows about the detector electronics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontEndCalibration {
    pub adc_fullscale_v: f64,
    pub ac_gain_v_per_v: f64,
    pub ac_couple_cutoff_hz: f64,
    /// Resting TIA-output level per channel and wavelength, V.
    pub resting_level_v: Vec<[f64; 2]>,
}

impl Default for FrontEndCalibration {
    fn default() -> Self {
        FrontEndCalibration::from_device(&AfeParams::default(), &OpticalTable::standard())
    }
}

impl FrontEndCalibration {
    pub fn from_device(afe: &AfeParams, optics: &OpticalTable) -> Self {
        let dark = afe.dark_offset_v();
        FrontEndCalibration {
            adc_fullscale_v: afe.supply_v,
            ac_gain_v_per_v: afe.ac_gain_v_per_v,
            ac_couple_cutoff_hz: afe.ac_couple_cutoff_hz,
            resting_level_v: ChannelId::all()
                .map(|c| Wavelength::ALL.map(|wl| optics.baseline(c, wl) + dark))
                .collect(),
        }
    }

    pub fn resting_level(&self, channel: ChannelId, wavelength: Wavelength) -> f64 {
        self.resting_level_v.get(channel.index()).map_or(f64::NAN, |l| l[wavelength.index()])
    }

    pub fn is_complete(&self) -> bool {
        self.resting_level_v.len() == CHANNELS
    }
}

/// Inverts the AC coupling. `codes` are visit-averaged ADC codes at `timestamps_s`;
/// the amplifier's resting output is taken as the mean over `baseline`.
pub fn reconstruct_intensity(
    timestamps_s: &[f64],
    codes: &[f64],
    resting_level_v: f64,
    cal: &FrontEndCalibration,
    baseline: &[usize],
) -> Result<Vec<f64>, DspError> {
    if timestamps_s.len() != codes.len() {
        return Err(DspError::LengthMismatch(timestamps_s.len(), codes.len()));
    }
    if baseline.is_empty() {
        return Err(DspError::EmptyBaseline((f64::NAN, f64::NAN)));
    }
    let volts_per_code = cal.adc_fullscale_v / f64::from(ADC_MAX_CODE);
    let rest = baseline.iter().map(|&i| codes[i]).sum::<f64>() / baseline.len() as f64;
    let u: Vec<f64> = codes.iter().map(|&c| (c - rest) * volts_per_code / cal.ac_gain_v_per_v).collect();
    let inv_tau = std::f64::consts::TAU * cal.ac_couple_cutoff_hz;
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        if i > 0 {
            integral += 0.5 * (u[i] + u[i - 1]) * (timestamps_s[i] - timestamps_s[i - 1]);
        }
        out.push(resting_level_v + u[i] + inv_tau * integral);
    }
    Ok(out)
}

/// Indices of `timestamps_s` inside `[start, end)`.
pub fn window_indices(timestamps_s: &[f64], window_s: (f64, f64)) -> Vec<usize> {
    (0..timestamps_s.len()).filter(|&i| timestamps_s[i] >= window_s.0 && timestamps_s[i] < window_s.1).collect()
}

/// ΔOD(t) = −log10(I(t) / I_ref) with `I_ref` the mean over the baseline window.
pub fn intensity_to_dod(timestamps_s: &[f64], intensity: &[f64], baseline_s: (f64, f64)) -> Result<Vec<f64>, DspError> {
    if timestamps_s.len() != intensity.len() {
        return Err(DspError::LengthMismatch(timestamps_s.len(), intensity.len()));
    }
    if let Some((index, &value)) = intensity.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(DspError::NonPositiveIntensity { index, value });
    }
    let idx = window_indices(timestamps_s, baseline_s);
    if idx.is_empty() {
        return Err(DspError::EmptyBaseline(baseline_s));
    }
    let i_ref = idx.iter().map(|&i| intensity[i]).sum::<f64>() / idx.len() as f64;
    Ok(intensity.iter().map(|&v| -(v / i_ref).log10()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physio::adc::adc_quantize;
    use crate::physio::afe::{AfeParams, AnalogChannel};

    #[test]
    fn dod_examples() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(intensity_to_dod(&t, &[2.0; 4], (0.0, 2.0)).unwrap(), vec![0.0; 4]);
        let d = intensity_to_dod(&t, &[2.0, 2.0, 0.2, 1.98], (0.0, 2.0)).unwrap();
        assert!((d[2] - 1.0).abs() < 1e-15);
        // −log10(0.99)
        assert!((d[3] - 0.004_364_805_402_450_088).abs() < 1e-15);
    }

    #[test]
    fn dod_errors() {
        let t = [0.0, 1.0];
        assert!(matches!(
            intensity_to_dod(&t, &[1.0, 0.0], (0.0, 1.0)),
            Err(DspError::NonPositiveIntensity { index: 1, .. })
        ));
        assert!(matches!(intensity_to_dod(&t, &[1.0, 1.0], (5.0, 6.0)), Err(DspError::EmptyBaseline(_))));
    }

    #[test]
    fn undoes_ac_coupling_of_a_slow_step() {
        // Light level steps up 2 % at t = 10 s; the coupled output decays back to the
        // offset within seconds, the reconstruction keeps the step.
        let afe = AfeParams { noise_sigma_v: 0.0, ..AfeParams::default() };
        let rate = 1000.0;
        let mut chain = AnalogChannel::new(&afe, rate);
        let level = 0.15;
        let n = 40_000;
        let mut t = Vec::new();
        let mut codes = Vec::new();
        for i in 0..n {
            let x = if i >= 10_000 { level * 1.02 } else { level };
            let clean = chain.step(x);
            let y = chain.finish(clean, 0.0);
            if i % 30 == 0 {
                t.push(i as f64 / rate);
                codes.push(f64::from(adc_quantize(y, 3.3, 12)));
            }
        }
        let cal = FrontEndCalibration { resting_level_v: vec![[level; 2]; CHANNELS], ..FrontEndCalibration::default() };
        let base = window_indices(&t, (0.0, 10.0));
        let rec = reconstruct_intensity(&t, &codes, level, &cal, &base).unwrap();
        assert!((codes[codes.len() - 1] - 2048.0).abs() <= 2.0);
        let tail = rec[rec.len() - 100..].iter().sum::<f64>() / 100.0;
        assert!(((tail - 1.02 * level) / level).abs() < 1.5e-3, "{tail}");
        assert!(((rec[10] - level) / level).abs() < 1e-3);
    }
}
