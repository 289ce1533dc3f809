//! Modified Beer–Lambert forward model: concentration changes to optical density
//! changes to detected light level.

use super::hemo::HemoGroundTruth;
use super::layout::SensorLayout;
use super::optics::{Chromophore, OpticalTable};
use super::SimError;
use crate::types::{ChannelId, Wavelength};

/// µM → mM, the only unit conversion on the concentration path.
pub const UM_PER_MM: f64 = 1000.0;

/// Optical density change per channel, indexed `[channel][wavelength]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaOd {
    pub sample_rate_hz: f64,
    pub od: Vec<[Vec<f64>; 2]>,
}

impl DeltaOd {
    pub fn series(&self, channel: ChannelId, wavelength: Wavelength) -> &[f64] {
        &self.od[channel.index()][wavelength.index()]
    }
}

/// ΔOD(λ) = (ε_HbO(λ)·ΔHbO + ε_HbR(λ)·ΔHbR) · d · DPF(λ, age) for a single sample.
pub fn mbll_forward_sample(eps_hbo: f64, eps_hbr: f64, hbo_um: f64, hbr_um: f64, distance_cm: f64, dpf: f64) -> f64 {
    (eps_hbo * hbo_um + eps_hbr * hbr_um) / UM_PER_MM * distance_cm * dpf
}

pub fn forward_beer_lambert(
    truth: &HemoGroundTruth,
    layout: &SensorLayout,
    optics: &OpticalTable,
    age_years: f64,
) -> Result<DeltaOd, SimError> {
    truth.validate()?;
    let mut coeff = [[0.0; 2]; 2];
    let mut dpf = [0.0; 2];
    for wl in Wavelength::ALL {
        coeff[wl.index()] = [optics.epsilon(Chromophore::HbO, wl.nm())?, optics.epsilon(Chromophore::HbR, wl.nm())?];
        dpf[wl.index()] = optics.dpf.evaluate(age_years, f64::from(wl.nm()))?;
    }
    let od = ChannelId::all()
        .map(|c| {
            let d = layout.detector(c).distance_cm;
            let (hbo, hbr) = (&truth.hbo_um[c.index()], &truth.hbr_um[c.index()]);
            Wavelength::ALL.map(|wl| {
                let [eo, er] = coeff[wl.index()];
                hbo.iter().zip(hbr).map(|(&o, &r)| mbll_forward_sample(eo, er, o, r, d, dpf[wl.index()])).collect()
            })
        })
        .collect();
    Ok(DeltaOd { sample_rate_hz: truth.sample_rate_hz, od })
}

/// I = I₀ · 10^(−ΔOD).
pub fn od_to_intensity(delta_od: &[f64], i0: f64) -> Vec<f64> {
    delta_od.iter().map(|&od| i0 * 10f64.powf(-od)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physio::hemo::{synth_hemodynamics, HemoParams};
    use crate::physio::protocol::ProtocolTimeline;

    fn truth_from(hbo: f64, hbr: f64) -> HemoGroundTruth {
        HemoGroundTruth {
            sample_rate_hz: 10.0,
            hbo_um: vec![vec![0.0, hbo]; 24],
            hbr_um: vec![vec![0.0, hbr]; 24],
            activated: [true; 24],
        }
    }

    #[test]
    fn zero_concentration_zero_od() {
        let od = forward_beer_lambert(&truth_from(0.0, 0.0), &SensorLayout::harness(), &OpticalTable::standard(), 25.0)
            .unwrap();
        assert!(od.od.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn one_micromolar_step_matches_scalar_product() {
        let layout = SensorLayout::harness();
        let od = forward_beer_lambert(&truth_from(1.0, 0.0), &layout, &OpticalTable::standard(), 25.0).unwrap();
        // Long channel 1: 0.3196 cm⁻¹/mM × 0.001 mM × 3.5 cm × 6.1793963374638
        let expected_660 = 0.3196 * 0.001 * 3.5 * 6.1793963374638;
        let got = od.series(ChannelId::new(1).unwrap(), Wavelength::Nm660)[1];
        assert!((got - expected_660).abs() < 1e-15, "{got} vs {expected_660}");
        let expected_940 = 1.214 * 0.001 * 3.5 * 5.499527431063825;
        let got = od.series(ChannelId::new(1).unwrap(), Wavelength::Nm940)[1];
        assert!((got - expected_940).abs() < 1e-15);
        // Short channel 0 sits 1 cm from its emitter.
        let got = od.series(ChannelId::new(0).unwrap(), Wavelength::Nm660)[1];
        assert!((got - expected_660 / 3.5).abs() < 1e-15);
    }

    #[test]
    fn identity_extinction_passes_concentrations_through() {
        let optics = OpticalTable::standard()
            .with_extinction(Chromophore::HbO, 660, 1.0)
            .with_extinction(Chromophore::HbR, 660, 0.0)
            .with_extinction(Chromophore::HbO, 940, 0.0)
            .with_extinction(Chromophore::HbR, 940, 1.0);
        let od = forward_beer_lambert(&truth_from(2.0, -3.0), &SensorLayout::harness(), &optics, 25.0).unwrap();
        let c = ChannelId::new(1).unwrap();
        let scale = 3.5 * optics.dpf.evaluate(25.0, 660.0).unwrap();
        assert!((od.series(c, Wavelength::Nm660)[1] / scale - 0.002).abs() < 1e-15);
        let scale = 3.5 * optics.dpf.evaluate(25.0, 940.0).unwrap();
        assert!((od.series(c, Wavelength::Nm940)[1] / scale + 0.003).abs() < 1e-15);
    }

    #[test]
    fn linear_in_concentration() {
        let layout = SensorLayout::harness();
        let optics = OpticalTable::standard();
        let timeline = ProtocolTimeline::new(vec![
            crate::physio::protocol::PhaseSpec::new(crate::physio::protocol::PhaseLabel::Baseline, 2.0),
            crate::physio::protocol::PhaseSpec::new(crate::physio::protocol::PhaseLabel::Task, 8.0),
        ])
        .unwrap();
        let a = synth_hemodynamics(&timeline, &layout, &HemoParams::default(), 1).unwrap();
        let b = synth_hemodynamics(&timeline, &layout, &HemoParams::default(), 2).unwrap();
        let (ka, kb) = (1.7, -0.4);
        let mut mix = a.clone();
        for c in 0..24 {
            for i in 0..a.len() {
                mix.hbo_um[c][i] = ka * a.hbo_um[c][i] + kb * b.hbo_um[c][i];
                mix.hbr_um[c][i] = ka * a.hbr_um[c][i] + kb * b.hbr_um[c][i];
            }
        }
        let (fa, fb, fm) = (
            forward_beer_lambert(&a, &layout, &optics, 30.0).unwrap(),
            forward_beer_lambert(&b, &layout, &optics, 30.0).unwrap(),
            forward_beer_lambert(&mix, &layout, &optics, 30.0).unwrap(),
        );
        for c in 0..24 {
            for w in 0..2 {
                for i in 0..a.len() {
                    let want = ka * fa.od[c][w][i] + kb * fb.od[c][w][i];
                    let got = fm.od[c][w][i];
                    assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-6));
                }
            }
        }
    }

    #[test]
    fn missing_extinction_is_an_error() {
        let optics = OpticalTable::standard().without_extinction(Chromophore::HbR, 940);
        let r = forward_beer_lambert(&truth_from(1.0, 1.0), &SensorLayout::harness(), &optics, 25.0);
        assert!(matches!(r, Err(SimError::MissingExtinction { wavelength_nm: 940, .. })));
    }

    #[test]
    fn intensity_examples_and_inverse() {
        assert_eq!(od_to_intensity(&[0.0], 0.4), vec![0.4]);
        assert!((od_to_intensity(&[1.0], 1.0)[0] - 0.1).abs() < 1e-15);
        // 10^(−0.01)
        assert!((od_to_intensity(&[0.01], 1.0)[0] - 0.977_237_220_955_810_7).abs() < 1e-12);
        for &i in &[1e-6, 0.03, 0.5, 2.9, 1e4] {
            let od = -(i / 0.7f64).log10();
            let back = od_to_intensity(&[od], 0.7)[0];
            assert!(((back - i) / i).abs() < 1e-12);
        }
    }
}
