use serde::{Deserialize, Serialize};

/// Arterial pulsation superimposed on every detector's light level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CardiacParams {
    pub rate_hz: f64,
    /// Peak fractional intensity modulation of the fundamental.
    pub modulation: f64,
    /// Relative amplitudes of the 2nd and 3rd harmonics.
    pub harmonics: [f64; 2],
}

impl Default for CardiacParams {
    fn default() -> Self {
        CardiacParams { rate_hz: 1.2, modulation: 0.01, harmonics: [0.25, 0.1] }
    }
}

impl CardiacParams {
    pub fn bpm(&self) -> f64 {
        self.rate_hz * 60.0
    }

    /// Unitless pulse waveform; peak of the fundamental is 1.
    pub fn waveform(&self, t_s: f64) -> f64 {
        let w = std::f64::consts::TAU * self.rate_hz * t_s;
        w.sin() + self.harmonics[0] * (2.0 * w - 0.6).sin() + self.harmonics[1] * (3.0 * w - 1.2).sin()
    }

    /// Additive pulsation on a detector whose DC level is `level_v`.
    pub fn additive_v(&self, level_v: f64, t_s: f64) -> f64 {
        self.modulation * level_v * self.waveform(t_s)
    }
}
