use serde::{Deserialize, Serialize};

/// Successive-approximation ADC transfer: round-half-up of the clamped input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdcSpec {
    pub fullscale_v: f64,
    pub bits: u32,
}

impl Default for AdcSpec {
    fn default() -> Self {
        AdcSpec { fullscale_v: 3.3, bits: 12 }
    }
}

impl AdcSpec {
    pub fn max_code(&self) -> u16 {
        ((1u32 << self.bits) - 1) as u16
    }

    pub fn quantize(&self, volts: f64) -> u16 {
        adc_quantize(volts, self.fullscale_v, self.bits)
    }

    pub fn to_volts(&self, code: f64) -> f64 {
        code * self.fullscale_v / self.max_code() as f64
    }

    pub fn lsb_v(&self) -> f64 {
        self.fullscale_v / self.max_code() as f64
    }
}

pub fn adc_quantize(volts: f64, fullscale_v: f64, bits: u32) -> u16 {
    let max = ((1u32 << bits) - 1) as f64;
    let v = if volts.is_nan() { 0.0 } else { volts.clamp(0.0, fullscale_v) };
    (v / fullscale_v * max + 0.5).floor().min(max) as u16
}
