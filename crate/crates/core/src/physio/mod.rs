//! Synthetic physiology and the optical/analog path down to the ADC input.

pub mod adc;
pub mod afe;
pub mod cardiac;
pub mod forward;
pub mod head;
pub mod hemo;
pub mod layout;
pub mod optics;
pub mod protocol;
pub mod snr;

use thiserror::Error;

use crate::types::ChannelId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("protocol has no phases")]
    EmptyProtocol,
    #[error("phase {index} has non-positive duration {duration_s}")]
    NonPositiveDuration { index: usize, duration_s: f64 },
    #[error("cannot parse protocol phase `{0}`")]
    BadPhaseSpec(String),
    #[error("invalid sensor layout: {0}")]
    InvalidLayout(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no extinction coefficient for {chromophore} at {wavelength_nm} nm")]
    MissingExtinction { chromophore: &'static str, wavelength_nm: u32 },
    #[error("extinction matrix condition number {0:.1} exceeds limit")]
    IllConditioned(f64),
    #[error("wavelength {0} nm outside DPF coefficient domain")]
    DpfWavelengthOutOfDomain(f64),
    #[error("age {0} years outside DPF domain")]
    DpfAgeOutOfDomain(f64),
    #[error("ground truth for {0} has mismatched series lengths")]
    TruthShape(ChannelId),
    #[error("noise series is empty or has zero power")]
    DegenerateNoise,
    #[error("optical data: {0}")]
    Data(String),
}
