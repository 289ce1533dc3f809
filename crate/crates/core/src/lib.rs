//! Software twin of a wearable dual-wavelength fNIRS cap.
//!
//! The crate is split along the signal path:
//!
//! * [`physio`] synthesizes hemodynamics and cardiac pulsation, runs them through the
//!   modified Beer–Lambert forward model and the detector analog front end.
//! * [`ecu`] emulates the acquisition firmware on a virtual clock: 5 kHz multiplexed
//!   ADC sampling, the one-pole smoothing filter, wavelength interleaving and 1 kHz
//!   frame logging, plus the control command handler.
//! * [`wire`] is the bit-exact telemetry and command framing with CRC-16 and a
//!   resynchronizing stream parser.
//! * [`dsp`] is the host pipeline: demultiplexing, optical density, zero-phase
//!   Butterworth band-pass, Beer–Lambert inversion, CBSI and heart rate.
//! * [`io`] holds the raw session log and the CSV exports.

pub mod config;
pub mod dsp;
pub mod ecu;
pub mod io;
pub mod physio;
pub mod selftest;
pub mod sim;
pub mod types;
pub mod wire;

pub use config::{DeviceConfig, RecordingConfig, SimulationConfig};
pub use dsp::pipeline::{process_pipeline, PipelineConfig, PipelineOutput};
pub use ecu::{Ecu, EcuConfig};
pub use physio::layout::SensorLayout;
pub use physio::optics::OpticalTable;
pub use sim::Simulation;
pub use types::{ChannelId, Frame, Wavelength, CHANNELS, DETECTORS_PER_GROUP, GROUPS};
