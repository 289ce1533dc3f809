//! Serializable configuration documents.
//!
//! Every field has a default, so a config file only needs the values it changes.

use serde::{Deserialize, Serialize};

use crate::dsp::pipeline::PipelineConfig;
use crate::ecu::EcuConfig;
use crate::physio::afe::AfeParams;
use crate::physio::cardiac::CardiacParams;
use crate::physio::hemo::HemoParams;
use crate::physio::protocol::{PhaseSpec, ProtocolTimeline};

/// Everything that describes the hardware: firmware schedule, front end, pulsation model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    pub ecu: EcuConfig,
    pub afe: AfeParams,
    pub cardiac: CardiacParams,
}

/// A complete simulated recording: device, experiment protocol and synthetic subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub device: DeviceConfig,
    pub protocol: Vec<PhaseSpec>,
    pub hemo: HemoParams,
    pub age_years: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            device: DeviceConfig::default(),
            protocol: ProtocolTimeline::default().phases().to_vec(),
            hemo: HemoParams::default(),
            age_years: 25.0,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn timeline(&self) -> Result<ProtocolTimeline, crate::physio::SimError> {
        ProtocolTimeline::new(self.protocol.clone())
    }
}

/// Configuration snapshot stored in a raw log header: enough to reprocess the
/// recording, plus the simulation that produced it when there was one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingConfig {
    pub device: DeviceConfig,
    pub pipeline: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

impl RecordingConfig {
    pub fn from_simulation(sim: &crate::sim::Simulation) -> Self {
        RecordingConfig {
            device: sim.config().device.clone(),
            pipeline: sim.pipeline_config(),
            simulation: Some(sim.config().clone()),
        }
    }
}
