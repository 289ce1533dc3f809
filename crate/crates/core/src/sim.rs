//! Virtual device: simulated subject, front end and firmware on one clock.

use crate::config::SimulationConfig;
use crate::dsp::intensity::FrontEndCalibration;
use crate::dsp::pipeline::PipelineConfig;
use crate::ecu::{CommandOutcome, Ecu, EcuError};
use crate::physio::head::VirtualHead;
use crate::physio::hemo::HemoGroundTruth;
use crate::physio::layout::SensorLayout;
use crate::physio::optics::OpticalTable;
use crate::physio::protocol::ProtocolTimeline;
use crate::physio::SimError;
use crate::types::{Frame, Marker};
use crate::wire::Command;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Physio(#[from] SimError),
    #[error(transparent)]
    Ecu(#[from] EcuError),
}

pub struct Simulation {
    config: SimulationConfig,
    timeline: ProtocolTimeline,
    layout: SensorLayout,
    optics: OpticalTable,
    truth: HemoGroundTruth,
    head: VirtualHead,
    ecu: Ecu,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self, SimulationError> {
        Simulation::with_parts(config, SensorLayout::harness(), OpticalTable::standard())
    }

    pub fn with_parts(
        config: SimulationConfig,
        layout: SensorLayout,
        optics: OpticalTable,
    ) -> Result<Self, SimulationError> {
        let timeline = config.timeline()?;
        let ecu = Ecu::new(config.device.ecu.clone())?;
        let (head, truth) = VirtualHead::from_config(&config, &layout, &optics)?;
        Ok(Simulation { config, timeline, layout, optics, truth, head, ecu })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn layout(&self) -> &SensorLayout {
        &self.layout
    }

    pub fn optics(&self) -> &OpticalTable {
        &self.optics
    }

    pub fn truth(&self) -> &HemoGroundTruth {
        &self.truth
    }

    pub fn timeline(&self) -> &ProtocolTimeline {
        &self.timeline
    }

    pub fn markers(&self) -> Vec<Marker> {
        self.timeline.markers()
    }

    pub fn ecu(&self) -> &Ecu {
        &self.ecu
    }

    pub fn time_us(&self) -> u64 {
        self.ecu.time_us()
    }

    /// Frames for the next `duration_us` of virtual time.
    pub fn step(&mut self, duration_us: u64) -> Result<Vec<Frame>, SimulationError> {
        Ok(self.ecu.step(&mut self.head, duration_us)?)
    }

    pub fn run(&mut self, duration_us: u64, sink: impl FnMut(Frame)) -> Result<(), SimulationError> {
        Ok(self.ecu.run(&mut self.head, duration_us, sink)?)
    }

    /// The whole protocol.
    pub fn run_protocol(&mut self) -> Result<Vec<Frame>, SimulationError> {
        let us = (self.timeline.total_duration_s() * 1e6).round() as u64;
        self.step(us)
    }

    pub fn handle_command(&mut self, cmd: &Command) -> CommandOutcome {
        self.ecu.handle_command(cmd, &mut self.head)
    }

    /// Pipeline settings matching this device: schedule, front-end calibration, age.
    pub fn pipeline_config(&self) -> PipelineConfig {
        pipeline_config_for(&self.config, &self.optics)
    }
}

pub fn pipeline_config_for(config: &SimulationConfig, optics: &OpticalTable) -> PipelineConfig {
    PipelineConfig {
        age_years: config.age_years,
        schedule: crate::dsp::demux::Schedule {
            mux_dwell_ms: config.device.ecu.mux_dwell_ms,
            wavelength_period_ms: config.device.ecu.wavelength_period_ms,
        },
        calibration: FrontEndCalibration::from_device(&config.device.afe, optics),
        ..PipelineConfig::default()
    }
}
