//! Shared fixtures for the benchmarks.

use nirs_core::physio::protocol::{PhaseLabel, PhaseSpec};
use nirs_core::types::Marker;
use nirs_core::wire::{encode_frame_into, FRAME_LEN};
use nirs_core::{Frame, OpticalTable, PipelineConfig, SensorLayout, Simulation, SimulationConfig};

/// A simulated recording ready to be pushed through the wire and pipeline stages.
pub struct Fixture {
    pub frames: Vec<Frame>,
    pub bytes: Vec<u8>,
    pub markers: Vec<Marker>,
    pub layout: SensorLayout,
    pub optics: OpticalTable,
    pub pipeline: PipelineConfig,
}

/// `baseline_s` of rest followed by `task_s` of task, simulated with `seed`.
pub fn fixture(baseline_s: f64, task_s: f64, seed: u64) -> Fixture {
    let config = SimulationConfig {
        seed,
        protocol: vec![PhaseSpec::new(PhaseLabel::Baseline, baseline_s), PhaseSpec::new(PhaseLabel::Task, task_s)],
        ..SimulationConfig::default()
    };
    let mut sim = Simulation::new(config).expect("valid simulation config");
    let frames = sim.run_protocol().expect("simulation runs");
    let mut bytes = vec![0u8; frames.len() * FRAME_LEN];
    for (f, chunk) in frames.iter().zip(bytes.chunks_exact_mut(FRAME_LEN)) {
        encode_frame_into(f, chunk.try_into().expect("one frame per chunk"));
    }
    Fixture {
        markers: sim.markers(),
        layout: sim.layout().clone(),
        optics: sim.optics().clone(),
        pipeline: sim.pipeline_config(),
        frames,
        bytes,
    }
}
