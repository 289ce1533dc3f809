//! Offline reprocessing of a recorded raw log into CSV exports.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nirs_core::io::{
    read_markers_csv, write_heart_rate_csv, write_markers_csv, write_processed_csv, write_raw_csv, IoError, RawLog,
    SessionPaths,
};
use nirs_core::types::Marker;
use nirs_core::{process_pipeline, OpticalTable, PipelineConfig, PipelineOutput, RecordingConfig, SensorLayout};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("pipeline: {0}")]
    Pipeline(#[from] nirs_core::dsp::pipeline::PipelineError),
    #[error("raw log holds no frames")]
    Empty,
}

#[derive(Clone, Debug, Default)]
pub struct ExportOptions {
    /// Overrides the subject age stored in the recording (selects the DPF).
    pub age_years: Option<f64>,
    pub raw_csv: bool,
}

#[derive(Clone, Debug)]
pub struct ExportReport {
    pub frames: usize,
    pub markers: Vec<Marker>,
    pub output: PipelineOutput,
}

/// Pipeline settings recorded in a log header, or the defaults for an unknown device.
pub fn recording_pipeline_config(log: &RawLog, optics: &OpticalTable) -> PipelineConfig {
    match serde_json::from_value::<RecordingConfig>(log.header.config.clone()) {
        Ok(rec) => rec.pipeline,
        Err(_) => PipelineConfig {
            calibration: nirs_core::dsp::FrontEndCalibration::from_device(&Default::default(), optics),
            ..PipelineConfig::default()
        },
    }
}

/// Header markers, merged with a `markers.csv` beside the log when one exists.
pub fn recording_markers(log: &RawLog, log_path: &Path) -> Result<Vec<Marker>, IoError> {
    let mut markers = log.header.markers.clone();
    if let Some(dir) = log_path.parent() {
        let sidecar = SessionPaths::new(dir).markers_csv();
        if sidecar.exists() {
            let file = File::open(&sidecar).map_err(|source| IoError::File { path: sidecar.clone(), source })?;
            for m in read_markers_csv(BufReader::new(file))? {
                if !markers.contains(&m) {
                    markers.push(m);
                }
            }
        }
    }
    markers.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
    Ok(markers)
}

/// Reads `log_path`, runs the pipeline and writes processed, heart-rate and
/// marker CSVs (and optionally the raw CSV) into `out_dir`.
pub fn process_log(log_path: &Path, out_dir: &Path, options: &ExportOptions) -> Result<ExportReport, ExportError> {
    let log = RawLog::read(log_path)?;
    let frames = log.frames()?;
    if frames.is_empty() {
        return Err(ExportError::Empty);
    }
    let optics = OpticalTable::standard();
    let layout = SensorLayout::harness();
    let mut config = recording_pipeline_config(&log, &optics);
    if let Some(age) = options.age_years {
        config.age_years = age;
    }
    let markers = recording_markers(&log, log_path)?;
    let output = process_pipeline(&frames, &layout, &optics, &config, &markers)?;

    let paths = SessionPaths::new(out_dir);
    paths.ensure()?;
    write_processed_csv(paths.create(&paths.processed_csv())?, &output.hemo)?;
    write_markers_csv(paths.create(&paths.markers_csv())?, &markers)?;
    if let Ok(hr) = &output.heart_rate {
        write_heart_rate_csv(paths.create(&paths.heart_rate_csv())?, hr)?;
    }
    if options.raw_csv {
        write_raw_csv(paths.create(&paths.raw_csv())?, &frames)?;
    }
    Ok(ExportReport { frames: frames.len(), markers, output })
}
