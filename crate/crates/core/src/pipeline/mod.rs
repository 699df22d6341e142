//! End-to-end orchestration: environment, design, simulation, emulator
//! training and validation, inference, prediction and report files.
//!
//! Every stage records the hashes of its inputs and outputs in
//! `manifest.json` under the work directory; a stage whose recorded hashes
//! still match is skipped.

mod config;
mod manifest;
mod report;
mod stages;

pub use config::{
    DesignConfig, EmulatorConfig, HyperMode, InferenceConfig, Paths, PipelineConfig, ReportConfig, Scale, SimulationConfig,
    SourceConfig,
};
pub use manifest::{file_hash, Manifest, StageRecord};
pub use report::{idw_grid, ReportIndex};
pub use stages::{read_arrivals, simulate_single, Stage, Workspace};

use crate::error::Result;

/// Runs every stage in order, skipping those that are up to date.
/// Returns the names of the stages that actually ran.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<Vec<&'static str>> {
    let ws = Workspace::new(cfg.clone())?;
    let mut ran = Vec::new();
    for stage in Stage::ALL {
        if ws.run(stage, force)? {
            ran.push(stage.name());
        }
    }
    Ok(ran)
}
