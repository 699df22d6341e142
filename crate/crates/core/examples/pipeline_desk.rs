//! Writes a synthetic study into a directory and runs every pipeline stage,
//! then runs again to show that nothing is redone.
//!
//! Run with `cargo run --release --example pipeline_desk -- <dir>`.

use wavefront::cli::synth_config;
use wavefront::pipeline::{run_pipeline, PipelineConfig, Scale};
use wavefront::synth::{write_scenario, ContinentSpec, Scenario};

fn main() -> wavefront::Result<()> {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).parse_default_env().init();
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "desk_study".into()));
    let mut scenario = Scenario {
        continent: ContinentSpec {
            cell_deg: 0.25,
            ..ContinentSpec::default()
        },
        n_sites: 30,
        ..Scenario::default()
    };
    scenario.sim.delta_deg = 0.25;
    let (_, truth) = write_scenario(&dir, &scenario, 11)?;
    let mut cfg = synth_config(&scenario, truth.source, 11, Scale::Desk);
    cfg.design.p = 40;
    cfg.design.p_star = 20;
    cfg.emulator.iterations = Some(5_000);
    cfg.inference.iterations = Some(30_000);
    let path = dir.join("config.toml");
    cfg.save(&path)?;
    let cfg = PipelineConfig::load(&path)?;

    println!("ran: {:?}", run_pipeline(&cfg, false)?);
    println!("second pass ran: {:?}", run_pipeline(&cfg, false)?);
    println!("artifacts under {}", cfg.paths.work_dir.display());
    Ok(())
}
