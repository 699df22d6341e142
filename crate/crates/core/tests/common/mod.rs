#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use wavefront::cli::synth_config;
use wavefront::pipeline::{PipelineConfig, Scale};
use wavefront::synth::{write_scenario, ContinentSpec, Scenario};

/// A coarse continent with a handful of sites and short chains.
pub fn tiny_scenario(n_sites: usize) -> Scenario {
    let mut s = Scenario {
        continent: ContinentSpec {
            cell_deg: 0.5,
            ..ContinentSpec::default()
        },
        n_sites,
        ..Scenario::default()
    };
    s.sim.delta_deg = 0.5;
    s
}

pub fn tiny_config(scenario: &Scenario, dir: &Path, seed: u64) -> PipelineConfig {
    let (_, truth) = write_scenario(dir, scenario, seed).unwrap();
    let mut cfg = synth_config(scenario, truth.source, seed, Scale::Desk);
    cfg.design.p = 12;
    cfg.design.p_star = 20;
    cfg.design.candidates = 20;
    cfg.emulator.iterations = Some(2_000);
    cfg.emulator.burn_in = Some(500);
    cfg.inference.iterations = Some(6_000);
    cfg.inference.burn_in = Some(1_000);
    cfg.inference.thin = Some(5);
    cfg.inference.pilot = 1_000;
    cfg.inference.predictive_draws = 300;
    cfg.report.map_grid = Some((0.0, 30.0, 36.0, 56.0, 1.0));
    let path = dir.join("config.toml");
    cfg.save(&path).unwrap();
    PipelineConfig::load(&path).unwrap()
}

/// Every file under `dir` except the manifest and logs, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            let rel = p.strip_prefix(dir).unwrap().display().to_string();
            if p.is_dir() {
                if rel != "logs" {
                    stack.push(p);
                }
            } else if rel != "manifest.json" {
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
