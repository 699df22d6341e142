//! Pipeline configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DEFAULT_START_BC;
use crate::design::{Bounds, DEFAULT_BOX};
use crate::emulator::{HyperMhConfig, HyperPriors};
use crate::error::{Error, Result};
use crate::front::{SimConfig, DEFAULT_GAMMA};
use crate::geo::{GeoPoint, DEFAULT_CELL_DEG};
use crate::infer::{HyperVariant, MhConfig, Priors};
use crate::stats::LogNormalSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Altitude raster (ESRI ASCII grid, km).
    pub terrain: PathBuf,
    #[serde(default)]
    pub coasts: Option<PathBuf>,
    #[serde(default)]
    pub rivers: Option<PathBuf>,
    pub sites: PathBuf,
    pub work_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub lon: f64,
    pub lat: f64,
    /// Calendar date of the source, years BC.
    pub start_bc: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            lon: 37.1,
            lat: 41.1,
            start_bc: DEFAULT_START_BC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_max: f64,
    pub delta_deg: f64,
    pub n_init: usize,
    pub start_radius_km: f64,
    pub gamma: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            dt: s.dt,
            t_max: s.t_max,
            delta_deg: DEFAULT_CELL_DEG,
            n_init: s.n_init,
            start_radius_km: s.start_radius_km,
            gamma: DEFAULT_GAMMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub p: usize,
    pub p_star: usize,
    pub bounds: Bounds,
    pub candidates: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            p: 200,
            p_star: 100,
            bounds: DEFAULT_BOX,
            candidates: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorConfig {
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    /// Log-normal (mean, second argument) for the amplitude and each length scale.
    pub amplitude_prior: (f64, f64),
    pub length_prior: (f64, f64),
    /// Read the second log-normal argument as a standard deviation rather than a variance.
    pub second_argument_is_sd: bool,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        let h = HyperPriors::default();
        Self {
            iterations: None,
            burn_in: None,
            thin: None,
            amplitude_prior: (h.amplitude.mu, h.amplitude.var),
            length_prior: (h.length_scales[0].mu, h.length_scales[0].var),
            second_argument_is_sd: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HyperMode {
    #[default]
    Fixed,
    Joint,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub pilot: usize,
    pub hyper_mode: HyperMode,
    /// Stored hyperparameter draws used by the joint and mixture modes.
    pub components: usize,
    pub sigma_floor: Option<f64>,
    pub priors: Priors,
    /// Posterior draws used for ζ and predictive summaries.
    pub predictive_draws: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            iterations: None,
            burn_in: None,
            thin: None,
            pilot: 5_000,
            hyper_mode: HyperMode::Fixed,
            components: 50,
            sigma_floor: None,
            priors: Priors::default(),
            predictive_draws: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Sites with predictive-density files; empty means the first four.
    pub sites: Vec<String>,
    /// Map grid as (lon_min, lon_max, lat_min, lat_max, cell); defaults to the terrain box at 0.5°.
    pub map_grid: Option<(f64, f64, f64, f64, f64)>,
    pub density_points: usize,
    pub idw_neighbours: usize,
    pub idw_power: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            sites: Vec::new(),
            map_grid: None,
            density_points: 200,
            idw_neighbours: 8,
            idw_power: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub scale: Scale,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub emulator: EmulatorConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_seed() -> u64 {
    20_100_501
}

impl PipelineConfig {
    /// Parses, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.terrain);
        fix(&mut self.paths.sites);
        fix(&mut self.paths.work_dir);
        if let Some(p) = self.paths.coasts.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.rivers.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut missing = Vec::new();
        for p in [Some(&self.paths.terrain), Some(&self.paths.sites), self.paths.coasts.as_ref(), self.paths.rivers.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!("referenced files do not exist: {}", missing.join(", "))));
        }
        if self.design.p < 8 || self.design.p_star < 8 {
            return Err(Error::Config("design sizes p and p* must be at least 8".into()));
        }
        if self.design.bounds.iter().any(|(lo, hi)| !(hi > lo) || *lo < 0.0) {
            return Err(Error::Config("design bounds need 0 ≤ lower < upper".into()));
        }
        if self.design.candidates == 0 || self.inference.components == 0 || self.inference.predictive_draws == 0 {
            return Err(Error::Config("candidates, components and predictive_draws must be positive".into()));
        }
        self.hyper_mh().validate()?;
        self.infer_mh().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.sim_config(Vec::new()).validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialisation without the `paths`
    /// table; input file contents are tracked by the manifest instead.
    pub fn hash(&self) -> String {
        let mut value = toml::Value::try_from(self).expect("config serialises");
        if let Some(t) = value.as_table_mut() {
            t.remove("paths");
        }
        let canonical = toml::to_string(&value).expect("config serialises");
        hex(&Sha256::digest(canonical.as_bytes()))
    }

    /// The comment line heading every CSV artifact.
    pub fn header(&self) -> String {
        format!("# config_hash={} seed={}", &self.hash()[..16], self.seed)
    }

    pub fn source_point(&self) -> GeoPoint {
        GeoPoint::new(self.source.lon, self.source.lat)
    }

    pub fn sim_config(&self, sites: Vec<GeoPoint>) -> SimConfig {
        let s = &self.simulation;
        SimConfig {
            source: self.source_point(),
            start_radius_km: s.start_radius_km,
            n_init: s.n_init,
            dt: s.dt,
            t_max: s.t_max,
            delta_deg: s.delta_deg,
            hit_radius_km: None,
            record_sites: sites,
        }
    }

    pub fn hyper_mh(&self) -> HyperMhConfig {
        let base = match self.scale {
            Scale::Desk => HyperMhConfig::default(),
            Scale::Paper => HyperMhConfig::paper(),
        };
        let e = &self.emulator;
        HyperMhConfig {
            iterations: e.iterations.unwrap_or(base.iterations),
            burn_in: e.burn_in.unwrap_or(base.burn_in),
            thin: e.thin.unwrap_or(base.thin),
            use_likelihood: true,
        }
    }

    pub fn hyper_priors(&self) -> HyperPriors {
        let ln = |(mu, v): (f64, f64)| {
            if self.emulator.second_argument_is_sd {
                LogNormalSpec::from_sd(mu, v)
            } else {
                LogNormalSpec::new(mu, v)
            }
        };
        HyperPriors {
            amplitude: ln(self.emulator.amplitude_prior),
            length_scales: [ln(self.emulator.length_prior); 3],
        }
    }

    pub fn infer_mh(&self) -> MhConfig {
        let base = match self.scale {
            Scale::Desk => MhConfig::default(),
            Scale::Paper => MhConfig::paper(),
        };
        let i = &self.inference;
        MhConfig {
            iterations: i.iterations.unwrap_or(base.iterations),
            burn_in: i.burn_in.unwrap_or(base.burn_in),
            thin: i.thin.unwrap_or(base.thin),
            pilot: i.pilot,
            use_likelihood: true,
            initial: None,
        }
    }

    pub fn hyper_variant(&self) -> Option<HyperVariant> {
        match self.inference.hyper_mode {
            HyperMode::Fixed => None,
            HyperMode::Joint => Some(HyperVariant::Joint),
            HyperMode::Mixture => Some(HyperVariant::Mixture),
        }
    }

    /// Writes the config as TOML.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?)?;
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_inputs(dir: &Path) {
        std::fs::write(dir.join("t.asc"), "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 1\n1 1\n").unwrap();
        std::fs::write(dir.join("s.csv"), "site_id,lon,lat,t_bc,sigma\na,0.5,0.5,6000,50\n").unwrap();
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[paths]\nterrain = \"t.asc\"\nsites = \"s.csv\"\nwork_dir = \"work\"\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.design.p, 200);
        assert_eq!(cfg.design.p_star, 100);
        assert_eq!(cfg.source.start_bc, 6572.0);
        assert_eq!(cfg.infer_mh().iterations, 100_000);
        assert!(cfg.paths.work_dir.starts_with(dir.path()));
        assert_eq!(cfg.hash(), cfg.clone().hash());

        let mut paper = cfg.clone();
        paper.scale = Scale::Paper;
        assert_eq!(paper.infer_mh().thin, 100);
        assert_ne!(paper.hash(), cfg.hash());
        let mut moved = cfg.clone();
        moved.paths.work_dir = "/elsewhere/work".into();
        assert_eq!(moved.hash(), cfg.hash());
    }

    #[test]
    fn rejects_small_designs_missing_files_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let path = dir.path().join("c.toml");
        let base = "[paths]\nterrain = \"t.asc\"\nsites = \"s.csv\"\nwork_dir = \"w\"\n";
        std::fs::write(&path, format!("{base}[design]\np = 5\n")).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
        std::fs::write(&path, base.replace("s.csv", "nope.csv")).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
        std::fs::write(&path, format!("{base}[design]\npp = 5\n")).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
    }
}
