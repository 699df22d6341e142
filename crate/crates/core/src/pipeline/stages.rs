use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::PipelineConfig;
use super::manifest::{hash_files, is_fresh, key, Manifest, StageRecord};
use super::report;
use crate::data::{load_sites, Observations};
use crate::design::{lhd_maximin, read_design, write_design};
use crate::emulator::{site_seed, train_all, validate_md, validate_pit, SiteEmulator, PIT_BINS};
use crate::error::{Error, Result};
use crate::front::{run_batch, run_simulation, SimStats, WaveParams};
use crate::geo::{io as geo_io, Environment, GeoPoint, ScalarField};
use crate::infer::{
    mh_sample, mh_sample_hyper_uncertain, posterior_zeta, predictive, summarize_chain, Chain, EmulatorSet, HyperVariant,
    ModelParams, PosteriorSummary, SiteData,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    BuildEnv,
    Design,
    Simulate,
    Train,
    Validate,
    Infer,
    Predict,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::BuildEnv,
        Stage::Design,
        Stage::Simulate,
        Stage::Train,
        Stage::Validate,
        Stage::Infer,
        Stage::Predict,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::BuildEnv => "build-env",
            Stage::Design => "design",
            Stage::Simulate => "simulate",
            Stage::Train => "train",
            Stage::Validate => "validate",
            Stage::Infer => "infer",
            Stage::Predict => "predict",
            Stage::Report => "report",
        }
    }

    fn index(self) -> usize {
        Stage::ALL.iter().position(|s| *s == self).expect("listed stage")
    }
}

const ENV_FILES: [&str; 5] = ["diffusivity.asc", "coast_x.asc", "coast_y.asc", "river_x.asc", "river_y.asc"];

/// A configured work directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub cfg: PipelineConfig,
    pub dir: PathBuf,
    hash: String,
}

impl Workspace {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        let dir = cfg.paths.work_dir.clone();
        std::fs::create_dir_all(&dir)?;
        let hash = cfg.hash();
        Ok(Self { cfg, dir, hash })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn header(&self) -> String {
        self.cfg.header()
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("config_hash".to_string(), self.hash[..16].to_string()), ("seed".to_string(), self.cfg.seed.to_string())])
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        site_seed(self.cfg.seed, 100 + stage.index())
    }

    fn manifest_path(&self) -> PathBuf {
        self.path("manifest.json")
    }

    pub fn observations(&self) -> Result<Observations> {
        let sites = load_sites(&self.cfg.paths.sites, self.cfg.inference.sigma_floor)?;
        Ok(Observations::from_sites(&sites, self.cfg.source.start_bc))
    }

    pub fn emulator_path(&self, index: usize, site_id: &str) -> PathBuf {
        let safe: String = site_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
        self.path(&format!("emulators/{index:04}_{safe}.json"))
    }

    fn emulator_paths(&self) -> Result<Vec<PathBuf>> {
        let obs = self.observations()?;
        Ok(obs.site_ids.iter().enumerate().map(|(i, id)| self.emulator_path(i, id)).collect())
    }

    pub fn load_emulators(&self) -> Result<EmulatorSet> {
        let sites = self.emulator_paths()?.iter().map(|p| SiteEmulator::load(p)).collect::<Result<Vec<_>>>()?;
        let set = EmulatorSet::new(sites);
        match self.cfg.hyper_variant() {
            Some(_) => set.with_components(self.cfg.inference.components),
            None => Ok(set),
        }
    }

    fn inputs(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        let p = &self.cfg.paths;
        let mut v: Vec<PathBuf> = match stage {
            Stage::BuildEnv => [Some(p.terrain.clone()), p.coasts.clone(), p.rivers.clone()].into_iter().flatten().collect(),
            Stage::Design => Vec::new(),
            Stage::Simulate => {
                let mut v: Vec<PathBuf> = ENV_FILES.iter().map(|f| self.path(&format!("env/{f}"))).collect();
                v.extend([self.path("design.csv"), self.path("holdout.csv"), p.sites.clone()]);
                v
            }
            Stage::Train => vec![self.path("design.csv"), self.path("arrivals_design.csv"), p.sites.clone()],
            Stage::Validate => {
                let mut v = vec![self.path("holdout.csv"), self.path("arrivals_holdout.csv"), p.sites.clone()];
                v.extend(self.emulator_paths()?);
                v
            }
            Stage::Infer => {
                let mut v = vec![p.sites.clone()];
                v.extend(self.emulator_paths()?);
                v
            }
            Stage::Predict => {
                let mut v = vec![p.sites.clone(), self.path("posterior.csv")];
                if self.cfg.hyper_variant() == Some(HyperVariant::Joint) {
                    v.push(self.path("posterior_components.csv"));
                }
                v.extend(self.emulator_paths()?);
                v
            }
            Stage::Report => vec![
                p.sites.clone(),
                self.path("posterior.csv"),
                self.path("predictive.csv"),
                self.path("predictive_draws.csv"),
                self.path("zeta.csv"),
            ],
        };
        v.dedup();
        let missing: Vec<PathBuf> = v.iter().filter(|f| !f.exists()).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingArtifacts(missing));
        }
        Ok(v)
    }

    /// Main artifact of a stage, used in error messages.
    fn primary(&self, stage: Stage) -> PathBuf {
        self.path(match stage {
            Stage::BuildEnv => "env",
            Stage::Design => "design.csv",
            Stage::Simulate => "arrivals_design.csv",
            Stage::Train => "emulators",
            Stage::Validate => "validation.csv",
            Stage::Infer => "posterior.csv",
            Stage::Predict => "predictive.csv",
            Stage::Report => "report",
        })
    }

    /// Runs `stage` unless its recorded inputs and outputs are unchanged.
    /// Returns whether it ran.
    pub fn run(&self, stage: Stage, force: bool) -> Result<bool> {
        let wrap = |e: Error| match e {
            Error::Stage { .. } | Error::MissingArtifacts(_) | Error::Config(_) => e,
            other => Error::Stage {
                stage: stage.name().to_string(),
                path: self.primary(stage),
                source: Box::new(other),
            },
        };
        let inputs = hash_files(&self.dir, &self.inputs(stage)?).map_err(wrap)?;
        let mut manifest = Manifest::load(&self.manifest_path());
        if !force {
            if let Some(rec) = manifest.stages.get(stage.name()) {
                if is_fresh(rec, &self.hash, &self.dir, &inputs) {
                    log::info!("{}: up to date", stage.name());
                    return Ok(false);
                }
            }
        }
        log::info!("{}: running", stage.name());
        let start = Instant::now();
        let outputs = self.execute(stage).map_err(wrap)?;
        log::info!("{}: done in {:.1}s", stage.name(), start.elapsed().as_secs_f64());
        let record = StageRecord {
            config_hash: self.hash.clone(),
            inputs,
            outputs: hash_files(&self.dir, &outputs).map_err(wrap)?,
        };
        manifest = Manifest::load(&self.manifest_path());
        manifest.stages.insert(stage.name().to_string(), record);
        manifest.save(&self.manifest_path())?;
        Ok(true)
    }

    fn execute(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        match stage {
            Stage::BuildEnv => self.build_env(),
            Stage::Design => self.design(),
            Stage::Simulate => self.simulate(),
            Stage::Train => self.train(),
            Stage::Validate => self.validate(),
            Stage::Infer => self.infer(),
            Stage::Predict => self.predict(),
            Stage::Report => report::write_report(self),
        }
    }

    fn build_env(&self) -> Result<Vec<PathBuf>> {
        let p = &self.cfg.paths;
        let altitude = geo_io::read_ascii_grid(&p.terrain)?;
        let lines = |f: &Option<PathBuf>| -> Result<Vec<Vec<GeoPoint>>> {
            f.as_ref().map_or(Ok(Vec::new()), |f| geo_io::read_polylines(f))
        };
        let env = Environment::build(&altitude, &lines(&p.coasts)?, &lines(&p.rivers)?)?;
        let dir = self.path("env");
        env.save(&dir)?;
        Ok(ENV_FILES.iter().map(|f| dir.join(f)).collect())
    }

    fn design(&self) -> Result<Vec<PathBuf>> {
        let d = &self.cfg.design;
        let seed = self.stage_seed(Stage::Design);
        let header = vec![self.header()[2..].to_string()];
        let design = lhd_maximin(d.p, &d.bounds, d.candidates, seed)?;
        let holdout = lhd_maximin(d.p_star, &d.bounds, d.candidates, site_seed(seed, 1))?;
        write_design(&self.path("design.csv"), &design, &header)?;
        write_design(&self.path("holdout.csv"), &holdout, &header)?;
        Ok(vec![self.path("design.csv"), self.path("holdout.csv")])
    }

    fn simulate(&self) -> Result<Vec<PathBuf>> {
        let env = Environment::load(&self.path("env"))?;
        let obs = self.observations()?;
        let sim = self.cfg.sim_config(obs.locations.clone());
        let gamma = self.cfg.simulation.gamma;
        let mut out = Vec::new();
        let mut meta = Vec::new();
        let mut timing = Vec::new();
        for set in ["design", "holdout"] {
            let d = read_design(&self.path(&format!("{set}.csv")), None)?;
            let params: Vec<WaveParams> = d
                .points
                .iter()
                .map(|t| WaveParams {
                    gamma,
                    ..WaveParams::new(t[0], t[1], t[2])
                })
                .collect();
            let runs = run_batch(&env, &params, &sim).into_iter().collect::<Result<Vec<_>>>()?;
            let path = self.path(&format!("arrivals_{set}.csv"));
            let mut w = self.csv_writer(&path)?;
            w.write_record(["run", "site_id", "arrival_years", "reached"])?;
            for (k, r) in runs.iter().enumerate() {
                for (i, a) in r.record.arrivals.iter().enumerate() {
                    w.write_record([k.to_string(), obs.site_ids[i].clone(), a.map_or(String::new(), |v| v.to_string()), a.is_some().to_string()])?;
                }
                meta.push(RunMeta::new(set, k, &params[k], sim.dt, &r.stats));
                timing.push(r.stats.wall_seconds);
            }
            w.flush()?;
            out.push(path);
        }
        let path = self.path("runs.json");
        self.write_json(&path, &serde_json::json!({ "config_hash": &self.hash[..16], "seed": self.cfg.seed, "runs": meta }))?;
        out.push(path);
        std::fs::create_dir_all(self.path("logs"))?;
        std::fs::write(self.path("logs/simulate_wall_seconds.json"), serde_json::to_string(&timing)?)?;
        Ok(out)
    }

    fn train(&self) -> Result<Vec<PathBuf>> {
        let obs = self.observations()?;
        let design = read_design(&self.path("design.csv"), None)?;
        let arrivals = read_arrivals(&self.path("arrivals_design.csv"), design.points.len(), &obs.site_ids)?;
        let fits = train_all(
            &obs.site_ids,
            &design.points,
            &arrivals,
            &self.cfg.hyper_priors(),
            &self.cfg.hyper_mh(),
            self.stage_seed(Stage::Train),
        );
        std::fs::create_dir_all(self.path("emulators"))?;
        let meta = self.meta();
        let mut out = Vec::new();
        for (i, fit) in fits.into_iter().enumerate() {
            let path = self.emulator_path(i, &obs.site_ids[i]);
            fit.map_err(|e| Error::Stage {
                stage: "train".into(),
                path: path.clone(),
                source: Box::new(e),
            })?
            .save_with_meta(&path, &meta)?;
            out.push(path);
        }
        Ok(out)
    }

    fn validate(&self) -> Result<Vec<PathBuf>> {
        let obs = self.observations()?;
        let holdout = read_design(&self.path("holdout.csv"), None)?;
        let truth = read_arrivals(&self.path("arrivals_holdout.csv"), holdout.points.len(), &obs.site_ids)?;
        let ems = self.emulator_paths()?.iter().map(|p| SiteEmulator::load(p)).collect::<Result<Vec<_>>>()?;
        let rows: Vec<(f64, f64, f64, f64, Vec<f64>)> = ems
            .par_iter()
            .enumerate()
            .map(|(i, em)| {
                let (q, t): (Vec<[f64; 3]>, Vec<f64>) =
                    holdout.points.iter().zip(&truth).filter_map(|(q, run)| run[i].map(|t| (*q, t))).unzip();
                let md = validate_md(em, &q, &t)?;
                let (chi2, thr, pit) = if q.len() >= 20 {
                    let p = validate_pit(em, &q, &t)?;
                    (p.chi2, p.threshold, p.pit)
                } else {
                    log::warn!("site {}: fewer than 20 holdout runs, PIT check skipped", em.site_id);
                    (f64::NAN, f64::NAN, Vec::new())
                };
                Ok((md.md, md.threshold, chi2, thr, pit))
            })
            .collect::<Result<_>>()?;
        let path = self.path("validation.csv");
        let mut w = self.csv_writer(&path)?;
        w.write_record(["site_id", "md", "md_threshold", "chi2", "chi2_threshold", "pass"])?;
        let mut counts = [0usize; PIT_BINS];
        for (i, (md, mt, c, ct, pit)) in rows.iter().enumerate() {
            let pass = md <= mt && (c.is_nan() || c <= ct);
            w.write_record([obs.site_ids[i].clone(), md.to_string(), mt.to_string(), c.to_string(), ct.to_string(), pass.to_string()])?;
            for &u in pit {
                counts[((u * PIT_BINS as f64) as usize).min(PIT_BINS - 1)] += 1;
            }
        }
        w.flush()?;
        let hist = self.path("pit_histogram.csv");
        let mut w = self.csv_writer(&hist)?;
        w.write_record(["lower", "upper", "count"])?;
        for (b, c) in counts.iter().enumerate() {
            w.write_record([(b as f64 / PIT_BINS as f64).to_string(), ((b + 1) as f64 / PIT_BINS as f64).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(vec![path, hist])
    }

    /// Chain start: design-box centre for θ, prior medians for the rest.
    pub fn start_params(&self) -> ModelParams {
        let b = self.cfg.design.bounds;
        let pr = &self.cfg.inference.priors;
        ModelParams {
            nu: 0.5 * (b[0].0 + b[0].1),
            v_coast: 0.5 * (b[1].0 + b[1].1),
            v_river: 0.5 * (b[2].0 + b[2].1),
            sigma: pr.sigma2.mean().sqrt(),
            a_zeta: pr.a_zeta.median(),
            r_zeta: pr.r_zeta.median(),
        }
    }

    fn infer(&self) -> Result<Vec<PathBuf>> {
        let data = SiteData::from_observations(&self.observations()?)?;
        let em = self.load_emulators()?;
        let mut mh = self.cfg.infer_mh();
        mh.initial = Some(self.start_params());
        let seed = self.stage_seed(Stage::Infer);
        let priors = &self.cfg.inference.priors;
        let chain = match self.cfg.hyper_variant() {
            Some(v) => mh_sample_hyper_uncertain(&data, &em, priors, &mh, v, seed)?,
            None => mh_sample(&data, &em, priors, &mh, seed)?,
        };
        let path = self.path("posterior.csv");
        chain.write_csv(&path, &self.header())?;
        let mut out = vec![path];
        if self.cfg.hyper_variant() == Some(HyperVariant::Joint) {
            let path = self.path("posterior_components.csv");
            let mut w = self.csv_writer(&path)?;
            w.write_record(["iter", "component"])?;
            for (s, c) in chain.samples.iter().zip(&chain.components) {
                w.write_record([s.iter.to_string(), c.to_string()])?;
            }
            w.flush()?;
            out.push(path);
        }
        let path = self.path("posterior_summary.json");
        self.write_json(&path, &SummaryFile::new(self, &chain))?;
        out.push(path);
        Ok(out)
    }

    fn read_components(&self) -> Result<Option<Vec<usize>>> {
        if self.cfg.hyper_variant() != Some(HyperVariant::Joint) {
            return Ok(None);
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(self.path("posterior_components.csv"))?;
        let rows: Vec<(usize, usize)> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Some(rows.into_iter().map(|(_, c)| c).collect()))
    }

    fn predict(&self) -> Result<Vec<PathBuf>> {
        let obs = self.observations()?;
        let data = SiteData::from_observations(&obs)?;
        let em = self.load_emulators()?;
        let samples = Chain::read_csv(&self.path("posterior.csv"))?;
        let comps = self.read_components()?;
        let draws = self.cfg.inference.predictive_draws;
        let seed = self.stage_seed(Stage::Predict);
        let pred = predictive(&samples, comps.as_deref(), &data, &em, draws, 0.95, seed)?;
        let zeta = crate::infer::ZetaSummary::from_draws(&posterior_zeta(&samples, comps.as_deref(), &data, &em, draws, site_seed(seed, 1))?);

        let p1 = self.path("predictive.csv");
        let mut w = self.csv_writer(&p1)?;
        w.write_record(["site_id", "lon", "lat", "observed", "mean", "sd", "lower_95", "upper_95"])?;
        for i in 0..obs.len() {
            w.write_record([
                obs.site_ids[i].clone(),
                obs.locations[i].lon.to_string(),
                obs.locations[i].lat.to_string(),
                obs.t[i].to_string(),
                pred.mean[i].to_string(),
                pred.sd[i].to_string(),
                pred.lower[i].to_string(),
                pred.upper[i].to_string(),
            ])?;
        }
        w.flush()?;
        let p2 = self.path("zeta.csv");
        let mut w = self.csv_writer(&p2)?;
        w.write_record(["site_id", "mean", "sd"])?;
        for i in 0..obs.len() {
            w.write_record([obs.site_ids[i].clone(), zeta.mean[i].to_string(), zeta.sd[i].to_string()])?;
        }
        w.flush()?;
        let p3 = self.path("predictive_draws.csv");
        let mut w = self.csv_writer(&p3)?;
        let mut head = vec!["draw".to_string()];
        head.extend(obs.site_ids.iter().cloned());
        w.write_record(&head)?;
        for (d, row) in pred.draws.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(vec![p1, p2, p3])
    }

    /// CSV writer whose first line is the provenance comment.
    pub(crate) fn csv_writer(&self, path: &Path) -> Result<csv::Writer<std::fs::File>> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.header())?;
        Ok(csv::Writer::from_writer(f))
    }

    pub(crate) fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub(crate) fn config_hash(&self) -> &str {
        &self.hash[..16]
    }

    pub(crate) fn rel(&self, p: &Path) -> String {
        key(&self.dir, p)
    }
}

#[derive(Debug, Serialize)]
struct RunMeta {
    set: String,
    run: usize,
    params: WaveParams,
    dt: f64,
    steps: usize,
    final_time: f64,
    min_dt: f64,
    max_particles: usize,
    excised_loops: usize,
    frozen_particles: usize,
}

impl RunMeta {
    fn new(set: &str, run: usize, params: &WaveParams, dt: f64, s: &SimStats) -> Self {
        Self {
            set: set.to_string(),
            run,
            params: *params,
            dt,
            steps: s.steps,
            final_time: s.final_time,
            min_dt: s.min_dt,
            max_particles: s.max_particles,
            excised_loops: s.excised_loops,
            frozen_particles: s.frozen_particles,
        }
    }
}

#[derive(Debug, Serialize)]
struct SummaryFile {
    config_hash: String,
    seed: u64,
    hyper_mode: super::config::HyperMode,
    #[serde(flatten)]
    summary: PosteriorSummary,
}

impl SummaryFile {
    fn new(ws: &Workspace, chain: &Chain) -> Self {
        Self {
            config_hash: ws.config_hash().to_string(),
            seed: ws.cfg.seed,
            hyper_mode: ws.cfg.inference.hyper_mode,
            summary: summarize_chain(chain),
        }
    }
}

/// `arrivals[k][i]`: run k at site i, from the long-format arrivals file.
pub fn read_arrivals(path: &Path, runs: usize, site_ids: &[String]) -> Result<Vec<Vec<Option<f64>>>> {
    let index: BTreeMap<&str, usize> = site_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut out = vec![vec![None; site_ids.len()]; runs];
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| Error::Malformed {
            path: path.display().to_string(),
            line: line + 3,
            message: m.to_string(),
        };
        let k: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad run index"))?;
        let i = *rec.get(1).and_then(|s| index.get(s)).ok_or_else(|| bad("unknown site"))?;
        if k >= runs {
            return Err(bad("run index beyond the design"));
        }
        let reached = rec.get(3) == Some("true");
        out[k][i] = if reached {
            Some(rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad arrival"))?)
        } else {
            None
        };
    }
    Ok(out)
}

/// One simulation at the given parameters for the sites in `sites_csv`;
/// writes `site_id,arrival_years,reached` and a metadata JSON next to it.
pub fn simulate_single(cfg: &PipelineConfig, params: WaveParams, sites_csv: &Path, out: &Path) -> Result<()> {
    let env_dir = cfg.paths.work_dir.join("env");
    let env = if env_dir.join("diffusivity.asc").exists() {
        Environment::load(&env_dir)?
    } else {
        let alt: ScalarField = geo_io::read_ascii_grid(&cfg.paths.terrain)?;
        let lines = |f: &Option<PathBuf>| f.as_ref().map_or(Ok(Vec::new()), |f| geo_io::read_polylines(f));
        Environment::build(&alt, &lines(&cfg.paths.coasts)?, &lines(&cfg.paths.rivers)?)?
    };
    let sites = load_sites(sites_csv, None)?;
    let sim = cfg.sim_config(sites.iter().map(|s| s.location).collect());
    let run = run_simulation(&env, &params, &sim)?;
    let mut f = std::fs::File::create(out)?;
    writeln!(f, "{}", cfg.header())?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["site_id", "arrival_years", "reached"])?;
    for (s, a) in sites.iter().zip(&run.record.arrivals) {
        w.write_record([s.site_id.clone(), a.map_or(String::new(), |v| v.to_string()), a.is_some().to_string()])?;
    }
    w.flush()?;
    let meta = serde_json::json!({
        "config_hash": &cfg.hash()[..16],
        "seed": cfg.seed,
        "params": params,
        "dt": sim.dt,
        "steps": run.stats.steps,
        "final_time": run.stats.final_time,
        "excised_loops": run.stats.excised_loops,
        "wall_seconds": run.stats.wall_seconds,
    });
    std::fs::write(out.with_extension("json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}
