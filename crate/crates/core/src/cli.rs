//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::front::WaveParams;
use crate::geo::GeoPoint;
use crate::infer::Priors;
use crate::pipeline::{run_pipeline, simulate_single, DesignConfig, HyperMode, Paths, PipelineConfig, Scale, Stage, Workspace};
use crate::synth::{write_scenario, ContinentSpec, Scenario};

#[derive(Debug, Parser)]
#[command(name = "wavefront", version, about = "Front-propagation emulation and calibration against dated sites")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "wavefront.toml")]
    pub config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub scale: Option<Scale>,
    /// Worker threads for simulations and emulator training.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Rerun stages even when their artifacts are up to date.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diffusivity and tangent rasters from the terrain and polylines.
    BuildEnv,
    /// Training and holdout designs.
    Design,
    /// All design runs, or a single run when the three parameters are given.
    Simulate(SimulateArgs),
    Train,
    Validate,
    Infer(InferArgs),
    Predict,
    Report {
        /// Sites with predictive-density files.
        #[arg(long, value_delimiter = ',')]
        sites: Vec<String>,
    },
    /// Every stage in order, skipping those up to date.
    Pipeline,
    /// Writes a synthetic continent, site table and matching config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub v_coast: Option<f64>,
    #[arg(long)]
    pub v_river: Option<f64>,
    /// Site table for a single run; defaults to the configured one.
    #[arg(long)]
    pub sites: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, value_enum)]
    pub hyper_mode: Option<HyperMode>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Site table to calibrate against instead of the configured one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML file of prior settings.
    #[arg(long)]
    pub priors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub sites: usize,
    /// Grid cell in degrees.
    #[arg(long, default_value_t = 0.25)]
    pub cell: f64,
    /// Index of a site whose date is shifted.
    #[arg(long)]
    pub anomaly_site: Option<usize>,
    #[arg(long, default_value_t = 500.0)]
    pub anomaly_years: f64,
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Toml(_) => 2,
        Error::Stage { source, .. } => exit_code(source),
        _ => 3,
    }
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&g.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(s) = g.scale {
        cfg.scale = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_stage(cfg: PipelineConfig, stage: Stage, force: bool) -> Result<()> {
    let ws = Workspace::new(cfg)?;
    let ran = ws.run(stage, force)?;
    println!("{}: {}", stage.name(), if ran { "done" } else { "up to date" });
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already set up: {e}");
        }
    }
    let stage = |s| -> Result<()> { run_stage(load_config(g)?, s, g.force) };
    match cli.command {
        Command::BuildEnv => stage(Stage::BuildEnv),
        Command::Design => stage(Stage::Design),
        Command::Train => stage(Stage::Train),
        Command::Validate => stage(Stage::Validate),
        Command::Predict => stage(Stage::Predict),
        Command::Simulate(a) => match (a.nu, a.v_coast, a.v_river) {
            (None, None, None) => stage(Stage::Simulate),
            (Some(nu), Some(vc), Some(vr)) => {
                let cfg = load_config(g)?;
                let sites = a.sites.unwrap_or_else(|| cfg.paths.sites.clone());
                let out = a.out.unwrap_or_else(|| cfg.paths.work_dir.join("single_run.csv"));
                if let Some(dir) = out.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                let params = WaveParams {
                    gamma: cfg.simulation.gamma,
                    ..WaveParams::new(nu, vc, vr)
                };
                simulate_single(&cfg, params, &sites, &out)?;
                println!("wrote {}", out.display());
                Ok(())
            }
            _ => Err(Error::Config("a single run needs --nu, --v-coast and --v-river together".into())),
        },
        Command::Infer(a) => {
            let mut cfg = load_config(g)?;
            let i = &mut cfg.inference;
            if let Some(m) = a.hyper_mode {
                i.hyper_mode = m;
            }
            i.iterations = a.iterations.or(i.iterations);
            i.burn_in = a.burn_in.or(i.burn_in);
            i.thin = a.thin.or(i.thin);
            if let Some(p) = a.priors {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                i.priors = toml::from_str::<Priors>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            }
            if let Some(d) = a.data {
                cfg.paths.sites = d;
            }
            cfg.validate()?;
            run_stage(cfg, Stage::Infer, g.force)
        }
        Command::Report { sites } => {
            let mut cfg = load_config(g)?;
            if !sites.is_empty() {
                cfg.report.sites = sites;
            }
            run_stage(cfg, Stage::Report, g.force)
        }
        Command::Pipeline => {
            let cfg = load_config(g)?;
            let ran = run_pipeline(&cfg, g.force)?;
            if ran.is_empty() {
                println!("all stages up to date");
            } else {
                println!("ran: {}", ran.join(", "));
            }
            Ok(())
        }
        Command::Synth(a) => synth(&a, g.seed.unwrap_or(1), g.scale.unwrap_or_default()),
    }
}

/// Synthetic scenario plus a config that runs the pipeline on it.
pub fn synth(a: &SynthArgs, seed: u64, scale: Scale) -> Result<()> {
    if !(a.cell > 0.0) || a.sites == 0 {
        return Err(Error::Config("synth needs a positive cell size and at least one site".into()));
    }
    let mut scenario = Scenario {
        continent: ContinentSpec {
            cell_deg: a.cell,
            ..ContinentSpec::default()
        },
        n_sites: a.sites,
        anomaly: a.anomaly_site.map(|i| (i, a.anomaly_years)),
        ..Scenario::default()
    };
    scenario.sim.delta_deg = a.cell;
    let (_, truth) = write_scenario(&a.out, &scenario, seed)?;
    let cfg = synth_config(&scenario, truth.source, seed, scale);
    let path = a.out.join("config.toml");
    cfg.save(&path)?;
    PipelineConfig::load(&path)?;
    println!("wrote {} (run `wavefront --config {} pipeline`)", a.out.display(), path.display());
    Ok(())
}

/// Config with relative paths into a directory written by `write_scenario`.
pub fn synth_config(scenario: &Scenario, source: GeoPoint, seed: u64, scale: Scale) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        scale,
        seed,
        paths: Paths {
            terrain: "terrain.asc".into(),
            coasts: Some("coasts.csv".into()),
            rivers: Some("rivers.csv".into()),
            sites: "sites.csv".into(),
            work_dir: "work".into(),
        },
        source: Default::default(),
        simulation: Default::default(),
        design: DesignConfig {
            p: 60,
            p_star: 30,
            candidates: 50,
            bounds: [(8.0, 50.0), (0.05, 1.0), (0.05, 0.8)],
        },
        emulator: Default::default(),
        inference: Default::default(),
        report: Default::default(),
    };
    cfg.source.lon = source.lon;
    cfg.source.lat = source.lat;
    cfg.source.start_bc = scenario.start_bc;
    cfg.simulation.t_max = scenario.sim.t_max;
    cfg.simulation.delta_deg = scenario.sim.delta_deg;
    cfg
}
