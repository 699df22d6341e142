//! Synthetic worlds and datasets: a small continent with coasts and
//! rivers, random land sites, data drawn from the full statistical model,
//! and Gaussian-process site functions for emulator checks.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{from_elapsed, write_sites, DatedSample, SiteRecord, DEFAULT_START_BC};
use crate::design::{lhd_maximin, Bounds, DesignMatrix};
use crate::emulator::{site_seed, train_all, HyperMhConfig, HyperPriors};
use crate::error::{Error, Result};
use crate::front::{run_batch, run_simulation, SimConfig, WaveParams};
use crate::geo::{great_circle_km, io as geo_io, Environment, GeoPoint, GridSpec, Terrain, TerrainBuilder};
use crate::gp::{self, KernelParams};
use crate::infer::{Chain, EmulatorSet, ModelParams, SiteData};
use crate::stats;

/// Layout of the synthetic continent.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinentSpec {
    pub lon: (f64, f64),
    pub lat: (f64, f64),
    pub cell_deg: f64,
    pub source: GeoPoint,
    /// Sea west of this meridian and south of this parallel.
    pub west_coast: f64,
    pub south_coast: f64,
    pub rivers: Vec<(GeoPoint, GeoPoint)>,
    /// Gaussian hill: centre, peak altitude (km), radius (km).
    pub hill: Option<(GeoPoint, f64, f64)>,
}

impl Default for ContinentSpec {
    fn default() -> Self {
        Self {
            lon: (0.0, 30.0),
            lat: (36.0, 56.0),
            cell_deg: 0.1,
            source: GeoPoint::new(3.0, 40.0),
            west_coast: 1.0,
            south_coast: 38.0,
            rivers: vec![
                (GeoPoint::new(12.0, 39.0), GeoPoint::new(28.0, 54.0)),
                (GeoPoint::new(4.0, 47.0), GeoPoint::new(14.0, 55.0)),
            ],
            hill: Some((GeoPoint::new(15.0, 46.0), 1.2, 250.0)),
        }
    }
}

impl ContinentSpec {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.lon.0, self.lon.1, self.lat.0, self.lat.1, self.cell_deg)
    }

    pub fn terrain(&self) -> Result<Terrain> {
        let mut b = TerrainBuilder::flat(self.grid()?, 0.2)
            .sea_west_of(self.west_coast, 0.5)
            .sea_south_of(self.south_coast, 0.5);
        for (from, to) in &self.rivers {
            b = b.river(*from, *to);
        }
        if let Some((c, peak, r)) = self.hill {
            b = b.hill(c, peak, r);
        }
        Ok(b.build())
    }

    pub fn environment(&self) -> Result<Environment> {
        Environment::from_terrain(&self.terrain()?)
    }
}

/// Highest altitude (km) at which sites are placed; above about 1 km the
/// land is close to impassable.
pub const MAX_SITE_ALTITUDE_KM: f64 = 0.8;

/// Sites keep this distance (degrees) from the grid edge, where particles freeze.
pub const SITE_EDGE_MARGIN_DEG: f64 = 0.5;

/// `n` lowland sites (altitude in (0, 0.8] km) at least `min_km` from
/// `source`, drawn uniformly over the grid box less an edge margin.
pub fn random_land_sites(terrain: &Terrain, n: usize, source: GeoPoint, min_km: f64, rng: &mut impl Rng) -> Result<Vec<GeoPoint>> {
    let s = terrain.altitude.spec;
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n.max(1) {
            return Err(Error::NoLand);
        }
        let m = SITE_EDGE_MARGIN_DEG;
        let p = GeoPoint::new(rng.random_range(s.lon_min + m..s.lon_max - m), rng.random_range(s.lat_min + m..s.lat_max - m));
        let alt = terrain.altitude.bilinear(p)?;
        if alt > 0.0 && alt <= MAX_SITE_ALTITUDE_KM && great_circle_km(p, source) >= min_km {
            out.push(p);
        }
    }
    Ok(out)
}

/// Like `random_land_sites` but keeps only sites within `max_km` of one of
/// the polyline points in `lines`.
pub fn random_sites_near(
    terrain: &Terrain,
    n: usize,
    source: GeoPoint,
    min_km: f64,
    lines: &[Vec<GeoPoint>],
    max_km: f64,
    rng: &mut impl Rng,
) -> Result<Vec<GeoPoint>> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 100 * n.max(1) {
            return Err(Error::NoLand);
        }
        let p = random_land_sites(terrain, 1, source, min_km, rng)?[0];
        if lines.iter().flatten().any(|q| great_circle_km(p, *q) <= max_km) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Sites in three groups: near coasts, near rivers, and anywhere on low land.
pub fn stratified_sites(
    terrain: &Terrain,
    n: usize,
    source: GeoPoint,
    min_km: f64,
    (coastal, river): (f64, f64),
    near_km: f64,
    rng: &mut impl Rng,
) -> Result<Vec<GeoPoint>> {
    let n_coast = (coastal * n as f64).round() as usize;
    let n_river = ((river * n as f64).round() as usize).min(n - n_coast.min(n));
    let mut out = random_sites_near(terrain, n_coast.min(n), source, min_km, &terrain.coasts, near_km, rng)?;
    out.extend(random_sites_near(terrain, n_river, source, min_km, &terrain.rivers, near_km, rng)?);
    out.extend(random_land_sites(terrain, n - out.len(), source, min_km, rng)?);
    Ok(out)
}

/// Data from the full model:
/// t_i = τ_i + ζ(x_i) + σ_i ω_i + σ ε_i, with ζ ~ GP(0, a_ζ² exp(−d²/r_ζ²)).
/// Returns the dates and the ζ draw.
pub fn model_dataset(
    tau: &[f64],
    locations: &[GeoPoint],
    site_sigma: &[f64],
    params: &ModelParams,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = tau.len();
    let data = SiteData::new(locations, tau.to_vec(), site_sigma.to_vec())?;
    let zeta = if params.a_zeta > 0.0 {
        let mut k = data.spatial_covariance(params.a_zeta, params.r_zeta);
        for i in 0..n {
            k[(i, i)] += gp::NUGGET * params.a_zeta * params.a_zeta;
        }
        gp::mvn_sample(&DVector::zeros(n), &gp::cholesky(k)?, rng).as_slice().to_vec()
    } else {
        vec![0.0; n]
    };
    let t = (0..n)
        .map(|i| {
            let w: f64 = rng.sample(rand_distr::StandardNormal);
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            tau[i] + zeta[i] + site_sigma[i] * w + params.sigma * e
        })
        .collect();
    Ok((t, zeta))
}

/// One-sample site records for elapsed dates `t`.
pub fn site_records(ids: &[String], locations: &[GeoPoint], t: &[f64], sigma: &[f64], start_bc: f64) -> Vec<SiteRecord> {
    (0..ids.len())
        .map(|i| {
            let t_bc = from_elapsed(t[i], start_bc);
            SiteRecord {
                site_id: ids[i].clone(),
                name: format!("synthetic {}", ids[i]),
                location: locations[i],
                samples: vec![DatedSample {
                    site_id: ids[i].clone(),
                    t: t_bc,
                    sigma: sigma[i],
                }],
                t_summary: t_bc,
                sigma_summary: sigma[i],
            }
        })
        .collect()
}

/// A smooth random site response over θ: the emulator mean basis with
/// coefficients `alpha` plus a Gaussian-process deviation, drawn jointly at
/// a fixed set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSiteFunction {
    pub alpha: [f64; 4],
    pub kernel: KernelParams,
}

impl GpSiteFunction {
    pub fn random(rng: &mut impl Rng, bounds: &Bounds) -> Self {
        let alpha = [
            rng.random_range(300.0..1500.0),
            rng.random_range(2000.0..6000.0),
            rng.random_range(0.0..40.0),
            rng.random_range(0.0..25.0),
        ];
        let scales = bounds.iter().map(|(lo, hi)| (hi - lo) * rng.random_range(0.3..0.8)).collect();
        Self {
            alpha,
            kernel: KernelParams::new(rng.random_range(50.0..300.0), scales),
        }
    }

    /// Values at all `points`, one joint draw.
    pub fn sample(&self, points: &[[f64; 3]], rng: &mut impl Rng) -> Result<Vec<f64>> {
        let x = DMatrix::from_fn(points.len(), 3, |i, j| points[i][j]);
        let mut k = gp::covariance(&x, &self.kernel);
        for i in 0..points.len() {
            k[(i, i)] += gp::NUGGET * self.kernel.variance();
        }
        let mean = DVector::from_vec(
            points
                .iter()
                .map(|&t| crate::emulator::mean_value(&self.alpha, t))
                .collect::<Result<Vec<_>>>()?,
        );
        Ok(gp::mvn_sample(&mean, &gp::cholesky(k)?, rng).as_slice().to_vec())
    }
}

/// Settings for a posterior-recovery study on the synthetic continent.
#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub continent: ContinentSpec,
    pub n_sites: usize,
    pub min_site_km: f64,
    /// Shares of sites placed within `near_km` of a coastline and of a river;
    /// the rest are anywhere on low land.
    pub coastal_fraction: f64,
    pub river_fraction: f64,
    pub near_km: f64,
    /// Range of the per-site date standard deviations σ_i.
    pub site_sigma: (f64, f64),
    pub truth: ModelParams,
    pub design_size: usize,
    pub design_box: Bounds,
    pub design_candidates: usize,
    pub sim: SimConfig,
    pub hyper: HyperMhConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        let continent = ContinentSpec::default();
        Self {
            sim: SimConfig {
                source: continent.source,
                t_max: 9000.0,
                delta_deg: 0.1,
                ..SimConfig::default()
            },
            continent,
            n_sites: 100,
            min_site_km: 300.0,
            coastal_fraction: 0.3,
            river_fraction: 0.3,
            near_km: 100.0,
            site_sigma: (20.0, 60.0),
            truth: ModelParams {
                nu: 20.0,
                v_coast: 0.3,
                v_river: 0.2,
                sigma: 100.0,
                a_zeta: 30.0,
                r_zeta: 10.0,
            },
            design_size: 60,
            design_box: [(8.0, 50.0), (0.05, 1.0), (0.05, 0.8)],
            design_candidates: 50,
            hyper: HyperMhConfig {
                iterations: 10_000,
                burn_in: 5_000,
                thin: 10,
                use_likelihood: true,
            },
        }
    }
}

/// Everything that stays fixed across replications: sites, the simulated
/// truth and the trained emulators.
#[derive(Debug, Clone)]
pub struct RecoverySetup {
    pub config: RecoveryConfig,
    pub site_ids: Vec<String>,
    pub locations: Vec<GeoPoint>,
    pub site_sigma: Vec<f64>,
    /// Simulated arrival times at the true parameters.
    pub tau: Vec<f64>,
    pub design: DesignMatrix,
    pub emulators: EmulatorSet,
}

impl RecoverySetup {
    pub fn build(config: RecoveryConfig, seed: u64) -> Result<Self> {
        let terrain = config.continent.terrain()?;
        let env = Environment::from_terrain(&terrain)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let locations = stratified_sites(
            &terrain,
            config.n_sites,
            config.continent.source,
            config.min_site_km,
            (config.coastal_fraction, config.river_fraction),
            config.near_km,
            &mut rng,
        )?;
        let site_sigma: Vec<f64> = (0..config.n_sites).map(|_| rng.random_range(config.site_sigma.0..=config.site_sigma.1)).collect();
        let site_ids: Vec<String> = (0..config.n_sites).map(|i| format!("S{i:03}")).collect();
        let sim = SimConfig {
            record_sites: locations.clone(),
            ..config.sim.clone()
        };

        let design = lhd_maximin(config.design_size, &config.design_box, config.design_candidates, site_seed(seed, 1))?;
        let mut runs: Vec<WaveParams> = design.points.iter().map(|t| WaveParams::new(t[0], t[1], t[2])).collect();
        let th = config.truth.theta();
        runs.push(WaveParams::new(th[0], th[1], th[2]));
        let mut results = run_batch(&env, &runs, &sim).into_iter().map(|r| r.map(|s| s.record.arrivals)).collect::<Result<Vec<_>>>()?;
        let truth = results.pop().expect("truth run");
        let tau = truth
            .iter()
            .enumerate()
            .map(|(i, a)| a.ok_or_else(|| Error::invalid(format!("site {i} not reached at the true parameters"))))
            .collect::<Result<Vec<_>>>()?;
        let sites = train_all(&site_ids, &design.points, &results, &HyperPriors::default(), &config.hyper, site_seed(seed, 2))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            site_ids,
            locations,
            site_sigma,
            tau,
            design,
            emulators: EmulatorSet::new(sites),
        })
    }

    /// One replicated dataset drawn from the full model at the true parameters.
    pub fn dataset(&self, seed: u64) -> Result<(SiteData, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, zeta) = model_dataset(&self.tau, &self.locations, &self.site_sigma, &self.config.truth, &mut rng)?;
        Ok((SiteData::new(&self.locations, t, self.site_sigma.clone())?, zeta))
    }

    /// Chain start: design-box centre for θ, truth-free defaults elsewhere.
    pub fn start(&self) -> ModelParams {
        let b = self.config.design_box;
        ModelParams {
            nu: 0.5 * (b[0].0 + b[0].1),
            v_coast: 0.5 * (b[1].0 + b[1].1),
            v_river: 0.5 * (b[2].0 + b[2].1),
            sigma: 300.0,
            a_zeta: 100.0,
            r_zeta: 5.0,
        }
    }
}

/// Which parameters' central intervals contain the truth.
pub fn covered(chain: &Chain, truth: &ModelParams, mass: f64) -> [bool; 6] {
    let t = truth.to_array();
    std::array::from_fn(|k| {
        let (lo, hi) = stats::central_interval(&chain.column(k), mass);
        lo <= t[k] && t[k] <= hi
    })
}

/// A synthetic study written to disk: terrain, coast and river polylines,
/// and one-sample site dates drawn from the full model.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub continent: ContinentSpec,
    pub n_sites: usize,
    pub min_site_km: f64,
    pub site_sigma: (f64, f64),
    pub truth: ModelParams,
    pub sim: SimConfig,
    pub start_bc: f64,
    /// Extra years added to the date of one site (index, years).
    pub anomaly: Option<(usize, f64)>,
}

impl Default for Scenario {
    fn default() -> Self {
        let r = RecoveryConfig::default();
        Self {
            continent: r.continent,
            n_sites: r.n_sites,
            min_site_km: r.min_site_km,
            site_sigma: r.site_sigma,
            truth: r.truth,
            sim: r.sim,
            start_bc: DEFAULT_START_BC,
            anomaly: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub seed: u64,
    pub params: ModelParams,
    pub source: GeoPoint,
    pub start_bc: f64,
    pub site_ids: Vec<String>,
    /// Simulated arrival at each site, years after the start.
    pub tau: Vec<f64>,
    pub zeta: Vec<f64>,
    pub anomaly: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub terrain: PathBuf,
    pub coasts: PathBuf,
    pub rivers: PathBuf,
    pub sites: PathBuf,
    pub truth: PathBuf,
}

/// Writes `terrain.asc`, `coasts.csv`, `rivers.csv`, `sites.csv` and
/// `truth.json` into `dir`.
pub fn write_scenario(dir: &Path, scenario: &Scenario, seed: u64) -> Result<(ScenarioFiles, ScenarioTruth)> {
    std::fs::create_dir_all(dir)?;
    let terrain = scenario.continent.terrain()?;
    let env = Environment::from_terrain(&terrain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = scenario.continent.source;
    let locations = stratified_sites(&terrain, scenario.n_sites, source, scenario.min_site_km, (0.3, 0.3), 100.0, &mut rng)?;
    let sigma: Vec<f64> = (0..scenario.n_sites).map(|_| rng.random_range(scenario.site_sigma.0..=scenario.site_sigma.1)).collect();
    let ids: Vec<String> = (0..scenario.n_sites).map(|i| format!("S{i:03}")).collect();
    let th = scenario.truth.theta();
    let sim = SimConfig {
        source,
        record_sites: locations.clone(),
        ..scenario.sim.clone()
    };
    let run = run_simulation(&env, &WaveParams::new(th[0], th[1], th[2]), &sim)?;
    let tau = run
        .record
        .arrivals
        .iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| Error::invalid(format!("site {i} not reached at the true parameters"))))
        .collect::<Result<Vec<_>>>()?;
    let (mut t, zeta) = model_dataset(&tau, &locations, &sigma, &scenario.truth, &mut rng)?;
    if let Some((i, years)) = scenario.anomaly {
        if i >= t.len() {
            return Err(Error::invalid(format!("anomaly site {i} out of range")));
        }
        t[i] += years;
    }
    let files = ScenarioFiles {
        terrain: dir.join("terrain.asc"),
        coasts: dir.join("coasts.csv"),
        rivers: dir.join("rivers.csv"),
        sites: dir.join("sites.csv"),
        truth: dir.join("truth.json"),
    };
    geo_io::write_ascii_grid(&files.terrain, &terrain.altitude)?;
    geo_io::write_polylines(&files.coasts, &terrain.coasts)?;
    geo_io::write_polylines(&files.rivers, &terrain.rivers)?;
    write_sites(&files.sites, &site_records(&ids, &locations, &t, &sigma, scenario.start_bc))?;
    let truth = ScenarioTruth {
        seed,
        params: scenario.truth,
        source,
        start_bc: scenario.start_bc,
        site_ids: ids,
        tau,
        zeta,
        anomaly: scenario.anomaly,
    };
    std::fs::write(&files.truth, serde_json::to_string_pretty(&truth)? + "\n")?;
    Ok((files, truth))
}
