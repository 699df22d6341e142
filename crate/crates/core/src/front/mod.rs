//! Particle wavefront propagation and site arrival times.
//!
//! A closed loop of particles leaves the source and moves with the local
//! velocity u = U n̂ + V, where U = 2√(γ ν ν_L) is the reaction-diffusion
//! front speed and V the coastal/river advection. Each step is followed by
//! resampling and loop reconnection; sites record the time the front passes.

mod hash;
mod particles;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{great_circle_km, local_offset_km, Environment, GeoPoint, DEFAULT_CELL_DEG};
use hash::{chord, to_km3, SpatialHash};
pub use particles::{local_velocity, Front, ReconnectReport, Velocity, MIN_LOOP_SEPARATION, MIN_PARTICLES};

/// Default population growth rate, 1/year.
pub const DEFAULT_GAMMA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    /// Diffusivity magnitude ν, km²/year.
    pub nu: f64,
    /// Coastal advection speed V_C, km/year.
    pub v_coast: f64,
    /// River advection speed V_R, km/year.
    pub v_river: f64,
    /// Growth rate γ, 1/year.
    pub gamma: f64,
}

impl WaveParams {
    pub fn new(nu: f64, v_coast: f64, v_river: f64) -> Self {
        Self {
            nu,
            v_coast,
            v_river,
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.v_coast >= 0.0 && self.v_river >= 0.0 && self.gamma > 0.0) {
            return Err(Error::invalid(format!("wave parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    /// U = 2√(γ ν ν_L).
    pub fn front_speed(&self, nu_l: f64) -> f64 {
        2.0 * (self.gamma * self.nu * nu_l.max(0.0)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub source: GeoPoint,
    pub start_radius_km: f64,
    pub n_init: usize,
    /// Largest time step, years. The step actually used is also capped at
    /// half the smallest particle spacing divided by the fastest particle speed.
    pub dt: f64,
    pub t_max: f64,
    pub delta_deg: f64,
    /// Defaults to δ in km at each site's latitude.
    pub hit_radius_km: Option<f64>,
    pub record_sites: Vec<GeoPoint>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            source: GeoPoint::new(37.1, 41.1),
            start_radius_km: 10.0,
            n_init: 16,
            dt: 5.0,
            t_max: 6000.0,
            delta_deg: DEFAULT_CELL_DEG,
            hit_radius_km: None,
            record_sites: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max > self.dt) || !(self.start_radius_km > 0.0) {
            return Err(Error::invalid("need dt > 0, t_max > dt and start_radius > 0"));
        }
        if self.hit_radius_km.is_some_and(|r| !(r > 0.0)) || !(self.delta_deg > 0.0) {
            return Err(Error::invalid("hit radius and δ must be positive"));
        }
        Ok(())
    }
}

/// Arrival time (years since the source date) per site; `None` when the
/// front never reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    pub arrivals: Vec<Option<f64>>,
}

impl ArrivalRecord {
    pub fn reached(&self) -> usize {
        self.arrivals.iter().filter(|a| a.is_some()).count()
    }

    pub fn get(&self, site: usize) -> Option<f64> {
        self.arrivals[site]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub steps: usize,
    pub final_time: f64,
    pub min_dt: f64,
    pub max_particles: usize,
    pub excised_loops: usize,
    pub frozen_particles: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub record: ArrivalRecord,
    pub stats: SimStats,
    pub front: Front,
}

/// Observer hook called after every completed step with the current time.
pub trait StepObserver {
    fn after_step(&mut self, time: f64, front: &Front);
}

impl<F: FnMut(f64, &Front)> StepObserver for F {
    fn after_step(&mut self, time: f64, front: &Front) {
        self(time, front)
    }
}

pub fn run_simulation(env: &Environment, params: &WaveParams, config: &SimConfig) -> Result<Simulation> {
    run_simulation_observed(env, params, config, &mut |_: f64, _: &Front| {})
}

#[derive(Clone, Copy)]
struct Proximity {
    time: f64,
    signed: f64,
}

pub fn run_simulation_observed(
    env: &Environment,
    params: &WaveParams,
    config: &SimConfig,
    observer: &mut dyn StepObserver,
) -> Result<Simulation> {
    params.validate()?;
    config.validate()?;
    let started = Instant::now();
    let spec = env.spec();
    let mut front = Front::init(config, &spec)?;

    let max_abs_lat = spec.lat_min.abs().max(spec.lat_max.abs()).min(89.0);
    let min_abs_lat = if spec.lat_min <= 0.0 && spec.lat_max >= 0.0 {
        0.0
    } else {
        spec.lat_min.abs().min(spec.lat_max.abs())
    };
    let delta_min = front.delta_km(max_abs_lat);
    let delta_max = front.delta_km(min_abs_lat);

    let sites = &config.record_sites;
    let hit_radius: Vec<f64> = sites
        .iter()
        .map(|s| config.hit_radius_km.unwrap_or_else(|| front.delta_km(s.lat)))
        .collect();
    let search_radius = hit_radius.iter().copied().fold(0.0, f64::max) + 2.0 * delta_max;
    let site_pos: Vec<[f64; 3]> = sites.iter().map(|&s| to_km3(s)).collect();

    // The initial circle stands for the front at time r0 / U(source).
    let u_source = env
        .diffusivity
        .bilinear(config.source)
        .map(|v| params.front_speed(v))
        .unwrap_or(0.0);
    let mut time = if u_source > 0.0 { config.start_radius_km / u_source } else { 0.0 };
    let mut arrivals: Vec<Option<f64>> = sites
        .iter()
        .map(|&s| (great_circle_km(config.source, s) <= config.start_radius_km).then_some(time))
        .collect();
    let mut near: Vec<Option<Proximity>> = vec![None; sites.len()];
    let mut stats = SimStats {
        min_dt: f64::INFINITY,
        max_particles: front.len(),
        ..SimStats::default()
    };

    let mut normals = front.normals_or_resample()?;
    while time < config.t_max && (sites.is_empty() || arrivals.iter().any(Option::is_none)) {
        let velocities = front.velocities(env, params, &normals);
        let u_max = velocities.iter().map(Velocity::speed).fold(0.0, f64::max);
        if u_max <= 0.0 {
            break;
        }
        let dt = config.dt.min(0.5 * delta_min / u_max).min(config.t_max - time);
        stats.frozen_particles += front.step(env, &velocities, dt);
        time += dt;
        stats.steps += 1;
        stats.min_dt = stats.min_dt.min(dt);

        front.resample();
        let report = front.reconnect();
        stats.excised_loops += report.excised.len();
        normals = front.normals_or_resample()?;
        stats.max_particles = stats.max_particles.max(front.len());

        for lp in &report.excised {
            fill_enclosed(env, params, lp, sites, time, &mut arrivals);
        }
        record_hits(
            &front,
            &normals,
            env,
            params,
            sites,
            &site_pos,
            &hit_radius,
            search_radius,
            time,
            dt,
            &mut arrivals,
            &mut near,
        );
        observer.after_step(time, &front);
    }
    stats.final_time = time;
    if !stats.min_dt.is_finite() {
        stats.min_dt = 0.0;
    }
    stats.wall_seconds = started.elapsed().as_secs_f64();
    Ok(Simulation {
        record: ArrivalRecord { arrivals },
        stats,
        front,
    })
}

/// Sites enclosed by an excised loop are reached by the loop's inward
/// contraction: time of excision plus distance to the loop over the local speed.
fn fill_enclosed(
    env: &Environment,
    params: &WaveParams,
    lp: &[GeoPoint],
    sites: &[GeoPoint],
    time: f64,
    arrivals: &mut [Option<f64>],
) {
    if lp.len() < 3 {
        return;
    }
    for (k, &s) in sites.iter().enumerate() {
        if arrivals[k].is_some() || !particles::contains_point(lp, s) {
            continue;
        }
        let u = env.diffusivity.bilinear(s).map(|v| params.front_speed(v)).unwrap_or(0.0);
        if u <= 0.0 {
            continue;
        }
        let d = lp.iter().map(|&p| great_circle_km(p, s)).fold(f64::INFINITY, f64::min);
        arrivals[k] = Some(time + d / u);
    }
}

#[allow(clippy::too_many_arguments)]
fn record_hits(
    front: &Front,
    normals: &[(f64, f64)],
    env: &Environment,
    params: &WaveParams,
    sites: &[GeoPoint],
    site_pos: &[[f64; 3]],
    hit_radius: &[f64],
    search_radius: f64,
    time: f64,
    dt: f64,
    arrivals: &mut [Option<f64>],
    near: &mut [Option<Proximity>],
) {
    if arrivals.iter().all(Option::is_some) {
        return;
    }
    let pos: Vec<[f64; 3]> = front.particles.iter().map(|&p| to_km3(p)).collect();
    let hash = SpatialHash::new(&pos, search_radius);
    for k in 0..sites.len() {
        if arrivals[k].is_some() {
            continue;
        }
        let nearest = hash
            .around(&site_pos[k])
            .map(|j| (chord(&pos[j], &site_pos[k]), j))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let Some((dist, j)) = nearest.filter(|(d, _)| *d <= search_radius) else {
            near[k] = None;
            continue;
        };
        let (oe, on) = local_offset_km(front.particles[j], sites[k]);
        let (ne, nn) = normals[j];
        let signed = oe * ne + on * nn;
        if dist <= hit_radius[k] && signed <= 0.0 {
            let prev = near[k].filter(|p| p.signed > 0.0 && (time - dt - p.time).abs() < 1e-9 * time.max(1.0));
            let t_hit = match prev {
                Some(p) => p.time + dt * p.signed / (p.signed - signed),
                None => {
                    let un = local_velocity(env, params, front.particles[j], normals[j])
                        .map(|v| v.normal)
                        .unwrap_or(0.0);
                    if un > 0.0 {
                        (time + signed / un).max(time - dt)
                    } else {
                        time
                    }
                }
            };
            arrivals[k] = Some(t_hit);
        } else {
            near[k] = Some(Proximity { time, signed });
        }
    }
}

/// Runs independent simulations for many parameter sets in parallel.
pub fn run_batch(env: &Environment, params: &[WaveParams], config: &SimConfig) -> Vec<Result<Simulation>> {
    use rayon::prelude::*;
    params.par_iter().map(|p| run_simulation(env, p, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{displace, GridSpec};

    fn flat_env() -> Environment {
        Environment::homogeneous(GridSpec::new(-8.0, 8.0, -8.0, 8.0, DEFAULT_CELL_DEG).unwrap(), 1.0)
    }

    fn cfg(sites: Vec<GeoPoint>) -> SimConfig {
        SimConfig {
            source: GeoPoint::new(0.0, 0.0),
            dt: 1.0,
            t_max: 1000.0,
            record_sites: sites,
            ..SimConfig::default()
        }
    }

    #[test]
    fn step_moves_radially_at_front_speed() {
        let env = flat_env();
        let params = WaveParams::new(15.0, 0.0, 0.0);
        let config = cfg(vec![]);
        let mut f = Front::init(&config, &env.spec()).unwrap();
        let normals = f.normals().unwrap();
        let v = f.velocities(&env, &params, &normals);
        f.step(&env, &v, 1.0);
        let expect = 2.0 * (0.3_f64).sqrt();
        for &p in &f.particles {
            let r = great_circle_km(config.source, p);
            assert!((r - 10.0 - expect).abs() < 1e-3, "{r}");
        }
        assert!((expect - 1.0954).abs() < 1e-4);
    }

    #[test]
    fn zero_diffusivity_is_static() {
        let env = Environment::homogeneous(flat_env().spec(), 0.0);
        let params = WaveParams::new(15.0, 0.0, 0.0);
        let config = cfg(vec![GeoPoint::new(1.0, 0.0)]);
        let sim = run_simulation(&env, &params, &config).unwrap();
        assert_eq!(sim.record.arrivals, vec![None]);
        assert_eq!(sim.stats.steps, 0);
    }

    #[test]
    fn coastal_advection_sign_flips() {
        let mut env = flat_env();
        env.coast.vx.iter_mut().for_each(|v| *v = 1.0);
        let params = WaveParams {
            nu: 15.0,
            v_coast: 0.5,
            v_river: 0.0,
            gamma: DEFAULT_GAMMA,
        };
        let p = GeoPoint::new(0.0, 0.0);
        let west = local_velocity(&env, &params, p, (-1.0, 0.0)).unwrap();
        let east = local_velocity(&env, &params, p, (1.0, 0.0)).unwrap();
        let u = params.front_speed(1.0);
        assert!((west.east + u + 0.5).abs() < 1e-12);
        assert!((east.east - u - 0.5).abs() < 1e-12);
        let north = local_velocity(&env, &params, p, (0.0, 1.0)).unwrap();
        assert!(north.east.abs() < 1e-12, "orthogonal normal has no advection");
    }

    #[test]
    fn site_at_source_hits_immediately() {
        let env = flat_env();
        let params = WaveParams::new(15.0, 0.0, 0.0);
        let sim = run_simulation(&env, &params, &cfg(vec![GeoPoint::new(0.0, 0.0)])).unwrap();
        let u = params.front_speed(1.0);
        assert!((sim.record.arrivals[0].unwrap() - 10.0 / u).abs() < 1e-9);
    }

    #[test]
    fn homogeneous_arrival_matches_distance_over_speed() {
        let env = flat_env();
        let params = WaveParams::new(15.0, 0.0, 0.0);
        let site = displace(GeoPoint::new(0.0, 0.0), 300.0, 400.0);
        let sim = run_simulation(&env, &params, &cfg(vec![site])).unwrap();
        let tau = sim.record.arrivals[0].unwrap();
        let oracle = 500.0 / params.front_speed(1.0);
        assert!((tau - oracle).abs() / oracle < 0.02, "{tau} vs {oracle}");
    }

    #[test]
    fn advection_off_ignores_tangent_fields() {
        let mut env = flat_env();
        let params = WaveParams::new(15.0, 0.0, 0.0);
        let config = cfg(vec![GeoPoint::new(1.0, 0.5)]);
        let a = run_simulation(&env, &params, &config).unwrap();
        env.coast.vy.iter_mut().for_each(|v| *v = 1.0);
        env.river.vx.iter_mut().for_each(|v| *v = 1.0);
        let b = run_simulation(&env, &params, &config).unwrap();
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn deterministic() {
        let env = flat_env();
        let params = WaveParams::new(20.0, 0.0, 0.0);
        let config = cfg(vec![GeoPoint::new(2.0, 1.0), GeoPoint::new(-1.0, -2.0)]);
        let a = run_simulation(&env, &params, &config).unwrap();
        let b = run_simulation(&env, &params, &config).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.front, b.front);
    }
}
