//! Front flanks wrapping a circular impassable island and merging behind it.
//!
//! Run with `cargo run --release --example island_merge`.

use wavefront::front::{run_simulation, SimConfig, WaveParams};
use wavefront::geo::{displace, great_circle_km, Environment, GeoPoint, GridSpec, ScalarField, DEFAULT_CELL_DEG};

fn main() -> wavefront::Result<()> {
    let spec = GridSpec::new(-3.0, 7.0, -4.0, 4.0, DEFAULT_CELL_DEG)?;
    let source = GeoPoint::new(0.0, 0.0);
    let island = displace(source, 200.0, 0.0);
    let island_radius = 50.0;
    let mut env = Environment::homogeneous(spec, 1.0);
    env.diffusivity = ScalarField::from_fn(spec, |p| if great_circle_km(p, island) <= island_radius { 0.0 } else { 1.0 });

    // transect across the merge line 100 km behind the island centre, plus an axial line
    let transect: Vec<GeoPoint> = (-10..=10).map(|k| displace(source, 300.0, 10.0 * k as f64)).collect();
    let axial: Vec<GeoPoint> = (0..=15).map(|k| displace(source, 255.0 + 10.0 * k as f64, 0.0)).collect();
    let mut sites = transect.clone();
    sites.extend(axial.iter().copied());

    let params = WaveParams::new(15.0, 0.0, 0.0);
    let config = SimConfig {
        source,
        dt: 1.0,
        t_max: 800.0,
        record_sites: sites,
        ..SimConfig::default()
    };
    let sim = run_simulation(&env, &params, &config)?;
    let u = params.front_speed(1.0);
    println!("excised loops: {}, steps: {}, max particles: {}", sim.stats.excised_loops, sim.stats.steps, sim.stats.max_particles);
    println!("{:>8} {:>10} {:>10}", "offset", "arrival", "free");
    for (k, (p, t)) in config.record_sites.iter().zip(&sim.record.arrivals).enumerate() {
        let label = if k < transect.len() { "transect" } else { "axial" };
        println!(
            "{label:>8} {:>10.2} {:>10.2}",
            t.unwrap_or(f64::NAN),
            great_circle_km(source, *p) / u
        );
    }
    Ok(())
}
