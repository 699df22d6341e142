//! Measures the radial speed of a front in a homogeneous domain and compares
//! it with U = 2√(γν); also prints arrival times at probe sites against d/U.
//!
//! Run with `cargo run --release --example front_speed`.

use wavefront::front::{run_simulation, run_simulation_observed, Front, SimConfig, WaveParams};
use wavefront::geo::{displace, great_circle_km, Environment, GeoPoint, GridSpec, DEFAULT_CELL_DEG};

fn main() -> wavefront::Result<()> {
    let spec = GridSpec::new(-9.0, 9.0, -9.0, 9.0, DEFAULT_CELL_DEG)?;
    let env = Environment::homogeneous(spec, 1.0);
    let source = GeoPoint::new(0.0, 0.0);

    for nu in [5.0, 15.0, 20.0, 60.0] {
        let params = WaveParams::new(nu, 0.0, 0.0);
        let u = params.front_speed(1.0);
        let config = SimConfig {
            source,
            dt: 1.0,
            t_max: 200.0 + 400.0 / u,
            ..SimConfig::default()
        };
        let mut samples: Vec<(f64, f64)> = Vec::new();
        let mut observe = |t: f64, f: &Front| {
            let mean = f.particles.iter().map(|&p| great_circle_km(source, p)).sum::<f64>() / f.len() as f64;
            samples.push((t, mean));
        };
        let sim = run_simulation_observed(&env, &params, &config, &mut observe)?;
        let fit: Vec<(f64, f64)> = samples.into_iter().filter(|(t, _)| *t >= 50.0).collect();
        let n = fit.len() as f64;
        let (mt, mr) = fit.iter().fold((0.0, 0.0), |(a, b), (t, r)| (a + t / n, b + r / n));
        let sxy: f64 = fit.iter().map(|(t, r)| (t - mt) * (r - mr)).sum();
        let sxx: f64 = fit.iter().map(|(t, _)| (t - mt).powi(2)).sum();
        let speed = sxy / sxx;
        let radii: Vec<f64> = sim.front.particles.iter().map(|&p| great_circle_km(source, p)).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        let cv = (radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / radii.len() as f64).sqrt() / mean;
        println!(
            "nu = {nu:>5}: measured {speed:.4} km/yr, theory {u:.4} ({:+.3}%), radius cv {cv:.2e}, {} particles",
            100.0 * (speed / u - 1.0),
            sim.front.len()
        );
    }

    let params = WaveParams::new(15.0, 0.0, 0.0);
    let u = params.front_speed(1.0);
    let sites: Vec<GeoPoint> = (0..20)
        .map(|k| {
            let d = 100.0 + 700.0 * k as f64 / 19.0;
            let b = 0.7 * k as f64;
            displace(source, d * b.sin(), d * b.cos())
        })
        .collect();
    for dt in [2.0, 1.0] {
        let config = SimConfig {
            source,
            dt,
            t_max: 1000.0,
            record_sites: sites.clone(),
            ..SimConfig::default()
        };
        let sim = run_simulation(&env, &params, &config)?;
        let worst = sites
            .iter()
            .zip(&sim.record.arrivals)
            .map(|(&s, t)| {
                let tau = t.expect("reached");
                ((tau - great_circle_km(source, s) / u) / tau).abs()
            })
            .fold(0.0, f64::max);
        println!("dt cap {dt}: worst relative arrival error {:.3}%", 100.0 * worst);
    }
    Ok(())
}
