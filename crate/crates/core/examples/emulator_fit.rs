//! Trains a site emulator on runs of the front model over a small continent
//! and compares its prediction with a fresh simulation.
//!
//! Run with `cargo run --release --example emulator_fit`.

use wavefront::design::lhd_maximin;
use wavefront::emulator::{train_site, HyperMhConfig, HyperPriors};
use wavefront::front::{run_batch, run_simulation, SimConfig, WaveParams};
use wavefront::geo::{Environment, GeoPoint};
use wavefront::synth::ContinentSpec;

fn main() -> wavefront::Result<()> {
    let spec = ContinentSpec {
        cell_deg: 0.25,
        ..ContinentSpec::default()
    };
    let env = Environment::from_terrain(&spec.terrain()?)?;
    let site = GeoPoint::new(18.0, 48.0);
    let sim = SimConfig {
        source: spec.source,
        delta_deg: 0.25,
        t_max: 9000.0,
        record_sites: vec![site],
        ..SimConfig::default()
    };
    let bounds = [(8.0, 50.0), (0.05, 1.0), (0.05, 0.8)];
    let design = lhd_maximin(40, &bounds, 50, 3)?;
    let runs: Vec<WaveParams> = design.points.iter().map(|t| WaveParams::new(t[0], t[1], t[2])).collect();
    let arrivals: Vec<Option<f64>> = run_batch(&env, &runs, &sim)
        .into_iter()
        .map(|r| r.map(|s| s.record.arrivals[0]))
        .collect::<wavefront::Result<_>>()?;
    let cfg = HyperMhConfig {
        iterations: 10_000,
        burn_in: 2_000,
        thin: 10,
        use_likelihood: true,
    };
    let em = train_site("demo", &design.points, &arrivals, &HyperPriors::default(), &cfg, 4)?;
    println!("mean coefficients {:?}", em.alpha.map(|a| (a * 10.0).round() / 10.0));
    println!(
        "hyperparameters: amplitude {:.1}, length scales {:?}, acceptance {:.2}",
        em.hyper_point.amplitude,
        em.hyper_point.length_scales.map(|l| (l * 1000.0).round() / 1000.0),
        em.acceptance
    );

    for theta in [[20.0, 0.3, 0.2], [35.0, 0.7, 0.5], [12.0, 0.1, 0.6]] {
        let (m, v) = em.predict_point(theta)?;
        let truth = run_simulation(&env, &WaveParams::new(theta[0], theta[1], theta[2]), &sim)?.record.arrivals[0];
        println!(
            "theta {theta:?}: emulator {m:.0} ± {:.0} yr, simulator {}",
            v.sqrt(),
            truth.map_or("unreached".to_string(), |t| format!("{t:.0} yr"))
        );
    }
    Ok(())
}
