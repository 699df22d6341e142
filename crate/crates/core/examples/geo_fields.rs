//! Builds the environment for a small synthetic continent and prints a few
//! diffusivity and tangent samples.
//!
//! Run with `cargo run --release --example geo_fields`.

use wavefront::geo::{dimensionless_diffusivity, GeoPoint};
use wavefront::synth::ContinentSpec;

fn main() -> wavefront::Result<()> {
    let spec = ContinentSpec {
        cell_deg: 0.25,
        ..ContinentSpec::default()
    };
    let terrain = spec.terrain()?;
    let env = wavefront::geo::Environment::from_terrain(&terrain)?;
    let g = env.spec();
    println!("grid {} x {} cells of {}°", g.n_lon, g.n_lat, g.cell_size);
    println!("{} coastlines, {} rivers", terrain.coasts.len(), terrain.rivers.len());

    let probes = [
        ("open sea", GeoPoint::new(0.3, 45.0)),
        ("coast", GeoPoint::new(1.1, 45.0)),
        ("lowland", GeoPoint::new(8.0, 48.0)),
        ("hill top", GeoPoint::new(15.0, 46.0)),
        ("river", GeoPoint::new(20.0, 46.5)),
    ];
    println!("{:>9} {:>8} {:>8} {:>16} {:>16}", "", "alt km", "nu_L", "coast tangent", "river tangent");
    for (name, p) in probes {
        let alt = terrain.altitude.bilinear(p)?;
        let (cx, cy) = env.coast.bilinear(p)?;
        let (rx, ry) = env.river.bilinear(p)?;
        println!(
            "{name:>9} {alt:>8.3} {:>8.3} {:>7.2},{:>7.2} {:>7.2},{:>7.2}",
            env.diffusivity.bilinear(p)?,
            cx,
            cy,
            rx,
            ry
        );
    }

    println!("\nnu_L at 45°N by altitude (km, land far from sea):");
    for alt in [0.0, 0.25, 0.5, 0.75, 1.0, 1.5] {
        println!("  {alt:>4}: {:.3}", dimensionless_diffusivity(45.0, alt, 1000.0));
    }
    Ok(())
}
