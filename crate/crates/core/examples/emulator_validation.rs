//! Mahalanobis and PIT checks for emulators of random smooth site functions.
//!
//! Run with `cargo run --release --example emulator_validation`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavefront::design::{lhd_maximin, DEFAULT_BOX};
use wavefront::emulator::{md_threshold, train_site, validate_md, validate_pit, HyperMhConfig, HyperPriors};
use wavefront::synth::GpSiteFunction;

fn main() -> wavefront::Result<()> {
    let design = lhd_maximin(100, &DEFAULT_BOX, 20, 1)?.points;
    let holdout = lhd_maximin(50, &DEFAULT_BOX, 20, 2)?.points;
    let mut all = design.clone();
    all.extend(&holdout);
    let cfg = HyperMhConfig {
        iterations: 3_000,
        burn_in: 1_000,
        thin: 5,
        use_likelihood: true,
    };
    println!("MD threshold for p=100, p*=50: {:.3} (p=200, p*=100: {:.3})", md_threshold(100, 50), md_threshold(200, 100));
    println!("{:>4} {:>8} {:>8} {:>6}", "site", "MD", "chi2", "pass");
    for i in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let f = GpSiteFunction::random(&mut rng, &DEFAULT_BOX);
        let values = f.sample(&all, &mut rng)?;
        let (train, hold) = values.split_at(design.len());
        let arrivals: Vec<Option<f64>> = train.iter().map(|&v| Some(v)).collect();
        let em = train_site(&format!("g{i}"), &design, &arrivals, &HyperPriors::default(), &cfg, 100 + i)?;
        let md = validate_md(&em, &holdout, hold)?;
        let pit = validate_pit(&em, &holdout, hold)?;
        let pass = md.md <= md.threshold && pit.chi2 <= pit.threshold;
        println!("{i:>4} {:>8.2} {:>8.2} {pass:>6}", md.md, pit.chi2);
    }
    Ok(())
}
