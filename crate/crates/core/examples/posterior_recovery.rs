//! Simulation-based recovery on the synthetic continent: builds the sites,
//! design runs and emulators once, then fits replicated datasets drawn from
//! the full model and reports interval coverage of the generating values.
//!
//! Run with `cargo run --release --example posterior_recovery -- [replications] [vague]`.
//! The second argument swaps in nearly flat priors for comparison.

use std::time::Instant;

use wavefront::infer::{mh_sample, summarize_chain, MhConfig, Priors};
use wavefront::stats::{InverseGammaSpec, LogNormalSpec};
use wavefront::synth::{covered, RecoveryConfig, RecoverySetup};

fn main() -> wavefront::Result<()> {
    env_logger::init();
    let reps: u64 = std::env::args().nth(1).map_or(2, |a| a.parse().expect("replication count"));
    let priors = if std::env::args().nth(2).is_some() {
        Priors {
            nu: LogNormalSpec::new(3.0, 100.0),
            v_coast: LogNormalSpec::new(-1.0, 100.0),
            v_river: LogNormalSpec::new(-1.6, 100.0),
            sigma2: InverseGammaSpec::new(0.01, 1.0),
            a_zeta: LogNormalSpec::new(3.4, 100.0),
            r_zeta: LogNormalSpec::new(2.3, 100.0),
        }
    } else {
        Priors::default()
    };

    let start = Instant::now();
    let setup = RecoverySetup::build(RecoveryConfig::default(), 7)?;
    println!("setup: {} sites, {} design runs, {:.0}s", setup.site_ids.len(), setup.design.len(), start.elapsed().as_secs_f64());
    let truth = setup.config.truth;
    let cfg = MhConfig {
        initial: Some(setup.start()),
        ..MhConfig::default()
    };
    for r in 0..reps {
        let start = Instant::now();
        let (data, _) = setup.dataset(1000 + r)?;
        let chain = mh_sample(&data, &setup.emulators, &priors, &cfg, 2000 + r)?;
        let cov = covered(&chain, &truth, 0.95);
        println!(
            "replication {r}: {:.0}s, acceptance {:.2?}, covered {}/6",
            start.elapsed().as_secs_f64(),
            chain.acceptance,
            cov.iter().filter(|c| **c).count()
        );
        let truth = truth.to_array();
        for (k, p) in summarize_chain(&chain).params.iter().enumerate() {
            println!(
                "  {:8} truth {:7.2}  mean {:8.3}  95% [{:8.3}, {:8.3}]  ess {:5.0}",
                p.name, truth[k], p.mean, p.lower_95, p.upper_95, p.ess
            );
        }
    }
    Ok(())
}
