//! Maximin Latin hypercube designs over the default parameter box.
//!
//! Run with `cargo run --release --example lhd_design`.

use wavefront::design::{lhd_candidates, lhd_maximin, DEFAULT_BOX};

fn main() -> wavefront::Result<()> {
    let candidates = lhd_candidates(200, &DEFAULT_BOX, 100, 1);
    let dists: Vec<f64> = candidates.iter().map(|d| d.min_distance()).collect();
    let worst = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let best = dists.iter().copied().fold(0.0, f64::max);
    println!("100 random 200-point hypercubes: min normalised distance {worst:.4} .. {best:.4}");

    let d = lhd_maximin(200, &DEFAULT_BOX, 100, 1)?;
    println!("chosen design: min distance {:.4}, latin {}, strictly inside {}", d.min_distance(), d.is_latin(), d.strictly_inside());
    println!("first rows (nu, v_coast, v_river):");
    for p in d.points.iter().take(5) {
        println!("  {:8.3} {:6.3} {:6.3}", p[0], p[1], p[2]);
    }
    let holdout = lhd_maximin(100, &DEFAULT_BOX, 100, 2)?;
    println!("holdout design: {} points, min distance {:.4}", holdout.len(), holdout.min_distance());
    Ok(())
}
