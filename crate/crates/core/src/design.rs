//! Maximin Latin hypercube designs over the (ν, V_C, V_R) box.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Bounds = [(f64, f64); 3];

/// (0,120) × (0,3) × (0,2) for (ν, V_C, V_R).
pub const DEFAULT_BOX: Bounds = [(0.0, 120.0), (0.0, 3.0), (0.0, 2.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub points: Vec<[f64; 3]>,
    pub bounds: Bounds,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points mapped to the unit cube.
    pub fn normalized(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| normalize(p, &self.bounds)).collect()
    }

    /// Smallest pairwise Euclidean distance in unit-cube coordinates.
    pub fn min_distance(&self) -> f64 {
        min_pairwise(&self.normalized())
    }

    /// True when every axis has exactly one point per stratum.
    pub fn is_latin(&self) -> bool {
        let p = self.points.len();
        (0..3).all(|axis| {
            let mut seen = vec![false; p];
            self.normalized().iter().all(|u| {
                let k = (u[axis] * p as f64).floor();
                if !(0.0..p as f64).contains(&k) || seen[k as usize] {
                    return false;
                }
                seen[k as usize] = true;
                true
            })
        })
    }

    pub fn strictly_inside(&self) -> bool {
        self.points
            .iter()
            .all(|p| (0..3).all(|a| p[a] > self.bounds[a].0 && p[a] < self.bounds[a].1))
    }
}

fn normalize(p: &[f64; 3], b: &Bounds) -> [f64; 3] {
    std::array::from_fn(|a| (p[a] - b[a].0) / (b[a].1 - b[a].0))
}

fn min_pairwise(u: &[[f64; 3]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..u.len() {
        for j in 0..i {
            let d2: f64 = (0..3).map(|a| (u[i][a] - u[j][a]).powi(2)).sum();
            best = best.min(d2);
        }
    }
    best.sqrt()
}

fn check_bounds(b: &Bounds) -> Result<()> {
    if b.iter().all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi) {
        Ok(())
    } else {
        Err(Error::invalid(format!("design bounds must satisfy low < high: {b:?}")))
    }
}

/// One random Latin hypercube: a uniform point inside each stratum, with the
/// strata independently permuted per axis.
pub fn random_lhd(p: usize, bounds: &Bounds, rng: &mut impl Rng) -> DesignMatrix {
    let mut cols: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(p));
    for col in cols.iter_mut() {
        let mut strata: Vec<usize> = (0..p).collect();
        for i in (1..p).rev() {
            strata.swap(i, rng.random_range(0..=i));
        }
        for k in strata {
            let u: f64 = rng.sample(Open01);
            col.push((k as f64 + u) / p as f64);
        }
    }
    let points = (0..p)
        .map(|i| std::array::from_fn(|a| bounds[a].0 + cols[a][i] * (bounds[a].1 - bounds[a].0)))
        .collect();
    DesignMatrix { points, bounds: *bounds }
}

/// The candidate pool scored by [`lhd_maximin`], candidate `k` seeded from
/// (`seed`, `k`) so the pool is reproducible regardless of thread count.
pub fn lhd_candidates(p: usize, bounds: &Bounds, n_candidates: usize, seed: u64) -> Vec<DesignMatrix> {
    (0..n_candidates)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            random_lhd(p, bounds, &mut rng)
        })
        .collect()
}

/// Among `n_candidates` random Latin hypercubes, the one with the largest
/// minimum pairwise distance in unit-cube coordinates. Ties go to the
/// earliest candidate.
pub fn lhd_maximin(p: usize, bounds: &Bounds, n_candidates: usize, seed: u64) -> Result<DesignMatrix> {
    if p < 2 || n_candidates == 0 {
        return Err(Error::invalid("need p ≥ 2 and at least one candidate"));
    }
    check_bounds(bounds)?;
    let best = (0..n_candidates)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let d = random_lhd(p, bounds, &mut rng);
            (d.min_distance(), k, d)
        })
        .reduce_with(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .expect("at least one candidate");
    Ok(best.2)
}

/// Per-axis sample range widened by `margin` times the range on each side
/// (times |value| when the range is degenerate), with lower bounds floored at 0.
pub fn expand_bounds(samples: &[[f64; 3]], margin: f64) -> Result<Bounds> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot expand bounds from an empty sample"));
    }
    Ok(std::array::from_fn(|a| {
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s[a]), h.max(s[a])));
        let range = hi - lo;
        let pad = if range > 0.0 { margin * range } else { margin * lo.abs() };
        ((lo - pad).max(0.0), hi + pad)
    }))
}

/// Writes `nu,v_coast,v_river` rows, preceded by `header` comment lines.
pub fn write_design(path: &Path, design: &DesignMatrix, header: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "nu,v_coast,v_river")?;
    for p in &design.points {
        writeln!(out, "{},{},{}", p[0], p[1], p[2])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a design file; bounds are taken from `bounds` when given, otherwise
/// from the data range.
pub fn read_design(path: &Path, bounds: Option<Bounds>) -> Result<DesignMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut points = Vec::new();
    for rec in reader.deserialize::<(f64, f64, f64)>() {
        let (nu, vc, vr) = rec.map_err(|e| Error::Malformed {
            path: path.display().to_string(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        points.push([nu, vc, vr]);
    }
    let bounds = match bounds {
        Some(b) => b,
        None => expand_bounds(&points, 0.0)?,
    };
    Ok(DesignMatrix { points, bounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const UNIT: Bounds = [(0.0, 1.0); 3];

    #[test]
    fn two_points_take_opposite_strata() {
        let d = lhd_maximin(2, &UNIT, 10, 1).unwrap();
        for a in 0..3 {
            assert!((d.points[0][a] < 0.5) != (d.points[1][a] < 0.5));
        }
    }

    #[test]
    fn default_box_200_points() {
        let d = lhd_maximin(200, &DEFAULT_BOX, 20, 7).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.strictly_inside());
        assert!(d.is_latin());
    }

    #[test]
    fn maximin_beats_single_draw_and_pool() {
        let single = lhd_maximin(30, &UNIT, 1, 3).unwrap();
        let best = lhd_maximin(30, &UNIT, 500, 3).unwrap();
        assert!(best.min_distance() >= single.min_distance());
        let pool = lhd_candidates(30, &UNIT, 500, 3);
        let beaten = pool.iter().filter(|c| c.min_distance() <= best.min_distance()).count();
        assert!(beaten as f64 >= 0.95 * pool.len() as f64);
        assert_eq!(pool[0], single);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = lhd_maximin(40, &DEFAULT_BOX, 50, 11).unwrap();
        assert_eq!(a, lhd_maximin(40, &DEFAULT_BOX, 50, 11).unwrap());
        assert_ne!(a, lhd_maximin(40, &DEFAULT_BOX, 50, 12).unwrap());
    }

    #[test]
    fn expand_examples() {
        let b = expand_bounds(&[[4.0, 4.0, 4.0]; 3], 0.25).unwrap();
        assert_eq!(b[0], (3.0, 5.0));
        let b = expand_bounds(&[[10.0, 0.1, 1.0], [20.0, 0.2, 1.0]], 0.25).unwrap();
        assert_eq!(b[0], (7.5, 22.5));
        let b = expand_bounds(&[[10.0, 0.1, 1.0], [20.0, 0.2, 1.0]], 10.0).unwrap();
        assert_eq!(b[1].0, 0.0);
        assert!(expand_bounds(&[], 0.25).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(lhd_maximin(1, &UNIT, 10, 0).is_err());
        assert!(lhd_maximin(5, &UNIT, 0, 0).is_err());
        assert!(lhd_maximin(5, &[(1.0, 0.0), (0.0, 1.0), (0.0, 1.0)], 3, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.csv");
        let d = lhd_maximin(12, &DEFAULT_BOX, 5, 2).unwrap();
        write_design(&path, &d, &["seed=2".into()]).unwrap();
        assert_eq!(read_design(&path, Some(DEFAULT_BOX)).unwrap(), d);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn latin_property_holds(p in 2usize..60, seed in any::<u64>(), n in 1usize..8) {
            let d = lhd_maximin(p, &DEFAULT_BOX, n, seed).unwrap();
            prop_assert!(d.is_latin());
            prop_assert!(d.strictly_inside());
        }
    }
}
