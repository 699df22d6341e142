use std::collections::HashMap;

use crate::geo::{GeoPoint, EARTH_RADIUS_KM};

#[inline]
pub(crate) fn to_km3(p: GeoPoint) -> [f64; 3] {
    let u = p.to_unit();
    [u[0] * EARTH_RADIUS_KM, u[1] * EARTH_RADIUS_KM, u[2] * EARTH_RADIUS_KM]
}

#[inline]
pub(crate) fn chord(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Uniform 3-D bucket grid over Earth-centred km coordinates.
pub(crate) struct SpatialHash {
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl SpatialHash {
    pub fn new(points: &[[f64; 3]], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key(p: &[f64; 3], cell: f64) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    /// Indices in the 27 buckets around `p`; covers every point within `cell`.
    pub fn around(&self, p: &[f64; 3]) -> impl Iterator<Item = usize> + '_ {
        let (x, y, z) = Self::key(p, self.cell);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                (-1..=1).flat_map(move |dz| {
                    self.buckets
                        .get(&(x + dx, y + dy, z + dz))
                        .map(|v| v.as_slice())
                        .unwrap_or(&[])
                        .iter()
                        .copied()
                })
            })
        })
    }
}
