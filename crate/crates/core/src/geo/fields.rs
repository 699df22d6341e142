//! Derived environment fields: distance to land, diffusivity, tangent remapping.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::grid::{GridSpec, ScalarField, VectorField};
use super::sphere::{bearing, great_circle_km, GeoPoint, EARTH_RADIUS_KM};
use crate::error::{Error, Result};

/// Decay scale of sea-crossing diffusivity, km.
pub const SEA_DECAY_KM: f64 = 10.0;
/// Weighting scale for tangent remapping, km.
pub const TANGENT_SCALE_KM: f64 = 15.0;
/// Pre-normalization magnitude below which a node gets the zero vector.
pub const TANGENT_ZERO_THRESHOLD: f64 = 1e-6;
// exp(-d/15) < 1e-10 beyond this; cannot lift a node over the zero threshold.
const TANGENT_CUTOFF_KM: f64 = 350.0;

#[derive(Clone, Copy, PartialEq)]
struct Visit {
    dist: f64,
    cell: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Great-circle distance (km) from every sea cell (altitude < 0) to the nearest
/// land cell, by a multi-source shortest-path sweep over the 8-connected grid.
/// Missing altitudes (NaN) count as sea.
pub fn distance_to_land(altitude: &ScalarField) -> Result<ScalarField> {
    let spec = altitude.spec;
    let mut dist = vec![f64::INFINITY; spec.len()];
    let mut heap = BinaryHeap::new();
    for (i, &a) in altitude.values.iter().enumerate() {
        if a >= 0.0 {
            dist[i] = 0.0;
            heap.push(Visit { dist: 0.0, cell: i });
        }
    }
    if heap.is_empty() {
        return Err(Error::NoLand);
    }
    let nodes: Vec<GeoPoint> = (0..spec.len())
        .map(|i| spec.node(i / spec.n_lon, i % spec.n_lon))
        .collect();
    while let Some(Visit { dist: d, cell }) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        let (row, col) = (cell / spec.n_lon, cell % spec.n_lon);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (r, c) = (row as i64 + dr, col as i64 + dc);
                if r < 0 || c < 0 || r >= spec.n_lat as i64 || c >= spec.n_lon as i64 {
                    continue;
                }
                let next = spec.index(r as usize, c as usize);
                let nd = d + great_circle_km(nodes[cell], nodes[next]);
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(Visit { dist: nd, cell: next });
                }
            }
        }
    }
    ScalarField::new(spec, dist)
}

/// Dimensionless diffusivity at one location. `altitude_km <= 0` takes the
/// sea branch; a NaN altitude gives zero.
pub fn dimensionless_diffusivity(lat: f64, altitude_km: f64, d_land_km: f64) -> f64 {
    if altitude_km.is_nan() {
        return 0.0;
    }
    let lat_factor = 1.25 - lat / 100.0;
    let shape = if altitude_km > 0.0 {
        0.5 - 0.5 * (10.0 * (altitude_km - 1.0)).tanh()
    } else {
        (-d_land_km / SEA_DECAY_KM).exp()
    };
    (lat_factor * shape).max(0.0)
}

pub fn build_diffusivity(altitude: &ScalarField, d_land: &ScalarField) -> Result<ScalarField> {
    if altitude.spec != d_land.spec {
        return Err(Error::invalid("altitude and distance-to-land grids differ"));
    }
    let spec = altitude.spec;
    let mut values = Vec::with_capacity(spec.len());
    for row in 0..spec.n_lat {
        let lat = spec.node_lat(row);
        for col in 0..spec.n_lon {
            let i = spec.index(row, col);
            values.push(dimensionless_diffusivity(lat, altitude.values[i], d_land.values[i]));
        }
    }
    ScalarField::new(spec, values)
}

/// Unit tangents at polyline data points: chord direction to the next point
/// (the last point reuses the final chord), as local (east, north).
pub fn polyline_tangents(path: &[GeoPoint]) -> Result<Vec<(GeoPoint, (f64, f64))>> {
    if path.len() < 2 {
        return Err(Error::invalid("polyline needs at least two points"));
    }
    let mut out = Vec::with_capacity(path.len());
    for (k, &p) in path.iter().enumerate() {
        let b = if k + 1 < path.len() {
            bearing(p, path[k + 1])
        } else {
            // reverse of the bearing from the last point back to its predecessor
            bearing(p, path[k - 1]) + std::f64::consts::PI
        };
        out.push((p, (b.sin(), b.cos())));
    }
    Ok(out)
}

/// Remaps polyline tangents onto grid nodes with weights exp(-d/15 km),
/// renormalizing each node sum to unit length.
pub fn remap_tangents(polylines: &[Vec<GeoPoint>], spec: GridSpec) -> Result<VectorField> {
    let mut field = VectorField::zeros(spec);
    let mut points = Vec::new();
    for path in polylines {
        points.extend(polyline_tangents(path)?);
    }
    if points.is_empty() {
        return Ok(field);
    }
    let km_per_deg = EARTH_RADIUS_KM.to_radians();
    let dlat = TANGENT_CUTOFF_KM / km_per_deg;
    for (p, (tx, ty)) in points {
        let lat_hi = (p.lat + dlat).min(89.0);
        let lat_lo = (p.lat - dlat).max(-89.0);
        let cos_min = lat_hi.abs().max(lat_lo.abs()).to_radians().cos().max(1e-3);
        let dlon = TANGENT_CUTOFF_KM / (km_per_deg * cos_min);
        let rows = index_range(lat_lo, lat_hi, spec.lat_min, spec.cell_size, spec.n_lat);
        let cols = index_range(p.lon - dlon, p.lon + dlon, spec.lon_min, spec.cell_size, spec.n_lon);
        for row in rows {
            for col in cols.clone() {
                let d = great_circle_km(p, spec.node(row, col));
                if d > TANGENT_CUTOFF_KM {
                    continue;
                }
                let w = (-d / TANGENT_SCALE_KM).exp();
                let i = spec.index(row, col);
                field.vx[i] += w * tx;
                field.vy[i] += w * ty;
            }
        }
    }
    for i in 0..spec.len() {
        let m = field.vx[i].hypot(field.vy[i]);
        if m < TANGENT_ZERO_THRESHOLD {
            field.vx[i] = 0.0;
            field.vy[i] = 0.0;
        } else {
            field.vx[i] /= m;
            field.vy[i] /= m;
        }
    }
    Ok(field)
}

fn index_range(lo: f64, hi: f64, origin: f64, cell: f64, n: usize) -> std::ops::Range<usize> {
    let a = ((lo - origin) / cell - 0.5).floor().max(0.0) as usize;
    let b = (((hi - origin) / cell - 0.5).ceil() + 1.0).max(0.0) as usize;
    a.min(n)..b.min(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::sphere::displace;

    fn equator_strip() -> GridSpec {
        GridSpec::from_corner(0.0, -1.0 / 30.0, 1.0 / 15.0, 4, 1).unwrap()
    }

    #[test]
    fn land_cells_are_zero_and_neighbour_is_one_cell() {
        let spec = equator_strip();
        let alt = ScalarField::new(spec, vec![0.2, -0.1, -0.1, -0.1]).unwrap();
        let d = distance_to_land(&alt).unwrap();
        assert_eq!(d.values[0], 0.0);
        let expected = (1.0 / 15.0_f64).to_radians() * 6371.0;
        assert!((d.values[1] - expected).abs() < 1e-9);
        assert!((d.values[1] - 7.413).abs() < 1e-3);
        assert!((d.values[3] - 3.0 * expected).abs() < 1e-9);
    }

    #[test]
    fn all_land_and_all_sea() {
        let spec = equator_strip();
        let d = distance_to_land(&ScalarField::constant(spec, 0.3)).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
        assert!(matches!(
            distance_to_land(&ScalarField::constant(spec, -1.0)),
            Err(Error::NoLand)
        ));
    }

    #[test]
    fn diffusivity_examples() {
        assert!((dimensionless_diffusivity(25.0, 1.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((dimensionless_diffusivity(25.0, -0.2, 0.0) - 1.0).abs() < 1e-15);
        let v = dimensionless_diffusivity(45.0, 0.5, 0.0);
        let oracle = 0.8 * (0.5 - 0.5 * (-5.0_f64).tanh());
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.799964).abs() < 1e-6);
        // a = 0 goes to the sea branch with d = 0
        assert_eq!(dimensionless_diffusivity(25.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn diffusivity_bounds_and_cutoff() {
        for i in 0..200 {
            let lat = 25.0 + 50.0 * (i as f64) / 200.0;
            for &(a, d) in &[(-0.5, 30.0), (0.0, 0.0), (0.4, 0.0), (1.6, 0.0), (3.0, 0.0)] {
                let v = dimensionless_diffusivity(lat, a, d);
                assert!(v >= 0.0 && v <= 1.25 - 25.0 / 100.0);
                assert!(dimensionless_diffusivity(lat + 1.0, a, d) <= v);
                if a > 1.5 {
                    assert!(v < 0.01 * (1.25 - lat / 100.0));
                }
            }
        }
    }

    #[test]
    fn tangents_east_west_line() {
        let spec = GridSpec::from_corner(-0.5, -0.5, 1.0 / 15.0, 15, 15).unwrap();
        let node = spec.node(7, 7);
        let line: Vec<GeoPoint> = (-3..=3)
            .map(|k| GeoPoint::new(node.lon + 0.05 * k as f64, node.lat))
            .collect();
        let f = remap_tangents(&[line], spec).unwrap();
        let (x, y) = f.get(7, 7);
        assert!((x - 1.0).abs() < 1e-6 && y.abs() < 1e-6);
        assert!(f.max_unit_deviation() < 1e-6);
    }

    #[test]
    fn tangents_empty_is_zero() {
        let spec = GridSpec::from_corner(0.0, 0.0, 0.1, 5, 5).unwrap();
        assert!(remap_tangents(&[], spec).unwrap().is_zero());
    }

    #[test]
    fn single_point_fifteen_km_away() {
        let spec = GridSpec::from_corner(0.0, 0.0, 1.0, 1, 1).unwrap();
        let node = spec.node(0, 0);
        // two-point path pointing north, placed so only its first point is 15 km west of the node
        let p0 = displace(node, -15.0, 0.0);
        let p1 = displace(p0, 0.0, 1000.0);
        let pts = polyline_tangents(&[p0, p1]).unwrap();
        let (tx, ty) = pts[0].1;
        let w = (-great_circle_km(p0, node) / TANGENT_SCALE_KM).exp();
        assert!((w - (-1.0_f64).exp()).abs() < 1e-9);
        assert!(tx.abs() < 1e-9 && (ty - 1.0).abs() < 1e-9);
        let f = remap_tangents(&[vec![p0, p1]], spec).unwrap();
        let (x, y) = f.get(0, 0);
        assert!(x.abs() < 1e-6 && (y - 1.0).abs() < 1e-6);
    }

    #[test]
    fn short_polyline_rejected() {
        let spec = GridSpec::from_corner(0.0, 0.0, 0.1, 5, 5).unwrap();
        assert!(remap_tangents(&[vec![GeoPoint::new(0.1, 0.1)]], spec).is_err());
    }
}
