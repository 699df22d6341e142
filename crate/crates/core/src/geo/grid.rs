//! Regular lon/lat rasters and bilinear lookup.
//!
//! Values live at cell centres. Row 0 is the southernmost row; file I/O
//! flips to the north-to-south order of ESRI grids.

use serde::{Deserialize, Serialize};

use super::sphere::GeoPoint;
use crate::error::{Error, Result};

/// 4 arc-minutes.
pub const DEFAULT_CELL_DEG: f64 = 1.0 / 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub cell_size: f64,
    pub n_lon: usize,
    pub n_lat: usize,
}

impl GridSpec {
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::invalid("cell_size must be positive"));
        }
        if !(lon_min < lon_max) || !(lat_min < lat_max) {
            return Err(Error::invalid("grid bounds must satisfy min < max"));
        }
        if lat_min <= -90.0 || lat_max >= 90.0 {
            return Err(Error::invalid("latitude bounds must lie strictly inside (-90, 90)"));
        }
        let n_lon = ((lon_max - lon_min) / cell_size).round() as usize;
        let n_lat = ((lat_max - lat_min) / cell_size).round() as usize;
        if n_lon == 0 || n_lat == 0 {
            return Err(Error::invalid("grid has no cells"));
        }
        Ok(Self {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
            cell_size,
            n_lon,
            n_lat,
        })
    }

    /// Grid with lower-left corner, cell size and cell counts (ESRI header form).
    pub fn from_corner(lon_min: f64, lat_min: f64, cell_size: f64, n_lon: usize, n_lat: usize) -> Result<Self> {
        Self::new(
            lon_min,
            lon_min + cell_size * n_lon as f64,
            lat_min,
            lat_min + cell_size * n_lat as f64,
            cell_size,
        )
    }

    pub fn len(&self) -> usize {
        self.n_lon * self.n_lat
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n_lon + col
    }

    pub fn node_lon(&self, col: usize) -> f64 {
        self.lon_min + (col as f64 + 0.5) * self.cell_size
    }

    pub fn node_lat(&self, row: usize) -> f64 {
        self.lat_min + (row as f64 + 0.5) * self.cell_size
    }

    pub fn node(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint::new(self.node_lon(col), self.node_lat(row))
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.lon_min && p.lon <= self.lon_max && p.lat >= self.lat_min && p.lat <= self.lat_max
    }

    /// Enclosing node cell of `p`: lower indices and fractional offsets.
    /// Points in the outer half-cell clamp to the edge nodes.
    fn locate(&self, p: GeoPoint) -> Result<(usize, usize, f64, f64)> {
        if !self.contains(p) || !p.lon.is_finite() || !p.lat.is_finite() {
            return Err(Error::OutOfDomain { lon: p.lon, lat: p.lat });
        }
        let (c0, fx) = axis(( p.lon - self.lon_min) / self.cell_size - 0.5, self.n_lon);
        let (r0, fy) = axis((p.lat - self.lat_min) / self.cell_size - 0.5, self.n_lat);
        Ok((r0, c0, fx, fy))
    }
}

fn axis(x: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let x = x.clamp(0.0, (n - 1) as f64);
    let i0 = (x.floor() as usize).min(n - 2);
    (i0, x - i0 as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::invalid(format!(
                "field has {} values but grid has {} cells",
                values.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self {
            values: vec![value; spec.len()],
            spec,
        }
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(GeoPoint) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        for row in 0..spec.n_lat {
            for col in 0..spec.n_lon {
                values.push(f(spec.node(row, col)));
            }
        }
        Self { spec, values }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.spec.index(row, col)]
    }

    pub fn bilinear(&self, p: GeoPoint) -> Result<f64> {
        let (r0, c0, fx, fy) = self.spec.locate(p)?;
        Ok(blend(|r, c| self.get(r, c), &self.spec, r0, c0, fx, fy))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn blend(get: impl Fn(usize, usize) -> f64, spec: &GridSpec, r0: usize, c0: usize, fx: f64, fy: f64) -> f64 {
    let r1 = (r0 + 1).min(spec.n_lat - 1);
    let c1 = (c0 + 1).min(spec.n_lon - 1);
    get(r0, c0) * (1.0 - fx) * (1.0 - fy)
        + get(r0, c1) * fx * (1.0 - fy)
        + get(r1, c0) * (1.0 - fx) * fy
        + get(r1, c1) * fx * fy
}

/// Unit-or-zero tangent field in local (east, north) components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub spec: GridSpec,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            vx: vec![0.0; spec.len()],
            vy: vec![0.0; spec.len()],
            spec,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> (f64, f64) {
        let i = self.spec.index(row, col);
        (self.vx[i], self.vy[i])
    }

    /// Componentwise bilinear value; not renormalized.
    pub fn bilinear(&self, p: GeoPoint) -> Result<(f64, f64)> {
        let (r0, c0, fx, fy) = self.spec.locate(p)?;
        let x = blend(|r, c| self.vx[self.spec.index(r, c)], &self.spec, r0, c0, fx, fy);
        let y = blend(|r, c| self.vy[self.spec.index(r, c)], &self.spec, r0, c0, fx, fy);
        Ok((x, y))
    }

    pub fn is_zero(&self) -> bool {
        self.vx.iter().chain(&self.vy).all(|&v| v == 0.0)
    }

    /// Largest deviation of any non-zero node from unit length.
    pub fn max_unit_deviation(&self) -> f64 {
        self.vx
            .iter()
            .zip(&self.vy)
            .filter(|(x, y)| **x != 0.0 || **y != 0.0)
            .map(|(x, y)| (x * x + y * y - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cell() -> GridSpec {
        GridSpec::new(0.0, 2.0, 0.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn grid_counts_round() {
        let g = GridSpec::new(-15.0, 60.0, 25.0, 75.0, DEFAULT_CELL_DEG).unwrap();
        assert_eq!((g.n_lon, g.n_lat), (1125, 750));
        assert!(GridSpec::new(1.0, 0.0, 0.0, 1.0, 0.1).is_err());
        assert!(GridSpec::new(0.0, 1.0, -90.0, 1.0, 0.1).is_err());
        assert!(GridSpec::new(0.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bilinear_at_node_and_centre() {
        let spec = unit_cell();
        let f = ScalarField::new(spec, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(f.bilinear(spec.node(1, 0)).unwrap(), 1.0);
        assert_eq!(f.bilinear(GeoPoint::new(1.0, 1.0)).unwrap(), 0.5);
    }

    #[test]
    fn bilinear_fractional_offsets() {
        let spec = unit_cell();
        let f = ScalarField::new(spec, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = GeoPoint::new(0.5 + 0.25, 0.5 + 0.75);
        assert!((f.bilinear(p).unwrap() - 2.75).abs() < 1e-12);
    }

    #[test]
    fn bilinear_out_of_domain() {
        let f = ScalarField::constant(unit_cell(), 1.0);
        assert!(matches!(
            f.bilinear(GeoPoint::new(-0.1, 1.0)),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn bilinear_exact_on_affine() {
        let spec = GridSpec::new(3.0, 7.0, 40.0, 43.0, 0.5).unwrap();
        let f = ScalarField::from_fn(spec, |p| 2.0 * p.lon - 3.0 * p.lat + 1.0);
        for &(lon, lat) in &[(3.3, 40.3), (4.1, 41.77), (6.2, 42.5)] {
            let v = f.bilinear(GeoPoint::new(lon, lat)).unwrap();
            assert!((v - (2.0 * lon - 3.0 * lat + 1.0)).abs() < 1e-9);
        }
    }
}
