//! Synthetic terrain: flat land or sea, half-plane seas, Gaussian hills,
//! raised discs and straight rivers.

use super::grid::{GridSpec, ScalarField};
use super::sphere::{great_circle_km, intermediate, GeoPoint};

#[derive(Debug, Clone)]
pub struct Terrain {
    pub altitude: ScalarField,
    pub coasts: Vec<Vec<GeoPoint>>,
    pub rivers: Vec<Vec<GeoPoint>>,
}

#[derive(Debug, Clone)]
pub struct TerrainBuilder {
    spec: GridSpec,
    altitude: Vec<f64>,
    coasts: Vec<Vec<GeoPoint>>,
    rivers: Vec<Vec<GeoPoint>>,
    spacing_km: f64,
}

impl TerrainBuilder {
    /// Flat land at `altitude_km` (use a negative value for open sea).
    pub fn flat(spec: GridSpec, altitude_km: f64) -> Self {
        Self {
            spec,
            altitude: vec![altitude_km; spec.len()],
            coasts: Vec::new(),
            rivers: Vec::new(),
            spacing_km: 10.0,
        }
    }

    /// Spacing of generated polyline data points.
    pub fn polyline_spacing_km(mut self, km: f64) -> Self {
        self.spacing_km = km;
        self
    }

    fn set_where(&mut self, pred: impl Fn(GeoPoint) -> bool, alt: f64) {
        for row in 0..self.spec.n_lat {
            for col in 0..self.spec.n_lon {
                if pred(self.spec.node(row, col)) {
                    self.altitude[self.spec.index(row, col)] = alt;
                }
            }
        }
    }

    /// Sea of depth `depth_km` west of `lon`, with the meridian coastline recorded.
    pub fn sea_west_of(mut self, lon: f64, depth_km: f64) -> Self {
        self.set_where(|p| p.lon < lon, -depth_km.abs());
        let s = self.spec;
        let line = self.segment(GeoPoint::new(lon, s.lat_min), GeoPoint::new(lon, s.lat_max));
        self.coasts.push(line);
        self
    }

    /// Sea south of `lat`, with the parallel coastline recorded.
    pub fn sea_south_of(mut self, lat: f64, depth_km: f64) -> Self {
        self.set_where(|p| p.lat < lat, -depth_km.abs());
        let s = self.spec;
        let n = ((s.lon_max - s.lon_min) * 111.0 * lat.to_radians().cos() / self.spacing_km).ceil().max(1.0) as usize;
        let line = (0..=n)
            .map(|k| GeoPoint::new(s.lon_min + (s.lon_max - s.lon_min) * k as f64 / n as f64, lat))
            .collect();
        self.coasts.push(line);
        self
    }

    /// Adds a Gaussian hill exp(-d²/r²) of `peak_km` to every cell.
    pub fn hill(mut self, centre: GeoPoint, peak_km: f64, radius_km: f64) -> Self {
        for row in 0..self.spec.n_lat {
            for col in 0..self.spec.n_lon {
                let d = great_circle_km(centre, self.spec.node(row, col));
                self.altitude[self.spec.index(row, col)] += peak_km * (-(d * d) / (radius_km * radius_km)).exp();
            }
        }
        self
    }

    /// Raised disc of constant altitude; 3 km makes an impassable island.
    pub fn plateau(mut self, centre: GeoPoint, radius_km: f64, altitude_km: f64) -> Self {
        self.set_where(|p| great_circle_km(centre, p) <= radius_km, altitude_km);
        self
    }

    /// Straight great-circle river from `from` to `to`.
    pub fn river(mut self, from: GeoPoint, to: GeoPoint) -> Self {
        let line = self.segment(from, to);
        self.rivers.push(line);
        self
    }

    pub fn coastline(mut self, path: Vec<GeoPoint>) -> Self {
        self.coasts.push(path);
        self
    }

    fn segment(&self, from: GeoPoint, to: GeoPoint) -> Vec<GeoPoint> {
        let n = (great_circle_km(from, to) / self.spacing_km).ceil().max(1.0) as usize;
        (0..=n).map(|k| intermediate(from, to, k as f64 / n as f64)).collect()
    }

    pub fn build(self) -> Terrain {
        Terrain {
            altitude: ScalarField {
                spec: self.spec,
                values: self.altitude,
            },
            coasts: self.coasts,
            rivers: self.rivers,
        }
    }
}
