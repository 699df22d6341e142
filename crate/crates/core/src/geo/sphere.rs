//! Spherical geometry on a sphere of fixed mean Earth radius.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Longitude/latitude position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    /// Unit vector in Earth-centred Cartesian coordinates.
    pub fn to_unit(self) -> [f64; 3] {
        let (lon, lat) = (self.lon.to_radians(), self.lat.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    pub fn from_unit(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let z = (v[2] / norm).clamp(-1.0, 1.0);
        Self {
            lon: v[1].atan2(v[0]).to_degrees(),
            lat: z.asin().to_degrees(),
        }
    }
}

/// Haversine great-circle distance in km.
pub fn great_circle_km(p1: GeoPoint, p2: GeoPoint) -> f64 {
    let (lat1, lat2) = (p1.lat.to_radians(), p2.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (p2.lon - p1.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Initial bearing from `from` to `to`, radians clockwise from north.
pub fn bearing(from: GeoPoint, to: GeoPoint) -> f64 {
    let (lat1, lat2) = (from.lat.to_radians(), to.lat.to_radians());
    let dlon = (to.lon - from.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    y.atan2(x)
}

/// Point reached by travelling `dist_km` along the great circle leaving `from`
/// at `bearing` (radians clockwise from north).
pub fn destination(from: GeoPoint, bearing: f64, dist_km: f64) -> GeoPoint {
    let delta = dist_km / EARTH_RADIUS_KM;
    let lat1 = from.lat.to_radians();
    let lon1 = from.lon.to_radians();
    let sin_lat2 = lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * bearing.cos();
    let lat2 = sin_lat2.clamp(-1.0, 1.0).asin();
    let lon2 = lon1
        + (bearing.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * sin_lat2);
    GeoPoint::new(lon2.to_degrees(), lat2.to_degrees())
}

/// Moves `from` by a local (east, north) displacement in km.
pub fn displace(from: GeoPoint, east_km: f64, north_km: f64) -> GeoPoint {
    let dist = east_km.hypot(north_km);
    if dist == 0.0 {
        return from;
    }
    destination(from, east_km.atan2(north_km), dist)
}

/// Azimuthal-equidistant (east, north) offset in km of `to` as seen from `from`.
pub fn local_offset_km(from: GeoPoint, to: GeoPoint) -> (f64, f64) {
    let d = great_circle_km(from, to);
    if d == 0.0 {
        return (0.0, 0.0);
    }
    let b = bearing(from, to);
    (d * b.sin(), d * b.cos())
}

/// Point at fraction `f` along the great circle from `p1` to `p2`.
pub fn intermediate(p1: GeoPoint, p2: GeoPoint, f: f64) -> GeoPoint {
    let a = p1.to_unit();
    let b = p2.to_unit();
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    if omega < 1e-12 {
        return p1;
    }
    let s = omega.sin();
    let wa = ((1.0 - f) * omega).sin() / s;
    let wb = (f * omega).sin() / s;
    GeoPoint::from_unit([
        wa * a[0] + wb * b[0],
        wa * a[1] + wb * b[1],
        wa * a[2] + wb * b[2],
    ])
}

pub fn midpoint(p1: GeoPoint, p2: GeoPoint) -> GeoPoint {
    intermediate(p1, p2, 0.5)
}

/// Length in km of an arc of `deg` degrees of longitude at latitude `lat`.
pub fn lon_arc_km(deg: f64, lat: f64) -> f64 {
    deg.to_radians() * EARTH_RADIUS_KM * lat.to_radians().cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let o = GeoPoint::new(0.0, 0.0);
        assert_eq!(great_circle_km(o, o), 0.0);
        let anti = great_circle_km(o, GeoPoint::new(180.0, 0.0));
        assert!((anti - std::f64::consts::PI * 6371.0).abs() < 1e-6);
        assert!((anti - 20015.1).abs() < 0.1);
        let one = great_circle_km(o, GeoPoint::new(1.0, 0.0));
        assert!((one - 111.19).abs() < 0.01);
        assert!((one - 6371.0_f64 * std::f64::consts::PI / 180.0).abs() < 1e-9);
    }

    #[test]
    fn destination_round_trips_offset() {
        let p = GeoPoint::new(12.0, 48.0);
        let q = displace(p, 30.0, -40.0);
        let (e, n) = local_offset_km(p, q);
        assert!((e - 30.0).abs() < 1e-6 && (n + 40.0).abs() < 1e-6);
    }

    #[test]
    fn midpoint_is_equidistant() {
        let a = GeoPoint::new(-3.0, 40.0);
        let b = GeoPoint::new(5.0, 44.0);
        let m = midpoint(a, b);
        assert!((great_circle_km(a, m) - great_circle_km(m, b)).abs() < 1e-9);
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-180.0..180.0f64, -89.0..89.0f64).prop_map(|(lon, lat)| GeoPoint::new(lon, lat))
    }

    proptest! {
        #[test]
        fn symmetric_and_triangle(a in point(), b in point(), c in point()) {
            let ab = great_circle_km(a, b);
            let ba = great_circle_km(b, a);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
            let ac = great_circle_km(a, c);
            let cb = great_circle_km(c, b);
            prop_assert!(ab <= (ac + cb) * (1.0 + 1e-9) + 1e-9);
        }
    }
}
