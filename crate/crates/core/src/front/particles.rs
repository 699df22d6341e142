//! The discrete wavefront: a closed, counter-clockwise chain of particles.

use log::warn;

use super::hash::{chord, to_km3, SpatialHash};
use super::{SimConfig, WaveParams};
use crate::error::{Error, Result};
use crate::geo::{
    destination, displace, great_circle_km, intermediate, local_offset_km, lon_arc_km, Environment, GeoPoint,
    GridSpec,
};

pub const MIN_PARTICLES: usize = 4;
/// Pairs closer than this many steps along the chain are neighbours for reconnection.
pub const MIN_LOOP_SEPARATION: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Front {
    pub particles: Vec<GeoPoint>,
    /// Particles stopped at the domain boundary.
    pub frozen: Vec<bool>,
    /// Target spacing in degrees of arc (of longitude at the local latitude).
    pub delta_deg: f64,
    pub source: GeoPoint,
}

/// Per-particle velocity components in km/year (local east, north).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Velocity {
    pub east: f64,
    pub north: f64,
    /// Component along the outward normal.
    pub normal: f64,
}

impl Velocity {
    pub fn speed(&self) -> f64 {
        self.east.hypot(self.north)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReconnectReport {
    pub excised: Vec<Vec<GeoPoint>>,
}

impl Front {
    /// `n_init` particles on a circle of `start_radius_km` around the source,
    /// ordered counter-clockwise.
    pub fn init(config: &SimConfig, spec: &GridSpec) -> Result<Self> {
        if !spec.contains(config.source) {
            return Err(Error::OutOfDomain {
                lon: config.source.lon,
                lat: config.source.lat,
            });
        }
        let n = config.n_init.max(MIN_PARTICLES);
        let particles = (0..n)
            .map(|k| {
                let b = -(k as f64) * std::f64::consts::TAU / n as f64;
                destination(config.source, b.rem_euclid(std::f64::consts::TAU), config.start_radius_km)
            })
            .collect();
        let mut front = Self {
            particles,
            frozen: vec![false; n],
            delta_deg: config.delta_deg,
            source: config.source,
        };
        front.ensure_ccw();
        Ok(front)
    }

    pub fn from_points(particles: Vec<GeoPoint>, delta_deg: f64, source: GeoPoint) -> Self {
        let n = particles.len();
        Self {
            particles,
            frozen: vec![false; n],
            delta_deg,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Spacing threshold in km at latitude `lat`.
    pub fn delta_km(&self, lat: f64) -> f64 {
        lon_arc_km(self.delta_deg, lat)
    }

    fn pair_delta_km(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        self.delta_km(0.5 * (a.lat + b.lat))
    }

    /// Signed area (deg², lon scaled by cos of the mean latitude); positive when
    /// counter-clockwise seen from outside the sphere.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.particles)
    }

    pub fn ensure_ccw(&mut self) {
        if self.signed_area() < 0.0 {
            self.particles.reverse();
            self.frozen.reverse();
        }
    }

    pub fn length_km(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| great_circle_km(self.particles[i], self.particles[(i + 1) % n]))
            .sum()
    }

    /// Unit outward normals (east, north): perpendicular to the chord between
    /// each particle's two neighbours, on the outer side of the loop.
    pub fn normals(&self) -> Result<Vec<(f64, f64)>> {
        let n = self.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let p = self.particles[i];
            let (ne, nn) = local_offset_km(p, self.particles[(i + 1) % n]);
            let (pe, pn) = local_offset_km(p, self.particles[(i + n - 1) % n]);
            let (tx, ty) = (ne - pe, nn - pn);
            let m = tx.hypot(ty);
            if !(m > 1e-12) {
                return Err(Error::invalid(format!("degenerate front: neighbours of particle {i} coincide")));
            }
            out.push((ty / m, -tx / m));
        }
        Ok(out)
    }

    /// Normals, resampling once if the chain is degenerate.
    pub fn normals_or_resample(&mut self) -> Result<Vec<(f64, f64)>> {
        match self.normals() {
            Ok(n) => Ok(n),
            Err(_) => {
                self.resample();
                self.normals()
            }
        }
    }

    /// Local front velocity u = U n + V at every particle; frozen particles get zero.
    pub fn velocities(&self, env: &Environment, params: &WaveParams, normals: &[(f64, f64)]) -> Vec<Velocity> {
        self.particles
            .iter()
            .zip(normals)
            .zip(&self.frozen)
            .map(|((&p, &n), &frozen)| {
                if frozen {
                    return Velocity::default();
                }
                local_velocity(env, params, p, n).unwrap_or_default()
            })
            .collect()
    }

    /// Advances every particle by u·dt. Particles whose move would leave the
    /// grid freeze in place. Returns the number of newly frozen particles.
    pub fn step(&mut self, env: &Environment, velocities: &[Velocity], dt: f64) -> usize {
        let spec = env.spec();
        let mut newly = 0;
        for ((p, frozen), v) in self.particles.iter_mut().zip(self.frozen.iter_mut()).zip(velocities) {
            if *frozen {
                continue;
            }
            let q = displace(*p, v.east * dt, v.north * dt);
            if spec.contains(q) {
                *p = q;
            } else {
                *frozen = true;
                newly += 1;
            }
        }
        newly
    }

    /// Removes one of every neighbour pair closer than δ/2, then fills gaps
    /// wider than δ with equally spaced great-circle points.
    pub fn resample(&mut self) {
        let n = self.len();
        if n == 0 {
            return;
        }
        let mut kept: Vec<(GeoPoint, bool)> = Vec::with_capacity(n);
        kept.push((self.particles[0], self.frozen[0]));
        let mut blocked = false;
        for j in 1..n {
            let (last, _) = *kept.last().unwrap();
            let p = self.particles[j];
            let remaining = n - j - 1;
            if great_circle_km(last, p) < 0.5 * self.pair_delta_km(last, p) {
                if kept.len() + remaining >= MIN_PARTICLES {
                    continue;
                }
                blocked = true;
            }
            kept.push((p, self.frozen[j]));
        }
        if kept.len() > MIN_PARTICLES {
            let (last, _) = *kept.last().unwrap();
            let (first, _) = kept[0];
            if great_circle_km(last, first) < 0.5 * self.pair_delta_km(last, first) {
                kept.pop();
            }
        }
        if blocked {
            warn!("resample kept {MIN_PARTICLES} particles although some are closer than δ/2");
        }

        let m = kept.len();
        let mut particles = Vec::with_capacity(m * 2);
        let mut frozen = Vec::with_capacity(m * 2);
        for i in 0..m {
            let (a, fa) = kept[i];
            let (b, _) = kept[(i + 1) % m];
            particles.push(a);
            frozen.push(fa);
            let sep = great_circle_km(a, b);
            let delta = self.pair_delta_km(a, b);
            if sep > delta {
                // 0.98 keeps the pieces strictly under δ so a second pass is a no-op
                let pieces = (sep / (0.98 * delta)).ceil().max(2.0) as usize;
                for k in 1..pieces {
                    particles.push(intermediate(a, b, k as f64 / pieces as f64));
                    frozen.push(false);
                }
            }
        }
        self.particles = particles;
        self.frozen = frozen;
    }

    /// Closest pair of non-neighbour particles nearer than δ, if any.
    pub fn closest_non_neighbour_pair(&self) -> Option<(usize, usize)> {
        let n = self.len();
        if n < 2 * MIN_LOOP_SEPARATION {
            return None;
        }
        let pos: Vec<[f64; 3]> = self.particles.iter().map(|&p| to_km3(p)).collect();
        let cell = self
            .particles
            .iter()
            .map(|p| self.delta_km(p.lat))
            .fold(0.0, f64::max)
            .max(1e-6);
        let hash = SpatialHash::new(&pos, cell);
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in hash.around(&pos[i]) {
                if j <= i {
                    continue;
                }
                let sep = (j - i).min(n - (j - i));
                if sep < MIN_LOOP_SEPARATION || (self.frozen[i] && self.frozen[j]) {
                    continue;
                }
                let d = chord(&pos[i], &pos[j]);
                if d < self.pair_delta_km(self.particles[i], self.particles[j])
                    && best.is_none_or(|(bd, _, _)| d < bd)
                {
                    best = Some((d, i, j));
                }
            }
        }
        best.map(|(_, i, j)| (i, j))
    }

    /// Short-circuits almost-closed loops. Each close non-neighbour pair
    /// splits the chain in two; the loop that advances (counter-clockwise, and
    /// otherwise the one reaching farthest from the source) is kept and the
    /// other is returned as excised.
    pub fn reconnect(&mut self) -> ReconnectReport {
        let mut report = ReconnectReport::default();
        let cap = self.len();
        for _ in 0..cap {
            let Some((i, j)) = self.closest_non_neighbour_pair() else {
                break;
            };
            let n = self.len();
            let a: Vec<usize> = (i + 1..=j).collect();
            let b: Vec<usize> = (j + 1..n).chain(0..=i).collect();
            let pick = |idx: &[usize]| -> Vec<GeoPoint> { idx.iter().map(|&k| self.particles[k]).collect() };
            let (pa, pb) = (pick(&a), pick(&b));
            let keep_a = self.keep_first(&pa, &pb);
            let (keep, drop, drop_pts) = if keep_a { (a, b, pb) } else { (b, a, pa) };
            if keep.len() < MIN_PARTICLES {
                // never shrink the front below a valid loop
                if drop.len() < MIN_PARTICLES {
                    break;
                }
                let particles = drop.iter().map(|&k| self.particles[k]).collect();
                let frozen = drop.iter().map(|&k| self.frozen[k]).collect();
                report.excised.push(keep.iter().map(|&k| self.particles[k]).collect());
                self.particles = particles;
                self.frozen = frozen;
                continue;
            }
            let particles = keep.iter().map(|&k| self.particles[k]).collect();
            let frozen = keep.iter().map(|&k| self.frozen[k]).collect();
            self.particles = particles;
            self.frozen = frozen;
            report.excised.push(drop_pts);
        }
        self.ensure_ccw();
        report
    }

    fn keep_first(&self, a: &[GeoPoint], b: &[GeoPoint]) -> bool {
        let (sa, sb) = (signed_area(a), signed_area(b));
        if (sa > 0.0) != (sb > 0.0) {
            return sa > 0.0;
        }
        let far = |pts: &[GeoPoint]| pts.iter().map(|&p| great_circle_km(self.source, p)).fold(0.0, f64::max);
        far(a) >= far(b)
    }

    pub fn max_distance_from_source(&self) -> f64 {
        self.particles
            .iter()
            .map(|&p| great_circle_km(self.source, p))
            .fold(0.0, f64::max)
    }
}

/// u = U n̂ + V_C sgn(n̂·V̂_C) V̂_C + V_R sgn(n̂·V̂_R) V̂_R at one location.
pub fn local_velocity(env: &Environment, params: &WaveParams, p: GeoPoint, normal: (f64, f64)) -> Result<Velocity> {
    let nu_l = env.diffusivity.bilinear(p)?;
    let u = params.front_speed(if nu_l.is_finite() { nu_l } else { 0.0 });
    let (mut east, mut north) = (u * normal.0, u * normal.1);
    for (speed, field) in [(params.v_coast, &env.coast), (params.v_river, &env.river)] {
        if speed == 0.0 {
            continue;
        }
        let (vx, vy) = field.bilinear(p)?;
        let s = sgn(normal.0 * vx + normal.1 * vy);
        east += speed * s * vx;
        north += speed * s * vy;
    }
    Ok(Velocity {
        east,
        north,
        normal: east * normal.0 + north * normal.1,
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn signed_area(pts: &[GeoPoint]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let lat0 = pts.iter().map(|p| p.lat).sum::<f64>() / n as f64;
    let c = lat0.to_radians().cos();
    let lon0 = pts[0].lon;
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (ax, ay) = ((a.lon - lon0) * c, a.lat);
        let (bx, by) = ((b.lon - lon0) * c, b.lat);
        s += ax * by - bx * ay;
    }
    0.5 * s
}

/// Ray-casting point-in-polygon in a local equirectangular projection.
pub(crate) fn contains_point(poly: &[GeoPoint], p: GeoPoint) -> bool {
    let c = p.lat.to_radians().cos();
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let (ax, ay) = ((a.lon - p.lon) * c, a.lat - p.lat);
        let (bx, by) = ((b.lon - p.lon) * c, b.lat - p.lat);
        if (ay > 0.0) != (by > 0.0) {
            let x = ax + (0.0 - ay) * (bx - ax) / (by - ay);
            if x > 0.0 {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{bearing, GridSpec};

    fn equator_config(n_init: usize) -> SimConfig {
        SimConfig {
            source: GeoPoint::new(0.0, 0.0),
            start_radius_km: 10.0,
            n_init,
            ..SimConfig::default()
        }
    }

    fn grid() -> GridSpec {
        GridSpec::new(-5.0, 5.0, -5.0, 5.0, 1.0 / 15.0).unwrap()
    }

    #[test]
    fn init_four_on_compass_points() {
        let f = Front::init(&equator_config(4), &grid()).unwrap();
        assert_eq!(f.len(), 4);
        let mut bearings: Vec<f64> = f
            .particles
            .iter()
            .map(|&p| bearing(f.source, p).to_degrees().rem_euclid(360.0).round())
            .collect();
        bearings.sort_by(f64::total_cmp);
        assert_eq!(bearings, vec![0.0, 90.0, 180.0, 270.0]);
        for &p in &f.particles {
            assert!((great_circle_km(f.source, p) - 10.0).abs() < 1e-9);
        }
        assert!(f.signed_area() > 0.0);
    }

    #[test]
    fn init_spacing_sixteen() {
        let f = Front::init(&equator_config(16), &grid()).unwrap();
        let gap = great_circle_km(f.particles[0], f.particles[1]);
        // chord of the 10 km circle; arc length 2π·10/16 ≈ 3.93
        assert!((gap - 3.93).abs() < 0.03, "{gap}");
        assert!(f.signed_area() > 0.0);
    }

    #[test]
    fn init_outside_grid() {
        let mut cfg = equator_config(16);
        cfg.source = GeoPoint::new(20.0, 0.0);
        assert!(Front::init(&cfg, &grid()).is_err());
    }

    #[test]
    fn circle_normals_are_radial() {
        let f = Front::init(&equator_config(16), &grid()).unwrap();
        let normals = f.normals().unwrap();
        for (&p, &(ne, nn)) in f.particles.iter().zip(&normals) {
            let radial = bearing(f.source, p);
            // bearing of the outward direction seen from p: continue away from source
            let back = bearing(p, f.source) + std::f64::consts::PI;
            let got = ne.atan2(nn);
            let diff = (got - back).sin().atan2((got - back).cos()).abs().to_degrees();
            assert!(diff < 1.0, "normal off by {diff}° (radial {radial})");
        }
    }

    #[test]
    fn square_corner_normals_diagonal() {
        let o = GeoPoint::new(0.0, 0.0);
        // counter-clockwise square: corner then side midpoint, four times
        let s = 10.0;
        let mut pts = Vec::new();
        for k in 0..2 {
            pts.push(displace(o, -s + k as f64 * s, -s));
        }
        for k in 0..2 {
            pts.push(displace(o, s, -s + k as f64 * s));
        }
        for k in 0..2 {
            pts.push(displace(o, s - k as f64 * s, s));
        }
        for k in 0..2 {
            pts.push(displace(o, -s, s - k as f64 * s));
        }
        let f = Front::from_points(pts, 1.0 / 15.0, o);
        assert!(f.signed_area() > 0.0);
        let normals = f.normals().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [(-h, -h), (h, -h), (h, h), (-h, h)];
        for (corner, (ex, ey)) in [0, 2, 4, 6].into_iter().zip(expect) {
            let (x, y) = normals[corner];
            assert!((x - ex).abs() < 1e-3 && (y - ey).abs() < 1e-3, "corner {corner}: {x},{y}");
        }
    }

    #[test]
    fn ellipse_vertex_normal_along_major_axis() {
        let o = GeoPoint::new(0.0, 0.0);
        let n = 64;
        let pts: Vec<GeoPoint> = (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                displace(o, 40.0 * t.cos(), 20.0 * t.sin())
            })
            .collect();
        let f = Front::from_points(pts, 1.0 / 15.0, o);
        let normals = f.normals().unwrap();
        // analytic normal at the semi-major vertex (t = 0) is (1, 0)
        let (x, y) = normals[0];
        assert!(y.atan2(x).to_degrees().abs() < 1.0);
        let (x, y) = normals[n / 2];
        assert!((y.atan2(x).to_degrees().abs() - 180.0).abs() < 1.0);
    }

    fn straight_chain(spacings: &[f64]) -> Front {
        // closed loop: a long out-and-back with the given spacings on the outbound leg
        let o = GeoPoint::new(0.0, 0.0);
        let mut pts = vec![o];
        let mut x = 0.0;
        for s in spacings {
            x += s;
            pts.push(displace(o, x, 0.0));
        }
        Front::from_points(pts, 1.0 / 15.0, o)
    }

    #[test]
    fn resample_fixed_point() {
        let d = lon_arc_km(1.0 / 15.0, 0.0);
        let f0 = Front::init(&equator_config(12), &grid()).unwrap();
        let gap = great_circle_km(f0.particles[0], f0.particles[1]);
        assert!(gap >= 0.5 * d && gap <= d);
        let mut f = f0.clone();
        f.resample();
        assert_eq!(f, f0);
    }

    #[test]
    fn resample_inserts_midpoint() {
        let d = lon_arc_km(1.0 / 15.0, 0.0);
        // ring of 4 with one long gap on a large square
        let o = GeoPoint::new(0.0, 0.0);
        let pts = vec![
            displace(o, 0.0, 0.0),
            displace(o, 1.5 * d, 0.0),
            displace(o, 1.5 * d, 0.8 * d),
            displace(o, 0.75 * d, 0.8 * d),
            displace(o, 0.0, 0.8 * d),
        ];
        let mut f = Front::from_points(pts, 1.0 / 15.0, o);
        f.resample();
        assert_eq!(f.len(), 6);
        let g1 = great_circle_km(f.particles[0], f.particles[1]);
        let g2 = great_circle_km(f.particles[1], f.particles[2]);
        assert!((g1 - 0.75 * d).abs() < 1e-6 && (g2 - 0.75 * d).abs() < 1e-6);
    }

    #[test]
    fn resample_removes_alternate() {
        let d = lon_arc_km(1.0 / 15.0, 0.0);
        let n = 40;
        let r = 0.4 * d * n as f64 / std::f64::consts::TAU;
        let mut cfg = equator_config(n);
        cfg.start_radius_km = r;
        let f0 = Front::init(&cfg, &grid()).unwrap();
        let mut f = f0.clone();
        f.resample();
        assert_eq!(f.len(), n / 2);
        for (k, p) in f.particles.iter().enumerate() {
            assert_eq!(*p, f0.particles[2 * k]);
        }
    }

    #[test]
    fn resample_keeps_minimum() {
        let mut f = straight_chain(&[0.1, 0.1, 0.1, 0.1]);
        f.resample();
        assert_eq!(f.len(), MIN_PARTICLES);
    }

    #[test]
    fn reconnect_noop_on_circle() {
        let mut f = Front::init(&equator_config(16), &grid()).unwrap();
        let before = f.clone();
        let report = f.reconnect();
        assert!(report.excised.is_empty());
        assert_eq!(f, before);
    }

    #[test]
    fn reconnect_horseshoe() {
        // a C-shaped loop whose two tips almost touch: outer arc radius 60 km,
        // inner arc radius 40 km, tips 3 km apart on the east side
        let o = GeoPoint::new(0.0, 0.0);
        let d = lon_arc_km(1.0 / 15.0, 0.0);
        let gap_half = (1.5 / 50.0_f64).asin();
        let mut pts = Vec::new();
        let arc = |r: f64, a0: f64, a1: f64, pts: &mut Vec<GeoPoint>| {
            let n = ((r * (a1 - a0).abs()) / (0.7 * d)).ceil() as usize;
            for k in 0..=n {
                let a = a0 + (a1 - a0) * k as f64 / n as f64;
                pts.push(displace(o, r * a.cos(), r * a.sin()));
            }
        };
        arc(60.0, gap_half, std::f64::consts::TAU - gap_half, &mut pts);
        arc(40.0, std::f64::consts::TAU - gap_half, gap_half, &mut pts);
        let mut f = Front::from_points(pts, 1.0 / 15.0, GeoPoint::new(-3.0, 0.0));
        f.resample();
        f.ensure_ccw();
        let n_before = f.len();
        let len_before = f.length_km();
        let report = f.reconnect();
        assert!(!report.excised.is_empty());
        assert!(f.len() < n_before);
        assert!(f.length_km() < len_before);
        assert!(f.len() >= MIN_PARTICLES);
        assert!(f.signed_area() > 0.0);
        assert!(f.closest_non_neighbour_pair().is_none());
    }

    #[test]
    fn containment() {
        let o = GeoPoint::new(10.0, 45.0);
        let sq: Vec<GeoPoint> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .iter()
            .map(|&(x, y)| displace(o, 10.0 * x, 10.0 * y))
            .collect();
        assert!(contains_point(&sq, o));
        assert!(!contains_point(&sq, displace(o, 20.0, 0.0)));
    }
}
