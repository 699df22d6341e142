//! Dated site records and their precision-weighted summaries.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Default source date, years BC.
pub const DEFAULT_START_BC: f64 = 6572.0;

/// Largest coordinate disagreement tolerated between rows of one site, degrees.
const LOCATION_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedSample {
    pub site_id: String,
    /// Calendar date, years BC.
    pub t: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub name: String,
    pub location: GeoPoint,
    pub samples: Vec<DatedSample>,
    /// Weighted date, years BC.
    pub t_summary: f64,
    pub sigma_summary: f64,
}

impl SiteRecord {
    pub fn m(&self) -> usize {
        self.samples.len()
    }

    /// Summary date as years elapsed since `start_bc`.
    pub fn elapsed(&self, start_bc: f64) -> f64 {
        to_elapsed(self.t_summary, start_bc)
    }
}

/// Precision-weighted mean and pooled standard deviation:
/// t = Σ t_j σ_j⁻² / Σ σ_j⁻², σ² = 1 / Σ σ_j⁻².
pub fn summarize(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot summarise an empty sample list"));
    }
    let mut w_sum = 0.0;
    let mut wt_sum = 0.0;
    for &(t, s) in samples {
        if !(s > 0.0) || !t.is_finite() {
            return Err(Error::invalid(format!("sample ({t}, {s}) needs finite t and σ > 0")));
        }
        let w = 1.0 / (s * s);
        w_sum += w;
        wt_sum += w * t;
    }
    Ok((wt_sum / w_sum, w_sum.recip().sqrt()))
}

/// Years elapsed since the source date (BC dates count down toward the present).
pub fn to_elapsed(t_bc: f64, start_bc: f64) -> f64 {
    start_bc - t_bc
}

pub fn from_elapsed(elapsed: f64, start_bc: f64) -> f64 {
    start_bc - elapsed
}

#[derive(Debug, Deserialize)]
struct Row {
    site_id: String,
    #[serde(default)]
    name: String,
    lon: f64,
    lat: f64,
    t_bc: f64,
    sigma: f64,
}

/// Reads `site_id,name,lon,lat,t_bc,sigma`, one row per dated object, and
/// groups rows into sites in order of first appearance.
///
/// With `sigma_floor` set, each site's summary σ is raised to at least that value.
pub fn load_sites(path: &Path, sigma_floor: Option<f64>) -> Result<Vec<SiteRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_sites(&text, &path.display().to_string(), sigma_floor)
}

pub fn parse_sites(text: &str, origin: &str, sigma_floor: Option<f64>) -> Result<Vec<SiteRecord>> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (String, GeoPoint, Vec<DatedSample>)> = BTreeMap::new();
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| malformed(line, e.to_string()))?;
        if !(row.sigma > 0.0) || !row.t_bc.is_finite() || !row.lon.is_finite() || !row.lat.is_finite() {
            return Err(malformed(line, format!("bad values for site {}", row.site_id)));
        }
        let loc = GeoPoint::new(row.lon, row.lat);
        let entry = groups.entry(row.site_id.clone()).or_insert_with(|| {
            order.push(row.site_id.clone());
            (row.name.clone(), loc, Vec::new())
        });
        if (entry.1.lon - loc.lon).abs() > LOCATION_TOLERANCE_DEG || (entry.1.lat - loc.lat).abs() > LOCATION_TOLERANCE_DEG {
            return Err(malformed(line, format!("site {} has inconsistent location", row.site_id)));
        }
        entry.2.push(DatedSample {
            site_id: row.site_id,
            t: row.t_bc,
            sigma: row.sigma,
        });
    }
    order
        .into_iter()
        .map(|id| {
            let (name, location, samples) = groups.remove(&id).expect("grouped");
            let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.sigma)).collect();
            let (t, mut s) = summarize(&pairs)?;
            if let Some(floor) = sigma_floor {
                s = s.max(floor);
            }
            Ok(SiteRecord {
                site_id: id,
                name,
                location,
                samples,
                t_summary: t,
                sigma_summary: s,
            })
        })
        .collect()
}

/// Writes one row per dated object in the `load_sites` layout.
pub fn write_sites(path: &Path, sites: &[SiteRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site_id", "name", "lon", "lat", "t_bc", "sigma"])?;
    for site in sites {
        for s in &site.samples {
            w.write_record(&[
                site.site_id.clone(),
                site.name.clone(),
                site.location.lon.to_string(),
                site.location.lat.to_string(),
                s.t.to_string(),
                s.sigma.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The model-facing view of a dataset: site locations, elapsed summary dates
/// and their standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub site_ids: Vec<String>,
    pub locations: Vec<GeoPoint>,
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Observations {
    pub fn from_sites(sites: &[SiteRecord], start_bc: f64) -> Self {
        Self {
            site_ids: sites.iter().map(|s| s.site_id.clone()).collect(),
            locations: sites.iter().map(|s| s.location).collect(),
            t: sites.iter().map(|s| s.elapsed(start_bc)).collect(),
            sigma: sites.iter().map(|s| s.sigma_summary).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn summarize_examples() {
        assert_eq!(summarize(&[(5000.0, 120.0)]).unwrap(), (5000.0, 120.0));
        let (t, s) = summarize(&[(1000.0, 10.0), (2000.0, 10.0)]).unwrap();
        assert_relative_eq!(t, 1500.0, epsilon = 1e-12);
        assert_relative_eq!(s, 10.0 / 2f64.sqrt(), epsilon = 1e-12);
        let (t, s) = summarize(&[(1000.0, 10.0), (2000.0, 20.0)]).unwrap();
        assert_relative_eq!(t, 1200.0, epsilon = 1e-12);
        assert_relative_eq!(s, 80f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn summarize_rejects_bad_input() {
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[(1.0, 0.0)]).is_err());
        assert!(summarize(&[(1.0, -2.0)]).is_err());
    }

    #[test]
    fn elapsed() {
        assert_eq!(to_elapsed(6572.0, 6572.0), 0.0);
        assert_eq!(to_elapsed(5572.0, 6572.0), 1000.0);
        assert_eq!(to_elapsed(4004.0, 6572.0), 2568.0);
        assert_eq!(from_elapsed(2568.0, 6572.0), 4004.0);
    }

    const CSV: &str = "site_id,name,lon,lat,t_bc,sigma\n\
        a,Alpha,10.0,45.0,5000,100\n\
        a,Alpha,10.0,45.0,5100,50\n\
        a,Alpha,10.0,45.0,4900,80\n\
        b,Beta,12.5,47.0,4500,60\n";

    #[test]
    fn groups_rows_by_site() {
        let sites = parse_sites(CSV, "mem", None).unwrap();
        assert_eq!(sites.len(), 2);
        assert_eq!(sites[0].site_id, "a");
        assert_eq!(sites[0].m(), 3);
        assert_eq!(sites[1].m(), 1);
        assert!(sites[0].sigma_summary <= 50.0);
    }

    #[test]
    fn duplicate_rows_shrink_sigma() {
        let one = parse_sites("site_id,name,lon,lat,t_bc,sigma\nx,,1,2,5000,100\n", "mem", None).unwrap();
        let two = parse_sites("site_id,name,lon,lat,t_bc,sigma\nx,,1,2,5000,100\nx,,1,2,5000,100\n", "mem", None).unwrap();
        assert_relative_eq!(one[0].sigma_summary / two[0].sigma_summary, 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn inconsistent_location_is_an_error() {
        let text = "site_id,name,lon,lat,t_bc,sigma\nx,,1,2,5000,100\nx,,1.5,2,5000,100\n";
        match parse_sites(text, "mem", None) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "site_id,name,lon,lat,t_bc,sigma\nx,,1,2,5000,100\ny,,oops,2,5000,100\n";
        match parse_sites(text, "mem", None) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn sigma_floor() {
        let sites = parse_sites(CSV, "mem", Some(150.0)).unwrap();
        assert!(sites.iter().all(|s| s.sigma_summary == 150.0));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sites.csv");
        let sites = parse_sites(CSV, "mem", None).unwrap();
        write_sites(&path, &sites).unwrap();
        assert_eq!(load_sites(&path, None).unwrap(), sites);
    }

    proptest! {
        #[test]
        fn order_and_scale_invariance(
            raw in prop::collection::vec((-9000.0f64..0.0, 1.0f64..500.0), 1..12),
            c in 0.1f64..10.0,
        ) {
            let (t, s) = summarize(&raw).unwrap();
            let mut rev = raw.clone();
            rev.reverse();
            let (tr, sr) = summarize(&rev).unwrap();
            prop_assert!((t - tr).abs() <= 1e-9 * t.abs().max(1.0));
            prop_assert!((s - sr).abs() <= 1e-12 * s);
            let scaled: Vec<_> = raw.iter().map(|&(t, s)| (t, c * s)).collect();
            let (tc, sc) = summarize(&scaled).unwrap();
            prop_assert!((t - tc).abs() <= 1e-9 * t.abs().max(1.0));
            prop_assert!((sc - c * s).abs() <= 1e-9 * c * s);
            let min_s = raw.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(r.0), h.max(r.0)));
            prop_assert!(s <= min_s * (1.0 + 1e-12));
            prop_assert!(t >= lo - 1e-9 && t <= hi + 1e-9);
        }
    }
}
