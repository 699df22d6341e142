//! Plot-ready report files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::stages::Workspace;
use crate::error::{Error, Result};
use crate::geo::{great_circle_km, io as geo_io, GeoPoint, GridSpec, ScalarField};
use crate::infer::{PosteriorSample, PARAM_NAMES};
use crate::stats::Kde;

/// Listing of everything the report stage wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub config_hash: String,
    pub seed: u64,
    pub marginals: Vec<String>,
    pub predictive_densities: Vec<String>,
    pub maps: Vec<String>,
    pub map_grid: GridSpec,
}

/// Inverse-distance weighting over the `k` nearest sites by great-circle
/// distance. A node that coincides with a site takes its value.
pub fn idw_grid(spec: GridSpec, sites: &[GeoPoint], values: &[f64], k: usize, power: f64) -> Result<ScalarField> {
    if sites.is_empty() || sites.len() != values.len() {
        return Err(Error::invalid("idw needs one value per site and at least one site"));
    }
    let k = k.clamp(1, sites.len());
    Ok(ScalarField::from_fn(spec, |p| {
        let mut d: Vec<(f64, f64)> = sites.iter().zip(values).map(|(s, &v)| (great_circle_km(p, *s), v)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        if d[0].0 < 1e-9 {
            return d[0].1;
        }
        let (num, den) = d[..k].iter().fold((0.0, 0.0), |(n, w), &(dist, v)| {
            let wt = dist.powf(-power);
            (n + wt * v, w + wt)
        });
        num / den
    }))
}

fn read_table(path: &std::path::Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let head = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((head, rows))
}

fn column(path: &std::path::Path, head: &[String], rows: &[Vec<String>], name: &str) -> Result<Vec<f64>> {
    let j = head.iter().position(|h| h == name).ok_or_else(|| Error::Malformed {
        path: path.display().to_string(),
        line: 2,
        message: format!("missing column `{name}`"),
    })?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r[j].parse().map_err(|_| Error::Malformed {
                path: path.display().to_string(),
                line: i + 3,
                message: format!("bad number in `{name}`"),
            })
        })
        .collect()
}

pub(crate) fn write_report(ws: &Workspace) -> Result<Vec<PathBuf>> {
    let cfg = &ws.cfg.report;
    let dir = ws.path("report");
    std::fs::create_dir_all(&dir)?;
    let mut out = Vec::new();
    let mut index = ReportIndex {
        config_hash: ws.config_hash().to_string(),
        seed: ws.cfg.seed,
        marginals: Vec::new(),
        predictive_densities: Vec::new(),
        maps: Vec::new(),
        map_grid: map_spec(ws)?,
    };

    let samples: Vec<PosteriorSample> = crate::infer::Chain::read_csv(&ws.path("posterior.csv"))?;
    if samples.is_empty() {
        return Err(Error::MissingArtifacts(vec![ws.path("posterior.csv")]));
    }
    let priors = &ws.cfg.inference.priors;
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let x: Vec<f64> = samples.iter().map(|s| s.params.to_array()[k]).collect();
        let kde = Kde::new(&x);
        let path = dir.join(format!("marginal_{name}.csv"));
        let mut w = ws.csv_writer(&path)?;
        w.write_record(["x", "posterior", "prior"])?;
        for g in kde.grid(cfg.density_points.max(2)) {
            w.write_record([g.to_string(), kde.density(g).to_string(), priors.marginal_pdf(k, g).to_string()])?;
        }
        w.flush()?;
        index.marginals.push(ws.rel(&path));
        out.push(path);
    }

    let pred_path = ws.path("predictive.csv");
    let (head, rows) = read_table(&pred_path)?;
    let ids: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
    let lon = column(&pred_path, &head, &rows, "lon")?;
    let lat = column(&pred_path, &head, &rows, "lat")?;
    let mean = column(&pred_path, &head, &rows, "mean")?;
    let sd = column(&pred_path, &head, &rows, "sd")?;

    let draws_path = ws.path("predictive_draws.csv");
    let (dhead, drows) = read_table(&draws_path)?;
    let wanted: Vec<String> = if cfg.sites.is_empty() {
        ids.iter().take(4).cloned().collect()
    } else {
        cfg.sites.clone()
    };
    for id in &wanted {
        if !ids.contains(id) {
            return Err(Error::Config(format!("report site `{id}` is not in the site table")));
        }
        let x = column(&draws_path, &dhead, &drows, id)?;
        let kde = Kde::new(&x);
        let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
        let path = dir.join(format!("predictive_{safe}.csv"));
        let mut w = ws.csv_writer(&path)?;
        w.write_record(["t_bc", "density"])?;
        for g in kde.grid(cfg.density_points.max(2)) {
            w.write_record([g.to_string(), kde.density(g).to_string()])?;
        }
        w.flush()?;
        index.predictive_densities.push(ws.rel(&path));
        out.push(path);
    }

    let sites: Vec<GeoPoint> = lon.iter().zip(&lat).map(|(&lon, &lat)| GeoPoint { lon, lat }).collect();
    for (name, v) in [("predictive_mean", &mean), ("predictive_sd", &sd)] {
        let field = idw_grid(index.map_grid, &sites, v, cfg.idw_neighbours, cfg.idw_power)?;
        let path = dir.join(format!("map_{name}.asc"));
        geo_io::write_ascii_grid(&path, &field)?;
        index.maps.push(ws.rel(&path));
        out.push(path);
    }

    let path = dir.join("index.json");
    ws.write_json(&path, &index)?;
    out.push(path);
    Ok(out)
}

fn map_spec(ws: &Workspace) -> Result<GridSpec> {
    match ws.cfg.report.map_grid {
        Some((a, b, c, d, e)) => GridSpec::new(a, b, c, d, e),
        None => {
            let t = geo_io::read_ascii_grid(&ws.cfg.paths.terrain)?.spec;
            let cell = 0.5_f64.min((t.lon_max - t.lon_min) / 2.0).min((t.lat_max - t.lat_min) / 2.0);
            GridSpec::new(t.lon_min, t.lon_max, t.lat_min, t.lat_max, cell)
        }
    }
}
