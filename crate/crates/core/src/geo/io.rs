//! ESRI-ASCII rasters and polyline CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::grid::{GridSpec, ScalarField};
use super::sphere::GeoPoint;
use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parses an ESRI-ASCII grid. Rows in the file run north to south; nodata
/// cells become NaN.
pub fn parse_ascii_grid(text: &str, path: &Path) -> Result<ScalarField> {
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(n, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if !key.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            break;
        }
        let value = parts
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| malformed(path, n + 1, format!("bad header line `{line}`")))?;
        header.insert(key.to_ascii_lowercase(), value);
        lines.next();
    }
    let need = |k: &str| header.get(k).copied().ok_or_else(|| malformed(path, 1, format!("missing header `{k}`")));
    let n_lon = need("ncols")? as usize;
    let n_lat = need("nrows")? as usize;
    let cell = need("cellsize")?;
    let (lon_min, lat_min) = match (header.get("xllcorner"), header.get("yllcorner")) {
        (Some(&x), Some(&y)) => (x, y),
        _ => (
            need("xllcenter")? - 0.5 * cell,
            need("yllcenter")? - 0.5 * cell,
        ),
    };
    let nodata = header.get("nodata_value").copied();
    let spec = GridSpec::from_corner(lon_min, lat_min, cell, n_lon, n_lat)?;

    let mut file_rows = Vec::with_capacity(n_lat * n_lon);
    for (n, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| malformed(path, n + 1, format!("bad value `{tok}`")))?;
            file_rows.push(if Some(v) == nodata { f64::NAN } else { v });
        }
    }
    if file_rows.len() != n_lat * n_lon {
        return Err(malformed(
            path,
            0,
            format!("expected {} values, found {}", n_lat * n_lon, file_rows.len()),
        ));
    }
    let mut values = vec![0.0; spec.len()];
    for file_row in 0..n_lat {
        let row = n_lat - 1 - file_row;
        values[row * n_lon..(row + 1) * n_lon]
            .copy_from_slice(&file_rows[file_row * n_lon..(file_row + 1) * n_lon]);
    }
    ScalarField::new(spec, values)
}

pub fn read_ascii_grid(path: &Path) -> Result<ScalarField> {
    parse_ascii_grid(&fs::read_to_string(path)?, path)
}

pub fn format_ascii_grid(field: &ScalarField) -> String {
    let s = &field.spec;
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", s.n_lon);
    let _ = writeln!(out, "nrows {}", s.n_lat);
    let _ = writeln!(out, "xllcorner {}", s.lon_min);
    let _ = writeln!(out, "yllcorner {}", s.lat_min);
    let _ = writeln!(out, "cellsize {}", s.cell_size);
    let _ = writeln!(out, "nodata_value {DEFAULT_NODATA}");
    for row in (0..s.n_lat).rev() {
        let line: Vec<String> = (0..s.n_lon)
            .map(|c| {
                let v = field.get(row, c);
                if v.is_finite() { format!("{v}") } else { format!("{DEFAULT_NODATA}") }
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_ascii_grid(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, format_ascii_grid(field))?;
    Ok(())
}

/// Reads `path_id,lon,lat` rows; points keep file order within each path.
pub fn read_polylines(path: &Path) -> Result<Vec<Vec<GeoPoint>>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut paths: BTreeMap<String, Vec<GeoPoint>> = BTreeMap::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() < 3 {
            return Err(malformed(path, line, "expected columns path_id,lon,lat"));
        }
        let id = rec[0].trim().to_string();
        let lon: f64 = rec[1].trim().parse().map_err(|_| malformed(path, line, "bad lon"))?;
        let lat: f64 = rec[2].trim().parse().map_err(|_| malformed(path, line, "bad lat"))?;
        if !paths.contains_key(&id) {
            order.push(id.clone());
        }
        paths.entry(id).or_default().push(GeoPoint::new(lon, lat));
    }
    Ok(order.into_iter().map(|id| paths.remove(&id).unwrap_or_default()).collect())
}

pub fn write_polylines(path: &Path, polylines: &[Vec<GeoPoint>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path_id", "lon", "lat"])?;
    for (id, line) in polylines.iter().enumerate() {
        for p in line {
            w.write_record([id.to_string(), p.lon.to_string(), p.lat.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
