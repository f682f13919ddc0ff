//! CSV readers for polygons and halfspace systems.

use std::path::Path;

use super::{Halfspaces, SphericalPolygon};
use crate::error::{Error, Result};

fn reader(text: &str, has_headers: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn parse_field(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("'{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            reason: "value is not finite".into(),
        });
    }
    Ok(v)
}

/// Reads `lon_deg,lat_deg` rows after a header, as `(lon, lat, line)`.
pub fn parse_lonlat_rows(text: &str) -> Result<Vec<(f64, f64, usize)>> {
    let mut rdr = reader(text, true);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.len() != 2 || &headers[0] != "lon_deg" || &headers[1] != "lat_deg" {
        return Err(Error::Parse {
            line: 1,
            reason: "expected header 'lon_deg,lat_deg'".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let lon = parse_field(&rec[0], line)?;
        let lat = parse_field(&rec[1], line)?;
        if lat.abs() > 90.0 {
            return Err(Error::Parse {
                line,
                reason: "latitude outside [-90, 90]".into(),
            });
        }
        out.push((lon, lat, line));
    }
    Ok(out)
}

/// Parses a polygon file: a `# reference: lon,lat` comment line, a
/// `lon_deg,lat_deg` header and the vertices in order.
pub fn parse_polygon_csv(text: &str) -> Result<SphericalPolygon> {
    let mut reference = None;
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.trim().strip_prefix('#') else {
            continue;
        };
        if let Some(val) = rest.trim().strip_prefix("reference:") {
            let parts: Vec<&str> = val.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    reason: "reference must be 'lon,lat'".into(),
                });
            }
            reference = Some((parse_field(parts[0], i + 1)?, parse_field(parts[1], i + 1)?));
        }
    }
    let reference = reference.ok_or_else(|| Error::Parse {
        line: 0,
        reason: "missing '# reference: lon,lat' line".into(),
    })?;
    let verts: Vec<(f64, f64)> = parse_lonlat_rows(text)?.into_iter().map(|(a, b, _)| (a, b)).collect();
    SphericalPolygon::from_lonlat(&verts, reference)
}

pub fn load_polygon_csv(path: impl AsRef<Path>) -> Result<SphericalPolygon> {
    parse_polygon_csv(&std::fs::read_to_string(path)?)
}

/// Parses rows `a_1,...,a_d,b` into the system `A x < b`.
pub fn parse_halfspaces_csv(text: &str) -> Result<Halfspaces> {
    let mut rdr = reader(text, false);
    let (mut rows, mut b) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() < 2 {
            return Err(Error::Parse {
                line,
                reason: "a halfspace row needs at least one coefficient and an offset".into(),
            });
        }
        let vals = rec.iter().map(|f| parse_field(f, line)).collect::<Result<Vec<f64>>>()?;
        let (a, off) = vals.split_at(vals.len() - 1);
        rows.push(a.to_vec());
        b.push(off[0]);
    }
    Halfspaces::new(rows, b)
}

pub fn load_halfspaces_csv(path: impl AsRef<Path>) -> Result<Halfspaces> {
    parse_halfspaces_csv(&std::fs::read_to_string(path)?)
}
