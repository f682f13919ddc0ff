//! Point-in-polygon on the unit sphere.
//!
//! The test rotates everything into a frame whose north pole is the
//! reference point `r`, and counts polygon edges crossed by the meridian arc
//! from `r` to the query `q`. An edge is crossed when `q`'s longitude lies in
//! the edge's longitude window and `r`, `q` lie in different hemispheres of
//! the edge's great circle. An even count means `q` is on `r`'s side.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

type V3 = [f64; 3];

fn dot3(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &V3, b: &V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit(a: V3) -> Option<V3> {
    let n = dot3(&a, &a).sqrt();
    (n > 1e-300).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Unit vector from longitude/latitude in degrees.
pub fn lonlat_to_unit(lon_deg: f64, lat_deg: f64) -> [f64; 3] {
    let (lon, lat) = (lon_deg.to_radians(), lat_deg.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Longitude/latitude in degrees of a unit vector.
pub fn unit_to_lonlat(p: &[f64]) -> (f64, f64) {
    let lat = p[2].clamp(-1.0, 1.0).asin();
    (p[1].atan2(p[0]).to_degrees(), lat.to_degrees())
}

/// Orthonormal pair spanning the plane orthogonal to unit `z`.
fn orthonormal_pair(z: &V3) -> (V3, V3) {
    // seed with the axis least aligned with z
    let k = (0..3)
        .min_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs()))
        .unwrap_or(0);
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let c = dot3(&e, z);
    let x = unit([e[0] - c * z[0], e[1] - c * z[1], e[2] - c * z[2]]).unwrap_or([1.0, 0.0, 0.0]);
    let y = cross(z, &x);
    (x, y)
}

/// Step-function stand-in for the distance to a polygon boundary.
///
/// Rings of geodesic radius `k · spacing`, `k = 1..=rings`, are probed in
/// `directions` evenly spaced directions. The reported distance is
/// `spacing × (number of leading rings whose probes are all inside)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingSurrogate {
    pub spacing: f64,
    pub rings: usize,
    pub directions: usize,
}

impl Default for RingSurrogate {
    fn default() -> Self {
        RingSurrogate {
            spacing: 0.0025,
            rings: 4,
            directions: 16,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PolygonSpec", into = "PolygonSpec")]
pub struct SphericalPolygon {
    vertices: Vec<V3>,
    reference: V3,
    normals: Vec<V3>,
    /// Rows are the frame axes; the third row is `reference`.
    frame: [V3; 3],
    /// Per-edge ccw longitude window `[start, start + span)` in the frame.
    windows: Vec<(f64, f64)>,
    rings: RingSurrogate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolygonSpec {
    vertices: Vec<V3>,
    reference: V3,
    #[serde(default)]
    rings: Option<RingSurrogate>,
}

impl TryFrom<PolygonSpec> for SphericalPolygon {
    type Error = Error;
    fn try_from(s: PolygonSpec) -> Result<Self> {
        SphericalPolygon::new(s.vertices, s.reference)?.with_rings(s.rings.unwrap_or_default())
    }
}

impl From<SphericalPolygon> for PolygonSpec {
    fn from(p: SphericalPolygon) -> Self {
        PolygonSpec {
            vertices: p.vertices,
            reference: p.reference,
            rings: Some(p.rings),
        }
    }
}

impl SphericalPolygon {
    /// Builds the polygon and checks that `reference` lies inside.
    pub fn new(vertices: Vec<[f64; 3]>, reference: [f64; 3]) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Config("a spherical polygon needs at least 3 vertices".into()));
        }
        for (i, v) in vertices.iter().chain(std::iter::once(&reference)).enumerate() {
            if (dot3(v, v).sqrt() - 1.0).abs() > 1e-10 {
                return Err(Error::Input {
                    index: i,
                    reason: "vertex is not unit norm".into(),
                });
            }
        }
        let n = vertices.len();
        let mut normals = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (&vertices[i], &vertices[(i + 1) % n]);
            let c = cross(a, b);
            if dot3(&c, &c).sqrt() < 1e-12 {
                return Err(Error::Input {
                    index: i,
                    reason: "edge endpoints coincide or are antipodal".into(),
                });
            }
            normals.push(unit(c).expect("nonzero cross product"));
        }
        let (x, y) = orthonormal_pair(&reference);
        let frame = [x, y, reference];
        let lon = |p: &V3| dot3(p, &frame[1]).atan2(dot3(p, &frame[0]));
        let windows = (0..n)
            .map(|i| {
                let (a, b) = (lon(&vertices[i]), lon(&vertices[(i + 1) % n]));
                let delta = wrap_pi(b - a);
                if delta >= 0.0 {
                    (a, delta)
                } else {
                    (b, -delta)
                }
            })
            .collect();
        let poly = SphericalPolygon {
            vertices,
            reference,
            normals,
            frame,
            windows,
            rings: RingSurrogate::default(),
        };
        for (i, p) in poly.normals.iter().enumerate() {
            if dot3(p, &reference).abs() < 1e-12 {
                return Err(Error::Input {
                    index: i,
                    reason: "reference lies on the great circle of this edge".into(),
                });
            }
        }
        if poly.antipode_crossings() % 2 == 0 {
            return Err(Error::Config(
                "reference is not inside the polygon (the antipode of the reference must be outside)".into(),
            ));
        }
        Ok(poly)
    }

    /// Polygon from `(lon, lat)` vertices and reference, in degrees.
    pub fn from_lonlat(vertices: &[(f64, f64)], reference: (f64, f64)) -> Result<Self> {
        SphericalPolygon::new(
            vertices.iter().map(|&(lo, la)| lonlat_to_unit(lo, la)).collect(),
            lonlat_to_unit(reference.0, reference.1),
        )
    }

    pub fn with_rings(mut self, rings: RingSurrogate) -> Result<Self> {
        if !(rings.spacing > 0.0) || rings.rings == 0 || rings.directions == 0 {
            return Err(Error::Config("ring surrogate needs positive spacing, rings and directions".into()));
        }
        self.rings = rings;
        Ok(self)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn reference(&self) -> [f64; 3] {
        self.reference
    }

    /// Unit normals `v_i × v_{i+1}` of the edge planes.
    pub fn edge_normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn rings(&self) -> RingSurrogate {
        self.rings
    }

    /// Membership of the unit vector `q`; `Err(BoundaryAmbiguous)` on an edge.
    pub fn contains(&self, q: &[f64]) -> Result<bool> {
        if q.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: q.len(),
            });
        }
        let q = [q[0], q[1], q[2]];
        if (dot3(&q, &q).sqrt() - 1.0).abs() > 1e-10 {
            return Err(Error::ContractViolation("query point is not unit norm".into()));
        }
        let phi = dot3(&q, &self.frame[1]).atan2(dot3(&q, &self.frame[0]));
        let mut count = 0usize;
        for (p, &(start, span)) in self.normals.iter().zip(&self.windows) {
            if (phi - start).rem_euclid(TAU) >= span {
                continue;
            }
            let pq = dot3(p, &q);
            if pq.abs() < 1e-12 {
                return Err(Error::BoundaryAmbiguous);
            }
            if dot3(p, &self.reference).signum() != pq.signum() {
                count += 1;
            }
        }
        Ok(count % 2 == 0)
    }

    /// Edge arcs crossed by a generic half great circle from the reference to
    /// its antipode, found by a dense walk.
    fn antipode_crossings(&self) -> usize {
        let (x, y) = (self.frame[0], self.frame[1]);
        // a direction that avoids every vertex meridian
        let theta = 0.618_033_988_749_895 * TAU;
        let u: V3 = std::array::from_fn(|k| theta.cos() * x[k] + theta.sin() * y[k]);
        let r = self.reference;
        let steps = 20_000;
        let at = |s: f64| -> V3 { std::array::from_fn(|k| s.cos() * r[k] + s.sin() * u[k]) };
        let mut crossings = 0;
        let mut prev = at(0.0);
        for i in 1..=steps {
            let cur = at(PI * i as f64 / steps as f64);
            for (e, p) in self.normals.iter().enumerate() {
                let (fa, fb) = (dot3(p, &prev), dot3(p, &cur));
                if (fa < 0.0) == (fb < 0.0) {
                    continue;
                }
                let w = fa / (fa - fb);
                let hit: V3 = std::array::from_fn(|k| prev[k] + w * (cur[k] - prev[k]));
                if on_arc(&self.vertices[e], &self.vertices[(e + 1) % self.vertices.len()], p, &hit) {
                    crossings += 1;
                }
            }
            prev = cur;
        }
        crossings
    }

    /// Ring-probe distance surrogate; zero outside or on the boundary.
    pub fn ring_distance(&self, q: &[f64]) -> f64 {
        if !matches!(self.contains(q), Ok(true)) {
            return 0.0;
        }
        let z = [q[0], q[1], q[2]];
        let (x, y) = orthonormal_pair(&z);
        let RingSurrogate {
            spacing,
            rings,
            directions,
        } = self.rings;
        let mut clear = 0;
        'rings: for k in 1..=rings {
            let rad = spacing * k as f64;
            for j in 0..directions {
                let th = TAU * j as f64 / directions as f64;
                let dir: V3 = std::array::from_fn(|c| th.cos() * x[c] + th.sin() * y[c]);
                let probe: V3 = std::array::from_fn(|c| rad.cos() * z[c] + rad.sin() * dir[c]);
                let probe = unit(probe).unwrap_or(z);
                if !matches!(self.contains(&probe), Ok(true)) {
                    break 'rings;
                }
            }
            clear = k;
        }
        spacing * clear as f64
    }
}

/// Whether `h`, on the great circle with normal `p` through `a` and `b`,
/// lies on the minor arc from `a` to `b`.
fn on_arc(a: &V3, b: &V3, p: &V3, h: &V3) -> bool {
    dot3(&cross(a, h), p) >= 0.0 && dot3(&cross(h, b), p) >= 0.0
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}
