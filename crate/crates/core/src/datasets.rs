//! Synthetic generators, the geospatial point loader and dataset files.
//!
//! A dataset on disk is a points CSV (`x0,x1,…` in storage coordinates)
//! next to a JSON manifest naming the manifold, constraint, seed, generator
//! and split.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constraints::{lonlat_to_unit, spd, ConstraintSet, SphericalPolygon};
use crate::diagnostics::MmdKernel;
use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point};
use crate::rng;

/// Generators give up once fewer than this fraction of draws land inside.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

/// Fraction of points in the training split.
pub const TRAIN_FRACTION: f64 = 0.9;

/// How the points were produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Equal-weight isotropic Gaussian mixture truncated by rejection.
    Bimodal { means: Vec<Vec<f64>>, sigma: f64, weights: Vec<f64> },
    /// Scaled Wishart draws on `LogCholeskySpd(2) × R²`.
    SpdEllipsoids { bound: f64, dof: usize, trace_fraction: [f64; 2] },
    /// Points read from a file.
    File { source: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Random 90/10 split of `0..n`, fixed by `(seed, n)`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng::stream(seed, "split", n as u64));
        let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
        let test = idx.split_off(n_train);
        let (mut train, mut test) = (idx, test);
        train.sort_unstable();
        test.sort_unstable();
        Split { train, test }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifold: Manifold,
    pub constraint: ConstraintSet,
    pub points: Vec<Point>,
    pub seed: Option<u64>,
    pub generator: Generator,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn train_points(&self) -> Vec<Point> {
        self.split.train.iter().map(|&i| self.points[i].clone()).collect()
    }

    pub fn test_points(&self) -> Vec<Point> {
        self.split.test.iter().map(|&i| self.points[i].clone()).collect()
    }

    /// Mixture-of-RBF kernel matched to a bimodal generator: one component
    /// per mixture mode with lengthscale σ and the mode's weight.
    pub fn matched_kernel(&self) -> Option<MmdKernel> {
        match &self.generator {
            Generator::Bimodal { sigma, weights, .. } => MmdKernel::new(vec![*sigma; weights.len()], weights.clone()).ok(),
            _ => None,
        }
    }

    /// Checks the dataset invariants: every point inside, splits disjoint
    /// and covering.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.len() != self.manifold.storage_dim() || !self.constraint.contains(p) {
                return Err(Error::Input {
                    index: i,
                    reason: "point is outside the constraint set".into(),
                });
            }
        }
        let mut seen = vec![false; self.points.len()];
        for &i in self.split.train.iter().chain(&self.split.test) {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config("split indices must be disjoint and in range".into()));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("split must cover every point".into()));
        }
        Ok(())
    }
}

/// Rejection-samples `n` points from `draw` into `c`, failing once the
/// acceptance rate is clearly below [`MIN_ACCEPTANCE`].
fn rejection_fill<R: Rng>(c: &ConstraintSet, n: usize, rng: &mut R, mut draw: impl FnMut(&mut R) -> Vec<f64>) -> Result<Vec<Point>> {
    let mut out = Vec::with_capacity(n);
    let mut tries: u64 = 0;
    while out.len() < n {
        let x = draw(rng);
        tries += 1;
        if c.contains_coords(&x) {
            out.push(Point(x));
        }
        if tries >= 100_000 && tries % 100_000 == 0 {
            let rate = out.len() as f64 / tries as f64;
            if rate < MIN_ACCEPTANCE {
                return Err(Error::GeneratorMismatch { rate });
            }
        }
    }
    Ok(out)
}

/// Mixture parameters for [`synth_bimodal`].
fn bimodal_params(c: &ConstraintSet, d: usize) -> Result<(Vec<Vec<f64>>, f64)> {
    match c {
        ConstraintSet::Hypercube { lo, hi } => {
            if lo.len() != d || lo.iter().zip(hi).any(|(l, h)| h - l != hi[0] - lo[0]) {
                return Err(Error::Config("bimodal generator needs a cube with equal side lengths".into()));
            }
            let half = 0.5 * (hi[0] - lo[0]);
            let mid: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
            let means = [-0.5, 0.5].iter().map(|s| mid.iter().map(|m| m + s * half).collect()).collect();
            Ok((means, 0.2 * half))
        }
        ConstraintSet::Simplex { dim } if *dim == d => {
            let sigma = 0.1 / (d as f64).sqrt();
            let m1 = vec![1.0 / (2.0 * d as f64); d];
            let centroid = vec![1.0 / (d as f64 + 1.0); d];
            // shrink the offset until the mean sits at least σ inside
            let at = |s: f64| {
                let mut v = centroid.clone();
                v[0] += 0.25 * s;
                v
            };
            let mut s = 1.0;
            if c.violation_coords(&at(1.0)) > -sigma {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if c.violation_coords(&at(mid)) <= -sigma {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                s = lo;
            }
            Ok((vec![m1, at(s)], sigma))
        }
        _ => Err(Error::Config(
            "bimodal generator needs a Hypercube or Simplex constraint of the manifold's dimension".into(),
        )),
    }
}

/// Equal-weight two-component isotropic Gaussian mixture on a cube or
/// simplex, truncated to the open set by rejection.
///
/// Cube `[lo, hi]^d` with half-width `h`: means `mid ± h/2 · 𝟙`, `σ = 0.2h`.
/// Simplex: means `𝟙/(2d)` and `𝟙/(d+1) + 0.25 e₁` (offset shrunk until the
/// mean is `σ` inside), `σ = 0.1/√d`. Draws come from
/// `rng::stream(seed, "bimodal", 0)`.
pub fn synth_bimodal(m: &Manifold, c: &ConstraintSet, n: usize, seed: u64) -> Result<Dataset> {
    let Manifold::Euclidean { dim: d } = *m else {
        return Err(Error::Config("bimodal generator needs a Euclidean manifold".into()));
    };
    c.validate()?;
    let (means, sigma) = bimodal_params(c, d)?;
    let mut rng = rng::stream(seed, "bimodal", 0);
    let points = rejection_fill(c, n, &mut rng, |r| {
        let mean = &means[r.random_range(0..means.len())];
        mean.iter()
            .map(|mu| mu + sigma * r.sample::<f64, _>(StandardNormal))
            .collect()
    })?;
    Ok(Dataset {
        manifold: m.clone(),
        constraint: c.clone(),
        points,
        seed: Some(seed),
        generator: Generator::Bimodal {
            weights: vec![0.5; means.len()],
            means,
            sigma,
        },
        split: Split::random(n, seed),
    })
}

/// Velocity ellipsoids with locations: a `2 × 2` Wishart draw with 3
/// degrees of freedom rescaled to trace `u·C`, `u ~ U(0.05, 0.95)`, paired
/// with a standard normal location in `R²`.
pub fn synth_spd_ellipsoids(n: usize, bound: f64, seed: u64) -> Result<Dataset> {
    let manifold = Manifold::Product {
        factors: vec![Manifold::LogCholeskySpd { n: 2 }, Manifold::euclidean(2)],
    };
    let constraint = ConstraintSet::product(vec![(3, ConstraintSet::trace_bound(2, bound)?), (2, ConstraintSet::All)]);
    let (dof, frac) = (3, [0.05, 0.95]);
    let mut rng = rng::stream(seed, "spd", 0);
    let points = rejection_fill(&constraint, n, &mut rng, |r| {
        let g: Vec<f64> = (0..2 * dof).map(|_| r.sample(StandardNormal)).collect();
        let mut s = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                s[i * 2 + j] = (0..dof).map(|k| g[i * dof + k] * g[j * dof + k]).sum::<f64>() / dof as f64;
            }
        }
        let target = bound * r.random_range(frac[0]..frac[1]);
        let scale = target / (s[0] + s[3]);
        s.iter_mut().for_each(|v| *v *= scale);
        // a singular draw has probability zero; it is rejected if it occurs
        let mut x = spd::coords_from_matrix(2, &s).unwrap_or_else(|_| vec![f64::NAN; 3]);
        x.push(r.sample(StandardNormal));
        x.push(r.sample(StandardNormal));
        x
    })?;
    Ok(Dataset {
        manifold,
        constraint,
        points,
        seed: Some(seed),
        generator: Generator::SpdEllipsoids {
            bound,
            dof,
            trace_fraction: frac,
        },
        split: Split::random(n, seed),
    })
}

/// What happened while loading a file of points.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows: usize,
    /// Rows outside the polygon or on an edge.
    pub dropped: usize,
    /// Set when more than half the rows were dropped.
    pub warning: Option<String>,
}

/// Parses `lon_deg,lat_deg` rows and keeps the points inside `polygon`.
pub fn parse_geo_points(text: &str, polygon: &SphericalPolygon, source: &Path) -> Result<(Dataset, LoadReport)> {
    let rows = crate::constraints::parse_lonlat_rows(text)?;
    let mut points = Vec::with_capacity(rows.len());
    for &(lon, lat, _) in &rows {
        let u = lonlat_to_unit(lon, lat);
        if polygon.contains(&u).unwrap_or(false) {
            points.push(Point(u.to_vec()));
        }
    }
    let dropped = rows.len() - points.len();
    let warning = (2 * dropped > rows.len()).then(|| {
        format!(
            "{dropped} of {} points lie outside the polygon; check the polygon and the coordinate order",
            rows.len()
        )
    });
    let n = points.len();
    let ds = Dataset {
        manifold: Manifold::Sphere { dim: 2 },
        constraint: ConstraintSet::SphericalPolygon(polygon.clone()),
        points,
        seed: None,
        generator: Generator::File {
            source: source.to_path_buf(),
        },
        split: Split::random(n, 0),
    };
    let report = LoadReport {
        rows: rows.len(),
        dropped,
        warning,
    };
    Ok((ds, report))
}

/// Reads a geospatial points file and its companion polygon file.
pub fn load_geo_points(points: &Path, polygon: &Path) -> Result<(Dataset, LoadReport)> {
    let poly = crate::constraints::load_polygon_csv(polygon)?;
    let text = std::fs::read_to_string(points)?;
    parse_geo_points(&text, &poly, points)
}

/// JSON manifest stored next to the points CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifold: Manifold,
    pub constraint: ConstraintSet,
    pub seed: Option<u64>,
    pub generator: Generator,
    /// Points file, relative to the manifest.
    pub points: PathBuf,
    pub split: Split,
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            reason: format!("{other:?}"),
        },
    }
}

/// Writes points as CSV with header `x0,x1,…`; values round-trip exactly.
pub fn write_points_csv<W: std::io::Write>(w: W, points: &[Point], dim: usize) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record((0..dim).map(|j| format!("x{j}"))).map_err(csv_err)?;
    for p in points {
        wr.write_record(p.0.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_points_csv<R: std::io::Read>(r: R, dim: usize) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != dim {
            return Err(Error::Parse {
                line,
                reason: format!("expected {dim} fields, found {}", rec.len()),
            });
        }
        let x = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    reason: format!("'{f}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(Point(x));
    }
    Ok(out)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns the manifest path.
pub fn save_dataset(ds: &Dataset, dir: &Path, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let points = PathBuf::from(format!("{stem}.csv"));
    let f = std::fs::File::create(dir.join(&points))?;
    write_points_csv(std::io::BufWriter::new(f), &ds.points, ds.manifold.storage_dim())?;
    let manifest = Manifest {
        manifold: ds.manifold.clone(),
        constraint: ds.constraint.clone(),
        seed: ds.seed,
        generator: ds.generator.clone(),
        points,
        split: ds.split.clone(),
    };
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Reads a dataset from its manifest, checking every invariant.
pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest)?;
    let mf: Manifest = serde_json::from_str(&text)?;
    mf.constraint.validate()?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let f = std::fs::File::open(base.join(&mf.points))?;
    let points = read_points_csv(std::io::BufReader::new(f), mf.manifold.storage_dim())?;
    let ds = Dataset {
        manifold: mf.manifold,
        constraint: mf.constraint,
        points,
        seed: mf.seed,
        generator: mf.generator,
        split: mf.split,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(d: usize) -> (Manifold, ConstraintSet) {
        (Manifold::euclidean(d), ConstraintSet::hypercube(d, -1.0, 1.0))
    }

    #[test]
    fn bimodal_points_are_inside_and_deterministic() {
        let (m, c) = cube(2);
        let a = synth_bimodal(&m, &c, 500, 3).unwrap();
        a.validate().unwrap();
        let b = synth_bimodal(&m, &c, 500, 3).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.split, b.split);
        assert_eq!(a.split.train.len(), 450);
        let s = ConstraintSet::simplex(10);
        let ds = synth_bimodal(&Manifold::euclidean(10), &s, 300, 1).unwrap();
        ds.validate().unwrap();
        if let Generator::Bimodal { means, .. } = &ds.generator {
            assert!(s.violation_coords(&means[1]) <= -0.1 / 10f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn bimodal_needs_cube_or_simplex() {
        let m = Manifold::euclidean(3);
        assert!(synth_bimodal(&m, &ConstraintSet::All, 10, 0).is_err());
        assert!(synth_bimodal(&m, &ConstraintSet::simplex(2), 10, 0).is_err());
    }

    #[test]
    fn tiny_cube_is_a_generator_mismatch() {
        // means sit inside but a box this thin rejects nearly every draw
        let c = ConstraintSet::Hypercube {
            lo: vec![-1.0, -1e-7],
            hi: vec![1.0, 1e-7],
        };
        let (means, sigma) = (vec![vec![0.0, 0.0]], 0.2);
        let mut rng = rng::stream(0, "t", 0);
        let r = rejection_fill(&c, 10, &mut rng, |r| {
            means[0].iter().map(|m| m + sigma * r.sample::<f64, _>(StandardNormal)).collect()
        });
        assert!(matches!(r, Err(Error::GeneratorMismatch { .. })));
    }

    #[test]
    fn spd_draws_respect_the_trace_bound() {
        let ds = synth_spd_ellipsoids(200, 2.0, 5).unwrap();
        ds.validate().unwrap();
        for p in &ds.points {
            let tr = spd::trace_from_coords(2, &p.0[..3]);
            assert!(tr > 0.0 && tr < 2.0);
        }
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let s = Split::random(37, 4);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(s, Split::random(37, 4));
    }

    fn square() -> SphericalPolygon {
        SphericalPolygon::from_lonlat(&[(-10.0, -10.0), (10.0, -10.0), (10.0, 10.0), (-10.0, 10.0)], (0.0, 0.0)).unwrap()
    }

    #[test]
    fn geo_loader_drops_outside_points() {
        let poly = square();
        let (ds, rep) = parse_geo_points("lon_deg,lat_deg\n0,0\n5,-5\n50,0\n", &poly, Path::new("x.csv")).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(rep.dropped, 1);
        assert!(rep.warning.is_none());
        let (_, rep) = parse_geo_points("lon_deg,lat_deg\n0,0\n50,0\n60,0\n", &poly, Path::new("x.csv")).unwrap();
        assert!(rep.warning.is_some());
        let (ds, rep) = parse_geo_points("lon_deg,lat_deg\n", &poly, Path::new("x.csv")).unwrap();
        assert!(ds.is_empty() && rep.rows == 0);
        match parse_geo_points("lon_deg,lat_deg\n0,0\n1,abc\n", &poly, Path::new("x.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (m, c) = cube(3);
        let ds = synth_bimodal(&m, &c, 50, 8).unwrap();
        let path = save_dataset(&ds, dir.path(), "bimodal").unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.points, ds.points);
        assert_eq!(back.split, ds.split);
        assert_eq!(back.generator, ds.generator);
        let ds = synth_spd_ellipsoids(20, 1.5, 2).unwrap();
        let path = save_dataset(&ds, dir.path(), "spd").unwrap();
        assert_eq!(load_dataset(&path).unwrap().points, ds.points);
    }
}
