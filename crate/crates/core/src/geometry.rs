//! Geometry kernels: exponential maps, tangent Gaussians, parallel transport
//! and tangent reflections for the manifolds used by the samplers.
//!
//! Points are stored in a flat *storage chart*:
//!
//! | manifold            | storage                                   | tangent chart          |
//! |---------------------|-------------------------------------------|------------------------|
//! | `Euclidean(d)`      | `d` coordinates                           | same, flat             |
//! | `Sphere(d)`         | `d + 1` ambient coordinates, unit norm    | ambient, `⟨v, p⟩ = 0`  |
//! | `Torus(d)`          | `d` angles in `[0, 2π)`                   | flat                   |
//! | `LogCholeskySpd(n)` | `n(n+1)/2` lower-triangular entries, row-major, log diagonal | flat |
//! | `Product`           | concatenation of factor storages          | concatenation          |
//!
//! The tangent chart always has the same length as the storage chart, and the
//! metric is the coordinate (ambient, for the sphere) inner product.

use std::f64::consts::TAU;
use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const SPHERE_EXP_CUTOFF: f64 = 1e-12;
const UNIT_NORMAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Manifold {
    Euclidean { dim: usize },
    /// Unit sphere `S^dim` embedded in `R^(dim+1)`.
    Sphere { dim: usize },
    /// Flat torus `(R / 2πZ)^dim`.
    Torus { dim: usize },
    /// SPD `n × n` matrices in log-Cholesky coordinates (a flat chart).
    LogCholeskySpd { n: usize },
    Product { factors: Vec<Manifold> },
}

/// A point in the storage chart of some manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Tangent vector with its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: Point, components: Vec<f64>) -> Self {
        TangentVector { base, components }
    }

    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl Manifold {
    pub fn euclidean(dim: usize) -> Self {
        Manifold::Euclidean { dim }
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Manifold::Euclidean { dim } | Manifold::Sphere { dim } | Manifold::Torus { dim } => {
                *dim
            }
            Manifold::LogCholeskySpd { n } => n * (n + 1) / 2,
            Manifold::Product { factors } => factors.iter().map(Manifold::dim).sum(),
        }
    }

    /// Length of the storage (and tangent) chart.
    pub fn storage_dim(&self) -> usize {
        match self {
            Manifold::Sphere { dim } => dim + 1,
            Manifold::Product { factors } => factors.iter().map(Manifold::storage_dim).sum(),
            _ => self.dim(),
        }
    }

    /// True when the chart is flat, so geodesics are straight coordinate lines.
    pub fn is_flat(&self) -> bool {
        match self {
            Manifold::Sphere { .. } => false,
            Manifold::Product { factors } => factors.iter().all(Manifold::is_flat),
            _ => true,
        }
    }

    /// Factors with the storage ranges they occupy. Non-product manifolds are
    /// a single block.
    pub fn blocks(&self) -> Vec<(&Manifold, Range<usize>)> {
        match self {
            Manifold::Product { factors } => {
                let mut off = 0;
                factors
                    .iter()
                    .map(|f| {
                        let n = f.storage_dim();
                        let r = off..off + n;
                        off += n;
                        (f, r)
                    })
                    .collect()
            }
            _ => vec![(self, 0..self.storage_dim())],
        }
    }

    /// Bring raw coordinates back onto the manifold (renormalise spheres, wrap
    /// torus angles).
    pub fn normalize_in_place(&self, x: &mut [f64]) {
        match self {
            Manifold::Sphere { .. } => {
                let n = norm(x);
                if n > 0.0 {
                    x.iter_mut().for_each(|c| *c /= n);
                }
            }
            Manifold::Torus { .. } => x.iter_mut().for_each(|c| *c = wrap_angle(*c)),
            Manifold::Product { factors } => {
                let mut off = 0;
                for f in factors {
                    let n = f.storage_dim();
                    f.normalize_in_place(&mut x[off..off + n]);
                    off += n;
                }
            }
            _ => {}
        }
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at `p`.
    pub fn project_tangent_in_place(&self, p: &[f64], v: &mut [f64]) {
        match self {
            Manifold::Sphere { .. } => {
                let a = dot(p, v);
                v.iter_mut().zip(p).for_each(|(vi, pi)| *vi -= a * pi);
            }
            Manifold::Product { factors } => {
                let mut off = 0;
                for f in factors {
                    let n = f.storage_dim();
                    f.project_tangent_in_place(&p[off..off + n], &mut v[off..off + n]);
                    off += n;
                }
            }
            _ => {}
        }
    }

    /// Slice-level exponential map; `out` may not alias `p`.
    pub fn exp_into(&self, p: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Manifold::Euclidean { .. } | Manifold::LogCholeskySpd { .. } => {
                for ((o, a), b) in out.iter_mut().zip(p).zip(v) {
                    *o = a + b;
                }
            }
            Manifold::Torus { .. } => {
                for ((o, a), b) in out.iter_mut().zip(p).zip(v) {
                    *o = wrap_angle(a + b);
                }
            }
            Manifold::Sphere { .. } => {
                let nv = norm(v);
                if nv < SPHERE_EXP_CUTOFF {
                    out.copy_from_slice(p);
                    return;
                }
                let (s, c) = nv.sin_cos();
                for ((o, a), b) in out.iter_mut().zip(p).zip(v) {
                    *o = c * a + s * b / nv;
                }
                let n = norm(out);
                out.iter_mut().for_each(|o| *o /= n);
            }
            Manifold::Product { factors } => {
                let mut off = 0;
                for f in factors {
                    let n = f.storage_dim();
                    let r = off..off + n;
                    f.exp_into(&p[r.clone()], &v[r.clone()], &mut out[r]);
                    off += n;
                }
            }
        }
    }

    /// Standard Gaussian in the tangent chart at `p`, written into `out`.
    pub fn tangent_randn_into<R: Rng + ?Sized>(&self, p: &[f64], rng: &mut R, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
        self.project_tangent_in_place(p, out);
    }

    /// Slice-level parallel transport of `v` from `p` to `q` along the
    /// minimising geodesic.
    pub fn transport_into(&self, p: &[f64], v: &[f64], q: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Manifold::Sphere { .. } => {
                let c = 1.0 + dot(p, q);
                if c < 1e-12 {
                    return Err(Error::GeodesicDegeneracy);
                }
                let a = dot(v, q) / c;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = v[i] - a * (p[i] + q[i]);
                }
                Ok(())
            }
            Manifold::Product { factors } => {
                let mut off = 0;
                for f in factors {
                    let n = f.storage_dim();
                    let r = off..off + n;
                    f.transport_into(&p[r.clone()], &v[r.clone()], &q[r.clone()], &mut out[r])?;
                    off += n;
                }
                Ok(())
            }
            _ => {
                out.copy_from_slice(v);
                Ok(())
            }
        }
    }

    /// Orthonormal basis of the tangent space at `p`, in tangent-chart
    /// components. For spheres the basis completes `p` by Gram–Schmidt.
    pub fn tangent_basis(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let d = self.storage_dim();
        let mut basis = Vec::with_capacity(self.dim());
        let mut off = 0;
        for (f, r) in self.blocks() {
            match f {
                Manifold::Sphere { .. } => {
                    let x = &p[r.clone()];
                    let mut local: Vec<Vec<f64>> = Vec::new();
                    // axes sorted by how little they overlap with x
                    let mut axes: Vec<usize> = (0..x.len()).collect();
                    axes.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()));
                    for &ax in &axes {
                        if local.len() + 1 == x.len() {
                            break;
                        }
                        let mut e = vec![0.0; x.len()];
                        e[ax] = 1.0;
                        let px = dot(&e, x);
                        e.iter_mut().zip(x).for_each(|(ei, xi)| *ei -= px * xi);
                        for b in &local {
                            let pb = dot(&e, b);
                            e.iter_mut().zip(b).for_each(|(ei, bi)| *ei -= pb * bi);
                        }
                        let n = norm(&e);
                        if n > 1e-8 {
                            e.iter_mut().for_each(|ei| *ei /= n);
                            local.push(e);
                        }
                    }
                    for b in local {
                        let mut full = vec![0.0; d];
                        full[r.clone()].copy_from_slice(&b);
                        basis.push(full);
                    }
                }
                _ => {
                    for i in r.clone() {
                        let mut full = vec![0.0; d];
                        full[i] = 1.0;
                        basis.push(full);
                    }
                }
            }
            off += r.len();
        }
        debug_assert_eq!(off, d);
        basis
    }

    /// Sphere factors as `(intrinsic dim, storage range)`; used for the
    /// extrinsic-curvature term of tangent-field divergences.
    pub fn sphere_blocks(&self) -> Vec<(usize, Range<usize>)> {
        self.blocks()
            .into_iter()
            .filter_map(|(f, r)| match f {
                Manifold::Sphere { dim } => Some((*dim, r)),
                _ => None,
            })
            .collect()
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        check_len(self.storage_dim(), p.len())
    }

    fn check_tangent(&self, p: &Point, v: &TangentVector) -> Result<()> {
        self.check_point(p)?;
        check_len(self.storage_dim(), v.components.len())?;
        if v.base.0.len() != p.0.len()
            || v.base.0.iter().zip(&p.0).any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::ContractViolation(
                "tangent vector is not based at the given point".into(),
            ));
        }
        Ok(())
    }

    /// Exponential map `exp_p(v)`.
    pub fn exp_map(&self, p: &Point, v: &TangentVector) -> Result<Point> {
        self.check_tangent(p, v)?;
        let mut out = vec![0.0; p.len()];
        self.exp_into(&p.0, &v.components, &mut out);
        Ok(Point(out))
    }

    pub fn tangent_randn<R: Rng + ?Sized>(&self, p: &Point, rng: &mut R) -> Result<TangentVector> {
        self.check_point(p)?;
        let mut out = vec![0.0; p.len()];
        self.tangent_randn_into(&p.0, rng, &mut out);
        Ok(TangentVector::new(p.clone(), out))
    }

    pub fn parallel_transport(
        &self,
        p: &Point,
        v: &TangentVector,
        q: &Point,
    ) -> Result<TangentVector> {
        self.check_tangent(p, v)?;
        self.check_point(q)?;
        let mut out = vec![0.0; p.len()];
        self.transport_into(&p.0, &v.components, &q.0, &mut out)?;
        Ok(TangentVector::new(q.clone(), out))
    }

    /// `v − 2⟨v, n⟩ n` for a unit normal `n` sharing the base point of `v`.
    pub fn reflect_tangent(&self, v: &TangentVector, n: &TangentVector) -> Result<TangentVector> {
        check_len(self.storage_dim(), v.components.len())?;
        check_len(self.storage_dim(), n.components.len())?;
        let mut out = v.components.clone();
        reflect_in_place(&mut out, &n.components)?;
        Ok(TangentVector::new(v.base.clone(), out))
    }

    /// Sphere-only geodesic distance; flat charts use the coordinate distance
    /// (torus coordinates are compared modulo 2π).
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        let mut acc = 0.0;
        for (f, r) in self.blocks() {
            let (a, b) = (&p.0[r.clone()], &q.0[r]);
            acc += match f {
                Manifold::Sphere { .. } => dot(a, b).clamp(-1.0, 1.0).acos().powi(2),
                Manifold::Torus { .. } => a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let d = (x - y).rem_euclid(TAU);
                        d.min(TAU - d).powi(2)
                    })
                    .sum(),
                _ => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum(),
            };
        }
        Ok(acc.sqrt())
    }
}

/// In-place tangent reflection `v ← v − 2⟨v, n⟩ n`.
pub fn reflect_in_place(v: &mut [f64], n: &[f64]) -> Result<()> {
    let nn = norm(n);
    if (nn - 1.0).abs() > UNIT_NORMAL_TOL {
        return Err(Error::ContractViolation(format!(
            "reflection normal must be unit-norm (|n| = {nn})"
        )));
    }
    let a = 2.0 * dot(v, n);
    v.iter_mut().zip(n).for_each(|(vi, ni)| *vi -= a * ni);
    Ok(())
}
