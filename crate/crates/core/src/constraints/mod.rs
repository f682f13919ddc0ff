//! Constraint sets `M = { x : f_i(x) < 0 }`.
//!
//! Sets are open: a point with `max_i f_i(x) = 0` is outside. Each variant
//! exposes the constraint functions, a lower bound on the distance to the
//! boundary (used for score rescaling), and, for flat charts, ray–boundary
//! intersections used by the reflected sampler.
//!
//! Constraint indices are stable per variant:
//!
//! * `Hypercube`: `j` is the face `x_j − hi_j`, `d + j` the face `lo_j − x_j`;
//! * `Simplex`: `j` is `−x_j`, `d` is `Σ x − 1`;
//! * `Halfspaces`: row `i`;
//! * `TraceBound` and `SphericalPolygon`: a single constraint `0`;
//! * `Product`: factor indices offset by the constraint counts of earlier factors.

mod io;
mod polygon;
pub mod spd;

pub use io::{load_halfspaces_csv, load_polygon_csv, parse_halfspaces_csv, parse_lonlat_rows, parse_polygon_csv};
pub use polygon::{lonlat_to_unit, unit_to_lonlat, RingSurrogate, SphericalPolygon};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, Manifold, Point, TangentVector};

/// Bisection tolerance for curved (trace) boundaries.
const BISECTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ConstraintSet {
    /// No constraint; every point is inside.
    All,
    Halfspaces(Halfspaces),
    Hypercube {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Open unit simplex `x_i > 0, Σ x_i < 1`.
    Simplex {
        dim: usize,
    },
    /// `tr(L Lᵀ) < bound` on log-Cholesky coordinates of an `n × n` SPD matrix.
    TraceBound {
        n: usize,
        bound: f64,
    },
    SphericalPolygon(SphericalPolygon),
    Product {
        factors: Vec<ConstraintBlock>,
    },
}

/// One factor of a product constraint, covering `len` storage coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintBlock {
    pub len: usize,
    pub set: ConstraintSet,
}

/// `{ x : ⟨a_i, x⟩ − b_i < 0 }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "HalfspacesSpec", into = "HalfspacesSpec")]
pub struct Halfspaces {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    row_norms: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HalfspacesSpec {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<HalfspacesSpec> for Halfspaces {
    type Error = Error;
    fn try_from(s: HalfspacesSpec) -> Result<Self> {
        Halfspaces::new(s.a, s.b)
    }
}

impl From<Halfspaces> for HalfspacesSpec {
    fn from(h: Halfspaces) -> Self {
        HalfspacesSpec {
            a: h.a.chunks(h.dim).map(<[f64]>::to_vec).collect(),
            b: h.b,
        }
    }
}

impl Halfspaces {
    pub fn new(rows: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config("halfspaces need at least one row".into()));
        }
        if rows.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: b.len(),
            });
        }
        let dim = rows[0].len();
        let mut a = Vec::with_capacity(dim * rows.len());
        let mut row_norms = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Input {
                    index: i,
                    reason: format!("row has {} entries, expected {dim}", r.len()),
                });
            }
            let n = norm(r);
            if n == 0.0 || !n.is_finite() {
                return Err(Error::Input {
                    index: i,
                    reason: "row must be nonzero and finite".into(),
                });
            }
            a.extend_from_slice(r);
            row_norms.push(n);
        }
        Ok(Halfspaces {
            dim,
            a,
            b,
            row_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.dim..(i + 1) * self.dim]
    }

    fn value(&self, x: &[f64], i: usize) -> f64 {
        dot(self.row(i), x) - self.b[i]
    }
}

/// First boundary hit along a flat-chart ray.
#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    /// Arc length to the hit.
    pub t_star: f64,
    pub constraint_index: usize,
    /// Outward unit normal at the hit point.
    pub normal: Vec<f64>,
    /// The hit point itself; `max_i f_i` there is `≥ 0` and within `1e−10` of zero.
    pub point: Vec<f64>,
}

/// Ray hit without the normal; the allocation-free form used in hot loops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub index: usize,
}

impl ConstraintSet {
    pub fn hypercube(dim: usize, lo: f64, hi: f64) -> Self {
        ConstraintSet::Hypercube {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    pub fn simplex(dim: usize) -> Self {
        ConstraintSet::Simplex { dim }
    }

    pub fn trace_bound(n: usize, bound: f64) -> Result<Self> {
        let c = ConstraintSet::TraceBound { n, bound };
        c.validate()?;
        Ok(c)
    }

    pub fn product(factors: Vec<(usize, ConstraintSet)>) -> Self {
        ConstraintSet::Product {
            factors: factors
                .into_iter()
                .map(|(len, set)| ConstraintBlock { len, set })
                .collect(),
        }
    }

    /// Checks the structural invariants (also applied to deserialized sets).
    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintSet::Hypercube { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(Error::Config("hypercube bounds must be nonempty and of equal length".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
                    return Err(Error::Config("hypercube needs lo < hi in every coordinate".into()));
                }
            }
            ConstraintSet::Simplex { dim } if *dim == 0 => {
                return Err(Error::Config("simplex dimension must be positive".into()));
            }
            ConstraintSet::TraceBound { n, bound } => {
                if !(*bound > 0.0) || *n == 0 {
                    return Err(Error::Config("trace bound needs C > 0 and n ≥ 1".into()));
                }
            }
            ConstraintSet::Product { factors } => {
                for f in factors {
                    if let Some(n) = f.set.storage_dim() {
                        if n != f.len {
                            return Err(Error::Config(format!(
                                "product block declares {} coordinates but its set uses {n}",
                                f.len
                            )));
                        }
                    }
                    f.set.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Storage length the set acts on; `None` for `All`, which fits any length.
    pub fn storage_dim(&self) -> Option<usize> {
        match self {
            ConstraintSet::All => None,
            ConstraintSet::Halfspaces(h) => Some(h.dim),
            ConstraintSet::Hypercube { lo, .. } => Some(lo.len()),
            ConstraintSet::Simplex { dim } => Some(*dim),
            ConstraintSet::TraceBound { n, .. } => Some(n * (n + 1) / 2),
            ConstraintSet::SphericalPolygon(_) => Some(3),
            ConstraintSet::Product { factors } => Some(factors.iter().map(|f| f.len).sum()),
        }
    }

    /// Number of constraint functions `f_i`.
    pub fn num_constraints(&self) -> usize {
        match self {
            ConstraintSet::All => 0,
            ConstraintSet::Halfspaces(h) => h.rows(),
            ConstraintSet::Hypercube { lo, .. } => 2 * lo.len(),
            ConstraintSet::Simplex { dim } => dim + 1,
            ConstraintSet::TraceBound { .. } | ConstraintSet::SphericalPolygon(_) => 1,
            ConstraintSet::Product { factors } => factors.iter().map(|f| f.set.num_constraints()).sum(),
        }
    }

    /// Strict membership `max_i f_i(x) < 0`.
    pub fn contains(&self, x: &Point) -> bool {
        self.contains_coords(&x.0)
    }

    pub fn contains_coords(&self, x: &[f64]) -> bool {
        match self {
            ConstraintSet::All => true,
            ConstraintSet::Hypercube { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v > *l && *v < *h),
            ConstraintSet::Simplex { .. } => {
                let mut s = 0.0;
                for v in x {
                    if !(*v > 0.0) {
                        return false;
                    }
                    s += v;
                }
                s < 1.0
            }
            ConstraintSet::Halfspaces(h) => (0..h.rows()).all(|i| h.value(x, i) < 0.0),
            ConstraintSet::TraceBound { n, bound } => spd::trace_from_coords(*n, x) < *bound,
            ConstraintSet::SphericalPolygon(p) => p.contains(x).unwrap_or(false),
            ConstraintSet::Product { factors } => {
                let mut off = 0;
                factors.iter().all(|f| {
                    let r = off..off + f.len;
                    off += f.len;
                    f.set.contains_coords(&x[r])
                })
            }
        }
    }

    /// `max_i f_i(x)`; negative iff `x` is inside.
    ///
    /// The spherical polygon has no smooth defining function here, so it
    /// reports `−1` inside, `+1` outside and `0` on an edge.
    pub fn max_violation(&self, x: &Point) -> f64 {
        self.violation_coords(&x.0)
    }

    pub fn violation_coords(&self, x: &[f64]) -> f64 {
        match self {
            ConstraintSet::All => f64::NEG_INFINITY,
            ConstraintSet::SphericalPolygon(p) => match p.contains(x) {
                Ok(true) => -1.0,
                Ok(false) => 1.0,
                Err(_) => 0.0,
            },
            ConstraintSet::Product { factors } => {
                let mut off = 0;
                factors
                    .iter()
                    .map(|f| {
                        let r = off..off + f.len;
                        off += f.len;
                        f.set.violation_coords(&x[r])
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            _ => (0..self.num_constraints())
                .map(|i| self.constraint_value(x, i))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Value of the single constraint function `f_index` at `x`.
    pub fn constraint_value(&self, x: &[f64], index: usize) -> f64 {
        match self {
            ConstraintSet::All => f64::NEG_INFINITY,
            ConstraintSet::Hypercube { lo, hi } => {
                let d = lo.len();
                if index < d {
                    x[index] - hi[index]
                } else {
                    lo[index - d] - x[index - d]
                }
            }
            ConstraintSet::Simplex { dim } => {
                if index < *dim {
                    -x[index]
                } else {
                    x.iter().sum::<f64>() - 1.0
                }
            }
            ConstraintSet::Halfspaces(h) => h.value(x, index),
            ConstraintSet::TraceBound { n, bound } => spd::trace_from_coords(*n, x) - bound,
            ConstraintSet::SphericalPolygon(_) => self.violation_coords(x),
            ConstraintSet::Product { factors } => {
                let (k, local, r) = self.locate(index);
                factors[k].set.constraint_value(&x[r], local)
            }
        }
    }

    /// Map a product constraint index to `(factor, local index, storage range)`.
    fn locate(&self, index: usize) -> (usize, usize, std::ops::Range<usize>) {
        let ConstraintSet::Product { factors } = self else {
            let n = self.storage_dim().unwrap_or(0);
            return (0, index, 0..n);
        };
        let (mut off, mut base) = (0, 0);
        for (k, f) in factors.iter().enumerate() {
            let m = f.set.num_constraints();
            if index < base + m {
                return (k, index - base, off..off + f.len);
            }
            base += m;
            off += f.len;
        }
        panic!("constraint index {index} out of range");
    }

    /// Lower bound on the distance from `x` to `∂M`; errors if `x ∉ M`.
    pub fn boundary_distance_lb(&self, x: &Point) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::Domain("point is outside the constraint set".into()));
        }
        Ok(self.distance_lb_coords(&x.0))
    }

    /// Unchecked form of [`boundary_distance_lb`](Self::boundary_distance_lb).
    pub fn distance_lb_coords(&self, x: &[f64]) -> f64 {
        match self {
            ConstraintSet::All => f64::INFINITY,
            ConstraintSet::Hypercube { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (v - l).min(h - v))
                .fold(f64::INFINITY, f64::min),
            ConstraintSet::Simplex { dim } => {
                let s: f64 = x.iter().sum();
                let faces = x.iter().copied().fold(f64::INFINITY, f64::min);
                faces.min((1.0 - s) / (*dim as f64).sqrt())
            }
            ConstraintSet::Halfspaces(h) => (0..h.rows())
                .map(|i| -h.value(x, i) / h.row_norms[i])
                .fold(f64::INFINITY, f64::min),
            ConstraintSet::TraceBound { n, bound } => {
                (bound - spd::trace_from_coords(*n, x)) / trace_gradient_bound(*bound)
            }
            ConstraintSet::SphericalPolygon(p) => p.ring_distance(x),
            ConstraintSet::Product { factors } => {
                let mut off = 0;
                factors
                    .iter()
                    .map(|f| {
                        let r = off..off + f.len;
                        off += f.len;
                        f.set.distance_lb_coords(&x[r])
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Almost-everywhere gradient of [`distance_lb_coords`](Self::distance_lb_coords),
    /// written into `out` (zero where the bound is piecewise constant).
    pub fn distance_lb_grad_coords(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            ConstraintSet::All | ConstraintSet::SphericalPolygon(_) => {}
            ConstraintSet::Hypercube { lo, hi } => {
                let mut best = (f64::INFINITY, 0, 0.0);
                for (j, (v, (l, h))) in x.iter().zip(lo.iter().zip(hi)).enumerate() {
                    if v - l < best.0 {
                        best = (v - l, j, 1.0);
                    }
                    if h - v < best.0 {
                        best = (h - v, j, -1.0);
                    }
                }
                out[best.1] = best.2;
            }
            ConstraintSet::Simplex { dim } => {
                let s: f64 = x.iter().sum();
                let sq = (*dim as f64).sqrt();
                let (j, m) = x
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
                if (1.0 - s) / sq < m {
                    out.iter_mut().for_each(|o| *o = -1.0 / sq);
                } else {
                    out[j] = 1.0;
                }
            }
            ConstraintSet::Halfspaces(h) => {
                let i = (0..h.rows())
                    .min_by(|&a, &b| {
                        (-h.value(x, a) / h.row_norms[a]).total_cmp(&(-h.value(x, b) / h.row_norms[b]))
                    })
                    .unwrap_or(0);
                for (o, a) in out.iter_mut().zip(h.row(i)) {
                    *o = -a / h.row_norms[i];
                }
            }
            ConstraintSet::TraceBound { n, bound } => {
                spd::trace_gradient(*n, x, out);
                let k = trace_gradient_bound(*bound);
                out.iter_mut().for_each(|o| *o = -*o / k);
            }
            ConstraintSet::Product { factors } => {
                let mut off = 0;
                let mut best = (f64::INFINITY, 0..0, 0);
                for (k, f) in factors.iter().enumerate() {
                    let r = off..off + f.len;
                    let d = f.set.distance_lb_coords(&x[r.clone()]);
                    if d < best.0 {
                        best = (d, r, k);
                    }
                    off += f.len;
                }
                let (_, r, k) = best;
                if !r.is_empty() {
                    factors[k].set.distance_lb_grad_coords(&x[r.clone()], &mut out[r]);
                }
            }
        }
    }

    /// First intersection of the segment `x + t·dir`, `t ∈ (0, len]`, with `∂M`.
    ///
    /// Only defined on flat charts. The returned point satisfies
    /// `max_i f_i ≥ 0`, so it is outside the open set.
    pub fn ray_intersect(
        &self,
        m: &Manifold,
        x: &Point,
        dir: &TangentVector,
        len: f64,
    ) -> Result<Option<Intersection>> {
        if !m.is_flat() {
            return Err(Error::Unsupported(
                "ray intersections are only available on flat charts".into(),
            ));
        }
        if (dir.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::ContractViolation("ray direction must be unit-norm".into()));
        }
        let Some(hit) = self.ray_hit(&x.0, &dir.components, len)? else {
            return Ok(None);
        };
        let point: Vec<f64> = x.0.iter().zip(&dir.components).map(|(a, b)| a + hit.t * b).collect();
        let mut normal = vec![0.0; x.len()];
        self.outward_normal(&point, hit.index, &mut normal);
        Ok(Some(Intersection {
            t_star: hit.t,
            constraint_index: hit.index,
            normal,
            point,
        }))
    }

    /// Allocation-free ray hit. `dir` need not be normalised; `t` is then in
    /// units of `dir`.
    pub fn ray_hit(&self, x: &[f64], dir: &[f64], len: f64) -> Result<Option<Hit>> {
        let raw = match self {
            ConstraintSet::All => None,
            ConstraintSet::Hypercube { lo, hi } => {
                let d = lo.len();
                let mut best: Option<Hit> = None;
                for j in 0..d {
                    let (t, index) = if dir[j] > 0.0 {
                        ((hi[j] - x[j]) / dir[j], j)
                    } else if dir[j] < 0.0 {
                        ((lo[j] - x[j]) / dir[j], d + j)
                    } else {
                        continue;
                    };
                    if best.is_none_or(|b| t < b.t) {
                        best = Some(Hit { t, index });
                    }
                }
                best
            }
            ConstraintSet::Simplex { dim } => {
                let mut best: Option<Hit> = None;
                for j in 0..*dim {
                    if dir[j] < 0.0 {
                        let t = x[j] / -dir[j];
                        if best.is_none_or(|b| t < b.t) {
                            best = Some(Hit { t, index: j });
                        }
                    }
                }
                let s: f64 = dir.iter().sum();
                if s > 0.0 {
                    let t = (1.0 - x.iter().sum::<f64>()) / s;
                    if best.is_none_or(|b| t < b.t) {
                        best = Some(Hit { t, index: *dim });
                    }
                }
                best
            }
            ConstraintSet::Halfspaces(h) => {
                let mut best: Option<Hit> = None;
                for i in 0..h.rows() {
                    let ad = dot(h.row(i), dir);
                    if ad > 0.0 {
                        let t = -h.value(x, i) / ad;
                        if best.is_none_or(|b| t < b.t) {
                            best = Some(Hit { t, index: i });
                        }
                    }
                }
                best
            }
            ConstraintSet::TraceBound { n, bound } => {
                let g = |t: f64| {
                    let y: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + t * b).collect();
                    spd::trace_from_coords(*n, &y) - bound
                };
                // the trace is convex along lines, so the sublevel set is an interval
                if g(len) < 0.0 {
                    None
                } else {
                    let mut a = 0.0;
                    if g(0.0) >= 0.0 {
                        let mut grad = vec![0.0; x.len()];
                        spd::trace_gradient(*n, x, &mut grad);
                        if dot(&grad, dir) >= 0.0 {
                            return Ok(Some(Hit { t: 0.0, index: 0 }));
                        }
                        // starting on the boundary and heading inward: find an
                        // interior point before looking for the exit
                        a = golden_section_min(&g, 0.0, len);
                        if g(a) >= 0.0 {
                            return Ok(None);
                        }
                    }
                    let mut b = len;
                    while b - a > BISECTION_TOL {
                        let mid = 0.5 * (a + b);
                        if mid <= a || mid >= b {
                            break;
                        }
                        if g(mid) < 0.0 {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    Some(Hit { t: b, index: 0 })
                }
            }
            ConstraintSet::SphericalPolygon(_) => {
                return Err(Error::Unsupported(
                    "ray intersections with spherical polygons are not supported".into(),
                ))
            }
            ConstraintSet::Product { factors } => {
                let mut off = 0;
                let mut base = 0;
                let mut best: Option<Hit> = None;
                for f in factors {
                    let r = off..off + f.len;
                    if let Some(h) = f.set.ray_hit(&x[r.clone()], &dir[r], len)? {
                        if best.is_none_or(|b| h.t < b.t) {
                            best = Some(Hit {
                                t: h.t,
                                index: base + h.index,
                            });
                        }
                    }
                    off += f.len;
                    base += f.set.num_constraints();
                }
                return Ok(best);
            }
        };
        Ok(raw.and_then(|h| {
            let t = h.t.max(0.0);
            if t > len {
                return None;
            }
            Some(Hit {
                t: self.settle_on_boundary(x, dir, t, h.index),
                index: h.index,
            })
        }))
    }

    /// Nudge `t` up by ulps until `x + t·dir` is on or past face `index`, so
    /// the hit point never reads as interior after rounding.
    fn settle_on_boundary(&self, x: &[f64], dir: &[f64], mut t: f64, index: usize) -> f64 {
        for _ in 0..64 {
            if self.value_along(x, dir, t, index) >= 0.0 {
                break;
            }
            t = t.next_up();
        }
        t
    }

    /// `f_index(x + t·dir)`, without allocating for the linear sets.
    fn value_along(&self, x: &[f64], dir: &[f64], t: f64, index: usize) -> f64 {
        match self {
            ConstraintSet::Hypercube { lo, hi } => {
                let d = lo.len();
                if index < d {
                    x[index] + t * dir[index] - hi[index]
                } else {
                    let j = index - d;
                    lo[j] - (x[j] + t * dir[j])
                }
            }
            ConstraintSet::Simplex { dim } if index < *dim => -(x[index] + t * dir[index]),
            ConstraintSet::Simplex { .. } => x.iter().zip(dir).map(|(a, b)| a + t * b).sum::<f64>() - 1.0,
            ConstraintSet::Halfspaces(h) => {
                h.row(index).iter().zip(x.iter().zip(dir)).map(|(a, (xi, di))| a * (xi + t * di)).sum::<f64>()
                    - h.b[index]
            }
            _ => {
                let y: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + t * b).collect();
                self.constraint_value(&y, index)
            }
        }
    }

    /// Outward unit normal `∇f_index / ‖∇f_index‖` at `x`.
    pub fn outward_normal(&self, x: &[f64], index: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            ConstraintSet::All | ConstraintSet::SphericalPolygon(_) => {}
            ConstraintSet::Hypercube { lo, .. } => {
                let d = lo.len();
                if index < d {
                    out[index] = 1.0;
                } else {
                    out[index - d] = -1.0;
                }
            }
            ConstraintSet::Simplex { dim } => {
                if index < *dim {
                    out[index] = -1.0;
                } else {
                    let v = 1.0 / (*dim as f64).sqrt();
                    out.iter_mut().for_each(|o| *o = v);
                }
            }
            ConstraintSet::Halfspaces(h) => {
                for (o, a) in out.iter_mut().zip(h.row(index)) {
                    *o = a / h.row_norms[index];
                }
            }
            ConstraintSet::TraceBound { n, .. } => {
                spd::trace_gradient(*n, x, out);
                let g = norm(out);
                out.iter_mut().for_each(|o| *o /= g);
            }
            ConstraintSet::Product { factors } => {
                let (k, local, r) = self.locate(index);
                factors[k].set.outward_normal(&x[r.clone()], local, &mut out[r]);
            }
        }
    }

    /// Axis-aligned box containing `M`, when one is known.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            ConstraintSet::Hypercube { lo, hi } => Some((lo.clone(), hi.clone())),
            ConstraintSet::Simplex { dim } => Some((vec![0.0; *dim], vec![1.0; *dim])),
            ConstraintSet::Product { factors } => {
                let (mut lo, mut hi) = (Vec::new(), Vec::new());
                for f in factors {
                    let (l, h) = f.set.bounding_box()?;
                    lo.extend(l);
                    hi.extend(h);
                }
                Some((lo, hi))
            }
            _ => None,
        }
    }
}

fn golden_section_min(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if gc < 0.0 {
            return c;
        }
        if b - a < BISECTION_TOL {
            break;
        }
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    if gc < gd {
        c
    } else {
        d
    }
}

/// Upper bound of `‖∇ tr(L Lᵀ)‖` over `{ tr < C }` in log-Cholesky coordinates.
fn trace_gradient_bound(c: f64) -> f64 {
    2.0 * c.sqrt().max(c)
}
