//! Forward noising and reverse generation on constrained manifolds.
//!
//! The forward process is constrained Brownian motion run on the clock
//! `∫β`, so its invariant law is uniform on `M`. It is discretised with
//! Metropolis steps `γ_k = β(t_k) T / N`. Reverse generation starts from
//! the uniform law and runs Metropolis steps with drift `score(T − t_k, x)`
//! through the grid backwards.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::diagnostics::{histogram_tv, histogram_tv_2d};
use crate::diagnostics::TvReference;
use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point, TangentVector};
use crate::par;
use crate::rng;
use crate::samplers::{metropolis_kernel, ChainBatch, Workspace};

/// Linear schedule `β(t) = β0 + (t/T)(β1 − β0)` on `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSchedule {
    pub beta0: f64,
    pub beta1: f64,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

impl BetaSchedule {
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        let s = BetaSchedule {
            beta0,
            beta1,
            horizon: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0 <= self.beta1 && self.beta1.is_finite()) {
            return Err(Error::Config(format!(
                "beta schedule needs 0 < beta0 <= beta1, got {} and {}",
                self.beta0, self.beta1
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta0 + t / self.horizon * (self.beta1 - self.beta0)
    }

    /// `∫_0^t β`.
    pub fn integral(&self, t: f64) -> f64 {
        self.beta0 * t + 0.5 * t * t / self.horizon * (self.beta1 - self.beta0)
    }
}

/// `N` steps on `[0, T]`: `t_k = kT/N`, `γ_k = β(t_k) T/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub schedule: BetaSchedule,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(schedule: BetaSchedule, steps: usize) -> Result<Self> {
        let g = TimeGrid { schedule, steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.steps == 0 {
            return Err(Error::Config("a time grid needs at least one step".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.schedule.horizon
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.horizon() / self.steps as f64
    }

    pub fn gamma(&self, k: usize) -> f64 {
        self.schedule.beta(self.t(k)) * self.horizon() / self.steps as f64
    }

    pub fn gammas(&self) -> Vec<f64> {
        (0..self.steps).map(|k| self.gamma(k)).collect()
    }
}

/// Optional drift of the forward process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardDrift {
    /// Driftless constrained Brownian motion; invariant law uniform on `M`.
    #[default]
    None,
    /// Ornstein–Uhlenbeck drift `−x/2` (flat charts).
    OrnsteinUhlenbeck,
}

/// Noised training examples: for each datum a rollout of random length
/// `K ~ U{0..N}` and `repeats` states read off at distinct indices `≤ K`
/// (with replacement when `K + 1 < repeats`).
///
/// Datum `i` uses the stream `rng::stream(seed, "forward", i)`.
pub fn forward_noise_batch(
    m: &Manifold,
    c: &ConstraintSet,
    data: &[Point],
    grid: &TimeGrid,
    repeats: usize,
    seed: u64,
) -> Result<Vec<(f64, Point)>> {
    forward_noise_batch_with(m, c, data, grid, repeats, ForwardDrift::None, seed)
}

pub fn forward_noise_batch_with(
    m: &Manifold,
    c: &ConstraintSet,
    data: &[Point],
    grid: &TimeGrid,
    repeats: usize,
    drift: ForwardDrift,
    seed: u64,
) -> Result<Vec<(f64, Point)>> {
    grid.validate()?;
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    if drift == ForwardDrift::OrnsteinUhlenbeck && !m.is_flat() {
        return Err(Error::Unsupported("the OU drift needs a flat chart".into()));
    }
    for (i, p) in data.iter().enumerate() {
        if p.len() != m.storage_dim() || !c.contains(p) {
            return Err(Error::Input {
                index: i,
                reason: "datum is not a point of the constraint set".into(),
            });
        }
    }
    let gammas = grid.gammas();
    let per: Vec<Vec<(f64, Point)>> = par::map_indices(data.len(), |i| {
        let mut rng = rng::stream(seed, "forward", i as u64);
        let k_max = rng.random_range(0..=grid.steps);
        let picks = pick_indices(&mut rng, k_max, repeats);
        let mut out = Vec::with_capacity(repeats);
        let mut x = data[i].0.clone();
        let mut ws = Workspace::new(x.len());
        let mut b = vec![0.0; x.len()];
        let mut next = 0;
        for k in 0..=k_max {
            while next < picks.len() && picks[next] == k {
                out.push((grid.t(k), Point(x.clone())));
                next += 1;
            }
            if k == k_max {
                break;
            }
            let drift_now = match drift {
                ForwardDrift::None => None,
                ForwardDrift::OrnsteinUhlenbeck => {
                    b.iter_mut().zip(&x).for_each(|(bi, xi)| *bi = -0.5 * xi);
                    Some(&b[..])
                }
            };
            metropolis_kernel(m, c, &mut x, gammas[k], drift_now, &mut ws, &mut rng);
        }
        out
    });
    Ok(per.into_iter().flatten().collect())
}

/// Sorted indices in `0..=k_max`, distinct when there are enough of them.
fn pick_indices<R: Rng + ?Sized>(rng: &mut R, k_max: usize, repeats: usize) -> Vec<usize> {
    let mut v = if k_max + 1 >= repeats {
        index::sample(rng, k_max + 1, repeats).into_vec()
    } else {
        (0..repeats).map(|_| rng.random_range(0..=k_max)).collect()
    };
    v.sort_unstable();
    v
}

/// `min(1, d(x, ∂M) / eps)` with the set's distance lower bound.
pub fn rescale_factor(c: &ConstraintSet, x: &[f64], eps: f64) -> f64 {
    (c.distance_lb_coords(x) / eps).min(1.0)
}

/// Scale a raw score so it vanishes on the boundary and ramps up linearly
/// over the collar of width `eps`.
pub fn score_rescale(c: &ConstraintSet, x: &Point, raw: &TangentVector, eps: f64) -> Result<TangentVector> {
    if !(eps > 0.0) {
        return Err(Error::Config("rescaling width eps must be positive".into()));
    }
    let d = c.boundary_distance_lb(x)?;
    let f = (d / eps).min(1.0);
    Ok(TangentVector::new(
        raw.base.clone(),
        raw.components.iter().map(|v| v * f).collect(),
    ))
}

/// A time-dependent vector field evaluated on a batch of points.
pub trait ScoreField: Sync {
    /// `xs` holds `n` points of storage length `D` back to back; the scores
    /// go to `out` in the same layout.
    fn eval_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Adapter for pointwise closures `f(t, x, out)` on points of length `dim`.
pub struct Pointwise<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> ScoreField for Pointwise<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn eval_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) -> Result<()> {
        for (x, o) in xs.chunks(self.dim).zip(out.chunks_mut(self.dim)) {
            (self.f)(t, x, o);
        }
        Ok(())
    }
}

/// Per-coordinate proposal used for uniform initialisation.
enum Proposal {
    Interval(f64, f64),
    Sphere(std::ops::Range<usize>),
}

fn coord_bounds(c: &ConstraintSet, len: usize) -> Vec<Option<(f64, f64)>> {
    match c {
        ConstraintSet::Hypercube { lo, hi } => lo.iter().zip(hi).map(|(l, h)| Some((*l, *h))).collect(),
        ConstraintSet::Simplex { dim } => vec![Some((0.0, 1.0)); *dim],
        ConstraintSet::Product { factors } => factors.iter().flat_map(|f| coord_bounds(&f.set, f.len)).collect(),
        _ => vec![None; len],
    }
}

fn proposals(m: &Manifold, c: &ConstraintSet) -> Result<Vec<Proposal>> {
    let bounds = coord_bounds(c, m.storage_dim());
    let mut out = Vec::new();
    for (f, r) in m.blocks() {
        match f {
            Manifold::Sphere { .. } => out.push(Proposal::Sphere(r)),
            Manifold::Product { .. } => unreachable!("blocks are flattened"),
            _ => {
                for j in r {
                    let p = match (bounds[j], f) {
                        (Some((l, h)), _) => Proposal::Interval(l, h),
                        (None, Manifold::Torus { .. }) => Proposal::Interval(0.0, std::f64::consts::TAU),
                        _ => {
                            return Err(Error::Initialisation(format!(
                                "coordinate {j} is unbounded, so the uniform law on M is not defined; \
                                 use a set with a bounding box"
                            )))
                        }
                    };
                    out.push(p);
                }
            }
        }
    }
    Ok(out)
}

/// Budget of proposals per uniform draw.
pub const UNIFORM_TRIES: usize = 10_000;

/// `n` draws from the uniform law on `M`, by rejection from the bounding box
/// of each flat coordinate and from normalised Gaussians on sphere factors.
pub fn uniform_sample(m: &Manifold, c: &ConstraintSet, n: usize, seed: u64) -> Result<Vec<Point>> {
    let props = proposals(m, c)?;
    let d = m.storage_dim();
    let draws: Vec<Result<Point>> = par::map_indices(n, |i| {
        let mut rng = rng::stream(seed, "uniform", i as u64);
        let mut x = vec![0.0; d];
        for _ in 0..UNIFORM_TRIES {
            let mut j = 0;
            for p in &props {
                match p {
                    Proposal::Interval(l, h) => {
                        x[j] = rng.random_range(*l..*h);
                        j += 1;
                    }
                    Proposal::Sphere(r) => {
                        let blk = &mut x[r.clone()];
                        loop {
                            blk.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                            let nn = blk.iter().map(|v| v * v).sum::<f64>().sqrt();
                            if nn > 1e-8 {
                                blk.iter_mut().for_each(|v| *v /= nn);
                                break;
                            }
                        }
                        j = r.end;
                    }
                }
            }
            if c.contains_coords(&x) {
                return Ok(Point(x));
            }
        }
        Err(Error::Initialisation(format!(
            "no point of M found in {UNIFORM_TRIES} proposals"
        )))
    });
    draws.into_iter().collect()
}

/// Reverse generation: uniform start, then Metropolis steps through the
/// grid backwards with drift `score(T − t_k, x)` and step `γ_{N−1−k}`.
///
/// All chains advance in lockstep so the score is evaluated in batches.
pub fn reverse_generate(
    m: &Manifold,
    c: &ConstraintSet,
    score: &dyn ScoreField,
    grid: &TimeGrid,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    grid.validate()?;
    reverse_generate_steps(m, c, score, grid, grid.steps, n_samples, seed)
}

/// [`reverse_generate`] stopped after `steps` reverse steps (`0` returns
/// the uniform initial draws).
pub fn reverse_generate_steps(
    m: &Manifold,
    c: &ConstraintSet,
    score: &dyn ScoreField,
    grid: &TimeGrid,
    steps: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    let init = uniform_sample(m, c, n_samples, rng::derive_seed(seed, "reverse/init"))?;
    if steps == 0 || n_samples == 0 {
        return Ok(init);
    }
    let d = m.storage_dim();
    let mut batch = ChainBatch::from_points(m, c, &init, seed, "reverse")?;
    let mut xs = vec![0.0; n_samples * d];
    let mut s = vec![0.0; n_samples * d];
    for k in 0..steps.min(grid.steps) {
        for (i, x) in batch.states().enumerate() {
            xs[i * d..(i + 1) * d].copy_from_slice(x);
        }
        score.eval_batch(grid.horizon() - grid.t(k), &xs, &mut s)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("score is not finite at reverse step {k}")));
        }
        batch.metropolis_with_drift(grid.gamma(grid.steps - 1 - k), &s);
    }
    Ok(batch.points())
}

/// Settings for [`tune_beta1`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub beta0: f64,
    pub steps: usize,
    pub chains: usize,
    pub bins: usize,
    pub bisections: usize,
    pub cap: f64,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            beta0: 1e-3,
            steps: 100,
            chains: 50_000,
            bins: 10,
            bisections: 12,
            cap: 1e4,
            seed: 0,
        }
    }
}

/// TV between the forward samples at `T` and a uniform reference sample:
/// the 1-D histogram TV when the chart is one-dimensional, otherwise the
/// largest 2-D histogram TV over adjacent coordinate pairs.
pub fn forward_tv_at_horizon(
    m: &Manifold,
    c: &ConstraintSet,
    x0_sample: &[Point],
    grid: &TimeGrid,
    reference: &[Point],
    cfg: &TuneConfig,
) -> Result<f64> {
    let starts: Vec<Point> = (0..cfg.chains).map(|i| x0_sample[i % x0_sample.len()].clone()).collect();
    let mut batch = ChainBatch::from_points(m, c, &starts, cfg.seed, "tune")?;
    batch.advance(crate::samplers::Sampler::Metropolis, &grid.gammas())?;
    let d = m.storage_dim();
    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..d)
        .map(|j| (batch.coordinate(j), reference.iter().map(|p| p.0[j]).collect()))
        .collect();
    let range = |j: usize| {
        let (a, r) = &cols[j];
        let lo = r.iter().chain(a).copied().fold(f64::INFINITY, f64::min);
        let hi = r.iter().chain(a).copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi.max(lo + f64::EPSILON))
    };
    if d == 1 {
        let (lo, hi) = range(0);
        return histogram_tv(&cols[0].0, TvReference::Samples(&cols[0].1), lo, hi, cfg.bins);
    }
    let mut worst: f64 = 0.0;
    for j in 0..d - 1 {
        let ((lo0, hi0), (lo1, hi1)) = (range(j), range(j + 1));
        let tv = histogram_tv_2d(
            (&cols[j].0, &cols[j + 1].0),
            (&cols[j].1, &cols[j + 1].1),
            [lo0, lo1],
            [hi0, hi1],
            cfg.bins,
        )?;
        worst = worst.max(tv);
    }
    Ok(worst)
}

/// Smallest `β1` (doubling from `β0`, then bisection) for which the
/// forward samples at `T` are within `criterion_tv` of uniform.
pub fn tune_beta1(
    m: &Manifold,
    c: &ConstraintSet,
    x0_sample: &[Point],
    criterion_tv: f64,
    cfg: &TuneConfig,
) -> Result<f64> {
    if x0_sample.is_empty() {
        return Err(Error::Config("tuning needs a nonempty starting sample".into()));
    }
    if !(criterion_tv > 0.0) {
        return Err(Error::Config("TV criterion must be positive".into()));
    }
    let reference = uniform_sample(m, c, cfg.chains, rng::derive_seed(cfg.seed, "tune/reference"))?;
    let passes = |beta1: f64| -> Result<bool> {
        let grid = TimeGrid::new(BetaSchedule::new(cfg.beta0, beta1)?, cfg.steps)?;
        Ok(forward_tv_at_horizon(m, c, x0_sample, &grid, &reference, cfg)? < criterion_tv)
    };
    let mut hi = cfg.beta0;
    if passes(hi)? {
        return Ok(hi);
    }
    let mut lo = hi;
    loop {
        hi *= 2.0;
        if hi > cfg.cap {
            return Err(Error::TuningFailure { cap: cfg.cap });
        }
        if passes(hi)? {
            break;
        }
        lo = hi;
    }
    for _ in 0..cfg.bisections {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
