//! Oracles and metrics: the reflected heat kernel on `[0, 1]`, histogram
//! total variation, MMD, convergence-time measurement and power-law fits.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point};
use crate::par;
use crate::samplers::{ChainBatch, Sampler};

fn gauss(x: f64, t: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Transition density of reflected Brownian motion on `[0, 1]` by the
/// method of images, `Σ_k φ_t(x − x0 + 2k) + φ_t(x + x0 + 2k)`.
///
/// Terms are added in pairs `±k` until a pair falls below `tol` times the
/// running sum. `t` is accumulated Brownian time (`Σ γ_k` for a chain).
pub fn rbm_density_1d(x: f64, t: f64, x0: f64, tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let term = |k: f64| gauss(x - x0 + 2.0 * k, t) + gauss(x + x0 + 2.0 * k, t);
    let mut sum = term(0.0);
    let mut k = 1.0;
    loop {
        let pair = term(k) + term(-k);
        sum += pair;
        // the series only starts to shrink once 2k exceeds the spread
        if pair <= tol * sum && 2.0 * k > 2.0 + 8.0 * t.sqrt() {
            break;
        }
        k += 1.0;
    }
    Ok(sum)
}

/// The same density from the Neumann eigenfunction expansion
/// `1 + 2 Σ_n exp(−n²π²t/2) cos(nπx) cos(nπx0)`.
pub fn rbm_density_1d_cosine(x: f64, t: f64, x0: f64, tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let mut sum = 1.0;
    let mut n = 1.0;
    loop {
        let decay = (-n * n * PI * PI * t / 2.0).exp();
        sum += 2.0 * decay * (n * PI * x).cos() * (n * PI * x0).cos();
        if 2.0 * decay <= tol {
            break;
        }
        n += 1.0;
    }
    Ok(sum)
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::Config("histograms need at least 2 bins".into()));
    }
    Ok(())
}

/// Normalised histogram of `samples` on `bins` equal cells of `[lo, hi]`;
/// out-of-range values are clamped into the edge cells.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &s in samples {
        h[bin_index(s, lo, hi, bins)] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

fn bin_index(s: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let b = ((s - lo) / (hi - lo) * bins as f64).floor();
    if b.is_nan() {
        0
    } else {
        (b.max(0.0) as usize).min(bins - 1)
    }
}

/// Reference for [`histogram_tv`]: another sample or an analytic density.
pub enum TvReference<'a> {
    Samples(&'a [f64]),
    Density(&'a dyn Fn(f64) -> f64),
}

/// `½ Σ |p̂_a − p̂_b|` over `bins` equal cells of `[lo, hi]`. A density
/// reference is integrated per cell by the midpoint rule on 32 sub-points.
pub fn histogram_tv(a: &[f64], b: TvReference<'_>, lo: f64, hi: f64, bins: usize) -> Result<f64> {
    check_bins(bins)?;
    if a.is_empty() {
        return Err(Error::Config("histogram TV needs a nonempty sample".into()));
    }
    let pa = histogram(a, lo, hi, bins);
    let pb = match b {
        TvReference::Samples(s) => {
            if s.is_empty() {
                return Err(Error::Config("histogram TV needs a nonempty reference sample".into()));
            }
            histogram(s, lo, hi, bins)
        }
        TvReference::Density(f) => density_bins(f, lo, hi, bins),
    };
    Ok(0.5 * pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Per-cell masses of a density on `[lo, hi]` by the 32-point midpoint rule.
pub fn density_bins(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    let h = w / 32.0;
    (0..bins)
        .map(|i| {
            let a = lo + i as f64 * w;
            (0..32).map(|j| f(a + (j as f64 + 0.5) * h)).sum::<f64>() * h
        })
        .collect()
}

/// TV between the 2-D histogram of `(x, y)` pairs and the uniform law on a
/// rectangle, or the 1-D version when `ys` is `None`.
pub fn tv_to_uniform_2d(
    xs: &[f64],
    ys: Option<&[f64]>,
    lo: [f64; 2],
    hi: [f64; 2],
    bins: usize,
) -> Result<f64> {
    check_bins(bins)?;
    if xs.is_empty() {
        return Err(Error::Config("histogram TV needs a nonempty sample".into()));
    }
    let Some(ys) = ys else {
        let u = 1.0 / bins as f64;
        let h = histogram(xs, lo[0], hi[0], bins);
        return Ok(0.5 * h.iter().map(|p| (p - u).abs()).sum::<f64>());
    };
    let mut h = vec![0.0; bins * bins];
    for (&x, &y) in xs.iter().zip(ys) {
        h[bin_index(x, lo[0], hi[0], bins) * bins + bin_index(y, lo[1], hi[1], bins)] += 1.0;
    }
    let n = xs.len() as f64;
    let u = 1.0 / (bins * bins) as f64;
    Ok(0.5 * h.iter().map(|c| (c / n - u).abs()).sum::<f64>())
}

/// Two-sample TV between 2-D histograms of `(x, y)` pairs on a rectangle.
pub fn histogram_tv_2d(
    a: (&[f64], &[f64]),
    b: (&[f64], &[f64]),
    lo: [f64; 2],
    hi: [f64; 2],
    bins: usize,
) -> Result<f64> {
    check_bins(bins)?;
    if a.0.is_empty() || b.0.is_empty() || a.0.len() != a.1.len() || b.0.len() != b.1.len() {
        return Err(Error::Config("histogram TV needs nonempty paired samples".into()));
    }
    let hist = |(xs, ys): (&[f64], &[f64])| {
        let mut h = vec![0.0; bins * bins];
        for (&x, &y) in xs.iter().zip(ys) {
            h[bin_index(x, lo[0], hi[0], bins) * bins + bin_index(y, lo[1], hi[1], bins)] += 1.0;
        }
        let n = xs.len() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    Ok(0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

/// Weighted sum of RBF kernels `Σ w_i exp(−‖x − y‖² / (2 ℓ_i²))`.
///
/// For a Gaussian-mixture target the natural choice is one RBF per
/// component, with the component's standard deviation and weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub struct MmdKernel {
    lengthscales: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSpec {
    lengthscales: Vec<f64>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl TryFrom<KernelSpec> for MmdKernel {
    type Error = Error;
    fn try_from(s: KernelSpec) -> Result<Self> {
        let n = s.lengthscales.len();
        MmdKernel::new(s.lengthscales, s.weights.unwrap_or_else(|| vec![1.0; n]))
    }
}

impl From<MmdKernel> for KernelSpec {
    fn from(k: MmdKernel) -> Self {
        KernelSpec {
            lengthscales: k.lengthscales,
            weights: Some(k.weights),
        }
    }
}

impl MmdKernel {
    /// Weights are normalised to sum to one.
    pub fn new(lengthscales: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if lengthscales.is_empty() || lengthscales.len() != weights.len() {
            return Err(Error::Config("kernel needs matching, nonempty lengthscales and weights".into()));
        }
        if lengthscales.iter().any(|l| !(*l > 0.0)) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("lengthscales must be positive and weights nonnegative".into()));
        }
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Config("kernel weights sum to zero".into()));
        }
        Ok(MmdKernel {
            lengthscales,
            weights: weights.iter().map(|w| w / s).collect(),
        })
    }

    pub fn single(lengthscale: f64) -> Result<Self> {
        MmdKernel::new(vec![lengthscale], vec![1.0])
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.lengthscales
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * (-r2 / (2.0 * l * l)).exp())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    /// `sqrt(max(raw, 0))`.
    pub mmd: f64,
    /// Unbiased estimate of MMD², possibly negative.
    pub mmd2_raw: f64,
    /// Standard error of `mmd2_raw` from its first-order (linear) term.
    pub mmd2_se: f64,
}

/// Unbiased U-statistic estimate of MMD² between two samples.
pub fn mmd(a: &[Point], b: &[Point], kernel: &MmdKernel) -> Result<MmdResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Config("MMD needs at least 2 samples in each set".into()));
    }
    let (n, m) = (a.len(), b.len());
    // per-point row means feed both the estimate and its standard error
    let rows_a: Vec<(f64, f64)> = par::map_indices(n, |i| {
        let kaa = a.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, y)| kernel.eval(&a[i].0, &y.0)).sum::<f64>();
        let kab = b.iter().map(|y| kernel.eval(&a[i].0, &y.0)).sum::<f64>();
        (kaa / (n - 1) as f64, kab / m as f64)
    });
    let rows_b: Vec<(f64, f64)> = par::map_indices(m, |i| {
        let kbb = b.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, y)| kernel.eval(&b[i].0, &y.0)).sum::<f64>();
        let kba = a.iter().map(|y| kernel.eval(&b[i].0, &y.0)).sum::<f64>();
        (kbb / (m - 1) as f64, kba / n as f64)
    });
    let xx = rows_a.iter().map(|r| r.0).sum::<f64>() / n as f64;
    let xy = rows_a.iter().map(|r| r.1).sum::<f64>() / n as f64;
    let yy = rows_b.iter().map(|r| r.0).sum::<f64>() / m as f64;
    let raw = xx + yy - 2.0 * xy;
    // first-order terms h_a(i) = 2(mean_j k(a_i,a_j) − mean_j k(a_i,b_j)), same for b
    let var = |rows: &[(f64, f64)]| {
        let h: Vec<f64> = rows.iter().map(|r| 2.0 * (r.0 - r.1)).collect();
        let mu = h.iter().sum::<f64>() / h.len() as f64;
        h.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (h.len() - 1) as f64 / h.len() as f64
    };
    let se = (var(&rows_a) + var(&rows_b)).sqrt();
    Ok(MmdResult {
        mmd: raw.max(0.0).sqrt(),
        mmd2_raw: raw,
        mmd2_se: se,
    })
}

/// Sampler wall time and step count until the first-two-coordinate
/// marginal is within the TV threshold of uniform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTime {
    pub steps: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub chains: usize,
    pub checkpoint_every: usize,
    pub bins: usize,
    pub max_steps: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            chains: 4096,
            checkpoint_every: 50,
            bins: 20,
            max_steps: 10_000_000,
        }
    }
}

/// Run chains from `x0` until the TV to uniform of the first one or two
/// coordinates drops below `tv_threshold`, checked every
/// `checkpoint_every` steps (including step 0).
///
/// Only sampler work is timed. Requires a set with a bounding box on which
/// the uniform law of `M` has uniform coordinate marginals (hypercubes).
#[allow(clippy::too_many_arguments)]
pub fn convergence_time(
    m: &Manifold,
    c: &ConstraintSet,
    sampler: Sampler,
    x0: &Point,
    tv_threshold: f64,
    gamma: f64,
    seed: u64,
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceTime> {
    if !(tv_threshold > 0.0 && tv_threshold < 1.0) {
        return Err(Error::Config("tv threshold must lie in (0, 1)".into()));
    }
    let (lo, hi) = c
        .bounding_box()
        .ok_or_else(|| Error::Config("convergence time needs a bounded constraint set".into()))?;
    let d = x0.len();
    let mut batch = ChainBatch::replicate(m, c, x0, cfg.chains, seed, sampler.name())?;
    let gammas = vec![gamma; cfg.checkpoint_every];
    let mut elapsed = Duration::ZERO;
    let mut steps = 0;
    loop {
        let xs = batch.coordinate(0);
        let ys = (d > 1).then(|| batch.coordinate(1));
        let tv = tv_to_uniform_2d(&xs, ys.as_deref(), [lo[0], lo[d.min(2) - 1]], [hi[0], hi[d.min(2) - 1]], cfg.bins)?;
        if tv < tv_threshold {
            return Ok(ConvergenceTime {
                steps,
                wall_seconds: elapsed.as_secs_f64(),
            });
        }
        if steps >= cfg.max_steps {
            return Err(Error::NonConvergence { steps });
        }
        let start = Instant::now();
        batch.advance(sampler, &gammas)?;
        elapsed += start.elapsed();
        steps += cfg.checkpoint_every;
    }
}

/// Least-squares fit of `ln time = a + exponent · ln d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_power_law(dims: &[f64], times: &[f64]) -> Result<PowerLawFit> {
    if dims.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            got: times.len(),
        });
    }
    if dims.len() < 3 {
        return Err(Error::Config(format!(
            "a power-law fit needs at least 3 points, got {}",
            dims.len()
        )));
    }
    if dims.iter().chain(times).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("power-law fit needs positive finite inputs".into()));
    }
    let x: Vec<f64> = dims.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("power-law fit needs at least two distinct dimensions".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(PowerLawFit {
        exponent: slope,
        intercept,
        r2,
    })
}

/// Convergence measurements over dimensions, with the fitted exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub sampler: Sampler,
    pub dims: Vec<usize>,
    pub times: Vec<ConvergenceTime>,
    pub fit: Option<PowerLawFit>,
}

impl ScalingResult {
    /// Rows `d,steps,wall_seconds`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "d,steps,wall_seconds")?;
        for (d, t) in self.dims.iter().zip(&self.times) {
            writeln!(w, "{d},{},{}", t.steps, t.wall_seconds)?;
        }
        Ok(())
    }
}
