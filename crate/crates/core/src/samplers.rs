//! Discretisations of constrained Brownian motion with optional drift.
//!
//! * Metropolis: one proposal `exp_x(γ b + √γ z)`, kept iff it is strictly
//!   inside, otherwise the chain stays put (the step still counts).
//! * Rejection: the Gaussian increment is redrawn until the proposal lands
//!   inside.
//! * Reflected: the increment is followed as a straight path that bounces
//!   off the boundary (flat charts only).
//!
//! The `*_kernel` functions work on raw coordinate slices with a reusable
//! [`Workspace`] and are what the batch drivers run. The owned wrappers
//! (`metropolis_step`, …) are convenient for single calls.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{check_len, Error, Result};
use crate::geometry::{dot, norm, Manifold, Point, TangentVector};
use crate::par;
use crate::rng::{self, ChainRng};

/// Distance below which a reflected endpoint is pushed back inside.
pub const BOUNDARY_NUDGE: f64 = 1e-10;

/// Tangent drift `b(t, x)` written into the output slice.
pub type Drift = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Metropolis,
    Rejection,
    Reflected,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Metropolis => "metropolis",
            Sampler::Rejection => "rejection",
            Sampler::Reflected => "reflected",
        }
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone)]
pub struct StepConfig {
    pub gamma: f64,
    pub drift: Option<Drift>,
    pub max_rejection_tries: usize,
    pub max_reflections: usize,
}

impl fmt::Debug for StepConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StepConfig")
            .field("gamma", &self.gamma)
            .field("drift", &self.drift.as_ref().map(|_| "<fn>"))
            .field("max_rejection_tries", &self.max_rejection_tries)
            .field("max_reflections", &self.max_reflections)
            .finish()
    }
}

impl StepConfig {
    pub fn new(gamma: f64) -> Self {
        StepConfig {
            gamma,
            drift: None,
            max_rejection_tries: 10_000,
            max_reflections: 1_000,
        }
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = Some(drift);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("step size must be positive, got {}", self.gamma)));
        }
        if self.max_rejection_tries == 0 || self.max_reflections == 0 {
            return Err(Error::Config("try and reflection caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scratch buffers for the slice kernels.
#[derive(Clone, Debug)]
pub struct Workspace {
    z: Vec<f64>,
    v: Vec<f64>,
    y: Vec<f64>,
    n: Vec<f64>,
    b: Vec<f64>,
}

impl Workspace {
    pub fn new(storage_dim: usize) -> Self {
        let z = vec![0.0; storage_dim];
        Workspace {
            v: z.clone(),
            y: z.clone(),
            n: z.clone(),
            b: z.clone(),
            z,
        }
    }
}

/// `v = γ b + √γ z`, projected onto the tangent space when a drift is present.
fn increment(m: &Manifold, x: &[f64], gamma: f64, drift: Option<&[f64]>, z: &[f64], v: &mut [f64]) {
    let sg = gamma.sqrt();
    match drift {
        None => v.iter_mut().zip(z).for_each(|(vi, zi)| *vi = sg * zi),
        Some(b) => {
            for ((vi, zi), bi) in v.iter_mut().zip(z).zip(b) {
                *vi = sg * zi + gamma * bi;
            }
            m.project_tangent_in_place(x, v);
        }
    }
}

/// Metropolis step on raw coordinates. Returns whether the proposal was kept.
pub fn metropolis_kernel<R: Rng + ?Sized>(
    m: &Manifold,
    c: &ConstraintSet,
    x: &mut [f64],
    gamma: f64,
    drift: Option<&[f64]>,
    ws: &mut Workspace,
    rng: &mut R,
) -> bool {
    m.tangent_randn_into(x, rng, &mut ws.z);
    increment(m, x, gamma, drift, &ws.z, &mut ws.v);
    m.exp_into(x, &ws.v, &mut ws.y);
    if c.contains_coords(&ws.y) {
        x.copy_from_slice(&ws.y);
        true
    } else {
        false
    }
}

/// Rejection step on raw coordinates. Returns the number of draws used.
pub fn rejection_kernel<R: Rng + ?Sized>(
    m: &Manifold,
    c: &ConstraintSet,
    x: &mut [f64],
    gamma: f64,
    drift: Option<&[f64]>,
    max_tries: usize,
    ws: &mut Workspace,
    rng: &mut R,
) -> Result<usize> {
    for tries in 1..=max_tries {
        m.tangent_randn_into(x, rng, &mut ws.z);
        increment(m, x, gamma, drift, &ws.z, &mut ws.v);
        m.exp_into(x, &ws.v, &mut ws.y);
        if c.contains_coords(&ws.y) {
            x.copy_from_slice(&ws.y);
            return Ok(tries);
        }
    }
    Err(Error::StuckState { tries: max_tries })
}

/// Bookkeeping from one reflected step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectStats {
    pub reflections: usize,
    /// Total length of the broken path, equal to `‖v‖`.
    pub arc_length: f64,
}

/// Reflected step: follow `v` from `x`, bouncing off the boundary.
pub fn reflected_kernel(
    m: &Manifold,
    c: &ConstraintSet,
    x: &mut [f64],
    v: &[f64],
    max_reflections: usize,
    ws: &mut Workspace,
) -> Result<ReflectStats> {
    let len = norm(v);
    if !len.is_finite() {
        return Err(Error::ContractViolation("reflected step length is not finite".into()));
    }
    if matches!(c, ConstraintSet::All) {
        m.exp_into(x, v, &mut ws.y);
        x.copy_from_slice(&ws.y);
        return Ok(ReflectStats {
            reflections: 0,
            arc_length: len,
        });
    }
    if !m.is_flat() {
        return Err(Error::Unsupported(
            "reflected steps against a boundary need a flat chart".into(),
        ));
    }
    let mut stats = ReflectStats {
        reflections: 0,
        arc_length: 0.0,
    };
    if len == 0.0 {
        return Ok(stats);
    }
    let s = &mut ws.v;
    s.iter_mut().zip(v).for_each(|(si, vi)| *si = vi / len);
    let mut remaining = len;
    loop {
        match c.ray_hit(x, s, remaining)? {
            None => {
                x.iter_mut().zip(s.iter()).for_each(|(xi, si)| *xi += remaining * si);
                stats.arc_length += remaining;
                break;
            }
            Some(hit) => {
                x.iter_mut().zip(s.iter()).for_each(|(xi, si)| *xi += hit.t * si);
                stats.arc_length += hit.t;
                remaining -= hit.t;
                if remaining <= 0.0 {
                    break;
                }
                if stats.reflections == max_reflections {
                    return Err(Error::ReflectionBudget {
                        count: max_reflections,
                    });
                }
                c.outward_normal(x, hit.index, &mut ws.n);
                let a = 2.0 * dot(s, &ws.n);
                s.iter_mut().zip(&ws.n).for_each(|(si, ni)| *si -= a * ni);
                stats.reflections += 1;
            }
        }
    }
    nudge_inside(c, x, &mut ws.n);
    m.normalize_in_place(x);
    Ok(stats)
}

/// Move a point lying on or within `BOUNDARY_NUDGE` of `∂M` inward by
/// `BOUNDARY_NUDGE` along the normal of the most violated constraint.
fn nudge_inside(c: &ConstraintSet, x: &mut [f64], n: &mut [f64]) {
    let mut first = true;
    for _ in 0..16 {
        let (idx, val) = (0..c.num_constraints())
            .map(|i| (i, c.constraint_value(x, i)))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let close = first && val > -BOUNDARY_NUDGE;
        if !(close || val >= 0.0) {
            return;
        }
        first = false;
        c.outward_normal(x, idx, n);
        let step = BOUNDARY_NUDGE.max(val);
        x.iter_mut().zip(n.iter()).for_each(|(xi, ni)| *xi -= step * ni);
    }
}

fn check_inside(m: &Manifold, c: &ConstraintSet, x: &Point) -> Result<()> {
    check_len(m.storage_dim(), x.len())?;
    if !c.contains(x) {
        return Err(Error::Domain("starting point is outside the constraint set".into()));
    }
    Ok(())
}

fn eval_drift(cfg: &StepConfig, t: f64, x: &[f64], out: &mut Vec<f64>) -> bool {
    match &cfg.drift {
        Some(b) => {
            out.resize(x.len(), 0.0);
            b(t, x, out);
            true
        }
        None => false,
    }
}

/// Metropolis step from a given standard-normal tangent draw `z`.
pub fn metropolis_step_with_noise(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    cfg: &StepConfig,
    t: f64,
    z: &[f64],
) -> Result<(Point, bool)> {
    check_inside(m, c, x)?;
    check_len(x.len(), z.len())?;
    let mut ws = Workspace::new(x.len());
    let mut b = Vec::new();
    let has = eval_drift(cfg, t, &x.0, &mut b);
    increment(m, &x.0, cfg.gamma, has.then_some(&b[..]), z, &mut ws.v);
    m.exp_into(&x.0, &ws.v, &mut ws.y);
    if c.contains_coords(&ws.y) {
        Ok((Point(ws.y), true))
    } else {
        Ok((x.clone(), false))
    }
}

/// One Metropolis step; `(proposal, true)` if accepted, `(x, false)` otherwise.
pub fn metropolis_step<R: Rng + ?Sized>(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    cfg: &StepConfig,
    t: f64,
    rng: &mut R,
) -> Result<(Point, bool)> {
    check_inside(m, c, x)?;
    let mut z = vec![0.0; x.len()];
    m.tangent_randn_into(&x.0, rng, &mut z);
    metropolis_step_with_noise(m, c, x, cfg, t, &z)
}

/// One rejection step: the Gaussian step conditioned on landing inside.
pub fn rejection_step<R: Rng + ?Sized>(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    cfg: &StepConfig,
    rng: &mut R,
) -> Result<Point> {
    rejection_step_at(m, c, x, cfg, 0.0, rng)
}

fn rejection_step_at<R: Rng + ?Sized>(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    cfg: &StepConfig,
    t: f64,
    rng: &mut R,
) -> Result<Point> {
    check_inside(m, c, x)?;
    let mut ws = Workspace::new(x.len());
    let mut b = Vec::new();
    let has = eval_drift(cfg, t, &x.0, &mut b);
    let mut y = x.0.clone();
    rejection_kernel(m, c, &mut y, cfg.gamma, has.then_some(&b[..]), cfg.max_rejection_tries, &mut ws, rng)?;
    Ok(Point(y))
}

/// Follow the tangent vector `v` from `x`, reflecting at the boundary.
pub fn reflected_step(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    v: &TangentVector,
    cfg: &StepConfig,
) -> Result<Point> {
    Ok(reflected_step_stats(m, c, x, v, cfg)?.0)
}

/// [`reflected_step`] plus reflection count and path length.
pub fn reflected_step_stats(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    v: &TangentVector,
    cfg: &StepConfig,
) -> Result<(Point, ReflectStats)> {
    check_inside(m, c, x)?;
    check_len(x.len(), v.components.len())?;
    let mut ws = Workspace::new(x.len());
    let mut y = x.0.clone();
    let stats = reflected_kernel(m, c, &mut y, &v.components, cfg.max_reflections, &mut ws)?;
    Ok((Point(y), stats))
}

/// Diffusion times `t_0..t_N` and the step sizes `γ_0..γ_{N−1}` between them.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSchedule {
    pub times: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl StepSchedule {
    /// `n` steps of size `gamma`, with time equal to accumulated `Σγ`.
    pub fn constant(gamma: f64, n: usize) -> Self {
        StepSchedule {
            times: (0..=n).map(|k| k as f64 * gamma).collect(),
            gammas: vec![gamma; n],
        }
    }

    pub fn new(times: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        if times.len() != gammas.len() + 1 {
            return Err(Error::Config("a schedule needs one more time than step sizes".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("schedule times must be strictly increasing".into()));
        }
        if gammas.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        Ok(StepSchedule { times, gammas })
    }

    pub fn steps(&self) -> usize {
        self.gammas.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub k: usize,
    pub t: f64,
    pub point: Point,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ChainState>,
    /// One flag per step; all `true` for samplers other than Metropolis.
    pub accept_flags: Vec<bool>,
    pub rng_seed: u64,
}

impl Trajectory {
    pub fn last(&self) -> &Point {
        &self.states.last().expect("trajectory holds at least x0").point
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accept_flags.is_empty() {
            return 1.0;
        }
        self.accept_flags.iter().filter(|a| **a).count() as f64 / self.accept_flags.len() as f64
    }

    /// Rows `chain_id,k,t,accept,coord_0,…`; `write_header` emits the header first.
    pub fn write_csv<W: Write>(&self, w: &mut W, chain_id: usize, write_header: bool) -> Result<()> {
        if write_header {
            let d = self.states.first().map_or(0, |s| s.point.len());
            let coords: Vec<String> = (0..d).map(|i| format!("coord_{i}")).collect();
            writeln!(w, "chain_id,k,t,accept,{}", coords.join(","))?;
        }
        for s in &self.states {
            let acc = if s.k == 0 { true } else { self.accept_flags[s.k - 1] };
            write!(w, "{chain_id},{},{},{}", s.k, s.t, u8::from(acc))?;
            for c in &s.point.0 {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Run one chain through `schedule`, recording every state.
///
/// `rng_seed` and `chain_id` select the stream `rng::stream(seed, "chain", id)`.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    m: &Manifold,
    c: &ConstraintSet,
    x0: &Point,
    sampler: Sampler,
    schedule: &StepSchedule,
    drift: Option<Drift>,
    rng_seed: u64,
    chain_id: u64,
) -> Result<Trajectory> {
    let mut rng = rng::stream(rng_seed, "chain", chain_id);
    let mut traj = run_chain_with(m, c, x0, sampler, schedule, drift, &mut rng)?;
    traj.rng_seed = rng_seed;
    Ok(traj)
}

/// [`run_chain`] with a caller-supplied generator.
pub fn run_chain_with<R: Rng + ?Sized>(
    m: &Manifold,
    c: &ConstraintSet,
    x0: &Point,
    sampler: Sampler,
    schedule: &StepSchedule,
    drift: Option<Drift>,
    rng: &mut R,
) -> Result<Trajectory> {
    check_inside(m, c, x0)?;
    let n = schedule.steps();
    let mut traj = Trajectory {
        states: Vec::with_capacity(n + 1),
        accept_flags: Vec::with_capacity(n),
        rng_seed: 0,
    };
    let t0 = schedule.times.first().copied().unwrap_or(0.0);
    traj.states.push(ChainState {
        k: 0,
        t: t0,
        point: x0.clone(),
    });
    let mut ws = Workspace::new(x0.len());
    let mut x = x0.0.clone();
    let mut b = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    for k in 0..n {
        let (t, gamma) = (schedule.times[k], schedule.gammas[k]);
        let drift_now = drift.as_ref().map(|f| {
            f(t, &x, &mut b);
            &b[..]
        });
        let accepted = match sampler {
            Sampler::Metropolis => metropolis_kernel(m, c, &mut x, gamma, drift_now, &mut ws, rng),
            Sampler::Rejection => {
                rejection_kernel(m, c, &mut x, gamma, drift_now, 10_000, &mut ws, rng)
                    .map_err(|e| e.at_step(k))?;
                true
            }
            Sampler::Reflected => {
                m.tangent_randn_into(&x, rng, &mut ws.z);
                increment(m, &x, gamma, drift_now, &ws.z, &mut v);
                reflected_kernel(m, c, &mut x, &v, 1_000, &mut ws).map_err(|e| e.at_step(k))?;
                true
            }
        };
        traj.accept_flags.push(accepted);
        traj.states.push(ChainState {
            k: k + 1,
            t: schedule.times[k + 1],
            point: Point(x.clone()),
        });
    }
    Ok(traj)
}

/// Per-chain state of a [`ChainBatch`].
#[derive(Clone, Debug)]
struct Slot {
    x: Vec<f64>,
    rng: ChainRng,
    accepted: u64,
    proposed: u64,
}

/// Many independent chains advanced together, each with its own stream.
///
/// Chain `i` draws from `rng::stream(seed, name, i)`, so results do not
/// depend on the thread count.
#[derive(Clone, Debug)]
pub struct ChainBatch<'a> {
    m: &'a Manifold,
    c: &'a ConstraintSet,
    slots: Vec<Slot>,
    pub max_rejection_tries: usize,
    pub max_reflections: usize,
}

const CHUNK: usize = 64;

impl<'a> ChainBatch<'a> {
    /// `n` chains all started at `x0`.
    pub fn replicate(m: &'a Manifold, c: &'a ConstraintSet, x0: &Point, n: usize, seed: u64, name: &str) -> Result<Self> {
        check_inside(m, c, x0)?;
        Ok(Self::from_states_unchecked(m, c, vec![x0.0.clone(); n], seed, name))
    }

    /// One chain per starting point.
    pub fn from_points(m: &'a Manifold, c: &'a ConstraintSet, x0: &[Point], seed: u64, name: &str) -> Result<Self> {
        for (i, p) in x0.iter().enumerate() {
            check_inside(m, c, p).map_err(|e| Error::Input {
                index: i,
                reason: e.to_string(),
            })?;
        }
        Ok(Self::from_states_unchecked(m, c, x0.iter().map(|p| p.0.clone()).collect(), seed, name))
    }

    fn from_states_unchecked(m: &'a Manifold, c: &'a ConstraintSet, xs: Vec<Vec<f64>>, seed: u64, name: &str) -> Self {
        let slots = xs
            .into_iter()
            .enumerate()
            .map(|(i, x)| Slot {
                x,
                rng: rng::stream(seed, name, i as u64),
                accepted: 0,
                proposed: 0,
            })
            .collect();
        ChainBatch {
            m,
            c,
            slots,
            max_rejection_tries: 10_000,
            max_reflections: 1_000,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.slots[i].x
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.slots.iter().map(|s| &s.x[..])
    }

    /// Coordinate `j` of every chain.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.slots.iter().map(|s| s.x[j]).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        self.slots.iter().map(|s| Point(s.x.clone())).collect()
    }

    /// Fraction of accepted Metropolis proposals so far.
    pub fn acceptance_rate(&self) -> f64 {
        let (a, p) = self
            .slots
            .iter()
            .fold((0u64, 0u64), |(a, p), s| (a + s.accepted, p + s.proposed));
        if p == 0 {
            1.0
        } else {
            a as f64 / p as f64
        }
    }

    /// Apply `gammas` in order to every chain, without drift.
    pub fn advance(&mut self, sampler: Sampler, gammas: &[f64]) -> Result<()> {
        let (m, c) = (self.m, self.c);
        let (tries, refl) = (self.max_rejection_tries, self.max_reflections);
        let d = m.storage_dim();
        let first_err = std::sync::Mutex::new(None::<Error>);
        par::for_each_chunk(&mut self.slots, CHUNK, |_, chunk| {
            let mut ws = Workspace::new(d);
            let mut v = vec![0.0; d];
            for slot in chunk {
                for (k, &g) in gammas.iter().enumerate() {
                    let r = match sampler {
                        Sampler::Metropolis => {
                            slot.proposed += 1;
                            if metropolis_kernel(m, c, &mut slot.x, g, None, &mut ws, &mut slot.rng) {
                                slot.accepted += 1;
                            }
                            Ok(())
                        }
                        Sampler::Rejection => {
                            rejection_kernel(m, c, &mut slot.x, g, None, tries, &mut ws, &mut slot.rng).map(|_| ())
                        }
                        Sampler::Reflected => {
                            m.tangent_randn_into(&slot.x, &mut slot.rng, &mut ws.z);
                            increment(m, &slot.x, g, None, &ws.z, &mut v);
                            reflected_kernel(m, c, &mut slot.x, &v, refl, &mut ws).map(|_| ())
                        }
                    };
                    if let Err(e) = r {
                        first_err.lock().expect("error slot").get_or_insert(e.at_step(k));
                        return;
                    }
                }
            }
        });
        match first_err.into_inner().expect("error slot") {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Per-chain schedules: chain `i` applies `gammas[..lens[i]]`.
    pub fn advance_ragged(&mut self, gammas: &[f64], lens: &[usize]) {
        let (m, c) = (self.m, self.c);
        let d = m.storage_dim();
        assert_eq!(lens.len(), self.slots.len());
        par::for_each_chunk(&mut self.slots, CHUNK, |ci, chunk| {
            let mut ws = Workspace::new(d);
            for (j, slot) in chunk.iter_mut().enumerate() {
                for &g in &gammas[..lens[ci * CHUNK + j]] {
                    slot.proposed += 1;
                    if metropolis_kernel(m, c, &mut slot.x, g, None, &mut ws, &mut slot.rng) {
                        slot.accepted += 1;
                    }
                }
            }
        });
    }

    /// One Metropolis step per chain with per-chain drift `drift[i·D..(i+1)·D]`.
    pub fn metropolis_with_drift(&mut self, gamma: f64, drift: &[f64]) {
        let (m, c) = (self.m, self.c);
        let d = m.storage_dim();
        assert_eq!(drift.len(), d * self.slots.len());
        par::for_each_chunk(&mut self.slots, CHUNK, |ci, chunk| {
            let mut ws = Workspace::new(d);
            for (j, slot) in chunk.iter_mut().enumerate() {
                let i = ci * CHUNK + j;
                ws.b.copy_from_slice(&drift[i * d..(i + 1) * d]);
                let b = std::mem::take(&mut ws.b);
                slot.proposed += 1;
                if metropolis_kernel(m, c, &mut slot.x, gamma, Some(&b), &mut ws, &mut slot.rng) {
                    slot.accepted += 1;
                }
                ws.b = b;
            }
        });
    }
}

/// Monte Carlo local moments of the one-step kernels at `x`.
///
/// Each estimate has its own independent stream.
#[derive(Clone, Debug)]
pub struct LocalMoments {
    /// Rejection kernel `E[X₁ − x] / γ`.
    pub drift_hat: Vec<f64>,
    pub drift_se: Vec<f64>,
    /// Rejection kernel `E[(X₁ − x)(X₁ − x)ᵀ] / γ`, row-major.
    pub cov_hat: Vec<f64>,
    pub cov_se: Vec<f64>,
    /// `P(x + √γ Z ∈ M)`.
    pub accept_prob: f64,
    pub accept_se: f64,
    /// Metropolis kernel `E[X₁ − x] / γ`.
    pub metropolis_drift: Vec<f64>,
    pub metropolis_drift_se: Vec<f64>,
}

/// Mean and standard error of each column of a stream of vectors.
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments {
            n: 0,
            sum: vec![0.0; d],
            sq: vec![0.0; d],
        }
    }

    fn push(&mut self, v: impl Iterator<Item = f64>) {
        self.n += 1;
        for ((s, q), x) in self.sum.iter_mut().zip(self.sq.iter_mut()).zip(v) {
            *s += x;
            *q += x * x;
        }
    }

    fn merge(mut self, o: Moments) -> Moments {
        self.n += o.n;
        self.sum.iter_mut().zip(o.sum).for_each(|(a, b)| *a += b);
        self.sq.iter_mut().zip(o.sq).for_each(|(a, b)| *a += b);
        self
    }

    fn mean_se(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let se = self
            .sq
            .iter()
            .zip(&mean)
            .map(|(q, mu)| ((q / n - mu * mu).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect();
        (mean, se)
    }
}

const MOMENT_BLOCKS: usize = 64;

fn blocked_moments<F>(n: usize, d: usize, seed: u64, name: &str, f: F) -> Result<Moments>
where
    F: Fn(&mut ChainRng, &mut Moments) -> Result<()> + Sync + Send,
{
    let per = n.div_ceil(MOMENT_BLOCKS);
    let parts: Vec<Result<Moments>> = par::map_indices(MOMENT_BLOCKS, |b| {
        let mut rng = rng::stream(seed, name, b as u64);
        let mut mo = Moments::new(d);
        let count = per.min(n.saturating_sub(b * per));
        for _ in 0..count {
            f(&mut rng, &mut mo)?;
        }
        Ok(mo)
    });
    let mut total = Moments::new(d);
    for p in parts {
        total = total.merge(p?);
    }
    Ok(total)
}

/// Estimate the rejection and Metropolis kernel moments and the acceptance
/// probability at `x` from `n_samples` draws each.
pub fn empirical_local_moments(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    gamma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<LocalMoments> {
    if n_samples < 100 {
        return Err(Error::Config("local moments need at least 100 samples".into()));
    }
    check_inside(m, c, x)?;
    let d = x.len();
    let acc = acceptance_moments(m, c, &x.0, gamma, n_samples, seed)?;
    let rej = blocked_moments(n_samples, d + d * d, seed, "moments/rejection", |rng, mo| {
        let mut ws = Workspace::new(d);
        let mut y = x.0.clone();
        rejection_kernel(m, c, &mut y, gamma, None, 10_000, &mut ws, rng)?;
        let dx: Vec<f64> = y.iter().zip(&x.0).map(|(a, b)| a - b).collect();
        mo.push(
            dx.iter()
                .map(|v| v / gamma)
                .chain((0..d * d).map(|k| dx[k / d] * dx[k % d] / gamma)),
        );
        Ok(())
    })?;
    let met = blocked_moments(n_samples, d, seed, "moments/metropolis", |rng, mo| {
        let mut ws = Workspace::new(d);
        let mut y = x.0.clone();
        metropolis_kernel(m, c, &mut y, gamma, None, &mut ws, rng);
        mo.push(y.iter().zip(&x.0).map(|(a, b)| (a - b) / gamma));
        Ok(())
    })?;
    let (rm, rs) = rej.mean_se();
    let (mm, ms) = met.mean_se();
    Ok(LocalMoments {
        drift_hat: rm[..d].to_vec(),
        drift_se: rs[..d].to_vec(),
        cov_hat: rm[d..].to_vec(),
        cov_se: rs[d..].to_vec(),
        accept_prob: acc.0,
        accept_se: acc.1,
        metropolis_drift: mm,
        metropolis_drift_se: ms,
    })
}

fn acceptance_moments(m: &Manifold, c: &ConstraintSet, x: &[f64], gamma: f64, n: usize, seed: u64) -> Result<(f64, f64)> {
    let d = x.len();
    let acc = blocked_moments(n, 1, seed, "moments/accept", |rng, mo| {
        let mut ws = Workspace::new(d);
        let mut y = x.to_vec();
        let ok = metropolis_kernel(m, c, &mut y, gamma, None, &mut ws, rng);
        mo.push(std::iter::once(f64::from(u8::from(ok))));
        Ok(())
    })?;
    let (mean, se) = acc.mean_se();
    Ok((mean[0], se[0]))
}

/// Monte Carlo estimate of `P(exp_x(√γ Z) ∈ M)` and its standard error.
pub fn acceptance_probability(
    m: &Manifold,
    c: &ConstraintSet,
    x: &Point,
    gamma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_inside(m, c, x)?;
    acceptance_moments(m, c, &x.0, gamma, n_samples, seed)
}
