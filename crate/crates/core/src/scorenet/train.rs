use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{ism_loss, rescaled_scores, DivergenceMode, LossContext, Weighting};
use super::mlp::{MlpParams, ScoreModel};
use crate::constraints::ConstraintSet;
use crate::diffusion::{forward_noise_batch, ScoreField, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point};
use crate::rng;

/// Training hyperparameters.
///
/// `batch_size` counts noised `(t, x)` examples per step; they come from
/// `⌈batch_size / repeats⌉` forward trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub repeats: usize,
    pub width: usize,
    pub divergence: DivergenceMode,
    pub weighting: Weighting,
    /// Collar width of the boundary rescaling.
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            lr: 2e-4,
            batch_size: 256,
            repeats: 8,
            width: 512,
            divergence: DivergenceMode::Auto,
            weighting: Weighting::OnePlusT,
            eps: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.batch_size == 0 || self.repeats == 0 || self.width == 0 {
            return Err(Error::Config("batch_size, repeats and width must be positive".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if let DivergenceMode::Hutchinson { probes: 0 } = self.divergence {
            return Err(Error::Config("at least one Hutchinson probe is needed".into()));
        }
        Ok(())
    }

    /// Cosine decay from `lr` at step 0 to zero at `steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.steps == 0 {
            return self.lr;
        }
        let u = step as f64 / self.steps as f64;
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * u).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Writes the loss curve as CSV with columns `step,loss,lr`.
pub fn write_loss_csv<W: Write>(w: W, losses: &[LossRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["step", "loss", "lr"]).map_err(csv_io)?;
    for r in losses {
        wr.write_record([r.step.to_string(), format!("{:e}", r.loss), format!("{:e}", r.lr)])
            .map_err(csv_io)?;
    }
    wr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    pub fn new<M: ScoreModel>(model: &M) -> Self {
        let zeros: Vec<Array2<f64>> = (0..model.num_params()).map(|i| Array2::zeros(model.param(i).raw_dim())).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn update<M: ScoreModel>(&mut self, model: &mut M, grads: &[Array2<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (i, g) in grads.iter().enumerate() {
            let p = model.param_mut(i);
            ndarray::Zip::from(p)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

/// Trained parameters and the per-step loss curve.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: MlpParams,
    pub losses: Vec<LossRecord>,
}

/// Trains a fresh network initialised from `rng::derive_seed(cfg.seed, "init")`.
pub fn train(m: &Manifold, c: &ConstraintSet, data: &[Point], grid: &TimeGrid, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let init = MlpParams::init(m.storage_dim(), cfg.width, rng::derive_seed(cfg.seed, "init"))?;
    train_from(m, c, data, grid, cfg, init, &mut |_| {})
}

/// Trains starting from `init`; `progress` sees every loss record.
///
/// Step `k` draws data indices from `rng::stream(seed, "train/batch", k)`,
/// noises them with seed `derive_seed(seed, "train/forward") + k` and draws
/// Hutchinson probes with seed `derive_seed(seed, "train/probes") + k`.
pub fn train_from(
    m: &Manifold,
    c: &ConstraintSet,
    data: &[Point],
    grid: &TimeGrid,
    cfg: &TrainConfig,
    init: MlpParams,
    progress: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    grid.validate()?;
    init.check()?;
    if init.state_dim != m.storage_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.storage_dim(),
            got: init.state_dim,
        });
    }
    if data.is_empty() && cfg.steps > 0 {
        return Err(Error::Config("training needs at least one datum".into()));
    }
    for (i, p) in data.iter().enumerate() {
        if p.len() != m.storage_dim() || !c.contains(p) {
            return Err(Error::Input {
                index: i,
                reason: "datum is not a point of the constraint set".into(),
            });
        }
    }
    let ctx = LossContext {
        manifold: m,
        constraint: c,
        eps: cfg.eps,
        mode: cfg.divergence,
        weighting: cfg.weighting,
    };
    let trajectories = cfg.batch_size.div_ceil(cfg.repeats);
    let forward_seed = rng::derive_seed(cfg.seed, "train/forward");
    let probe_seed = rng::derive_seed(cfg.seed, "train/probes");
    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut pick = rng::stream(cfg.seed, "train/batch", step as u64);
        let chosen: Vec<Point> = (0..trajectories)
            .map(|_| data[pick.random_range(0..data.len())].clone())
            .collect();
        let mut batch = forward_noise_batch(m, c, &chosen, grid, cfg.repeats, forward_seed.wrapping_add(step as u64))
            .map_err(|e| e.at_step(step))?;
        batch.truncate(cfg.batch_size);
        let value = ism_loss(&params, &batch, &ctx, probe_seed.wrapping_add(step as u64)).map_err(|e| e.at_step(step))?;
        if !value.loss.is_finite() || value.grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteLoss {
                step,
                param_norm: params.param_norm(),
            });
        }
        let lr = cfg.lr_at(step);
        adam.update(&mut params, &value.grads, lr);
        let rec = LossRecord {
            step,
            loss: value.loss,
            lr,
        };
        progress(&rec);
        losses.push(rec);
    }
    Ok(TrainOutput { params, losses })
}

/// A trained network seen as the projected, boundary-rescaled score field
/// used by reverse generation.
pub struct RescaledScore<'a, M> {
    pub model: &'a M,
    pub manifold: &'a Manifold,
    pub constraint: &'a ConstraintSet,
    pub eps: f64,
}

impl<M: ScoreModel> ScoreField for RescaledScore<'_, M> {
    fn eval_batch(&self, t: f64, xs: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.model.state_dim();
        if xs.len() % d != 0 || out.len() != xs.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: out.len(),
            });
        }
        let n = xs.len() / d;
        let xm = Array2::from_shape_vec((n, d), xs.to_vec()).expect("rows of length d");
        let s = rescaled_scores(self.model, self.manifold, self.constraint, self.eps, t, &xm);
        out.iter_mut().zip(s.iter()).for_each(|(o, v)| *o = *v);
        Ok(())
    }
}
