//! Implicit score matching on a constrained manifold.
//!
//! The trained field is `s̃ = m(x) · P_x s_θ(t, x)`, where `P_x` projects
//! onto the tangent space and `m = min(1, d(x, ∂M)/ε)` is the boundary
//! rescaling. Per example the loss is `λ(t)(½‖s̃‖² + div s̃)` with
//!
//! * `½‖s̃‖² = m² · ½(‖s‖² − Σ_spheres ⟨x_b, s_b⟩²)`,
//! * `div s̃ = m · (Σ_k e_kᵀ J_s e_k − Σ_spheres dim_b ⟨x_b, s_b⟩) + ⟨∇m, s⟩`,
//!
//! `e_k` an orthonormal tangent basis. The trace is computed exactly from
//! one Jacobian–vector product per basis vector, or estimated with
//! Rademacher probes.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{with_time, ScoreModel};
use super::tape::{Tape, Var};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point};
use crate::par;
use crate::rng;

/// How the divergence term is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DivergenceMode {
    /// Exact for intrinsic dimension up to 3, one Hutchinson probe above.
    #[default]
    Auto,
    Exact,
    Hutchinson { probes: usize },
}

/// Dimension above which exact divergences get expensive.
pub const EXACT_DIVERGENCE_WARN_DIM: usize = 64;

impl DivergenceMode {
    /// The concrete mode for intrinsic dimension `dim`, plus a cost warning
    /// for exact traces in high dimension.
    pub fn resolve(self, dim: usize) -> (DivergenceMode, Option<String>) {
        let mode = match self {
            DivergenceMode::Auto if dim <= 3 => DivergenceMode::Exact,
            DivergenceMode::Auto => DivergenceMode::Hutchinson { probes: 1 },
            other => other,
        };
        let warn = (mode == DivergenceMode::Exact && dim > EXACT_DIVERGENCE_WARN_DIM).then(|| {
            format!("exact divergence in dimension {dim} costs {dim} Jacobian-vector products per example")
        });
        (mode, warn)
    }
}

/// Loss weighting `λ(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `λ(t) = 1 + t`.
    #[default]
    OnePlusT,
    Unit,
}

impl Weighting {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Weighting::OnePlusT => 1.0 + t,
            Weighting::Unit => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossContext<'a> {
    pub manifold: &'a Manifold,
    pub constraint: &'a ConstraintSet,
    /// Collar width of the boundary rescaling.
    pub eps: f64,
    pub mode: DivergenceMode,
    pub weighting: Weighting,
}

impl<'a> LossContext<'a> {
    pub fn new(manifold: &'a Manifold, constraint: &'a ConstraintSet) -> Self {
        LossContext {
            manifold,
            constraint,
            eps: 0.01,
            mode: DivergenceMode::Auto,
            weighting: Weighting::OnePlusT,
        }
    }
}

/// Loss value and its gradient with respect to each parameter tensor.
#[derive(Clone, Debug)]
pub struct LossValue {
    pub loss: f64,
    pub grads: Vec<Array2<f64>>,
}

/// Rows evaluated on one tape.
const CHUNK_ROWS: usize = 32;

/// Per-row ingredients that do not depend on the parameters.
struct RowData {
    t: f64,
    x: Vec<f64>,
    /// Tangent directions: basis vectors (exact) or probes (Hutchinson).
    dirs: Vec<Vec<f64>>,
    /// Trace weight per direction (1 for exact, 1/probes for Hutchinson).
    dir_weight: f64,
    mask: f64,
    mask_grad: Vec<f64>,
    lambda: f64,
}

fn row_data(ctx: &LossContext<'_>, mode: DivergenceMode, t: f64, x: &[f64], seed: u64, index: u64, rescale: bool) -> RowData {
    let m = ctx.manifold;
    let basis = m.tangent_basis(x);
    let (dirs, dir_weight) = match mode {
        DivergenceMode::Hutchinson { probes } => {
            let mut rng = rng::stream(seed, "hutchinson", index);
            let dirs = (0..probes)
                .map(|_| {
                    let mut v = vec![0.0; x.len()];
                    for e in &basis {
                        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        v.iter_mut().zip(e).for_each(|(vi, ei)| *vi += s * ei);
                    }
                    v
                })
                .collect();
            (dirs, 1.0 / probes as f64)
        }
        _ => (basis, 1.0),
    };
    let (mask, mask_grad) = if rescale {
        let d = ctx.constraint.distance_lb_coords(x);
        if d >= ctx.eps {
            (1.0, vec![0.0; x.len()])
        } else {
            let mut g = vec![0.0; x.len()];
            ctx.constraint.distance_lb_grad_coords(x, &mut g);
            g.iter_mut().for_each(|v| *v /= ctx.eps);
            (d.max(0.0) / ctx.eps, g)
        }
    } else {
        (1.0, vec![0.0; x.len()])
    };
    RowData {
        t,
        x: x.to_vec(),
        dirs,
        dir_weight,
        mask,
        mask_grad,
        lambda: ctx.weighting.eval(t),
    }
}

fn matrix(rows: &[RowData], f: impl Fn(&RowData) -> Vec<f64>) -> Array2<f64> {
    let cols = f(&rows[0]).len();
    let flat: Vec<f64> = rows.iter().flat_map(f).collect();
    Array2::from_shape_vec((rows.len(), cols), flat).expect("rectangular rows")
}

/// Records `(s, ½‖Ps‖², div_M Ps)` for the rows, each an `n × ·` node.
fn record_terms<M: ScoreModel>(model: &M, m: &Manifold, tape: &mut Tape, rows: &[RowData]) -> (Var, Var, Var) {
    let d = rows[0].x.len();
    let input = tape.leaf(matrix(rows, |r| {
        let mut v = r.x.clone();
        v.push(r.t);
        v
    }));
    let ndirs = rows[0].dirs.len();
    let tangents: Vec<Var> = (0..ndirs)
        .map(|k| {
            tape.leaf(matrix(rows, |r| {
                let mut v = r.dirs[k].clone();
                v.push(0.0);
                v
            }))
        })
        .collect();
    let (s, ds) = model.record(tape, input, &tangents);
    let ss = tape.mul(s, s);
    let sq = tape.row_sum(ss);
    let mut sq = tape.scale(sq, 0.5);
    let mut div: Option<Var> = None;
    for (k, dk) in ds.into_iter().enumerate() {
        let ek = matrix(rows, |r| r.dirs[k].iter().map(|v| v * r.dir_weight).collect());
        let p = tape.mul_const(dk, ek);
        let c = tape.row_sum(p);
        div = Some(match div {
            Some(acc) => tape.add(acc, c),
            None => c,
        });
    }
    let mut div = div.unwrap_or_else(|| {
        let z = tape.scale(sq, 0.0);
        z
    });
    for (dim, r) in m.sphere_blocks() {
        let xb = matrix(rows, |row| {
            let mut v = vec![0.0; d];
            v[r.clone()].copy_from_slice(&row.x[r.clone()]);
            v
        });
        let p = tape.mul_const(s, xb);
        let dot = tape.row_sum(p);
        let dot2 = tape.mul(dot, dot);
        let half = tape.scale(dot2, 0.5);
        sq = tape.sub(sq, half);
        let corr = tape.scale(dot, dim as f64);
        div = tape.sub(div, corr);
    }
    (s, sq, div)
}

/// Sum over rows of `λ(m² ½‖Ps‖² + m div Ps + ⟨∇m, s⟩)`, with gradients.
fn chunk_loss<M: ScoreModel>(model: &M, m: &Manifold, rows: &[RowData]) -> (f64, Vec<Array2<f64>>) {
    let mut tape = Tape::new();
    let (s, sq, div) = record_terms(model, m, &mut tape, rows);
    let a = tape.scale_rows(sq, rows.iter().map(|r| r.lambda * r.mask * r.mask).collect());
    let b = tape.scale_rows(div, rows.iter().map(|r| r.lambda * r.mask).collect());
    let g = matrix(rows, |r| r.mask_grad.iter().map(|v| v * r.lambda).collect());
    let gs = tape.mul_const(s, g);
    let c = tape.row_sum(gs);
    let ab = tape.add(a, b);
    let per_row = tape.add(ab, c);
    let total = tape.sum(per_row);
    let value = tape.value(total)[[0, 0]];
    let grads = tape.backward(total);
    let out = (0..model.num_params())
        .map(|i| {
            grads
                .param(i)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(model.param(i).raw_dim()))
        })
        .collect();
    (value, out)
}

/// Monte Carlo ISM loss over `batch` and its parameter gradient.
///
/// Hutchinson probes for row `i` come from `rng::stream(seed, "hutchinson", i)`.
pub fn ism_loss<M: ScoreModel>(model: &M, batch: &[(f64, Point)], ctx: &LossContext<'_>, seed: u64) -> Result<LossValue> {
    if batch.is_empty() {
        return Err(Error::Config("the loss needs a nonempty batch".into()));
    }
    if !(ctx.eps > 0.0) {
        return Err(Error::Config("rescaling width eps must be positive".into()));
    }
    let dstate = model.state_dim();
    if ctx.manifold.storage_dim() != dstate {
        return Err(Error::DimensionMismatch {
            expected: ctx.manifold.storage_dim(),
            got: dstate,
        });
    }
    let (mode, _) = ctx.mode.resolve(ctx.manifold.dim());
    let n = batch.len();
    let chunks = n.div_ceil(CHUNK_ROWS);
    let parts: Vec<(f64, Vec<Array2<f64>>)> = par::map_indices(chunks, |ci| {
        let lo = ci * CHUNK_ROWS;
        let hi = (lo + CHUNK_ROWS).min(n);
        let rows: Vec<RowData> = (lo..hi)
            .map(|i| row_data(ctx, mode, batch[i].0, &batch[i].1 .0, seed, i as u64, true))
            .collect();
        chunk_loss(model, ctx.manifold, &rows)
    });
    let mut loss = 0.0;
    let mut grads: Vec<Array2<f64>> = (0..model.num_params()).map(|i| Array2::zeros(model.param(i).raw_dim())).collect();
    for (v, g) in parts {
        loss += v;
        grads.iter_mut().zip(g).for_each(|(a, b)| *a += &b);
    }
    let scale = 1.0 / n as f64;
    grads.iter_mut().for_each(|g| *g *= scale);
    Ok(LossValue { loss: loss * scale, grads })
}

/// Manifold divergence of the projected field `P s(t, ·)` at `x`, without
/// boundary rescaling.
pub fn divergence<M: ScoreModel>(model: &M, m: &Manifold, t: f64, x: &[f64], mode: DivergenceMode, seed: u64) -> Result<f64> {
    if x.len() != model.state_dim() || x.len() != m.storage_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    let (mode, _) = mode.resolve(m.dim());
    let c = ConstraintSet::All;
    let ctx = LossContext::new(m, &c);
    let rows = [row_data(&ctx, mode, t, x, seed, 0, false)];
    let mut tape = Tape::new();
    let (_, _, div) = record_terms(model, m, &mut tape, &rows);
    Ok(tape.value(div)[[0, 0]])
}

/// Projected, boundary-rescaled score of `model` on a batch: the field the
/// loss trains and the reverse sampler follows.
pub fn rescaled_scores<M: ScoreModel>(model: &M, m: &Manifold, c: &ConstraintSet, eps: f64, t: f64, xs: &Array2<f64>) -> Array2<f64> {
    let mut s = model.eval(t, xs);
    for (mut srow, xrow) in s.rows_mut().into_iter().zip(xs.rows()) {
        let x = xrow.as_slice().expect("standard layout");
        let sr = srow.as_slice_mut().expect("standard layout");
        m.project_tangent_in_place(x, sr);
        let f = (c.distance_lb_coords(x) / eps).min(1.0);
        sr.iter_mut().for_each(|v| *v *= f);
    }
    s
}

/// Input matrix `[x | t]` for a batch of points at a common time.
pub fn input_matrix(t: f64, xs: &Array2<f64>) -> Array2<f64> {
    with_time(t, xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorenet::mlp::{AffineScore, MlpParams};
    use ndarray::array;

    #[test]
    fn zero_network_has_zero_loss() {
        let m = Manifold::euclidean(2);
        let c = ConstraintSet::hypercube(2, -1.0, 1.0);
        let p = MlpParams::zeros(2, 8);
        let batch = vec![(0.3, Point(vec![0.1, 0.2])), (0.9, Point(vec![-0.5, 0.7]))];
        let v = ism_loss(&p, &batch, &LossContext::new(&m, &c), 1).unwrap();
        assert_eq!(v.loss, 0.0);
    }

    #[test]
    fn linear_divergence_is_trace() {
        let m = Manifold::euclidean(3);
        let a = array![[1.0, 2.0, 0.0], [0.5, -3.0, 1.0], [0.0, 4.0, 0.25]];
        let s = AffineScore::linear(a);
        let d = divergence(&s, &m, 0.2, &[0.3, -0.1, 0.8], DivergenceMode::Exact, 0).unwrap();
        assert!((d - (1.0 - 3.0 + 0.25)).abs() < 1e-12);
        let neg = AffineScore::linear(-Array2::eye(4));
        let d = divergence(&neg, &Manifold::euclidean(4), 0.0, &[1.0, 2.0, 3.0, 4.0], DivergenceMode::Exact, 0).unwrap();
        assert!((d + 4.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_divergence_of_projected_linear_field() {
        // s(x) = A x with A antisymmetric is tangent with zero divergence
        let m = Manifold::Sphere { dim: 2 };
        let a = array![[0.0, 1.0, -2.0], [-1.0, 0.0, 0.5], [2.0, -0.5, 0.0]];
        let s = AffineScore::linear(a);
        let x = [0.6, 0.0, 0.8];
        let d = divergence(&s, &m, 0.0, &x, DivergenceMode::Exact, 0).unwrap();
        assert!(d.abs() < 1e-12);
        // s(x) = x projects to zero
        let id = AffineScore::linear(Array2::eye(3));
        assert!(divergence(&id, &m, 0.0, &x, DivergenceMode::Exact, 0).unwrap().abs() < 1e-12);
        // s(x) = e_z projects to e_z − z x with divergence −2z on S²
        let mut ez = AffineScore::linear(Array2::zeros((3, 3)));
        ez.c = array![[0.0, 0.0, 1.0]];
        let d = divergence(&ez, &m, 0.0, &x, DivergenceMode::Exact, 0).unwrap();
        assert!((d + 2.0 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn auto_mode_switches_on_dimension() {
        assert_eq!(DivergenceMode::Auto.resolve(3).0, DivergenceMode::Exact);
        assert_eq!(DivergenceMode::Auto.resolve(4).0, DivergenceMode::Hutchinson { probes: 1 });
        assert!(DivergenceMode::Exact.resolve(65).1.is_some());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let m = Manifold::euclidean(1);
        let p = MlpParams::zeros(1, 4);
        assert!(ism_loss(&p, &[], &LossContext::new(&m, &ConstraintSet::All), 0).is_err());
    }
}
