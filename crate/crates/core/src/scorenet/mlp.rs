use ndarray::Array2;
use rand::Rng;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng;

/// Number of linear layers in the score network.
pub const DEPTH: usize = 6;

/// A model that can record `s(t, x)` and its directional derivatives.
pub trait ScoreModel: Sync {
    /// Length of `x` (the manifold storage chart).
    fn state_dim(&self) -> usize;

    /// Number of parameter tensors; parameter `i` is [`param`](Self::param).
    fn num_params(&self) -> usize;

    fn param(&self, i: usize) -> &Array2<f64>;

    fn param_mut(&mut self, i: usize) -> &mut Array2<f64>;

    /// Records the forward pass on `input` (`n × (D+1)`, time last) and the
    /// forward-mode tangent along each entry of `tangents`. Returns the
    /// output and one output tangent per input tangent.
    fn record(&self, tape: &mut Tape, input: Var, tangents: &[Var]) -> (Var, Vec<Var>);

    /// Plain batched evaluation, `n × D` in and out, no tape.
    fn eval(&self, t: f64, xs: &Array2<f64>) -> Array2<f64>;

    fn param_norm(&self) -> f64 {
        (0..self.num_params())
            .map(|i| self.param(i).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn param_count(&self) -> usize {
        (0..self.num_params()).map(|i| self.param(i).len()).sum()
    }

    /// All parameters, concatenated in order, row-major.
    fn flatten(&self) -> Vec<f64> {
        (0..self.num_params())
            .flat_map(|i| self.param(i).iter().copied().collect::<Vec<_>>())
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for i in 0..self.num_params() {
            let p = self.param_mut(i);
            let n = p.len();
            p.iter_mut().zip(&flat[off..off + n]).for_each(|(a, b)| *a = *b);
            off += n;
        }
        Ok(())
    }
}

pub(crate) fn with_time(t: f64, xs: &Array2<f64>) -> Array2<f64> {
    let mut a = Array2::from_elem((xs.nrows(), xs.ncols() + 1), t);
    a.slice_mut(ndarray::s![.., ..xs.ncols()]).assign(xs);
    a
}

/// Six linear layers with sine activations between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub state_dim: usize,
    pub width: usize,
    /// `weights[l]` is `out × in`.
    pub weights: Vec<Array2<f64>>,
    /// `biases[l]` is `1 × out`.
    pub biases: Vec<Array2<f64>>,
}

impl MlpParams {
    /// Weights uniform on `±√(6 / fan_in)`, biases zero. The stream is
    /// `rng::stream(seed, "init", 0)`.
    pub fn init(state_dim: usize, width: usize, seed: u64) -> Result<Self> {
        if state_dim == 0 || width == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        let mut rng = rng::stream(seed, "init", 0);
        let dims = Self::layer_dims(state_dim, width);
        let mut weights = Vec::with_capacity(DEPTH);
        let mut biases = Vec::with_capacity(DEPTH);
        for &(fan_in, fan_out) in &dims {
            let a = (6.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-a..a)));
            biases.push(Array2::zeros((1, fan_out)));
        }
        Ok(MlpParams {
            state_dim,
            width,
            weights,
            biases,
        })
    }

    /// All-zero network of the given shape.
    pub fn zeros(state_dim: usize, width: usize) -> Self {
        let dims = Self::layer_dims(state_dim, width);
        MlpParams {
            state_dim,
            width,
            weights: dims.iter().map(|&(i, o)| Array2::zeros((o, i))).collect(),
            biases: dims.iter().map(|&(_, o)| Array2::zeros((1, o))).collect(),
        }
    }

    /// `(fan_in, fan_out)` of each layer.
    pub fn layer_dims(state_dim: usize, width: usize) -> Vec<(usize, usize)> {
        (0..DEPTH)
            .map(|l| {
                let fan_in = if l == 0 { state_dim + 1 } else { width };
                let fan_out = if l == DEPTH - 1 { state_dim } else { width };
                (fan_in, fan_out)
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let dims = Self::layer_dims(self.state_dim, self.width);
        if self.weights.len() != DEPTH || self.biases.len() != DEPTH {
            return Err(Error::Config(format!("network must have {DEPTH} layers")));
        }
        for (l, &(i, o)) in dims.iter().enumerate() {
            if self.weights[l].dim() != (o, i) || self.biases[l].dim() != (1, o) {
                return Err(Error::Config(format!("layer {l} has the wrong shape")));
            }
        }
        if self.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("network parameters must be finite".into()));
        }
        Ok(())
    }

    /// Score at a single `(t, x)`.
    pub fn forward(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let xs = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.eval(t, &xs).into_raw_vec_and_offset().0
    }
}

impl ScoreModel for MlpParams {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn num_params(&self) -> usize {
        2 * DEPTH
    }

    fn param(&self, i: usize) -> &Array2<f64> {
        if i % 2 == 0 {
            &self.weights[i / 2]
        } else {
            &self.biases[i / 2]
        }
    }

    fn param_mut(&mut self, i: usize) -> &mut Array2<f64> {
        if i % 2 == 0 {
            &mut self.weights[i / 2]
        } else {
            &mut self.biases[i / 2]
        }
    }

    fn record(&self, tape: &mut Tape, input: Var, tangents: &[Var]) -> (Var, Vec<Var>) {
        let mut h = input;
        let mut dh: Vec<Var> = tangents.to_vec();
        for l in 0..DEPTH {
            let w = tape.param(2 * l, self.weights[l].clone());
            let b = tape.param(2 * l + 1, self.biases[l].clone());
            let z = tape.matmul_t(h, w);
            let z = tape.add_row(z, b);
            let dz: Vec<Var> = dh.iter().map(|&d| tape.matmul_t(d, w)).collect();
            if l + 1 == DEPTH {
                return (z, dz);
            }
            h = tape.sin(z);
            if !dz.is_empty() {
                let c = tape.cos(z);
                dh = dz.into_iter().map(|d| tape.mul(c, d)).collect();
            }
        }
        unreachable!("the loop returns at the output layer")
    }

    fn eval(&self, t: f64, xs: &Array2<f64>) -> Array2<f64> {
        let mut h = with_time(t, xs);
        for l in 0..DEPTH {
            let mut z = h.dot(&self.weights[l].t());
            z += &self.biases[l];
            if l + 1 < DEPTH {
                z.mapv_inplace(f64::sin);
            }
            h = z;
        }
        h
    }
}

/// `s(t, x) = A [x; t] + c`, used to check the loss and divergence code
/// against closed forms.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineScore {
    /// `D × (D+1)`.
    pub a: Array2<f64>,
    /// `1 × D`.
    pub c: Array2<f64>,
}

impl AffineScore {
    /// `s(x) = A x` with a square `A` (no time or offset dependence).
    pub fn linear(a: Array2<f64>) -> Self {
        let d = a.nrows();
        let mut full = Array2::zeros((d, d + 1));
        full.slice_mut(ndarray::s![.., ..d]).assign(&a);
        AffineScore {
            a: full,
            c: Array2::zeros((1, d)),
        }
    }
}

impl ScoreModel for AffineScore {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn num_params(&self) -> usize {
        2
    }

    fn param(&self, i: usize) -> &Array2<f64> {
        if i == 0 {
            &self.a
        } else {
            &self.c
        }
    }

    fn param_mut(&mut self, i: usize) -> &mut Array2<f64> {
        if i == 0 {
            &mut self.a
        } else {
            &mut self.c
        }
    }

    fn record(&self, tape: &mut Tape, input: Var, tangents: &[Var]) -> (Var, Vec<Var>) {
        let a = tape.param(0, self.a.clone());
        let c = tape.param(1, self.c.clone());
        let z = tape.matmul_t(input, a);
        let z = tape.add_row(z, c);
        let dz = tangents.iter().map(|&d| tape.matmul_t(d, a)).collect();
        (z, dz)
    }

    fn eval(&self, t: f64, xs: &Array2<f64>) -> Array2<f64> {
        let mut z = with_time(t, xs).dot(&self.a.t());
        z += &self.c;
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(3, 16);
        assert!(p.forward(0.4, &[0.1, -2.0, 3.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hidden_unit_permutation_is_a_symmetry() {
        let p = MlpParams::init(2, 8, 11).unwrap();
        let mut q = p.clone();
        // swap units 2 and 5 of the third hidden layer
        let l = 2;
        for w in [&mut q.weights[l]] {
            let (r2, r5) = (w.row(2).to_owned(), w.row(5).to_owned());
            w.row_mut(2).assign(&r5);
            w.row_mut(5).assign(&r2);
        }
        q.biases[l].swap([0, 2], [0, 5]);
        let next = &mut q.weights[l + 1];
        let (c2, c5) = (next.column(2).to_owned(), next.column(5).to_owned());
        next.column_mut(2).assign(&c5);
        next.column_mut(5).assign(&c2);
        let (a, b) = (p.forward(0.3, &[0.2, -0.7]), q.forward(0.3, &[0.2, -0.7]));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let p = MlpParams::init(2, 32, 5).unwrap();
        assert_eq!(p, MlpParams::init(2, 32, 5).unwrap());
        let bound = (6.0f64 / 3.0).sqrt();
        assert!(p.weights[0].iter().all(|w| w.abs() <= bound));
        assert!(p.biases.iter().all(|b| b.iter().all(|v| *v == 0.0)));
        assert_eq!(p.forward(0.1, &[0.3, 0.3]).len(), 2);
        p.check().unwrap();
    }

    #[test]
    fn flatten_round_trip() {
        let p = MlpParams::init(2, 4, 1).unwrap();
        let mut q = MlpParams::zeros(2, 4);
        q.unflatten(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert!(q.unflatten(&[1.0]).is_err());
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let p = MlpParams::init(2, 8, 3).unwrap();
        let xs = Array2::from_shape_vec((2, 2), vec![0.1, 0.2, -0.3, 0.9]).unwrap();
        let plain = p.eval(0.5, &xs);
        let mut tape = Tape::new();
        let inp = tape.leaf(with_time(0.5, &xs));
        let (out, _) = p.record(&mut tape, inp, &[]);
        for (a, b) in plain.iter().zip(tape.value(out).iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
