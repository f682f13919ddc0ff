//! A small reverse-mode tape over batched matrices.
//!
//! Every node holds an `n × k` matrix. Forward-mode directional derivatives
//! are expressed with the same ops (e.g. the tangent of `sin z` is
//! `cos z ⊙ ż`), so one backward sweep also differentiates quantities built
//! from Jacobian–vector products, such as divergences.

use ndarray::{Array2, Axis, Zip};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    /// `a · wᵀ`
    MatMulT(Var, Var),
    /// `a + 1 bᵀ` with `b` a `1 × k` row.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sin(Var),
    Cos(Var),
    Scale(Var, f64),
    /// Row `i` scaled by `s[i]`.
    ScaleRows(Var, Vec<f64>),
    /// Elementwise product with a constant matrix.
    MulConst(Var, Array2<f64>),
    /// `n × 1` row sums.
    RowSum(Var),
    /// `1 × 1` total.
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints from one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Option<Array2<f64>>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    /// Adjoint of any node, if it influenced the output.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.adj[v.0].as_ref()
    }

    /// Gradient of parameter `index`, if it was registered and used.
    pub fn param(&self, index: usize) -> Option<&Array2<f64>> {
        self.params
            .iter()
            .find(|(i, _)| *i == index)
            .and_then(|(_, v)| self.adj[v.0].as_ref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// A constant or input; its adjoint is still available after backward.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A trainable parameter identified by `index`.
    pub fn param(&mut self, index: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn matmul_t(&mut self, a: Var, w: Var) -> Var {
        let v = self.value(a).dot(&self.value(w).t());
        self.push(v, Op::MatMulT(a, w))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sin);
        self.push(v, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::cos);
        self.push(v, Op::Cos(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn scale_rows(&mut self, a: Var, s: Vec<f64>) -> Var {
        let mut v = self.value(a).clone();
        assert_eq!(s.len(), v.nrows(), "one scale per row");
        for (mut row, f) in v.rows_mut().into_iter().zip(&s) {
            row *= *f;
        }
        self.push(v, Op::ScaleRows(a, s))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowSum(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Reverse sweep from `out`, seeded with ones.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut adj: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[out.0] = Some(Array2::ones(self.value(out).raw_dim()));
        let mut params = Vec::new();
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(idx) => params.push((*idx, Var(i))),
                Op::MatMulT(a, w) => {
                    accumulate(&mut adj, *a, g.dot(self.value(*w)));
                    accumulate(&mut adj, *w, g.t().dot(self.value(*a)));
                }
                Op::AddRow(a, b) => {
                    accumulate(&mut adj, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    accumulate(&mut adj, *a, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, -&g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut adj, *a, &g * self.value(*b));
                    accumulate(&mut adj, *b, &g * self.value(*a));
                }
                Op::Sin(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, z| *d *= z.cos());
                    accumulate(&mut adj, *a, d);
                }
                Op::Cos(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(self.value(*a)).for_each(|d, z| *d *= -z.sin());
                    accumulate(&mut adj, *a, d);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, &g * *c),
                Op::ScaleRows(a, s) => {
                    let mut d = g.clone();
                    for (mut row, f) in d.rows_mut().into_iter().zip(s) {
                        row *= *f;
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::MulConst(a, c) => accumulate(&mut adj, *a, &g * c),
                Op::RowSum(a) => {
                    let shape = self.value(*a).raw_dim();
                    let d = g.broadcast(shape).expect("row sum broadcast").to_owned();
                    accumulate(&mut adj, *a, d);
                }
                Op::Sum(a) => {
                    let d = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    accumulate(&mut adj, *a, d);
                }
            }
            adj[i] = Some(g);
        }
        Gradients { adj, params }
    }
}

fn accumulate(adj: &mut [Option<Array2<f64>>], v: Var, d: Array2<f64>) {
    match &mut adj[v.0] {
        Some(a) => *a += &d,
        slot @ None => *slot = Some(d),
    }
}
