//! Reverse-mode differentiation on a flat tape.
//!
//! Nodes are appended in topological order; `backward` walks the tape in
//! reverse and accumulates vector-Jacobian products. Gradients are only
//! materialized for nodes reachable from a `var` leaf, so large constant
//! batches (pixels, sample positions) cost nothing extra.

use thiserror::Error;

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum TapeError {
    #[error("loss must be a scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
}

pub type NodeId = usize;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    AddScalar(NodeId, f64),
    MulScalar(NodeId, f64),
    Neg(NodeId),
    Matmul(NodeId, NodeId),
    MatmulNt(NodeId, NodeId),
    AddRowBroadcast(NodeId, NodeId),
    MulColBroadcast(NodeId, NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Sqrt(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SoftplusBeta(NodeId, f64),
    Gelu(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Square(NodeId),
    Clamp(NodeId, f64, f64),
    Sum(NodeId),
    Mean(NodeId),
    SumCols(NodeId),
    SliceCols(NodeId, usize, usize),
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    ExclusiveCumprodCols(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Gradient table returned by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. node `id`; zero tensor when the node did
    /// not influence the loss.
    pub fn get(&self, id: NodeId, shape_of: &Tape) -> Tensor {
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = shape_of.value(id).shape();
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn get_opt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    /// Differentiable leaf.
    pub fn var(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip_map(&self.nodes[b].value, |x, y| x + y);
        self.push(Op::Add(a, b), v, self.needs(a) || self.needs(b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip_map(&self.nodes[b].value, |x, y| x - y);
        self.push(Op::Sub(a, b), v, self.needs(a) || self.needs(b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip_map(&self.nodes[b].value, |x, y| x * y);
        self.push(Op::Mul(a, b), v, self.needs(a) || self.needs(b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.zip_map(&self.nodes[b].value, |x, y| x / y);
        self.push(Op::Div(a, b), v, self.needs(a) || self.needs(b))
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| x + s);
        self.push(Op::AddScalar(a, s), v, self.needs(a))
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| x * s);
        self.push(Op::MulScalar(a, s), v, self.needs(a))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| -x);
        self.push(Op::Neg(a), v, self.needs(a))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(&self.nodes[a].value, &self.nodes[b].value);
        self.push(Op::Matmul(a, b), v, self.needs(a) || self.needs(b))
    }

    /// `A * B^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_nt(&self.nodes[a].value, &self.nodes[b].value);
        self.push(Op::MatmulNt(a, b), v, self.needs(a) || self.needs(b))
    }

    /// `(m,n) + (1,n)` row broadcast.
    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (m, n) = self.nodes[a].value.shape();
        assert_eq!(self.nodes[row].value.shape(), (1, n), "row broadcast shape");
        let rowv = self.nodes[row].value.clone();
        let av = &self.nodes[a].value;
        let v = Tensor::from_fn(m, n, |i, j| av.get(i, j) + rowv.get(0, j));
        self.push(Op::AddRowBroadcast(a, row), v, self.needs(a) || self.needs(row))
    }

    /// `(m,n) * (m,1)` column broadcast.
    pub fn mul_col_broadcast(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (m, n) = self.nodes[a].value.shape();
        assert_eq!(self.nodes[col].value.shape(), (m, 1), "col broadcast shape");
        let colv = self.nodes[col].value.clone();
        let av = &self.nodes[a].value;
        let v = Tensor::from_fn(m, n, |i, j| av.get(i, j) * colv.get(i, 0));
        self.push(Op::MulColBroadcast(a, col), v, self.needs(a) || self.needs(col))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::sin);
        self.push(Op::Sin(a), v, self.needs(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::cos);
        self.push(Op::Cos(a), v, self.needs(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::exp);
        self.push(Op::Exp(a), v, self.needs(a))
    }

    /// Natural log; callers must keep inputs positive (clamp first).
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::ln);
        self.push(Op::Ln(a), v, self.needs(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::sqrt);
        self.push(Op::Sqrt(a), v, self.needs(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::tanh);
        self.push(Op::Tanh(a), v, self.needs(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(sigmoid);
        self.push(Op::Sigmoid(a), v, self.needs(a))
    }

    pub fn softplus_beta(&mut self, a: NodeId, beta: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| softplus_beta(x, beta));
        self.push(Op::SoftplusBeta(a, beta), v, self.needs(a))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(gelu);
        self.push(Op::Gelu(a), v, self.needs(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.max(0.0));
        self.push(Op::Relu(a), v, self.needs(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::abs);
        self.push(Op::Abs(a), v, self.needs(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| x * x);
        self.push(Op::Square(a), v, self.needs(a))
    }

    /// Clamp with pass-through gradient strictly inside the range.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v, self.needs(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.nodes[a].value.sum());
        self.push(Op::Sum(a), v, self.needs(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a].value.len().max(1) as f64;
        let v = Tensor::scalar(self.nodes[a].value.sum() / n);
        self.push(Op::Mean(a), v, self.needs(a))
    }

    /// Row-wise sum: `(m,n) -> (m,1)`.
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.nodes[a].value.shape();
        let av = &self.nodes[a].value;
        let v = Tensor::from_fn(m, 1, |i, _| (0..n).map(|j| av.get(i, j)).sum());
        self.push(Op::SumCols(a), v, self.needs(a))
    }

    /// Columns `c0..c1` of every row.
    pub fn slice_cols(&mut self, a: NodeId, c0: usize, c1: usize) -> NodeId {
        let (m, n) = self.nodes[a].value.shape();
        assert!(c0 < c1 && c1 <= n, "column slice out of range");
        let av = &self.nodes[a].value;
        let v = Tensor::from_fn(m, c1 - c0, |i, j| av.get(i, c0 + j));
        self.push(Op::SliceCols(a, c0, c1), v, self.needs(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, na) = self.nodes[a].value.shape();
        let (mb, nb) = self.nodes[b].value.shape();
        assert_eq!(m, mb, "concat_cols row mismatch");
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        let v = Tensor::from_fn(m, na + nb, |i, j| {
            if j < na {
                av.get(i, j)
            } else {
                bv.get(i, j - na)
            }
        });
        self.push(Op::ConcatCols(a, b), v, self.needs(a) || self.needs(b))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ma, n) = self.nodes[a].value.shape();
        let (mb, nb) = self.nodes[b].value.shape();
        assert_eq!(n, nb, "concat_rows column mismatch");
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        let v = Tensor::from_fn(ma + mb, n, |i, j| {
            if i < ma {
                av.get(i, j)
            } else {
                bv.get(i - ma, j)
            }
        });
        self.push(Op::ConcatRows(a, b), v, self.needs(a) || self.needs(b))
    }

    /// Row-wise exclusive cumulative product: `out[i,k] = prod_{j<k} a[i,j]`.
    pub fn exclusive_cumprod_cols(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.nodes[a].value.shape();
        let av = &self.nodes[a].value;
        let mut v = Tensor::zeros(m, n);
        for i in 0..m {
            let mut p = 1.0;
            for j in 0..n {
                v.set(i, j, p);
                p *= av.get(i, j);
            }
        }
        self.push(Op::ExclusiveCumprodCols(a), v, self.needs(a))
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TapeError> {
        let (r, c) = self.nodes[loss].value.shape();
        if (r, c) != (1, 1) {
            return Err(TapeError::NonScalarLoss { rows: r, cols: c });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Tensor::scalar(1.0));

        for id in (0..=loss).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn add_grad(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn accumulate(&self, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |n: NodeId| &self.nodes[n].value;
        match self.nodes[id].op.clone() {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_grad(grads, a, g.clone());
                self.add_grad(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.add_grad(grads, a, g.clone());
                self.add_grad(grads, b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                self.add_grad(grads, a, g.zip_map(val(b), |gi, bi| gi * bi));
                self.add_grad(grads, b, g.zip_map(val(a), |gi, ai| gi * ai));
            }
            Op::Div(a, b) => {
                let bv = val(b);
                self.add_grad(grads, a, g.zip_map(bv, |gi, bi| gi / bi));
                let av = val(a);
                let gb = Tensor::from_fn(g.rows(), g.cols(), |i, j| {
                    let b2 = bv.get(i, j);
                    -g.get(i, j) * av.get(i, j) / (b2 * b2)
                });
                self.add_grad(grads, b, gb);
            }
            Op::AddScalar(a, _) => self.add_grad(grads, a, g.clone()),
            Op::MulScalar(a, s) => self.add_grad(grads, a, g.map(|x| x * s)),
            Op::Neg(a) => self.add_grad(grads, a, g.map(|x| -x)),
            Op::Matmul(a, b) => {
                if self.nodes[a].needs_grad {
                    self.add_grad(grads, a, matmul_nt(g, val(b)));
                }
                if self.nodes[b].needs_grad {
                    self.add_grad(grads, b, matmul_tn(val(a), g));
                }
            }
            Op::MatmulNt(a, b) => {
                if self.nodes[a].needs_grad {
                    self.add_grad(grads, a, matmul(g, val(b)));
                }
                if self.nodes[b].needs_grad {
                    self.add_grad(grads, b, matmul_tn(g, val(a)));
                }
            }
            Op::AddRowBroadcast(a, row) => {
                self.add_grad(grads, a, g.clone());
                if self.nodes[row].needs_grad {
                    let (m, n) = g.shape();
                    let gr = Tensor::from_fn(1, n, |_, j| (0..m).map(|i| g.get(i, j)).sum());
                    self.add_grad(grads, row, gr);
                }
            }
            Op::MulColBroadcast(a, col) => {
                let colv = val(col);
                if self.nodes[a].needs_grad {
                    let ga = Tensor::from_fn(g.rows(), g.cols(), |i, j| {
                        g.get(i, j) * colv.get(i, 0)
                    });
                    self.add_grad(grads, a, ga);
                }
                if self.nodes[col].needs_grad {
                    let av = val(a);
                    let gc = Tensor::from_fn(g.rows(), 1, |i, _| {
                        (0..g.cols()).map(|j| g.get(i, j) * av.get(i, j)).sum()
                    });
                    self.add_grad(grads, col, gc);
                }
            }
            Op::Sin(a) => self.add_grad(grads, a, g.zip_map(val(a), |gi, x| gi * x.cos())),
            Op::Cos(a) => self.add_grad(grads, a, g.zip_map(val(a), |gi, x| -gi * x.sin())),
            Op::Exp(a) => self.add_grad(grads, a, g.zip_map(val(id), |gi, y| gi * y)),
            Op::Ln(a) => self.add_grad(grads, a, g.zip_map(val(a), |gi, x| gi / x)),
            Op::Sqrt(a) => self.add_grad(grads, a, g.zip_map(val(id), |gi, y| gi * 0.5 / y)),
            Op::Tanh(a) => {
                self.add_grad(grads, a, g.zip_map(val(id), |gi, y| gi * (1.0 - y * y)))
            }
            Op::Sigmoid(a) => {
                self.add_grad(grads, a, g.zip_map(val(id), |gi, y| gi * y * (1.0 - y)))
            }
            Op::SoftplusBeta(a, beta) => {
                self.add_grad(grads, a, g.zip_map(val(a), |gi, x| gi * sigmoid(beta * x)))
            }
            Op::Gelu(a) => self.add_grad(grads, a, g.zip_map(val(a), |gi, x| gi * gelu_deriv(x))),
            Op::Relu(a) => {
                self.add_grad(grads, a, g.zip_map(val(a), |gi, x| if x > 0.0 { gi } else { 0.0 }))
            }
            Op::Abs(a) => self.add_grad(grads, a, g.zip_map(val(a), |gi, x| gi * sign(x))),
            Op::Square(a) => {
                self.add_grad(grads, a, g.zip_map(val(a), |gi, x| gi * 2.0 * x))
            }
            Op::Clamp(a, lo, hi) => {
                self.add_grad(
                    grads,
                    a,
                    g.zip_map(val(a), |gi, x| if x > lo && x < hi { gi } else { 0.0 }),
                );
            }
            Op::Sum(a) => {
                let (m, n) = val(a).shape();
                self.add_grad(grads, a, Tensor::full(m, n, g.item()));
            }
            Op::Mean(a) => {
                let (m, n) = val(a).shape();
                let s = g.item() / (m * n).max(1) as f64;
                self.add_grad(grads, a, Tensor::full(m, n, s));
            }
            Op::SumCols(a) => {
                let (m, n) = val(a).shape();
                let ga = Tensor::from_fn(m, n, |i, _| g.get(i, 0));
                self.add_grad(grads, a, ga);
            }
            Op::SliceCols(a, c0, _c1) => {
                let (m, n) = val(a).shape();
                let mut ga = Tensor::zeros(m, n);
                for i in 0..m {
                    for j in 0..g.cols() {
                        ga.set(i, c0 + j, g.get(i, j));
                    }
                }
                self.add_grad(grads, a, ga);
            }
            Op::ConcatCols(a, b) => {
                let (m, na) = val(a).shape();
                let nb = val(b).cols();
                if self.nodes[a].needs_grad {
                    let ga = Tensor::from_fn(m, na, |i, j| g.get(i, j));
                    self.add_grad(grads, a, ga);
                }
                if self.nodes[b].needs_grad {
                    let gb = Tensor::from_fn(m, nb, |i, j| g.get(i, na + j));
                    self.add_grad(grads, b, gb);
                }
            }
            Op::ConcatRows(a, b) => {
                let (ma, n) = val(a).shape();
                let mb = val(b).rows();
                if self.nodes[a].needs_grad {
                    let ga = Tensor::from_fn(ma, n, |i, j| g.get(i, j));
                    self.add_grad(grads, a, ga);
                }
                if self.nodes[b].needs_grad {
                    let gb = Tensor::from_fn(mb, n, |i, j| g.get(ma + i, j));
                    self.add_grad(grads, b, gb);
                }
            }
            Op::ExclusiveCumprodCols(a) => {
                // d out[i,k] / d a[i,j] = prod_{l<k, l!=j} a[i,l] for j < k.
                // Computed with prefix products, no divisions, so zero inputs
                // are handled exactly.
                let av = val(a);
                let (m, n) = av.shape();
                let prefix = val(id); // prefix[i,k] = prod_{l<k} a[i,l]
                let mut ga = Tensor::zeros(m, n);
                for i in 0..m {
                    for j in 0..n {
                        // Contributions of out[i,k] for k > j.
                        let mut mid = 1.0; // prod_{j<l<k} a[i,l]
                        let mut acc = 0.0;
                        for k in (j + 1)..n {
                            if k > j + 1 {
                                mid *= av.get(i, k - 1);
                            }
                            acc += g.get(i, k) * prefix.get(i, j) * mid;
                        }
                        ga.set(i, j, acc);
                    }
                }
                self.add_grad(grads, a, ga);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_beta(x: f64, beta: f64) -> f64 {
    let bx = beta * x;
    if bx > 30.0 {
        x
    } else if bx < -30.0 {
        bx.exp() / beta
    } else {
        bx.exp().ln_1p() / beta
    }
}

/// tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_deriv(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
