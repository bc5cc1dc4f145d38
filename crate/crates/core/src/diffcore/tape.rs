//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only arena: every operation evaluates eagerly
//! and records its inputs, so a node can only refer to nodes created
//! before it. The recorded order is therefore already topological and the
//! graph cannot contain a cycle.
//!
//! ```
//! use plkt::diffcore::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::scalar(3.0).with_grad());
//! let y = g.mul(x, x).unwrap();
//! g.backward(y).unwrap();
//! assert_eq!(g.tensor(x).grad().unwrap()[0], 6.0);
//! ```

use super::special::{digamma_unchecked, lgamma_unchecked, trigamma_unchecked};
use super::tensor::{sigmoid, softmax_in_place, softplus, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Softplus(Var),
    Softmax(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Lgamma(Var),
    Digamma(Var),
    Gather(Var, Vec<usize>),
    Sum(Var),
    Flatten(Var),
}

#[derive(Debug)]
struct Node {
    tensor: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let needs_grad = tensor.requires_grad();
        self.nodes.push(Node {
            tensor,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn tensor(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].tensor.values()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op) -> Result<Var> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                name: format!("node {} ({:?}) element {i}", self.nodes.len(), op_name(&op)),
            });
        }
        let needs_grad = inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad);
        let tensor = Tensor::new(shape, values)?;
        self.nodes.push(Node { tensor, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.tensor(a).shape(), self.tensor(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(self.tensor(a).shape().to_vec(), v, Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(self.tensor(a).shape().to_vec(), v, Op::Mul(a, b))
    }

    /// `[n, k] × [k, m] → [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.tensor(a).shape(), self.tensor(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!("matmul: {sa:?} × {sb:?}")));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let aip = av[i * k + p];
                for j in 0..m {
                    out[i * m + j] += aip * bv[p * m + j];
                }
            }
        }
        self.push(vec![n, m], out, Op::MatMul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let v = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(self.tensor(a).shape().to_vec(), v, op)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.positive(a, "log")?;
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn lgamma(&mut self, a: Var) -> Result<Var> {
        self.positive(a, "lgamma")?;
        self.unary(a, lgamma_unchecked, Op::Lgamma(a))
    }

    pub fn digamma(&mut self, a: Var) -> Result<Var> {
        self.positive(a, "digamma")?;
        self.unary(a, digamma_unchecked, Op::Digamma(a))
    }

    fn positive(&self, a: Var, func: &'static str) -> Result<()> {
        match self.value(a).iter().find(|&&x| x <= 0.0) {
            Some(&arg) => Err(Error::Domain { func, arg }),
            None => Ok(()),
        }
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let width = *self.tensor(a).shape().last().unwrap_or(&1);
        let mut v = self.value(a).to_vec();
        for chunk in v.chunks_mut(width.max(1)) {
            softmax_in_place(chunk);
        }
        self.push(self.tensor(a).shape().to_vec(), v, Op::Softmax(a))
    }

    /// Selects elements of a 1-d tensor or rows of a 2-d tensor.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.tensor(a).shape().to_vec();
        let (rows, width) = match shape.len() {
            1 => (shape[0], 1),
            2 => (shape[0], shape[1]),
            _ => return Err(Error::Shape(format!("gather on rank-{} tensor", shape.len()))),
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                vocab: rows,
            });
        }
        let src = self.value(a);
        let mut v = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            v.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        let out_shape = if shape.len() == 1 {
            vec![indices.len()]
        } else {
            vec![indices.len(), width]
        };
        self.push(out_shape, v, Op::Gather(a, indices.to_vec()))
    }

    /// Sum of all elements, producing a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        self.push(vec![], vec![s], Op::Sum(a))
    }

    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).to_vec();
        self.push(vec![v.len()], v, Op::Flatten(a))
    }

    /// Propagates `d loss / d node` back to every leaf that requires a
    /// gradient and stores the result on that leaf tensor. Gradients
    /// accumulate across repeated calls until [`Graph::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.tensor(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.tensor(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            if let Op::Leaf = op {
                let t = &mut self.nodes[idx].tensor;
                let mut acc = t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                t.set_grad(acc);
                continue;
            }
            let out = self.nodes[idx].tensor.values().to_vec();
            for (input, contrib) in self.local_grads(&op, &out, &g) {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match adj[input.0].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                    None => adj[input.0] = Some(contrib),
                }
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.tensor.zero_grad();
        }
    }

    fn local_grads(&self, op: &Op, out: &[f64], g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let elementwise = |a: Var, f: &dyn Fn(f64, f64) -> f64| -> Vec<(Var, Vec<f64>)> {
            let x = self.value(a);
            let d = x.iter().zip(out).zip(g).map(|((&x, &y), &g)| g * f(x, y)).collect();
            vec![(a, d)]
        };
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                vec![(*a, zip_map(g, bv, |g, y| g * y)), (*b, zip_map(g, av, |g, x| g * x))]
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.tensor(*a).shape(), self.tensor(*b).shape());
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = vec![0.0; n * k];
                let mut db = vec![0.0; k * m];
                for i in 0..n {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..m {
                            s += g[i * m + j] * bv[p * m + j];
                            db[p * m + j] += av[i * k + p] * g[i * m + j];
                        }
                        da[i * k + p] = s;
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Softplus(a) => elementwise(*a, &|x, _| sigmoid(x)),
            Op::Sigmoid(a) => elementwise(*a, &|_, y| y * (1.0 - y)),
            Op::Log(a) => elementwise(*a, &|x, _| 1.0 / x),
            Op::Exp(a) => elementwise(*a, &|_, y| y),
            Op::Lgamma(a) => elementwise(*a, &|x, _| digamma_unchecked(x)),
            Op::Digamma(a) => elementwise(*a, &|x, _| trigamma_unchecked(x)),
            Op::Softmax(a) => {
                let width = (*self.tensor(*a).shape().last().unwrap_or(&1)).max(1);
                let mut d = vec![0.0; out.len()];
                for ((p, dp), dx) in out.chunks(width).zip(g.chunks(width)).zip(d.chunks_mut(width)) {
                    super::tensor::softmax_backward(p, dp, dx);
                }
                vec![(*a, d)]
            }
            Op::Gather(a, indices) => {
                let t = self.tensor(*a);
                let width = if t.shape().len() == 2 { t.shape()[1] } else { 1 };
                let mut d = vec![0.0; t.len()];
                for (r, &i) in indices.iter().enumerate() {
                    for c in 0..width {
                        d[i * width + c] += g[r * width + c];
                    }
                }
                vec![(*a, d)]
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; self.tensor(*a).len()])],
            Op::Flatten(a) => vec![(*a, g.to_vec())],
        }
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
        Op::Softplus(a)
        | Op::Softmax(a)
        | Op::Sigmoid(a)
        | Op::Log(a)
        | Op::Exp(a)
        | Op::Lgamma(a)
        | Op::Digamma(a)
        | Op::Gather(a, _)
        | Op::Sum(a)
        | Op::Flatten(a) => vec![*a],
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::MatMul(..) => "matmul",
        Op::Softplus(_) => "softplus",
        Op::Softmax(_) => "softmax",
        Op::Sigmoid(_) => "sigmoid",
        Op::Log(_) => "log",
        Op::Exp(_) => "exp",
        Op::Lgamma(_) => "lgamma",
        Op::Digamma(_) => "digamma",
        Op::Gather(..) => "gather",
        Op::Sum(_) => "sum",
        Op::Flatten(_) => "flatten",
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
