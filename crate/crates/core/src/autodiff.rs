//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! Every backward rule is written in terms of graph operations, so the
//! gradient returned by [`Graph::grad`] is itself a node on the same tape and
//! can be differentiated again. Hessian-vector products are the gradient of
//! `<grad, v>`; the trace-penalty gradient differentiates `v' H v` once more.
//!
//! Node ids are handed out in creation order, so the tape is topologically
//! sorted by construction and a backward sweep is a reverse scan over ids.

use std::sync::Arc;

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    /// `[m] -> [n, m]`
    BroadcastRows(Var),
    /// `[n, m] -> [m]`
    SumRows(Var),
    /// `[n] -> [n, m]`
    BroadcastCols(Var),
    /// `[n, m] -> [n]`
    SumCols(Var),
    /// any shape to `[1]`
    Sum(Var),
    /// `[1]` to the stored shape
    Expand(Var),
    Reshape(Var),
    Slice(Var, usize),
    Pad(Var, usize),
    /// `out[i] = in[idx[i]]`
    Gather(Var, Arc<[usize]>),
    /// `out[idx[i]] += in[i]`
    ScatterAdd(Var, Arc<[usize]>),
    /// Elementwise product with a constant mask; ReLU is the 0/1 case.
    MaskMul(Var, Arc<[f64]>),
    Softmax(Var),
    LogSumExp(Var),
    Powf(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    /// A leaf that gradients are never taken with respect to.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that [`Graph::grad`] can differentiate with respect to.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = self.value(a).zip(self.value(b), |x, y| x + y);
        self.derived(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = self.value(a).zip(self.value(b), |x, y| x - y);
        self.derived(value, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = self.value(a).zip(self.value(b), |x, y| x * y);
        self.derived(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        self.derived(value, Op::Scale(a, c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.derived(value, Op::AddScalar(a), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(
            sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0],
            "matmul shape mismatch {sa:?} x {sb:?}"
        );
        let value = self.value(a).matmul(self.value(b));
        self.derived(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.derived(value, Op::Transpose(a), &[a])
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        assert_eq!(self.shape(a).len(), 1, "broadcast_rows expects a vector");
        let value = self.value(a).broadcast_rows(rows);
        self.derived(value, Op::BroadcastRows(a), &[a])
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_rows();
        self.derived(value, Op::SumRows(a), &[a])
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        assert_eq!(self.shape(a).len(), 1, "broadcast_cols expects a vector");
        let value = self.value(a).broadcast_cols(cols);
        self.derived(value, Op::BroadcastCols(a), &[a])
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_cols();
        self.derived(value, Op::SumCols(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.derived(value, Op::Sum(a), &[a])
    }

    pub fn expand(&mut self, a: Var, shape: &[usize]) -> Var {
        assert_eq!(self.value(a).len(), 1, "expand expects a scalar");
        let value = Tensor::filled(shape, self.value(a).item());
        self.derived(value, Op::Expand(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.value(a).reshaped(shape);
        self.derived(value, Op::Reshape(a), &[a])
    }

    /// Contiguous sub-range of a flat tensor, returned as a vector.
    pub fn slice(&mut self, a: Var, offset: usize, len: usize) -> Var {
        let src = self.value(a).data();
        assert!(offset + len <= src.len(), "slice out of range");
        let value = Tensor::vector(src[offset..offset + len].to_vec());
        self.derived(value, Op::Slice(a, offset), &[a])
    }

    /// Zero-embed a vector at `offset` inside a vector of length `total`.
    pub fn pad(&mut self, a: Var, offset: usize, total: usize) -> Var {
        let src = self.value(a).data();
        assert!(offset + src.len() <= total, "pad out of range");
        let mut out = vec![0.0; total];
        out[offset..offset + src.len()].copy_from_slice(src);
        self.derived(Tensor::vector(out), Op::Pad(a, offset), &[a])
    }

    pub fn gather(&mut self, a: Var, idx: Arc<[usize]>, shape: &[usize]) -> Var {
        assert_eq!(shape.iter().product::<usize>(), idx.len(), "gather shape");
        let src = self.value(a).data();
        let data = idx.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(shape.to_vec(), data).expect("gather shape checked");
        self.derived(value, Op::Gather(a, idx), &[a])
    }

    pub fn scatter_add(&mut self, a: Var, idx: Arc<[usize]>, shape: &[usize]) -> Var {
        let src = self.value(a).data();
        assert_eq!(src.len(), idx.len(), "scatter_add length");
        let mut out = Tensor::zeros(shape);
        let dst = out.data_mut();
        for (&i, &x) in idx.iter().zip(src) {
            dst[i] += x;
        }
        self.derived(out, Op::ScatterAdd(a, idx), &[a])
    }

    pub fn mask_mul(&mut self, a: Var, mask: Arc<[f64]>) -> Var {
        assert_eq!(self.value(a).len(), mask.len(), "mask length");
        let mut value = self.value(a).clone();
        for (x, m) in value.data_mut().iter_mut().zip(mask.iter()) {
            *x *= m;
        }
        self.derived(value, Op::MaskMul(a, mask), &[a])
    }

    /// ReLU with derivative 0 at the kink; the mask is frozen, so every
    /// higher derivative through it is zero as well.
    pub fn relu(&mut self, a: Var) -> Var {
        let mask: Arc<[f64]> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
            .collect();
        self.mask_mul(a, mask)
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = self.value(a).softmax_rows();
        self.derived(value, Op::Softmax(a), &[a])
    }

    /// Row-wise log-sum-exp, `[n, m] -> [n]`.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let value = self.value(a).logsumexp_rows();
        self.derived(value, Op::LogSumExp(a), &[a])
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let value = self.value(a).map(|x| x.powf(p));
        self.derived(value, Op::Powf(a, p), &[a])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let prod = self.mul(a, b);
        self.sum(prod)
    }

    /// Gradients of the scalar `y` with respect to each of `wrt`.
    ///
    /// The returned vars live on this graph and are differentiable. Leaves
    /// that `y` does not depend on get a zero constant.
    pub fn grad(&mut self, y: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.value(y).len(), 1, "grad needs a scalar output");
        let mut adjoint: Vec<Option<Var>> = vec![None; y.0 + 1];
        let seed = self.constant(Tensor::filled(self.shape(y), 1.0));
        adjoint[y.0] = Some(seed);

        for id in (0..=y.0).rev() {
            let Some(g) = adjoint[id] else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            for (input, contrib) in self.backward_rule(Var(id), &op, g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                adjoint[input.0] = Some(match adjoint[input.0] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib),
                });
            }
        }

        wrt.iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(w).to_vec();
                    self.constant(Tensor::zeros(&shape))
                }
            })
            .collect()
    }

    fn backward_rule(&mut self, out: Var, op: &Op, g: Var) -> Vec<(Var, Var)> {
        let rg = |graph: &Graph, v: Var| graph.nodes[v.0].requires_grad;
        match *op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(a, g), (b, g)],
            Op::Sub(a, b) => {
                let mut out = vec![(a, g)];
                if rg(self, b) {
                    out.push((b, self.neg(g)));
                }
                out
            }
            Op::Mul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if rg(self, a) {
                    out.push((a, self.mul(g, b)));
                }
                if rg(self, b) {
                    out.push((b, self.mul(g, a)));
                }
                out
            }
            Op::Scale(a, c) => vec![(a, self.scale(g, c))],
            Op::AddScalar(a) => vec![(a, g)],
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if rg(self, a) {
                    let bt = self.transpose(b);
                    out.push((a, self.matmul(g, bt)));
                }
                if rg(self, b) {
                    let at = self.transpose(a);
                    out.push((b, self.matmul(at, g)));
                }
                out
            }
            Op::Transpose(a) => vec![(a, self.transpose(g))],
            Op::BroadcastRows(a) => vec![(a, self.sum_rows(g))],
            Op::SumRows(a) => {
                let rows = self.shape(a)[0];
                vec![(a, self.broadcast_rows(g, rows))]
            }
            Op::BroadcastCols(a) => vec![(a, self.sum_cols(g))],
            Op::SumCols(a) => {
                let cols = self.shape(a)[1];
                vec![(a, self.broadcast_cols(g, cols))]
            }
            Op::Sum(a) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.expand(g, &shape))]
            }
            Op::Expand(a) => {
                let s = self.sum(g);
                let shape = self.shape(a).to_vec();
                vec![(a, self.reshape(s, &shape))]
            }
            Op::Reshape(a) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.reshape(g, &shape))]
            }
            Op::Slice(a, offset) => {
                let total = self.value(a).len();
                let padded = self.pad(g, offset, total);
                let shape = self.shape(a).to_vec();
                vec![(a, self.reshape(padded, &shape))]
            }
            Op::Pad(a, offset) => {
                let len = self.value(a).len();
                vec![(a, self.slice(g, offset, len))]
            }
            Op::Gather(a, ref idx) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.scatter_add(g, idx.clone(), &shape))]
            }
            Op::ScatterAdd(a, ref idx) => {
                let shape = self.shape(a).to_vec();
                vec![(a, self.gather(g, idx.clone(), &shape))]
            }
            Op::MaskMul(a, ref mask) => vec![(a, self.mask_mul(g, mask.clone()))],
            Op::Softmax(a) => {
                // dx = y * (g - rowsum(g * y))
                let cols = self.shape(a)[1];
                let gy = self.mul(g, out);
                let s = self.sum_cols(gy);
                let sb = self.broadcast_cols(s, cols);
                let centered = self.sub(g, sb);
                vec![(a, self.mul(out, centered))]
            }
            Op::LogSumExp(a) => {
                let cols = self.shape(a)[1];
                let p = self.softmax(a);
                let gb = self.broadcast_cols(g, cols);
                vec![(a, self.mul(gb, p))]
            }
            Op::Powf(a, p) => {
                let d = self.powf(a, p - 1.0);
                let d = self.scale(d, p);
                vec![(a, self.mul(g, d))]
            }
        }
    }
}
