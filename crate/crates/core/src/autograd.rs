//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass as a
//! node on a tape. [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients for every node that depends on a parameter or a
//! tracked input. Binary elementwise ops broadcast with NumPy semantics.

use std::collections::HashMap;

use ndarray::{concatenate, ArrayD, ArrayView2, Axis, IxDyn, Slice};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::{ParamId, ParamStore};

pub type Tensor = ArrayD<f64>;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    PRelu(Var, Var),
    Softmax(Var),
    LayerNorm(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Narrow { x: Var, axis: usize, start: usize },
    IndexSelect(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    SumAxes(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    aux: Option<Tensor>,
}

/// Gradients produced by [`Graph::backward`], indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for every parameter touched by the forward pass.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> + '_ {
        self.params
            .iter()
            .filter_map(|&(id, v)| self.grads[v.0].as_ref().map(|g| (id, g)))
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|&(_, v)| self.grads[v.0].as_ref())
    }
}

/// Forward tape bound to a parameter store.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    param_order: Vec<(ParamId, Var)>,
    rng: Option<ChaCha8Rng>,
    macs: u64,
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    x.mapv(f)
}

/// Sum `grad` down to `shape`, undoing NumPy-style broadcasting.
fn sum_to_shape(grad: &Tensor, shape: &[usize]) -> Tensor {
    let mut g = grad.clone();
    while g.ndim() > shape.len() {
        g = g.sum_axis(Axis(0));
    }
    for (axis, &dim) in shape.iter().enumerate() {
        if dim == 1 && g.shape()[axis] != 1 {
            g = g.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        }
    }
    g
}

fn as_2d(x: &Tensor) -> ArrayView2<'_, f64> {
    let k = *x.shape().last().expect("matmul operand must have rank >= 1");
    let m = x.len() / k.max(1);
    x.view()
        .into_shape_with_order((m, k))
        .expect("tensors on the tape are kept in standard layout")
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            param_order: Vec::new(),
            rng: None,
            macs: 0,
        }
    }

    /// A tape in training mode: [`Graph::dropout`] draws masks from `rng`.
    pub fn training(store: &'p ParamStore, rng: ChaCha8Rng) -> Self {
        let mut g = Self::new(store);
        g.rng = Some(rng);
        g
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    /// Hands back the dropout RNG so the caller can continue the stream.
    pub fn take_rng(&mut self) -> Option<ChaCha8Rng> {
        self.rng.take()
    }

    /// Multiply-accumulate operations performed by matrix products so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// Parameters read by the recorded computation, in first-use order.
    pub fn used_params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.param_order.iter().map(|(id, _)| *id)
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_aux(value, op, needs_grad, None)
    }

    fn push_aux(&mut self, value: Tensor, op: Op, needs_grad: bool, aux: Option<Tensor>) -> Var {
        debug_assert!(value.is_standard_layout());
        self.nodes.push(Node { value, op, needs_grad, aux });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant: no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        let value = value.as_standard_layout().into_owned();
        self.push(value, Op::Leaf, false)
    }

    /// A tracked input whose gradient can be read back after `backward`.
    pub fn input(&mut self, value: Tensor) -> Var {
        let value = value.as_standard_layout().into_owned();
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(ArrayD::from_elem(IxDyn(&[]), x))
    }

    /// Leaf for a parameter; repeated lookups share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let value = self.store.value(id).clone();
        let v = self.push(value, Op::Param, true);
        self.param_vars.insert(id, v);
        self.param_order.push((id, v));
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = (self.value(a) + self.value(b)).as_standard_layout().into_owned();
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = (self.value(a) - self.value(b)).as_standard_layout().into_owned();
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = (self.value(a) * self.value(b)).as_standard_layout().into_owned();
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) * s;
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) + s;
        let ng = self.ng(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    /// `[..., m, k] x [k, n] -> [..., m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.ndim(), 2, "matmul rhs must be a matrix");
        let k = *av.shape().last().unwrap();
        assert_eq!(k, bv.shape()[0], "matmul inner dimensions differ");
        let n = bv.shape()[1];
        let b2 = bv.view().into_dimensionality::<ndarray::Ix2>().unwrap();
        let out = as_2d(av).dot(&b2);
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        self.macs += (out.nrows() * k * n) as u64;
        let value = out.into_shape_with_order(IxDyn(&shape)).unwrap();
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `[G, m, k] x [G, k, n] -> [G, m, n]`, or with `trans_b`
    /// `[G, m, k] x [G, n, k]^T -> [G, m, n]`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.ndim(), 3, "bmm lhs must be rank 3");
        assert_eq!(bv.ndim(), 3, "bmm rhs must be rank 3");
        let (groups, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        assert_eq!(bv.shape()[0], groups, "bmm group counts differ");
        let n = if trans_b { bv.shape()[1] } else { bv.shape()[2] };
        let a3 = av.view().into_dimensionality::<ndarray::Ix3>().unwrap();
        let b3 = bv.view().into_dimensionality::<ndarray::Ix3>().unwrap();
        let mut out = ndarray::Array3::<f64>::zeros((groups, m, n));
        for gi in 0..groups {
            let lhs = a3.index_axis(Axis(0), gi);
            let rhs = b3.index_axis(Axis(0), gi);
            let prod = if trans_b { lhs.dot(&rhs.t()) } else { lhs.dot(&rhs) };
            out.index_axis_mut(Axis(0), gi).assign(&prod);
        }
        self.macs += (groups * m * k * n) as u64;
        let ng = self.ng(a) || self.ng(b);
        self.push(out.into_dyn(), Op::BatchMatMul { a, b, trans_b }, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = map(self.value(a), |x| x.max(0.0));
        let ng = self.ng(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = map(self.value(a), |x| if x > 0.0 { x } else { slope * x });
        let ng = self.ng(a);
        self.push(value, Op::LeakyRelu(a, slope), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = map(self.value(a), sigmoid);
        let ng = self.ng(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = map(self.value(a), f64::tanh);
        let ng = self.ng(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = map(self.value(a), f64::exp);
        let ng = self.ng(a);
        self.push(value, Op::Exp(a), ng)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = map(self.value(a), f64::ln);
        let ng = self.ng(a);
        self.push(value, Op::Ln(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = map(self.value(a), |x| x * x);
        let ng = self.ng(a);
        self.push(value, Op::Square(a), ng)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = map(self.value(a), |x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(value, Op::Clamp(a, lo, hi), ng)
    }

    /// Parametric ReLU with a single learned negative slope (shape `[1]`).
    pub fn prelu(&mut self, a: Var, slope: Var) -> Var {
        assert_eq!(self.value(slope).len(), 1, "prelu slope must be a single scalar");
        let s = *self.value(slope).iter().next().unwrap();
        let value = map(self.value(a), |x| if x > 0.0 { x } else { s * x });
        let ng = self.ng(a) || self.ng(slope);
        self.push(value, Op::PRelu(a, slope), ng)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        let last = Axis(value.ndim() - 1);
        for mut lane in value.lanes_mut(last) {
            let max = lane.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            lane.mapv_inplace(|x| (x - max).exp());
            let sum = lane.sum();
            lane.mapv_inplace(|x| x / sum);
        }
        let ng = self.ng(a);
        self.push(value, Op::Softmax(a), ng)
    }

    /// Zero-mean, unit-variance normalization over the last axis (no affine).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let last = Axis(x.ndim() - 1);
        let mut value = x.clone();
        let mut inv_std = Vec::with_capacity(x.len() / x.shape()[last.0].max(1));
        for mut lane in value.lanes_mut(last) {
            let n = lane.len() as f64;
            let mean = lane.sum() / n;
            let var = lane.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / n;
            let inv = 1.0 / (var + eps).sqrt();
            lane.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let mut aux_shape = x.shape().to_vec();
        *aux_shape.last_mut().unwrap() = 1;
        let aux = ArrayD::from_shape_vec(IxDyn(&aux_shape), inv_std).unwrap();
        let ng = self.ng(a);
        self.push_aux(value, Op::LayerNorm(a), ng, Some(aux))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .unwrap_or_else(|_| panic!("cannot reshape {:?} to {:?}", self.shape(a), shape));
        let ng = self.ng(a);
        self.push(value, Op::Reshape(a), ng)
    }

    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Var {
        let value = self
            .value(a)
            .view()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .into_owned();
        let ng = self.ng(a);
        self.push(value, Op::Permute(a, axes.to_vec()), ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        let views: Vec<_> = parts.iter().map(|&v| self.value(v).view()).collect();
        let value = concatenate(Axis(axis), &views)
            .expect("concat operands must agree off the concat axis")
            .as_standard_layout()
            .into_owned();
        let ng = parts.iter().any(|&v| self.ng(v));
        self.push(value, Op::Concat(parts.to_vec(), axis), ng)
    }

    /// Slice `len` entries of `axis` starting at `start`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let value = self
            .value(x)
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .as_standard_layout()
            .into_owned();
        let ng = self.ng(x);
        self.push(value, Op::Narrow { x, axis, start }, ng)
    }

    /// Gather rows (axis 0) by index.
    pub fn index_select(&mut self, a: Var, idx: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), idx);
        let ng = self.ng(a);
        self.push(value, Op::IndexSelect(a, idx.to_vec()), ng)
    }

    /// `out[idx[e]] += a[e]` over axis 0, producing `n` rows.
    pub fn scatter_add(&mut self, a: Var, idx: &[usize], n: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape()[0], idx.len(), "scatter_add index length mismatch");
        let mut shape = av.shape().to_vec();
        shape[0] = n;
        let mut value = ArrayD::<f64>::zeros(IxDyn(&shape));
        for (e, &dst) in idx.iter().enumerate() {
            let mut row = value.index_axis_mut(Axis(0), dst);
            row += &av.index_axis(Axis(0), e);
        }
        let ng = self.ng(a);
        self.push(value, Op::ScatterAdd(a, idx.to_vec()), ng)
    }

    /// Softmax over axis 0 within each segment `seg[e]`, per remaining column.
    /// `a` has shape `[E, C]`.
    pub fn segment_softmax(&mut self, a: Var, seg: &[usize]) -> Var {
        let av = self.value(a);
        assert_eq!(av.ndim(), 2, "segment_softmax expects [E, C]");
        assert_eq!(av.shape()[0], seg.len());
        let cols = av.shape()[1];
        let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_seg * cols];
        for (e, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let m = &mut max[s * cols + c];
                *m = m.max(av[[e, c]]);
            }
        }
        let mut value = av.clone();
        let mut denom = vec![0.0; n_seg * cols];
        for (e, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                let x = (value[[e, c]] - max[s * cols + c]).exp();
                value[[e, c]] = x;
                denom[s * cols + c] += x;
            }
        }
        for (e, &s) in seg.iter().enumerate() {
            for c in 0..cols {
                value[[e, c]] /= denom[s * cols + c];
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::SegmentSoftmax(a, seg.to_vec()), ng)
    }

    /// Sum over the given axes, removing them.
    pub fn sum_axes(&mut self, a: Var, axes: &[usize]) -> Var {
        let mut sorted = axes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut value = self.value(a).clone();
        for &ax in sorted.iter().rev() {
            value = value.sum_axis(Axis(ax));
        }
        let ng = self.ng(a);
        self.push(value, Op::SumAxes(a, sorted), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = ArrayD::from_elem(IxDyn(&[]), x.sum() / x.len() as f64);
        let ng = self.ng(a);
        self.push(value, Op::Mean(a), ng)
    }

    /// Inverted dropout; identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if p <= 0.0 {
            return a;
        }
        let shape = self.shape(a).to_vec();
        let Some(rng) = self.rng.as_mut() else {
            return a;
        };
        let keep = 1.0 - p;
        let len: usize = shape.iter().product();
        let mask: Vec<f64> = (0..len)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = self.constant(ArrayD::from_shape_vec(IxDyn(&shape), mask).unwrap());
        self.mul(a, mask)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::from_elem(self.value(loss).raw_dim(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads, params: self.param_order.clone() }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let delta = if delta.is_standard_layout() { delta } else { delta.as_standard_layout().into_owned() };
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, sum_to_shape(g, val(*a).shape()));
                acc(*b, sum_to_shape(g, val(*b).shape()));
            }
            Op::Sub(a, b) => {
                acc(*a, sum_to_shape(g, val(*a).shape()));
                acc(*b, sum_to_shape(&g.mapv(|x| -x), val(*b).shape()));
            }
            Op::Mul(a, b) => {
                let ga = (g * val(*b)).as_standard_layout().into_owned();
                let gb = (g * val(*a)).as_standard_layout().into_owned();
                acc(*a, sum_to_shape(&ga, val(*a).shape()));
                acc(*b, sum_to_shape(&gb, val(*b).shape()));
            }
            Op::Scale(a, s) => acc(*a, g * *s),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let b2 = bv.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let g2 = as_2d(g);
                if self.nodes[a.0].needs_grad {
                    let ga = g2.dot(&b2.t());
                    acc(*a, ga.as_standard_layout().into_owned().into_shape_with_order(av.raw_dim()).unwrap());
                }
                if self.nodes[b.0].needs_grad {
                    let gb = as_2d(av).t().dot(&g2);
                    acc(*b, gb.into_dyn());
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let a3 = val(*a).view().into_dimensionality::<ndarray::Ix3>().unwrap();
                let b3 = val(*b).view().into_dimensionality::<ndarray::Ix3>().unwrap();
                let g3 = g.view().into_dimensionality::<ndarray::Ix3>().unwrap();
                let mut ga = ndarray::Array3::<f64>::zeros(a3.raw_dim());
                let mut gb = ndarray::Array3::<f64>::zeros(b3.raw_dim());
                for gi in 0..a3.shape()[0] {
                    let (ai, bi, gg) = (
                        a3.index_axis(Axis(0), gi),
                        b3.index_axis(Axis(0), gi),
                        g3.index_axis(Axis(0), gi),
                    );
                    if *trans_b {
                        ga.index_axis_mut(Axis(0), gi).assign(&gg.dot(&bi));
                        gb.index_axis_mut(Axis(0), gi).assign(&gg.t().dot(&ai));
                    } else {
                        ga.index_axis_mut(Axis(0), gi).assign(&gg.dot(&bi.t()));
                        gb.index_axis_mut(Axis(0), gi).assign(&ai.t().dot(&gg));
                    }
                }
                acc(*a, ga.into_dyn());
                acc(*b, gb.into_dyn());
            }
            Op::Relu(a) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |gi, &x| if x <= 0.0 { *gi = 0.0 });
                acc(*a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |gi, &x| if x <= 0.0 { *gi *= slope });
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                d.zip_mut_with(&node.value, |gi, &y| *gi *= y * (1.0 - y));
                acc(*a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                d.zip_mut_with(&node.value, |gi, &y| *gi *= 1.0 - y * y);
                acc(*a, d);
            }
            Op::Exp(a) => acc(*a, g * &node.value),
            Op::Ln(a) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |gi, &x| *gi /= x);
                acc(*a, d);
            }
            Op::Square(a) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |gi, &x| *gi *= 2.0 * x);
                acc(*a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                d.zip_mut_with(val(*a), |gi, &x| {
                    if x < *lo || x > *hi {
                        *gi = 0.0
                    }
                });
                acc(*a, d);
            }
            Op::PRelu(a, slope) => {
                let s = *val(*slope).iter().next().unwrap();
                let x = val(*a);
                let mut d = g.clone();
                d.zip_mut_with(x, |gi, &xi| if xi <= 0.0 { *gi *= s });
                acc(*a, d);
                let ds: f64 = g
                    .iter()
                    .zip(x.iter())
                    .filter(|(_, &xi)| xi <= 0.0)
                    .map(|(gi, xi)| gi * xi)
                    .sum();
                acc(*slope, ArrayD::from_elem(val(*slope).raw_dim(), ds));
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let last = Axis(y.ndim() - 1);
                let gy = (g * y).sum_axis(last).insert_axis(last);
                let d = (y * &(g - &gy)).as_standard_layout().into_owned();
                acc(*a, d);
            }
            Op::LayerNorm(a) => {
                let y = &node.value;
                let inv = node.aux.as_ref().unwrap();
                let last = Axis(y.ndim() - 1);
                let n = y.shape()[last.0] as f64;
                let mg = g.sum_axis(last).insert_axis(last) / n;
                let mgy = (g * y).sum_axis(last).insert_axis(last) / n;
                let d = (inv * &(&(g - &mg) - &(y * &mgy))).as_standard_layout().into_owned();
                acc(*a, d);
            }
            Op::Reshape(a) => {
                acc(*a, g.clone().into_shape_with_order(val(*a).raw_dim()).unwrap());
            }
            Op::Permute(a, axes) => {
                let mut inverse = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inverse[ax] = i;
                }
                let d = g.view().permuted_axes(IxDyn(&inverse)).as_standard_layout().into_owned();
                acc(*a, d);
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).shape()[*axis];
                    let d = g
                        .slice_axis(Axis(*axis), Slice::from(offset..offset + len))
                        .as_standard_layout()
                        .into_owned();
                    acc(p, d);
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let mut d = ArrayD::<f64>::zeros(val(*x).raw_dim());
                let len = g.shape()[*axis];
                d.slice_axis_mut(Axis(*axis), Slice::from(*start..*start + len)).assign(g);
                acc(*x, d);
            }
            Op::IndexSelect(a, idx) => {
                let mut d = ArrayD::<f64>::zeros(val(*a).raw_dim());
                for (row, &src) in idx.iter().enumerate() {
                    let mut dst = d.index_axis_mut(Axis(0), src);
                    dst += &g.index_axis(Axis(0), row);
                }
                acc(*a, d);
            }
            Op::ScatterAdd(a, idx) => acc(*a, g.select(Axis(0), idx)),
            Op::SegmentSoftmax(a, seg) => {
                let y = &node.value;
                let cols = y.shape()[1];
                let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg * cols];
                for (e, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        dot[s * cols + c] += g[[e, c]] * y[[e, c]];
                    }
                }
                let mut d = ArrayD::<f64>::zeros(y.raw_dim());
                for (e, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        d[[e, c]] = y[[e, c]] * (g[[e, c]] - dot[s * cols + c]);
                    }
                }
                acc(*a, d);
            }
            Op::SumAxes(a, axes) => {
                let mut d = g.clone();
                for &ax in axes {
                    d = d.insert_axis(Axis(ax));
                }
                let d = d
                    .broadcast(val(*a).raw_dim())
                    .unwrap()
                    .as_standard_layout()
                    .into_owned();
                acc(*a, d);
            }
            Op::Sum(a) => {
                let s = *g.iter().next().unwrap();
                acc(*a, ArrayD::from_elem(val(*a).raw_dim(), s));
            }
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                let s = *g.iter().next().unwrap();
                acc(*a, ArrayD::from_elem(val(*a).raw_dim(), s / n));
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

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_check(build: impl Fn(&mut Graph, Var) -> Var, x0: Tensor) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(x0.clone());
        let loss = build(&mut g, x);
        let grads = g.backward(loss);
        let analytic = grads.get(x).unwrap().clone();
        let h = 1e-6;
        for i in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xp = x0.clone();
                *xp.iter_mut().nth(i).unwrap() += delta;
                let mut g = Graph::new(&store);
                let x = g.input(xp);
                let l = build(&mut g, x);
                *g.value(l).iter().next().unwrap()
            };
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let ana = *analytic.iter().nth(i).unwrap();
            assert!(
                (num - ana).abs() <= 1e-6 * (1.0 + num.abs()),
                "entry {i}: numeric {num} vs analytic {ana}"
            );
        }
    }

    fn weights(g: &mut Graph, x: Var) -> Var {
        let n = g.value(x).len();
        let w: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let w = g.constant(ArrayD::from_shape_vec(g.value(x).raw_dim(), w).unwrap());
        let y = g.mul(x, w);
        g.sum(y)
    }

    #[test]
    fn broadcast_add_and_mul_reduce_gradients() {
        let x0 = array![[0.3, -0.2, 0.5], [1.0, 0.1, -0.7]].into_dyn();
        fd_check(
            |g, x| {
                let b = g.constant(array![1.0, 2.0, -1.0].into_dyn());
                let y = g.mul(x, b);
                let c = g.narrow(x, 0, 0, 1);
                let z = g.add(y, c);
                weights(g, z)
            },
            x0,
        );
    }

    #[test]
    fn matmul_and_bmm_gradients() {
        let x0 = ArrayD::from_shape_vec(IxDyn(&[2, 3, 4]), (0..24).map(|i| (i as f64).sin()).collect()).unwrap();
        fd_check(
            |g, x| {
                let w = g.constant(ArrayD::from_shape_fn(IxDyn(&[4, 2]), |i| (i[0] as f64 - i[1] as f64) * 0.3));
                let y = g.matmul(x, w);
                let s = g.bmm(x, x, true);
                let t = g.bmm(s, y, false);
                weights(g, t)
            },
            x0,
        );
    }

    #[test]
    fn nonlinearity_gradients() {
        let x0 = array![[0.3, -0.2, 0.5, 0.9], [1.0, 0.15, -0.7, -1.3]].into_dyn();
        fd_check(
            |g, x| {
                let a = g.sigmoid(x);
                let b = g.tanh(x);
                let c = g.leaky_relu(x, 0.2);
                let d = g.softmax(x);
                let e = g.layer_norm(x, 1e-5);
                let f = g.exp(x);
                let sq = g.square(x);
                let cl = g.clamp(a, 0.4, 0.6);
                let l = g.ln(f);
                let slope = g.constant(array![0.25].into_dyn());
                let p = g.prelu(x, slope);
                let parts = [a, b, c, d, e, sq, cl, l, p];
                let cat = g.concat(&parts, 1);
                weights(g, cat)
            },
            x0,
        );
    }

    #[test]
    fn structural_op_gradients() {
        let x0 = ArrayD::from_shape_vec(IxDyn(&[4, 2, 3]), (0..24).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap();
        fd_check(
            |g, x| {
                let p = g.permute(x, &[2, 0, 1]);
                let r = g.reshape(p, &[3, 8]);
                let s = g.sum_axes(x, &[1]);
                let sel = g.index_select(s, &[3, 0, 0]);
                let sc = g.scatter_add(sel, &[1, 1, 0], 2);
                let logits = g.reshape(x, &[4, 6]);
                let sm = g.segment_softmax(logits, &[0, 1, 0, 1]);
                let a = weights(g, r);
                let b = weights(g, sc);
                let c = weights(g, sm);
                let m = g.mean(x);
                let ab = g.add(a, b);
                let abc = g.add(ab, c);
                g.add(abc, m)
            },
            x0,
        );
    }

    #[test]
    fn segment_softmax_normalizes_each_segment() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(array![[1.0, 0.0], [2.0, 5.0], [3.0, -1.0]].into_dyn());
        let y = g.segment_softmax(x, &[0, 1, 0]);
        let v = g.value(y);
        assert!((v[[0, 0]] + v[[2, 0]] - 1.0).abs() < 1e-12);
        assert!((v[[1, 1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(array![1.0, 2.0].into_dyn());
        assert_eq!(g.dropout(x, 0.5), x);
    }
}
