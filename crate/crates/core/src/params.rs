//! Named parameter storage and the layer building blocks shared by every
//! model component.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat registry of every learnable tensor in a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value.as_standard_layout().into_owned());
        ParamId(self.values.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of learnable scalars.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Uniform initializer with the `±1/sqrt(fan_in)` bound used for affine maps.
pub struct Init<'a> {
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    pub fn uniform(&mut self, shape: &[usize], bound: f64) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
    }
}

pub fn zeros(shape: &[usize]) -> Tensor {
    ArrayD::zeros(IxDyn(shape))
}

pub fn filled(shape: &[usize], v: f64) -> Tensor {
    ArrayD::from_elem(IxDyn(shape), v)
}

/// Affine map `x W + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self::build(store, init, name, in_dim, out_dim, true)
    }

    pub fn no_bias(store: &mut ParamStore, init: &mut Init, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self::build(store, init, name, in_dim, out_dim, false)
    }

    fn build(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), init.uniform(&[in_dim, out_dim], bound));
        let bias = bias.then(|| store.add(format!("{name}.bias"), init.uniform(&[out_dim], bound)));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => y,
        }
    }

    pub fn num_params(&self) -> usize {
        self.in_dim * self.out_dim + if self.bias.is_some() { self.out_dim } else { 0 }
    }
}

/// Two affine maps with a ReLU in between.
#[derive(Clone, Debug)]
pub struct Mlp2 {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp2 {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, dims: [usize; 3]) -> Self {
        Self {
            first: Linear::new(store, init, &format!("{name}.0"), dims[0], dims[1]),
            second: Linear::new(store, init, &format!("{name}.1"), dims[1], dims[2]),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.first.forward(g, x);
        let h = g.relu(h);
        self.second.forward(g, h)
    }
}

/// Layer normalization with learned gain and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), filled(&[dim], 1.0)),
            shift: store.add(format!("{name}.shift"), zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.layer_norm(x, self.eps);
        let gain = g.param(self.gain);
        let shift = g.param(self.shift);
        let y = g.mul(n, gain);
        g.add(y, shift)
    }
}

/// PReLU with one learned slope.
#[derive(Clone, Debug)]
pub struct PRelu {
    pub slope: ParamId,
}

impl PRelu {
    pub fn new(store: &mut ParamStore, name: &str) -> Self {
        Self { slope: store.add(format!("{name}.slope"), filled(&[1], 0.25)) }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let s = g.param(self.slope);
        g.prelu(x, s)
    }
}

/// Gated blend `w * a + (1 - w) * b` with `w = sigmoid([a || b] W + c)`.
#[derive(Clone, Debug)]
pub struct GatedFusion {
    pub gate: Linear,
}

impl GatedFusion {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, dim: usize) -> Self {
        Self { gate: Linear::new(store, init, &format!("{name}.gate"), 2 * dim, dim) }
    }

    /// Returns `(fused, gate)`.
    pub fn forward(&self, g: &mut Graph, a: Var, b: Var) -> (Var, Var) {
        assert_eq!(g.shape(a), g.shape(b), "gated fusion operands must share a shape");
        let last = g.shape(a).len() - 1;
        let cat = g.concat(&[a, b], last);
        let logits = self.gate.forward(g, cat);
        let w = g.sigmoid(logits);
        let wa = g.mul(w, a);
        let inv = g.one_minus(w);
        let wb = g.mul(inv, b);
        (g.add(wa, wb), w)
    }
}
