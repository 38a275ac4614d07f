//! Dense feed-forward network with explicit reverse-mode gradients.
//!
//! Every layer computes `z = W x + b` followed by an element-wise activation.
//! Weights are stored row-major with shape `(out_dim, in_dim)`. Hidden layers share
//! one activation; the last layer has its own (usually identity).
//!
//! Batched calls take row-per-sample matrices. Gradients returned by the batched
//! backward pass are summed over rows, so a caller averaging a loss over the batch
//! scales the output gradient by `1/n` before calling it.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at pre-activation `z`, given the already computed output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

/// Weight matrix and bias vector of one affine layer.
///
/// Also used as the per-layer container of a [`Gradients`] bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Per-layer pre- and post-activations recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Array2<T>,
    pre: Vec<Array2<T>>,
    post: Vec<Array2<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> ArrayView2<'_, T> {
        self.post.last().expect("network has at least one layer").view()
    }

    pub fn input(&self) -> ArrayView2<'_, T> {
        self.input.view()
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

/// Parameter gradients, shape-congruent with the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| *v == T::zero()))
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weight += &src.weight;
            dst.bias += &src.bias;
        }
    }

    pub fn congruent_with(&self, net: &Mlp<T>) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weight.dim() == l.weight.dim() && g.bias.len() == l.bias.len())
    }
}

impl<T: Scalar> Mlp<T> {
    /// Builds a network with weights and biases drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden_activation, output_activation)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.in_dim() as f64).sqrt();
            layer
                .weight
                .iter_mut()
                .chain(layer.bias.iter_mut())
                .for_each(|v| *v = T::lit(rng.random_range(-bound..=bound)));
        }
        Ok(net)
    }

    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(
                "an mlp needs at least an input and an output size".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layers,
            hidden_activation,
            output_activation,
        })
    }

    /// Assembles a network from explicit layers, validating shapes.
    pub fn from_layers(
        layers: Vec<Dense<T>>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("an mlp needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dims("layer chaining", pair[0].out_dim(), pair[1].in_dim()));
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::dims("bias length", l.out_dim(), l.bias.len()));
            }
        }
        Ok(Self {
            layers,
            hidden_activation,
            output_activation,
        })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim()))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|_| Error::dims("forward input", self.input_dim(), input.len()))?;
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("forward input", self.input_dim(), x.ncols()));
        }
        let mut a = self.affine(0, x);
        a.mapv_inplace(|z| self.activation_of(0).apply(z));
        for idx in 1..self.layers.len() {
            let mut z = self.affine(idx, a.view());
            let act = self.activation_of(idx);
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, T>) -> Result<ForwardCache<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims("forward input", self.input_dim(), x.ncols()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        for idx in 0..self.layers.len() {
            let z = match post.last() {
                None => self.affine(idx, x),
                Some(prev) => self.affine(idx, prev.view()),
            };
            let act = self.activation_of(idx);
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache {
            input: x.as_standard_layout().into_owned(),
            pre,
            post,
        })
    }

    #[inline]
    fn affine(&self, idx: usize, x: ArrayView2<'_, T>) -> Array2<T> {
        let layer = &self.layers[idx];
        let mut z = x.dot(&layer.weight.t());
        z += &layer.bias;
        z
    }

    /// Gradient of `output · output_gradient` with respect to every parameter.
    pub fn backward(&self, input: &[T], output_gradient: &[T]) -> Result<Gradients<T>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|_| Error::dims("backward input", self.input_dim(), input.len()))?;
        let g = ArrayView2::from_shape((1, output_gradient.len()), output_gradient)
            .map_err(|_| Error::dims("output gradient", self.output_dim(), output_gradient.len()))?;
        let cache = self.forward_cached(x)?;
        Ok(self.backward_batch(&cache, g)?.0)
    }

    /// Batched reverse pass. Returns parameter gradients summed over rows and the
    /// gradient with respect to the input rows.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache<T>,
        output_gradient: ArrayView2<'_, T>,
    ) -> Result<(Gradients<T>, Array2<T>)> {
        let (grads, d_input) = self.reverse(cache, output_gradient, true)?;
        Ok((grads.expect("parameter gradients requested"), d_input))
    }

    /// Gradient with respect to the inputs only; parameter gradients are skipped.
    pub fn input_gradient(
        &self,
        cache: &ForwardCache<T>,
        output_gradient: ArrayView2<'_, T>,
    ) -> Result<Array2<T>> {
        Ok(self.reverse(cache, output_gradient, false)?.1)
    }

    fn reverse(
        &self,
        cache: &ForwardCache<T>,
        output_gradient: ArrayView2<'_, T>,
        want_params: bool,
    ) -> Result<(Option<Gradients<T>>, Array2<T>)> {
        let n = cache.batch_size();
        if output_gradient.dim() != (n, self.output_dim()) {
            return Err(Error::dims(
                "output gradient",
                n * self.output_dim(),
                output_gradient.len(),
            ));
        }
        if cache.pre.len() != self.layers.len() {
            return Err(Error::dims("forward cache", self.layers.len(), cache.pre.len()));
        }
        let mut grads = want_params.then(|| Gradients::zeros_like(self));
        let mut delta = output_gradient.to_owned();
        for idx in (0..self.layers.len()).rev() {
            let act = self.activation_of(idx);
            Zip::from(&mut delta)
                .and(&cache.pre[idx])
                .and(&cache.post[idx])
                .for_each(|d, &z, &y| *d *= act.derivative(z, y));
            let layer_input = if idx == 0 {
                cache.input.view()
            } else {
                cache.post[idx - 1].view()
            };
            if let Some(g) = grads.as_mut() {
                let w = delta.t().dot(&layer_input);
                g.layers[idx].weight = if w.is_standard_layout() {
                    w
                } else {
                    w.as_standard_layout().into_owned()
                };
                g.layers[idx].bias = delta.sum_axis(Axis(0));
            }
            delta = delta.dot(&self.layers[idx].weight);
        }
        Ok((grads, delta))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers.iter().flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers.iter_mut().flat_map(|l| {
            [
                l.weight.as_slice_mut().expect("standard layout"),
                l.bias.as_slice_mut().expect("standard layout"),
            ]
        })
    }

    /// Parameters in checkpoint order: per layer, row-major weights then biases.
    pub fn flat_params(&self) -> Vec<T> {
        self.tensors().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dims("flat parameters", self.num_params(), params.len()));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&params[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn param_mut(&mut self, index: usize) -> Option<&mut T> {
        let mut remaining = index;
        for t in self.tensors_mut() {
            if remaining < t.len() {
                return Some(&mut t[remaining]);
            }
            remaining -= t.len();
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self <- (1 - rate) * self + rate * source`, parameter-wise.
    pub fn blend_from(&mut self, source: &Mlp<T>, rate: T) -> Result<()> {
        if self.layer_sizes() != source.layer_sizes() {
            return Err(Error::InvalidInput("blend between different architectures".into()));
        }
        let keep = T::one() - rate;
        for (dst, src) in self.tensors_mut().zip(source.tensors()) {
            dst.iter_mut()
                .zip(src)
                .for_each(|(d, &s)| *d = keep * *d + rate * s);
        }
        Ok(())
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(|v| U::lit(v.as_f64())),
                    bias: l.bias.mapv(|v| U::lit(v.as_f64())),
                })
                .collect(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
        }
    }
}
