use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{Layer, LayerKind};
use crate::nn::loss::cross_entropy_with_grad;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// One entry of a network description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self { name: name.into(), kind }
    }
}

/// Gradient split into synaptic weights (aligned with the flat weight vector)
/// and biases (aligned with the flat bias vector).
#[derive(Clone, Debug, PartialEq)]
pub struct FlatGradient<T> {
    pub wgrad: Vec<T>,
    pub bgrad: Vec<T>,
}

impl<T: Scalar> FlatGradient<T> {
    pub fn zeros(weights: usize, biases: usize) -> Self {
        Self { wgrad: vec![T::zero(); weights], bgrad: vec![T::zero(); biases] }
    }

    pub fn zeros_like<U: Scalar>(net: &Network<U>) -> Self {
        Self::zeros(net.weight_count(), net.bias_count())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, &b) in self.wgrad.iter_mut().zip(&other.wgrad) {
            *a += scale * b;
        }
        for (a, &b) in self.bgrad.iter_mut().zip(&other.bgrad) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.wgrad.iter_mut().chain(self.bgrad.iter_mut()).for_each(|v| *v *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.wgrad.iter().chain(&self.bgrad).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.wgrad.iter().chain(&self.bgrad).fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Ordered stack of layers with a flat view over all synaptic weights.
///
/// Weight coordinates of the parameterized layers are laid out contiguously in
/// layer order; biases live in a separate flat vector and never appear in the
/// weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    output_shapes: Vec<Vec<usize>>,
    weight_index: Vec<Option<Range<usize>>>,
    bias_index: Vec<Option<Range<usize>>>,
    weight_count: usize,
    bias_count: usize,
}

impl<T: Scalar> Network<T> {
    /// Builds a zero-initialized network, validating every layer's input shape.
    pub fn new(input_shape: Vec<usize>, specs: &[LayerSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shape = input_shape.clone();
        let mut output_shapes = Vec::with_capacity(specs.len());
        let mut layers = Vec::with_capacity(specs.len());
        let (mut weight_index, mut bias_index) = (Vec::new(), Vec::new());
        let (mut wc, mut bc) = (0, 0);
        for (pos, spec) in specs.iter().enumerate() {
            shape = spec.kind.output_shape(&shape).map_err(|e| {
                Error::Shape(format!("layer {pos} ({}): {e}", spec.name))
            })?;
            output_shapes.push(shape.clone());
            if spec.kind.has_params() {
                let (wl, bl) = (spec.kind.weight_len(), spec.kind.bias_len());
                weight_index.push(Some(wc..wc + wl));
                bias_index.push(Some(bc..bc + bl));
                wc += wl;
                bc += bl;
            } else {
                weight_index.push(None);
                bias_index.push(None);
            }
            layers.push(Layer::new(spec.kind, spec.name.clone()));
        }
        if shape.len() != 1 {
            return Err(Error::Shape(format!("network output must be a flat logit vector, got {shape:?}")));
        }
        Ok(Self { layers, input_shape, output_shapes, weight_index, bias_index, weight_count: wc, bias_count: bc })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| LayerSpec::new(l.name.clone(), l.kind)).collect()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape of layer `pos`.
    pub fn output_shape_of(&self, pos: usize) -> &[usize] {
        &self.output_shapes[pos]
    }

    pub fn classes(&self) -> usize {
        self.output_shapes.last().map(|s| s[0]).unwrap_or(0)
    }

    /// Total number of synaptic weights `N`.
    pub fn weight_count(&self) -> usize {
        self.weight_count
    }

    pub fn bias_count(&self) -> usize {
        self.bias_count
    }

    pub fn param_count(&self) -> usize {
        self.weight_count + self.bias_count
    }

    /// Range of layer `pos`'s weights inside the flat weight vector.
    pub fn weight_range(&self, pos: usize) -> Option<Range<usize>> {
        self.weight_index.get(pos).cloned().flatten()
    }

    pub fn bias_range(&self, pos: usize) -> Option<Range<usize>> {
        self.bias_index.get(pos).cloned().flatten()
    }

    /// Positions of the layers that carry synaptic weights, in order.
    pub fn param_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&p| self.weight_index[p].is_some()).collect()
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn flat_weights(&self) -> Vec<T> {
        let mut w = Vec::with_capacity(self.weight_count);
        for l in &self.layers {
            w.extend_from_slice(l.weights.data());
        }
        w
    }

    pub fn set_flat_weights(&mut self, w: &[T]) -> Result<()> {
        if w.len() != self.weight_count {
            return Err(Error::Length { expected: self.weight_count, found: w.len() });
        }
        for (layer, range) in self.layers.iter_mut().zip(&self.weight_index) {
            if let Some(r) = range {
                layer.weights.data_mut().copy_from_slice(&w[r.clone()]);
            }
        }
        Ok(())
    }

    pub fn flat_biases(&self) -> Vec<T> {
        let mut b = Vec::with_capacity(self.bias_count);
        for l in &self.layers {
            b.extend_from_slice(l.bias.data());
        }
        b
    }

    pub fn set_flat_biases(&mut self, b: &[T]) -> Result<()> {
        if b.len() != self.bias_count {
            return Err(Error::Length { expected: self.bias_count, found: b.len() });
        }
        for (layer, range) in self.layers.iter_mut().zip(&self.bias_index) {
            if let Some(r) = range {
                layer.bias.data_mut().copy_from_slice(&b[r.clone()]);
            }
        }
        Ok(())
    }

    /// Applies `f(flat_index, &mut weight)` to every synaptic weight.
    pub fn for_each_weight_mut(&mut self, mut f: impl FnMut(usize, &mut T)) {
        for (layer, range) in self.layers.iter_mut().zip(&self.weight_index) {
            if let Some(r) = range {
                for (i, v) in layer.weights.data_mut().iter_mut().enumerate() {
                    f(r.start + i, v);
                }
            }
        }
    }

    pub fn for_each_bias_mut(&mut self, mut f: impl FnMut(usize, &mut T)) {
        for (layer, range) in self.layers.iter_mut().zip(&self.bias_index) {
            if let Some(r) = range {
                for (i, v) in layer.bias.data_mut().iter_mut().enumerate() {
                    f(r.start + i, v);
                }
            }
        }
    }

    /// Overwrites this network's parameters with `source`'s weights shifted by
    /// `delta`; biases are copied unchanged. Both networks must share a layout.
    pub fn load_displaced(&mut self, source: &Network<T>, delta: &[T]) -> Result<()> {
        if source.weight_index != self.weight_index || source.bias_index != self.bias_index {
            return Err(Error::Shape("networks have different parameter layouts".into()));
        }
        if delta.len() != self.weight_count {
            return Err(Error::Length { expected: self.weight_count, found: delta.len() });
        }
        for ((dst, src), range) in self.layers.iter_mut().zip(&source.layers).zip(&self.weight_index) {
            if let Some(r) = range {
                for ((d, &s), &dl) in dst.weights.data_mut().iter_mut().zip(src.weights.data()).zip(&delta[r.clone()]) {
                    *d = s + dl;
                }
                dst.bias.data_mut().copy_from_slice(src.bias.data());
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.shape().len() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..] {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match network input (B, {:?})",
                batch.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Logits of shape (batch, classes).
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = layer.forward(x, false)?.0;
        }
        Ok(x)
    }

    /// Mean cross-entropy on `(batch, labels)` and its exact gradient with
    /// respect to every weight and bias.
    pub fn backward(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<(T, FlatGradient<T>)> {
        self.check_batch(batch)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(x, true)?;
            caches.push(cache.expect("cache requested"));
            x = y;
        }
        let (loss, mut dy) = cross_entropy_with_grad(&x, labels)?;
        let mut grad = FlatGradient::zeros(self.weight_count, self.bias_count);
        let first_param = self.weight_index.iter().position(Option::is_some).unwrap_or(0);
        for (pos, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let wr = self.weight_index[pos].clone().unwrap_or(0..0);
            let br = self.bias_index[pos].clone().unwrap_or(0..0);
            let need_input = pos > first_param;
            match layer.backward(cache, dy, &mut grad.wgrad[wr], &mut grad.bgrad[br], need_input)? {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        Ok((loss, grad))
    }

    /// Kaiming (He) normal initialization: weights ~ N(0, 2 / fan_in), biases zero.
    pub fn kaiming_init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            if !layer.kind.has_params() {
                continue;
            }
            let std = (2.0 / layer.kind.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in layer.weights.data_mut() {
                *v = T::from_f64_lossy(normal.sample(rng));
            }
            layer.bias.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Same architecture and parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut out = Network::<U>::new(self.input_shape.clone(), &self.layer_specs()).expect("valid layout");
        let w: Vec<U> = self.flat_weights().iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect();
        let b: Vec<U> = self.flat_biases().iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect();
        out.set_flat_weights(&w).expect("same length");
        out.set_flat_biases(&b).expect("same length");
        out
    }
}
