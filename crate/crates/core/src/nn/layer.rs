use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::{gemm, MatMut, MatRef, Scalar};

/// The fixed set of layer kinds the engine differentiates through.
///
/// Convolutions are 3x3 with zero padding 1 and stride 1, so spatial size is
/// preserved; max pooling is 2x2 with stride 2 (odd trailing rows/columns are
/// dropped).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Dense { inputs: usize, outputs: usize },
    Conv3x3 { in_channels: usize, out_channels: usize },
    MaxPool2x2,
    Relu,
    Tanh,
    Flatten,
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Dense { .. } | LayerKind::Conv3x3 { .. })
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerKind::Dense { inputs, outputs } => vec![outputs, inputs],
            LayerKind::Conv3x3 { in_channels, out_channels } => vec![out_channels, in_channels, 3, 3],
            _ => vec![0],
        }
    }

    pub fn weight_len(&self) -> usize {
        if self.has_params() {
            self.weight_shape().iter().product()
        } else {
            0
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv3x3 { out_channels, .. } => out_channels,
            _ => 0,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv3x3 { in_channels, .. } => in_channels * 9,
            _ => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerKind::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::Shape(format!("dense layer expects [{inputs}], got {input:?}")));
                }
                Ok(vec![outputs])
            }
            LayerKind::Conv3x3 { in_channels, out_channels } => match input {
                [c, h, w] if *c == in_channels => Ok(vec![out_channels, *h, *w]),
                _ => Err(Error::Shape(format!(
                    "conv3x3 expects [{in_channels}, H, W], got {input:?}"
                ))),
            },
            LayerKind::MaxPool2x2 => match input {
                [c, h, w] if *h >= 2 && *w >= 2 => Ok(vec![*c, h / 2, w / 2]),
                _ => Err(Error::Shape(format!("maxpool2x2 expects [C, H>=2, W>=2], got {input:?}"))),
            },
            LayerKind::Relu | LayerKind::Tanh => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// A layer: its kind plus synaptic weights and biases (empty when parameterless).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    pub name: String,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Values saved by the forward pass for the backward pass.
#[derive(Debug)]
pub(crate) enum Cache<T> {
    Dense { input: Tensor<T> },
    Conv { input: Tensor<T> },
    Pool { argmax: Vec<usize>, input_shape: Vec<usize> },
    Relu { output: Vec<T> },
    Tanh { output: Vec<T> },
    Flatten { input_shape: Vec<usize> },
}

impl<T: Scalar> Layer<T> {
    pub fn new(kind: LayerKind, name: impl Into<String>) -> Self {
        let (weights, bias) = if kind.has_params() {
            (Tensor::zeros(kind.weight_shape()), Tensor::zeros(vec![kind.bias_len()]))
        } else {
            (Tensor::empty(), Tensor::empty())
        };
        Self { kind, name: name.into(), weights, bias }
    }

    pub(crate) fn forward(&self, x: Tensor<T>, keep: bool) -> Result<(Tensor<T>, Option<Cache<T>>)> {
        let batch = x.batch_size();
        let out_sample = self.kind.output_shape(&x.shape()[1..])?;
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(&out_sample);
        match self.kind {
            LayerKind::Dense { inputs, outputs } => {
                let mut out = Tensor::zeros(out_shape);
                gemm(
                    T::one(),
                    MatRef::new(x.data(), batch, inputs),
                    MatRef::new(self.weights.data(), outputs, inputs).t(),
                    T::zero(),
                    MatMut::new(out.data_mut(), batch, outputs),
                );
                let b = self.bias.data();
                for row in out.data_mut().chunks_exact_mut(outputs) {
                    for (v, &bi) in row.iter_mut().zip(b) {
                        *v += bi;
                    }
                }
                Ok((out, keep.then(|| Cache::Dense { input: x })))
            }
            LayerKind::Conv3x3 { in_channels, out_channels } => {
                let (h, w) = (x.shape()[2], x.shape()[3]);
                let hw = h * w;
                let mut out = Tensor::zeros(out_shape);
                let mut col = vec![T::zero(); in_channels * 9 * hw];
                let in_len = in_channels * hw;
                for b in 0..batch {
                    im2col(&x.data()[b * in_len..(b + 1) * in_len], in_channels, h, w, &mut col);
                    let dst = &mut out.data_mut()[b * out_channels * hw..(b + 1) * out_channels * hw];
                    gemm(
                        T::one(),
                        MatRef::new(self.weights.data(), out_channels, in_channels * 9),
                        MatRef::new(&col, in_channels * 9, hw),
                        T::zero(),
                        MatMut::new(dst, out_channels, hw),
                    );
                    for (o, plane) in dst.chunks_exact_mut(hw).enumerate() {
                        let bo = self.bias.data()[o];
                        plane.iter_mut().for_each(|v| *v += bo);
                    }
                }
                Ok((out, keep.then(|| Cache::Conv { input: x })))
            }
            LayerKind::MaxPool2x2 => {
                let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
                let (oh, ow) = (h / 2, w / 2);
                let mut out = Tensor::zeros(out_shape);
                let mut argmax = Vec::with_capacity(batch * c * oh * ow);
                let src = x.data();
                let dst = out.data_mut();
                let mut k = 0;
                for plane in 0..batch * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + 2 * oy * w + 2 * ox;
                            for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                                if src[idx] > src[best] {
                                    best = idx;
                                }
                            }
                            dst[k] = src[best];
                            argmax.push(best);
                            k += 1;
                        }
                    }
                }
                let input_shape = x.shape().to_vec();
                Ok((out, keep.then(|| Cache::Pool { argmax, input_shape })))
            }
            LayerKind::Relu => {
                let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
                let cache = keep.then(|| Cache::Relu { output: out.data().to_vec() });
                Ok((out, cache))
            }
            LayerKind::Tanh => {
                let out = x.map(|v| v.tanh());
                let cache = keep.then(|| Cache::Tanh { output: out.data().to_vec() });
                Ok((out, cache))
            }
            LayerKind::Flatten => {
                let input_shape = x.shape().to_vec();
                let out = x.reshape(out_shape)?;
                Ok((out, keep.then_some(Cache::Flatten { input_shape })))
            }
        }
    }

    /// Back-propagates `dy`, writing parameter gradients into `wgrad`/`bgrad`
    /// (overwritten, not accumulated). Returns the input gradient when
    /// `need_input_grad` is set.
    pub(crate) fn backward(
        &self,
        cache: Cache<T>,
        dy: Tensor<T>,
        wgrad: &mut [T],
        bgrad: &mut [T],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let batch = dy.batch_size();
        match (self.kind, cache) {
            (LayerKind::Dense { inputs, outputs }, Cache::Dense { input }) => {
                gemm(
                    T::one(),
                    MatRef::new(dy.data(), batch, outputs).t(),
                    MatRef::new(input.data(), batch, inputs),
                    T::zero(),
                    MatMut::new(wgrad, outputs, inputs),
                );
                bgrad.iter_mut().for_each(|v| *v = T::zero());
                for row in dy.data().chunks_exact(outputs) {
                    for (g, &d) in bgrad.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                if !need_input_grad {
                    return Ok(None);
                }
                let mut dx = Tensor::zeros(input.shape().to_vec());
                gemm(
                    T::one(),
                    MatRef::new(dy.data(), batch, outputs),
                    MatRef::new(self.weights.data(), outputs, inputs),
                    T::zero(),
                    MatMut::new(dx.data_mut(), batch, inputs),
                );
                Ok(Some(dx))
            }
            (LayerKind::Conv3x3 { in_channels, out_channels }, Cache::Conv { input }) => {
                let (h, w) = (input.shape()[2], input.shape()[3]);
                let hw = h * w;
                let rows = in_channels * 9;
                let in_len = in_channels * hw;
                let mut col = vec![T::zero(); rows * hw];
                let mut dcol = vec![T::zero(); rows * hw];
                let mut dx = need_input_grad.then(|| Tensor::zeros(input.shape().to_vec()));
                bgrad.iter_mut().for_each(|v| *v = T::zero());
                for b in 0..batch {
                    let dy_b = &dy.data()[b * out_channels * hw..(b + 1) * out_channels * hw];
                    im2col(&input.data()[b * in_len..(b + 1) * in_len], in_channels, h, w, &mut col);
                    let beta = if b == 0 { T::zero() } else { T::one() };
                    gemm(
                        T::one(),
                        MatRef::new(dy_b, out_channels, hw),
                        MatRef::new(&col, rows, hw).t(),
                        beta,
                        MatMut::new(wgrad, out_channels, rows),
                    );
                    for (o, plane) in dy_b.chunks_exact(hw).enumerate() {
                        bgrad[o] += plane.iter().copied().sum::<T>();
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(
                            T::one(),
                            MatRef::new(self.weights.data(), out_channels, rows).t(),
                            MatRef::new(dy_b, out_channels, hw),
                            T::zero(),
                            MatMut::new(&mut dcol, rows, hw),
                        );
                        col2im(&dcol, in_channels, h, w, &mut dx.data_mut()[b * in_len..(b + 1) * in_len]);
                    }
                }
                Ok(dx)
            }
            (LayerKind::MaxPool2x2, Cache::Pool { argmax, input_shape }) => {
                if !need_input_grad {
                    return Ok(None);
                }
                let mut dx = Tensor::zeros(input_shape);
                let d = dx.data_mut();
                for (&idx, &g) in argmax.iter().zip(dy.data()) {
                    d[idx] += g;
                }
                Ok(Some(dx))
            }
            (LayerKind::Relu, Cache::Relu { output }) => {
                if !need_input_grad {
                    return Ok(None);
                }
                let mut dx = dy;
                for (g, &y) in dx.data_mut().iter_mut().zip(&output) {
                    if y <= T::zero() {
                        *g = T::zero();
                    }
                }
                Ok(Some(dx))
            }
            (LayerKind::Tanh, Cache::Tanh { output }) => {
                if !need_input_grad {
                    return Ok(None);
                }
                let mut dx = dy;
                for (g, &y) in dx.data_mut().iter_mut().zip(&output) {
                    *g *= T::one() - y * y;
                }
                Ok(Some(dx))
            }
            (LayerKind::Flatten, Cache::Flatten { input_shape }) => {
                if !need_input_grad {
                    return Ok(None);
                }
                Ok(Some(dy.reshape(input_shape)?))
            }
            (kind, _) => Err(Error::Shape(format!("cache does not belong to a {kind:?} layer"))),
        }
    }
}

/// Unrolls 3x3 zero-padded patches: `col[(c*9 + ky*3 + kx), y*w + x] = img[c, y+ky-1, x+kx-1]`.
fn im2col<T: Scalar>(img: &[T], channels: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &img[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((c * 9) + ky * 3 + kx) * hw..((c * 9) + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        dst[x] = if sx < 0 || sx >= w as isize { T::zero() } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back into the image.
fn col2im<T: Scalar>(col: &[T], channels: usize, h: usize, w: usize, img: &mut [T]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut img[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((c * 9) + ky * 3 + kx) * hw..((c * 9) + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}
