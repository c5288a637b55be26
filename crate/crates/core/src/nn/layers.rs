//! Layer vocabulary of the embedding network and the SE block.
//!
//! Every layer exposes an explicit `forward` that returns the activations
//! it needs for the backward pass, and a `backward` that consumes those
//! saved activations, accumulates parameter gradients and returns the
//! gradient with respect to the layer input.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{gemm, init, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm2d {
        channels: usize,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    FullyConnected {
        in_features: usize,
        out_features: usize,
        bias: bool,
    },
    Sigmoid,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm2d { .. } => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool",
            LayerSpec::FullyConnected { .. } => "fully_connected",
            LayerSpec::Sigmoid => "sigmoid",
        }
    }
}

/// Activations saved by a training-mode forward pass.
#[derive(Clone, Debug)]
pub enum Saved<T> {
    /// Produced in eval mode; cannot be used for backward.
    Nothing,
    Input(Tensor<T>),
    Output(Tensor<T>),
    BatchNorm { xhat: Vec<T>, inv_std: Vec<T> },
    MaxPool { argmax: Vec<usize>, input_shape: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[out_channels, in_channels * kernel * kernel]`
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct FullyConnected<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out_features, in_features]`
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    BatchNorm2d(BatchNorm2d<T>),
    Relu,
    MaxPool2d(MaxPool2d),
    FullyConnected(FullyConnected<T>),
    Sigmoid,
}

impl<T: Real> Layer<T> {
    /// Builds a layer with Kaiming-uniform weights (conv, FC) or identity
    /// affine parameters (batchnorm).
    pub fn new<R: Rng + ?Sized>(spec: &LayerSpec, rng: &mut R) -> Result<Self> {
        let layer = match *spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
                bias,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::shape("conv2d", "all sizes must be positive"));
                }
                let fan_in = in_channels * kernel * kernel;
                let weight = init::kaiming_uniform(&[out_channels, fan_in], fan_in, rng);
                let bias = bias.then(|| init::fan_in_uniform(&[out_channels], fan_in, rng));
                Layer::Conv2d(Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    pad,
                    weight,
                    bias,
                })
            }
            LayerSpec::BatchNorm2d { channels } => Layer::BatchNorm2d(BatchNorm2d {
                channels,
                gamma: Tensor::filled(&[channels], T::one()).requires_grad(),
                beta: Tensor::zeros(&[channels]).requires_grad(),
                running_mean: Tensor::zeros(&[channels]),
                running_var: Tensor::filled(&[channels], T::one()),
                momentum: 0.1,
                eps: 1e-5,
            }),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool2d { kernel, stride } => {
                if kernel == 0 || stride == 0 {
                    return Err(Error::shape("maxpool", "kernel and stride must be positive"));
                }
                Layer::MaxPool2d(MaxPool2d { kernel, stride })
            }
            LayerSpec::FullyConnected {
                in_features,
                out_features,
                bias,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(Error::shape("fully_connected", "feature counts must be positive"));
                }
                let weight = init::kaiming_uniform(&[out_features, in_features], in_features, rng);
                let bias = bias.then(|| init::fan_in_uniform(&[out_features], in_features, rng));
                Layer::FullyConnected(FullyConnected {
                    in_features,
                    out_features,
                    weight,
                    bias,
                })
            }
            LayerSpec::Sigmoid => Layer::Sigmoid,
        };
        Ok(layer)
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                pad: c.pad,
                bias: c.bias.is_some(),
            },
            Layer::BatchNorm2d(b) => LayerSpec::BatchNorm2d {
                channels: b.channels,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool2d(p) => LayerSpec::MaxPool2d {
                kernel: p.kernel,
                stride: p.stride,
            },
            Layer::FullyConnected(f) => LayerSpec::FullyConnected {
                in_features: f.in_features,
                out_features: f.out_features,
                bias: f.bias.is_some(),
            },
            Layer::Sigmoid => LayerSpec::Sigmoid,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Saved<T>)> {
        let train = mode == Mode::Train;
        match self {
            Layer::Conv2d(c) => {
                let y = c.forward(x)?;
                Ok((y, if train { Saved::Input(x.clone()) } else { Saved::Nothing }))
            }
            Layer::BatchNorm2d(b) => b.forward(x, mode),
            Layer::Relu => {
                let y = map(x, |v| if v > T::zero() { v } else { T::zero() });
                let saved = if train { Saved::Output(y.clone()) } else { Saved::Nothing };
                Ok((y, saved))
            }
            Layer::MaxPool2d(p) => p.forward(x, train),
            Layer::FullyConnected(f) => {
                let y = f.forward(x)?;
                Ok((y, if train { Saved::Input(x.clone()) } else { Saved::Nothing }))
            }
            Layer::Sigmoid => {
                let y = map(x, sigmoid);
                let saved = if train { Saved::Output(y.clone()) } else { Saved::Nothing };
                Ok((y, saved))
            }
        }
    }

    pub fn backward(&mut self, saved: &Saved<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let name = self.spec().name();
        let missing = || Error::State(format!("backward through `{name}` without a training-mode forward"));
        match (self, saved) {
            (Layer::Conv2d(c), Saved::Input(x)) => c.backward(x, grad),
            (Layer::BatchNorm2d(b), Saved::BatchNorm { xhat, inv_std }) => b.backward(xhat, inv_std, grad),
            (Layer::Relu, Saved::Output(y)) => {
                check_same(name, y, grad)?;
                let data = y
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(&yv, &g)| if yv > T::zero() { g } else { T::zero() })
                    .collect();
                Tensor::from_vec(y.shape(), data)
            }
            (Layer::MaxPool2d(_), Saved::MaxPool { argmax, input_shape }) => {
                if argmax.len() != grad.len() {
                    return Err(Error::shape(name, format!("gradient has {} elements, expected {}", grad.len(), argmax.len())));
                }
                let mut dx = Tensor::zeros(input_shape);
                let d = dx.data_mut();
                for (&src, &g) in argmax.iter().zip(grad.data()) {
                    d[src] += g;
                }
                Ok(dx)
            }
            (Layer::FullyConnected(f), Saved::Input(x)) => f.backward(x, grad),
            (Layer::Sigmoid, Saved::Output(y)) => {
                check_same(name, y, grad)?;
                let data = y
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(&yv, &g)| g * yv * (T::one() - yv))
                    .collect();
                Tensor::from_vec(y.shape(), data)
            }
            _ => Err(missing()),
        }
    }

    /// Trainable tensors with their local names.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d(Conv2d { weight, bias, .. })
            | Layer::FullyConnected(FullyConnected { weight, bias, .. }) => {
                let mut v = vec![("weight", weight)];
                if let Some(b) = bias {
                    v.push(("bias", b));
                }
                v
            }
            Layer::BatchNorm2d(b) => vec![("gamma", &b.gamma), ("beta", &b.beta)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d(Conv2d { weight, bias, .. })
            | Layer::FullyConnected(FullyConnected { weight, bias, .. }) => {
                let mut v = vec![("weight", weight)];
                if let Some(b) = bias {
                    v.push(("bias", b));
                }
                v
            }
            Layer::BatchNorm2d(b) => vec![("gamma", &mut b.gamma), ("beta", &mut b.beta)],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batchnorm running statistics).
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::BatchNorm2d(b) => vec![("running_mean", &b.running_mean), ("running_var", &b.running_var)],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::BatchNorm2d(b) => vec![
                ("running_mean", &mut b.running_mean),
                ("running_var", &mut b.running_var),
            ],
            _ => Vec::new(),
        }
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn map<T: Real>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

fn check_same<T: Real>(layer: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(layer, format!("gradient shape {:?} differs from output shape {:?}", b.shape(), a.shape())));
    }
    Ok(())
}

impl<T: Real> Conv2d<T> {
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        if h + 2 * p < k || w + 2 * p < k {
            return Err(Error::shape("conv2d", format!("input {h}x{w} smaller than kernel {k} with pad {p}")));
        }
        Ok(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize, usize)> {
        let (n, c, h, w) = x
            .dims4()
            .map_err(|_| Error::shape("conv2d", format!("expected [n, {}, h, w], got {:?}", self.in_channels, x.shape())))?;
        if c != self.in_channels {
            return Err(Error::shape("conv2d", format!("expected {} input channels, got {c}", self.in_channels)));
        }
        let (oh, ow) = self.output_size(h, w)?;
        Ok((n, c, h, w, oh, ow))
    }

    fn im2col(&self, img: &[T], c: usize, h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let npix = oh * ow;
        for ci in 0..c {
            let plane = &img[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut cols[((ci * k + ki) * k + kj) * npix..][..npix];
                    for oy in 0..oh {
                        let iy = (oy * s + ki) as isize - p as isize;
                        let out = &mut row[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            out.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - p as isize;
                            *o = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], c: usize, h: usize, w: usize, oh: usize, ow: usize, img: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let npix = oh * ow;
        for ci in 0..c {
            let plane = &mut img[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &cols[((ci * k + ki) * k + kj) * npix..][..npix];
                    for oy in 0..oh {
                        let iy = (oy * s + ki) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * s + kj) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += row[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w, oh, ow) = self.check_input(x)?;
        let ckk = c * self.kernel * self.kernel;
        let npix = oh * ow;
        let oc = self.out_channels;
        let mut y = Tensor::zeros(&[n, oc, oh, ow]);
        let wt = self.weight.data();
        let bias = self.bias.as_ref().map(|b| b.data());
        y.data_mut()
            .par_chunks_mut(oc * npix)
            .zip(x.data().par_chunks(c * h * w))
            .for_each_init(
                || vec![T::zero(); ckk * npix],
                |cols, (out, img)| {
                    self.im2col(img, c, h, w, oh, ow, cols);
                    gemm(false, false, oc, npix, ckk, T::one(), wt, cols, T::zero(), out);
                    if let Some(b) = bias {
                        for (o, &bv) in out.chunks_mut(npix).zip(b) {
                            o.iter_mut().for_each(|v| *v += bv);
                        }
                    }
                },
            );
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w, oh, ow) = self.check_input(x)?;
        let oc = self.out_channels;
        if dy.shape() != [n, oc, oh, ow] {
            return Err(Error::shape("conv2d", format!("gradient shape {:?}, expected {:?}", dy.shape(), [n, oc, oh, ow])));
        }
        let ckk = c * self.kernel * self.kernel;
        let npix = oh * ow;
        let wt = self.weight.data();
        let mut dx = Tensor::zeros(x.shape());
        // Per-image weight gradients are reduced afterwards in image order so
        // the sum does not depend on thread scheduling.
        let per_image: Vec<Vec<T>> = dx
            .data_mut()
            .par_chunks_mut(c * h * w)
            .zip(x.data().par_chunks(c * h * w))
            .zip(dy.data().par_chunks(oc * npix))
            .map(|((dimg, img), g)| {
                let mut cols = vec![T::zero(); ckk * npix];
                self.im2col(img, c, h, w, oh, ow, &mut cols);
                let mut dw = vec![T::zero(); oc * ckk];
                gemm(false, true, oc, ckk, npix, T::one(), g, &cols, T::zero(), &mut dw);
                gemm(true, false, ckk, npix, oc, T::one(), wt, g, T::zero(), &mut cols);
                self.col2im(&cols, c, h, w, oh, ow, dimg);
                dw
            })
            .collect();
        let gw = self
            .weight
            .grad_mut()
            .ok_or_else(|| Error::State("conv2d weight has no gradient buffer".into()))?;
        for dw in &per_image {
            gw.iter_mut().zip(dw).for_each(|(a, &b)| *a += b);
        }
        if let Some(b) = self.bias.as_mut() {
            let gb = b.grad_mut().ok_or_else(|| Error::State("conv2d bias has no gradient buffer".into()))?;
            for g in dy.data().chunks(oc * npix) {
                for (o, plane) in g.chunks(npix).enumerate() {
                    gb[o] += plane.iter().copied().sum::<T>();
                }
            }
        }
        Ok(dx)
    }
}

impl<T: Real> BatchNorm2d<T> {
    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = x
            .dims4()
            .map_err(|_| Error::shape("batchnorm", format!("expected [n, {}, h, w], got {:?}", self.channels, x.shape())))?;
        if c != self.channels {
            return Err(Error::shape("batchnorm", format!("expected {} channels, got {c}", self.channels)));
        }
        Ok((n, c, h * w))
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Saved<T>)> {
        let (n, c, hw) = self.check(x)?;
        let xs = x.data();
        let mut y = Tensor::zeros(x.shape());
        let eps = T::lit(self.eps);
        match mode {
            Mode::Eval => {
                let yd = y.data_mut();
                for ch in 0..c {
                    let mean = self.running_mean.data()[ch];
                    let inv = T::one() / (self.running_var.data()[ch] + eps).sqrt();
                    let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
                    for i in 0..n {
                        let base = (i * c + ch) * hw;
                        for j in base..base + hw {
                            yd[j] = g * (xs[j] - mean) * inv + b;
                        }
                    }
                }
                Ok((y, Saved::Nothing))
            }
            Mode::Train => {
                let count = n * hw;
                let m = T::from_usize(count).unwrap();
                let mut xhat = vec![T::zero(); xs.len()];
                let mut inv_std = vec![T::zero(); c];
                let mom = T::lit(self.momentum);
                let yd = y.data_mut();
                for ch in 0..c {
                    let mut sum = T::zero();
                    for i in 0..n {
                        let base = (i * c + ch) * hw;
                        sum += xs[base..base + hw].iter().copied().sum::<T>();
                    }
                    let mean = sum / m;
                    let mut sq = T::zero();
                    for i in 0..n {
                        let base = (i * c + ch) * hw;
                        sq += xs[base..base + hw].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                    }
                    let var = sq / m;
                    let inv = T::one() / (var + eps).sqrt();
                    inv_std[ch] = inv;
                    let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
                    for i in 0..n {
                        let base = (i * c + ch) * hw;
                        for j in base..base + hw {
                            let xh = (xs[j] - mean) * inv;
                            xhat[j] = xh;
                            yd[j] = g * xh + b;
                        }
                    }
                    let unbiased = if count > 1 { sq / T::from_usize(count - 1).unwrap() } else { var };
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = (T::one() - mom) * *rm + mom * mean;
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = (T::one() - mom) * *rv + mom * unbiased;
                }
                Ok((y, Saved::BatchNorm { xhat, inv_std }))
            }
        }
    }

    fn backward(&mut self, xhat: &[T], inv_std: &[T], dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, hw) = self.check(dy)?;
        if xhat.len() != dy.len() {
            return Err(Error::shape("batchnorm", "gradient does not match saved activations"));
        }
        let m = T::from_usize(n * hw).unwrap();
        let g = dy.data();
        let mut dx = Tensor::zeros(dy.shape());
        let dxd = dx.data_mut();
        let gamma = self.gamma.data().to_vec();
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for ch in 0..c {
            let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
            for i in 0..n {
                let base = (i * c + ch) * hw;
                for j in base..base + hw {
                    sum_g += g[j];
                    sum_gx += g[j] * xhat[j];
                }
            }
            dgamma[ch] = sum_gx;
            dbeta[ch] = sum_g;
            // dxhat = gamma * dy, so the sums above scale by gamma.
            let scale = gamma[ch] * inv_std[ch] / m;
            for i in 0..n {
                let base = (i * c + ch) * hw;
                for j in base..base + hw {
                    dxd[j] = scale * (m * g[j] - sum_g - xhat[j] * sum_gx);
                }
            }
        }
        let gg = self.gamma.grad_mut().ok_or_else(|| Error::State("batchnorm gamma has no gradient buffer".into()))?;
        gg.iter_mut().zip(&dgamma).for_each(|(a, &b)| *a += b);
        let gb = self.beta.grad_mut().ok_or_else(|| Error::State("batchnorm beta has no gradient buffer".into()))?;
        gb.iter_mut().zip(&dbeta).for_each(|(a, &b)| *a += b);
        Ok(dx)
    }
}

impl MaxPool2d {
    fn forward<T: Real>(&self, x: &Tensor<T>, train: bool) -> Result<(Tensor<T>, Saved<T>)> {
        let (n, c, h, w) = x
            .dims4()
            .map_err(|_| Error::shape("maxpool", format!("expected [n, c, h, w], got {:?}", x.shape())))?;
        let (k, s) = (self.kernel, self.stride);
        if h < k || w < k {
            return Err(Error::shape("maxpool", format!("input {h}x{w} smaller than kernel {k}")));
        }
        let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
        let mut y = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = if train { vec![0usize; n * c * oh * ow] } else { Vec::new() };
        let xs = x.data();
        let yd = y.data_mut();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * s * w + ox * s;
                    for ky in 0..k {
                        for kx in 0..k {
                            let idx = base + (oy * s + ky) * w + ox * s + kx;
                            // strict comparison: first maximum wins
                            if xs[idx] > xs[best] {
                                best = idx;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    yd[o] = xs[best];
                    if train {
                        argmax[o] = best;
                    }
                }
            }
        }
        let saved = if train {
            Saved::MaxPool {
                argmax,
                input_shape: x.shape().to_vec(),
            }
        } else {
            Saved::Nothing
        };
        Ok((y, saved))
    }
}

impl<T: Real> FullyConnected<T> {
    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        match x.shape() {
            &[b, f] if f == self.in_features => Ok(b),
            s => Err(Error::shape("fully_connected", format!("expected [batch, {}], got {s:?}", self.in_features))),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check(x)?;
        let (i, o) = (self.in_features, self.out_features);
        let mut y = Tensor::zeros(&[b, o]);
        gemm(false, true, b, o, i, T::one(), x.data(), self.weight.data(), T::zero(), y.data_mut());
        if let Some(bias) = &self.bias {
            for row in y.data_mut().chunks_mut(o) {
                row.iter_mut().zip(bias.data()).for_each(|(v, &bv)| *v += bv);
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check(x)?;
        let (i, o) = (self.in_features, self.out_features);
        if dy.shape() != [b, o] {
            return Err(Error::shape("fully_connected", format!("gradient shape {:?}, expected {:?}", dy.shape(), [b, o])));
        }
        let mut dx = Tensor::zeros(&[b, i]);
        gemm(false, false, b, i, o, T::one(), dy.data(), self.weight.data(), T::zero(), dx.data_mut());
        let gw = self
            .weight
            .grad_mut()
            .ok_or_else(|| Error::State("fully_connected weight has no gradient buffer".into()))?;
        gemm(true, false, o, i, b, T::one(), dy.data(), x.data(), T::one(), gw);
        if let Some(bias) = self.bias.as_mut() {
            let gb = bias.grad_mut().ok_or_else(|| Error::State("fully_connected bias has no gradient buffer".into()))?;
            for row in dy.data().chunks(o) {
                gb.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
            }
        }
        Ok(dx)
    }
}
