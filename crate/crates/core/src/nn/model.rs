use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureStats;
use crate::rng::{seeded, SeededRng};

use super::spec::{LayerSpec, ModelSpec, Shape};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Parameters of one layer.
///
/// Dense weights are stored `[in][out]`; convolution weights
/// `[ky][kx][in_channel][filter]`. Activations are channels-last.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    Dense { w: Vec<f64>, b: Vec<f64> },
    Conv { w: Vec<f64>, b: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64>, moving_mean: Vec<f64>, moving_var: Vec<f64> },
}

impl LayerParams {
    pub(crate) fn trainable(&self) -> Vec<&Vec<f64>> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Dense { w, b } | LayerParams::Conv { w, b } => vec![w, b],
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            LayerParams::None => vec![],
            LayerParams::Dense { w, b } | LayerParams::Conv { w, b } => vec![w, b],
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    /// All stored tensors, moving statistics included.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        match self {
            LayerParams::BatchNorm { gamma, beta, moving_mean, moving_var } => {
                vec![gamma, beta, moving_mean, moving_var]
            }
            other => other.trainable(),
        }
    }
}

/// How a forward pass treats batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics (moving averages updated by the trainer) and dropout.
    Train,
    /// Moving statistics, no dropout.
    Eval,
    /// Batch statistics without dropout or moving-average updates.
    BatchStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: Vec<LayerParams>,
    /// Reconstruction-error cutoff (autoencoder only).
    pub threshold: Option<f64>,
    /// Input standardization applied before the first layer (autoencoder only).
    pub normalizer: Option<FeatureStats>,
}

/// Per-layer state kept from a forward pass for backpropagation.
pub(crate) enum Cache {
    None,
    Mask(Vec<f64>),
    Argmax(Vec<usize>),
    BatchNorm { xhat: Vec<f64>, inv_std: Vec<f64>, batch_mean: Vec<f64>, batch_var: Vec<f64> },
}

pub(crate) struct Trace {
    pub batch: usize,
    /// Input followed by every layer's output.
    pub activations: Vec<Vec<f64>>,
    pub caches: Vec<Cache>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

/// Gradients of the trainable tensors, in [`LayerParams::trainable`] order.
pub(crate) type Grads = Vec<Vec<Vec<f64>>>;

impl TrainedModel {
    /// Fresh model with seeded initialization: He-uniform for weights feeding a
    /// ReLU (possibly through batch norm or dropout), Glorot-uniform otherwise,
    /// zero biases, unit batch-norm scale and variance.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let inputs = spec.input_shapes()?;
        let outputs = spec.shapes()?;
        let mut rng = seeded(seed);
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let (inp, out) = (inputs[i], outputs[i]);
            let relu_next = spec.layers[i + 1..]
                .iter()
                .find(|l| !matches!(l, LayerSpec::BatchNorm | LayerSpec::Dropout { .. }))
                .is_some_and(|l| matches!(l, LayerSpec::Relu));
            let p = match *layer {
                LayerSpec::Dense { units } => {
                    let fan_in = inp.len();
                    LayerParams::Dense {
                        w: uniform_init(&mut rng, fan_in * units, fan_in, units, relu_next),
                        b: vec![0.0; units],
                    }
                }
                LayerSpec::Conv2d { filters, kernel, .. } => {
                    let fan_in = kernel * kernel * inp.c;
                    let fan_out = kernel * kernel * filters;
                    LayerParams::Conv {
                        w: uniform_init(&mut rng, fan_in * filters, fan_in, fan_out, relu_next),
                        b: vec![0.0; filters],
                    }
                }
                LayerSpec::BatchNorm => LayerParams::BatchNorm {
                    gamma: vec![1.0; out.c],
                    beta: vec![0.0; out.c],
                    moving_mean: vec![0.0; out.c],
                    moving_var: vec![1.0; out.c],
                },
                _ => LayerParams::None,
            };
            params.push(p);
        }
        Ok(TrainedModel { spec: spec.clone(), params, threshold: None, normalizer: None })
    }

    /// Checks that every parameter tensor matches the spec.
    pub fn validate(&self) -> Result<()> {
        let inputs = self.spec.input_shapes()?;
        if self.params.len() != self.spec.layers.len() {
            return Err(Error::LengthMismatch { expected: self.spec.layers.len(), got: self.params.len() });
        }
        for ((layer, p), inp) in self.spec.layers.iter().zip(&self.params).zip(inputs) {
            let ok = match (*layer, p) {
                (LayerSpec::Dense { units }, LayerParams::Dense { w, b }) => {
                    w.len() == inp.len() * units && b.len() == units
                }
                (LayerSpec::Conv2d { filters, kernel, .. }, LayerParams::Conv { w, b }) => {
                    w.len() == kernel * kernel * inp.c * filters && b.len() == filters
                }
                (LayerSpec::BatchNorm, LayerParams::BatchNorm { gamma, beta, moving_mean, moving_var }) => {
                    [gamma, beta, moving_mean, moving_var].iter().all(|t| t.len() == inp.c)
                        && moving_var.iter().all(|v| *v >= 0.0)
                }
                (LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } | LayerSpec::BatchNorm, _) => false,
                (_, LayerParams::None) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidParameter("parameter tensors do not match the layer spec"));
            }
        }
        if let Some(stats) = &self.normalizer {
            if stats.mean.len() != self.spec.input.len() || stats.std.len() != self.spec.input.len() {
                return Err(Error::LengthMismatch { expected: self.spec.input.len(), got: stats.mean.len() });
            }
        }
        Ok(())
    }

    pub fn count_params(&self) -> usize {
        self.params.iter().flat_map(|p| p.tensors()).map(Vec::len).sum()
    }

    /// Eval-mode forward pass over a batch of `input.len() / input_size` samples.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let batch = self.batch_size_of(input)?;
        let trace = self.run(input, batch, Mode::Eval, None::<&mut SeededRng>, false);
        Ok(trace.activations.into_iter().last().unwrap_or_default())
    }

    /// Forward pass in any mode. `rng` drives dropout in [`Mode::Train`].
    pub fn forward_mode(&self, input: &[f64], mode: Mode, rng: Option<&mut SeededRng>) -> Result<Vec<f64>> {
        let batch = self.batch_size_of(input)?;
        let trace = self.run(input, batch, mode, rng, false);
        Ok(trace.activations.into_iter().last().unwrap_or_default())
    }

    pub(crate) fn batch_size_of(&self, input: &[f64]) -> Result<usize> {
        let size = self.spec.input.len();
        if input.is_empty() || input.len() % size != 0 {
            return Err(Error::ShapeMismatch { expected: self.spec.input.dims(), got: vec![input.len()] });
        }
        Ok(input.len() / size)
    }

    /// Eval-mode pass that hands every activation to `hook` before it moves on:
    /// index 0 is the input, index `i + 1` the output of layer `i`.
    pub(crate) fn eval_with_hook(
        &self,
        input: &[f64],
        batch: usize,
        mut hook: impl FnMut(usize, &mut Vec<f64>),
    ) -> Vec<f64> {
        let inputs = self.spec.input_shapes().expect("validated spec");
        let mut x = input.to_vec();
        hook(0, &mut x);
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let (mut y, _) = layer_forward(layer, &self.params[i], inputs[i], &x, batch, Mode::Eval, None::<&mut SeededRng>);
            hook(i + 1, &mut y);
            x = y;
        }
        x
    }

    /// Runs every layer. With `keep_all` false only the final activation is kept.
    pub(crate) fn run<R: Rng>(
        &self,
        input: &[f64],
        batch: usize,
        mode: Mode,
        mut rng: Option<&mut R>,
        keep_all: bool,
    ) -> Trace {
        let inputs = self.spec.input_shapes().expect("validated spec");
        let mut activations = vec![input.to_vec()];
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = activations.last().expect("non-empty");
            let (y, cache) =
                layer_forward(layer, &self.params[i], inputs[i], x, batch, mode, rng.as_deref_mut());
            if keep_all {
                activations.push(y);
                caches.push(cache);
            } else {
                activations.clear();
                activations.push(y);
            }
        }
        Trace { batch, activations, caches }
    }

    /// Backpropagates `grad_out` (gradient at the output of layer `upto - 1`)
    /// through layers `0..upto`.
    pub(crate) fn backward(&self, trace: &Trace, upto: usize, grad_out: Vec<f64>) -> Grads {
        let inputs = self.spec.input_shapes().expect("validated spec");
        let mut grads: Grads = self.params.iter().map(|p| p.trainable().iter().map(|t| vec![0.0; t.len()]).collect()).collect();
        let mut g = grad_out;
        for i in (0..upto).rev() {
            let x = &trace.activations[i];
            let y = &trace.activations[i + 1];
            g = layer_backward(
                &self.spec.layers[i],
                &self.params[i],
                inputs[i],
                x,
                y,
                &trace.caches[i],
                trace.batch,
                g,
                &mut grads[i],
                i > 0,
            );
        }
        grads
    }
}

fn uniform_init(rng: &mut SeededRng, n: usize, fan_in: usize, fan_out: usize, he: bool) -> Vec<f64> {
    let limit = if he {
        libm::sqrt(6.0 / fan_in as f64)
    } else {
        libm::sqrt(6.0 / (fan_in + fan_out) as f64)
    };
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

fn layer_forward<R: Rng>(
    layer: &LayerSpec,
    params: &LayerParams,
    inp: Shape,
    x: &[f64],
    batch: usize,
    mode: Mode,
    rng: Option<&mut R>,
) -> (Vec<f64>, Cache) {
    match (*layer, params) {
        (LayerSpec::Dense { units }, LayerParams::Dense { w, b }) => {
            (dense_forward(x, w, b, batch, inp.len(), units), Cache::None)
        }
        (LayerSpec::Conv2d { filters, kernel, stride }, LayerParams::Conv { w, b }) => {
            (conv_forward(x, w, b, batch, inp, filters, kernel, stride), Cache::None)
        }
        (LayerSpec::BatchNorm, LayerParams::BatchNorm { gamma, beta, moving_mean, moving_var }) => {
            batchnorm_forward(x, gamma, beta, moving_mean, moving_var, inp.c, mode)
        }
        (LayerSpec::Relu, _) => (x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(), Cache::None),
        (LayerSpec::MaxPool { size }, _) => {
            let (y, idx) = maxpool_forward(x, batch, inp, size);
            (y, Cache::Argmax(idx))
        }
        (LayerSpec::Dropout { rate }, _) => match (mode, rng) {
            (Mode::Train, Some(rng)) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = x.iter().map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
                (x.iter().zip(&mask).map(|(v, m)| v * m).collect(), Cache::Mask(mask))
            }
            _ => (x.to_vec(), Cache::None),
        },
        (LayerSpec::Softmax, _) => (softmax_rows(x, inp.len()), Cache::None),
        (LayerSpec::Flatten, _) => (x.to_vec(), Cache::None),
        _ => unreachable!("parameters validated against the spec"),
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    layer: &LayerSpec,
    params: &LayerParams,
    inp: Shape,
    x: &[f64],
    y: &[f64],
    cache: &Cache,
    batch: usize,
    g: Vec<f64>,
    grads: &mut [Vec<f64>],
    need_dx: bool,
) -> Vec<f64> {
    match (*layer, params) {
        (LayerSpec::Dense { units }, LayerParams::Dense { w, .. }) => {
            let (gw, rest) = grads.split_at_mut(1);
            dense_backward(x, w, &g, batch, inp.len(), units, &mut gw[0], &mut rest[0], need_dx)
        }
        (LayerSpec::Conv2d { filters, kernel, stride }, LayerParams::Conv { w, .. }) => {
            let (gw, rest) = grads.split_at_mut(1);
            conv_backward(x, w, &g, batch, inp, filters, kernel, stride, &mut gw[0], &mut rest[0], need_dx)
        }
        (LayerSpec::BatchNorm, LayerParams::BatchNorm { gamma, moving_var, .. }) => {
            let (gg, rest) = grads.split_at_mut(1);
            batchnorm_backward(&g, gamma, moving_var, cache, inp.c, &mut gg[0], &mut rest[0])
        }
        (LayerSpec::Relu, _) => g.iter().zip(x).map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 }).collect(),
        (LayerSpec::MaxPool { .. }, _) => {
            let Cache::Argmax(idx) = cache else { unreachable!() };
            let mut dx = vec![0.0; x.len()];
            for (gi, &j) in g.iter().zip(idx) {
                dx[j] += gi;
            }
            dx
        }
        (LayerSpec::Dropout { .. }, _) => match cache {
            Cache::Mask(mask) => g.iter().zip(mask).map(|(a, m)| a * m).collect(),
            _ => g,
        },
        (LayerSpec::Softmax, _) => {
            let n = inp.len();
            let mut dx = vec![0.0; g.len()];
            for ((p, gr), d) in y.chunks_exact(n).zip(g.chunks_exact(n)).zip(dx.chunks_exact_mut(n)) {
                let dot: f64 = p.iter().zip(gr).map(|(a, b)| a * b).sum();
                for k in 0..n {
                    d[k] = p[k] * (gr[k] - dot);
                }
            }
            dx
        }
        (LayerSpec::Flatten, _) => g,
        _ => unreachable!("parameters validated against the spec"),
    }
}

fn dense_forward(x: &[f64], w: &[f64], b: &[f64], batch: usize, n_in: usize, n_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * n_out];
    for (xr, o) in x.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
        o.copy_from_slice(b);
        for (i, &xv) in xr.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wr = &w[i * n_out..(i + 1) * n_out];
            for (ov, wv) in o.iter_mut().zip(wr) {
                *ov += xv * wv;
            }
        }
    }
    debug_assert_eq!(out.len(), batch * n_out);
    out
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let mut dx = if need_dx { vec![0.0; batch * n_in] } else { Vec::new() };
    for (n, (xr, gr)) in x.chunks_exact(n_in).zip(g.chunks_exact(n_out)).enumerate() {
        for (a, b) in gb.iter_mut().zip(gr) {
            *a += b;
        }
        for (i, &xv) in xr.iter().enumerate() {
            let wr = &w[i * n_out..(i + 1) * n_out];
            let gwr = &mut gw[i * n_out..(i + 1) * n_out];
            let mut acc = 0.0;
            for k in 0..n_out {
                gwr[k] += xv * gr[k];
                acc += wr[k] * gr[k];
            }
            if need_dx {
                dx[n * n_in + i] = acc;
            }
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    batch: usize,
    inp: Shape,
    filters: usize,
    kernel: usize,
    stride: usize,
) -> Vec<f64> {
    let (oh, ow) = ((inp.h - kernel) / stride + 1, (inp.w - kernel) / stride + 1);
    let c = inp.c;
    let mut out = vec![0.0; batch * oh * ow * filters];
    for n in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = &mut out[((n * oh + oy) * ow + ox) * filters..][..filters];
                o.copy_from_slice(b);
                for ky in 0..kernel {
                    let iy = oy * stride + ky;
                    for kx in 0..kernel {
                        let ix = ox * stride + kx;
                        let xin = &x[((n * inp.h + iy) * inp.w + ix) * c..][..c];
                        let wbase = (ky * kernel + kx) * c * filters;
                        for (ci, &xv) in xin.iter().enumerate() {
                            let wr = &w[wbase + ci * filters..][..filters];
                            for (ov, wv) in o.iter_mut().zip(wr) {
                                *ov += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    batch: usize,
    inp: Shape,
    filters: usize,
    kernel: usize,
    stride: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let (oh, ow) = ((inp.h - kernel) / stride + 1, (inp.w - kernel) / stride + 1);
    let c = inp.c;
    let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
    for n in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let gr = &g[((n * oh + oy) * ow + ox) * filters..][..filters];
                for (a, b) in gb.iter_mut().zip(gr) {
                    *a += b;
                }
                for ky in 0..kernel {
                    let iy = oy * stride + ky;
                    for kx in 0..kernel {
                        let ix = ox * stride + kx;
                        let xbase = ((n * inp.h + iy) * inp.w + ix) * c;
                        let wbase = (ky * kernel + kx) * c * filters;
                        for ci in 0..c {
                            let xv = x[xbase + ci];
                            let wr = &w[wbase + ci * filters..][..filters];
                            let gwr = &mut gw[wbase + ci * filters..][..filters];
                            let mut acc = 0.0;
                            for f in 0..filters {
                                gwr[f] += xv * gr[f];
                                acc += wr[f] * gr[f];
                            }
                            if need_dx {
                                dx[xbase + ci] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn batchnorm_forward(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    moving_mean: &[f64],
    moving_var: &[f64],
    c: usize,
    mode: Mode,
) -> (Vec<f64>, Cache) {
    if mode == Mode::Eval {
        let inv: Vec<f64> = moving_var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPSILON)).collect();
        let y = x
            .chunks_exact(c)
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(k, &v)| (v - moving_mean[k]) * inv[k] * gamma[k] + beta[k])
                    .collect::<Vec<_>>()
            })
            .collect();
        return (y, Cache::None);
    }
    let m = (x.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m);
    let mut var = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for k in 0..c {
            let d = row[k] - mean[k];
            var[k] += d * d;
        }
    }
    var.iter_mut().for_each(|a| *a /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPSILON)).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for ((row, xr), yr) in x.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(y.chunks_exact_mut(c)) {
        for k in 0..c {
            xr[k] = (row[k] - mean[k]) * inv_std[k];
            yr[k] = xr[k] * gamma[k] + beta[k];
        }
    }
    (y, Cache::BatchNorm { xhat, inv_std, batch_mean: mean, batch_var: var })
}

fn batchnorm_backward(
    g: &[f64],
    gamma: &[f64],
    moving_var: &[f64],
    cache: &Cache,
    c: usize,
    ggamma: &mut [f64],
    gbeta: &mut [f64],
) -> Vec<f64> {
    let Cache::BatchNorm { xhat, inv_std, .. } = cache else {
        // Eval-mode statistics are constants.
        return g
            .chunks_exact(c)
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(k, v)| v * gamma[k] / libm::sqrt(moving_var[k] + BN_EPSILON))
                    .collect::<Vec<_>>()
            })
            .collect();
    };
    let m = (g.len() / c) as f64;
    for (gr, xr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for k in 0..c {
            ggamma[k] += gr[k] * xr[k];
            gbeta[k] += gr[k];
        }
    }
    let mut dx = vec![0.0; g.len()];
    for ((gr, xr), dr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)).zip(dx.chunks_exact_mut(c)) {
        for k in 0..c {
            dr[k] = gamma[k] * inv_std[k] / m * (m * gr[k] - gbeta[k] - xr[k] * ggamma[k]);
        }
    }
    dx
}

fn maxpool_forward(x: &[f64], batch: usize, inp: Shape, size: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow, c) = (inp.h / size, inp.w / size, inp.c);
    let mut y = vec![f64::NEG_INFINITY; batch * oh * ow * c];
    let mut idx = vec![0usize; y.len()];
    for n in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let obase = ((n * oh + oy) * ow + ox) * c;
                for dy in 0..size {
                    for dx in 0..size {
                        let ibase = ((n * inp.h + oy * size + dy) * inp.w + ox * size + dx) * c;
                        for k in 0..c {
                            if x[ibase + k] > y[obase + k] {
                                y[obase + k] = x[ibase + k];
                                idx[obase + k] = ibase + k;
                            }
                        }
                    }
                }
            }
        }
    }
    (y, idx)
}

fn softmax_rows(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| libm::exp(v - max)));
        let sum: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Batch statistics collected by a training-mode pass, for moving-average updates.
pub(crate) fn batch_stats(trace: &Trace) -> Vec<Option<(&[f64], &[f64])>> {
    trace
        .caches
        .iter()
        .map(|c| match c {
            Cache::BatchNorm { batch_mean, batch_var, .. } => Some((batch_mean.as_slice(), batch_var.as_slice())),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{build_autoencoder, build_cnn2d, ModelKind};

    fn dense_model(w: Vec<f64>, b: Vec<f64>, n_in: usize, n_out: usize) -> TrainedModel {
        let spec = ModelSpec::new("d", ModelKind::Custom, Shape::vector(n_in), vec![LayerSpec::Dense { units: n_out }])
            .unwrap();
        TrainedModel { spec, params: vec![LayerParams::Dense { w, b }], threshold: None, normalizer: None }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let m = dense_model(vec![0.0; 6], vec![0.0; 2], 3, 2);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dense_matches_hand_multiply() {
        // x (1x3) times W (3x2) plus b.
        let w = vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
        let b = vec![0.1, -0.2];
        let m = dense_model(w, b, 3, 2);
        let y = m.forward(&[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let expected = [
            0.5 * 1.0 + 2.0 * 2.0 + -0.75 * 3.0 + 0.1,
            -1.0 * 1.0 + 0.25 * 2.0 + 1.5 * 3.0 - 0.2,
            0.5 * -1.0 + 2.0 * 0.5 + 0.1,
            -1.0 * -1.0 + 0.25 * 0.5 - 0.2,
        ];
        for (a, e) in y.iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = dense_model(vec![0.0; 6], vec![0.0; 2], 3, 2);
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::ShapeMismatch { .. })));
        assert!(m.forward(&[]).is_err());
    }

    #[test]
    fn eval_forward_is_deterministic_and_softmax_normalized() {
        let m = TrainedModel::init(&build_cnn2d(), 3).unwrap();
        m.validate().unwrap();
        assert_eq!(m.count_params(), 62_114);
        let mut rng = seeded(4);
        let x: Vec<f64> = (0..2 * 1944).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a = m.forward(&x).unwrap();
        assert_eq!(a, m.forward(&x).unwrap());
        for p in a.chunks(2) {
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn batchnorm_eval_formula() {
        let spec = ModelSpec::new("bn", ModelKind::Custom, Shape::vector(2), vec![LayerSpec::BatchNorm]).unwrap();
        let params = vec![LayerParams::BatchNorm {
            gamma: vec![2.0, 0.5],
            beta: vec![0.1, -1.0],
            moving_mean: vec![1.0, -3.0],
            moving_var: vec![4.0, 0.25],
        }];
        let m = TrainedModel { spec, params, threshold: None, normalizer: None };
        let y = m.forward(&[3.0, -2.0]).unwrap();
        let e0 = (3.0 - 1.0) / (4.0f64 + 1e-5).sqrt() * 2.0 + 0.1;
        let e1 = (-2.0 + 3.0) / (0.25f64 + 1e-5).sqrt() * 0.5 - 1.0;
        assert!((y[0] - e0).abs() < 1e-12 && (y[1] - e1).abs() < 1e-12);
    }

    #[test]
    fn dropout_masks_reproduce_under_seed() {
        let m = TrainedModel::init(&build_autoencoder(), 1).unwrap();
        let x = vec![0.3; 94 * 3];
        let a = m.forward_mode(&x, Mode::Train, Some(&mut seeded(9))).unwrap();
        let b = m.forward_mode(&x, Mode::Train, Some(&mut seeded(9))).unwrap();
        let c = m.forward_mode(&x, Mode::Train, Some(&mut seeded(10))).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, c);
        assert_ne!(a, m.forward(&x).unwrap());
    }

    #[test]
    fn validate_catches_bad_shapes() {
        let mut m = TrainedModel::init(&build_autoencoder(), 1).unwrap();
        if let LayerParams::Dense { b, .. } = &mut m.params[0] {
            b.pop();
        }
        assert!(m.validate().is_err());
    }
}
