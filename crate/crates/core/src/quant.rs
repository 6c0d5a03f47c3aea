//! Post-training 8-bit affine quantization.
//!
//! Tensors are quantized per tensor to unsigned bytes with
//! `q = clamp(round(r / scale) + zero_point, 0, 255)`. Inference is simulated:
//! weights are dequantized once, and every activation is passed through
//! quantize/dequantize with ranges calibrated on representative inputs.
//! Batch norm is folded into the preceding layer before quantizing.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::FeatureStats;
use crate::nn::{argmax, Inference, LayerParams, LayerSpec, ModelSpec, TrainedModel, BN_EPSILON};

/// Smallest scale handed out, used for degenerate (all-zero) ranges.
pub const MIN_SCALE: f64 = 1e-8;

/// Stored size of one [`QuantParams`]: an `f32` scale and a byte zero point.
pub const QUANT_PARAMS_BYTES: usize = 5;

/// Bytes per parameter in the float deployment payload.
pub const FLOAT_PARAM_BYTES: usize = 4;

/// Fixed output quantization for softmax layers: probabilities live in `[0, 1)`
/// at a resolution of 1/256, so 0.5 is exact.
pub const SOFTMAX_OUTPUT: QuantParams = QuantParams { scale: 1.0 / 256.0, zero_point: 0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: u8,
}

impl QuantParams {
    /// Parameters covering `[min, max]` after widening it to include zero.
    pub fn from_range(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(Error::InvalidParameter("quantization range must be finite with min <= max"));
        }
        let (lo, hi) = (min.min(0.0), max.max(0.0));
        let scale = ((hi - lo) / 255.0).max(MIN_SCALE);
        let zp = libm::round(-lo / scale).clamp(0.0, 255.0);
        Ok(QuantParams { scale, zero_point: zp as u8 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidParameter("quantization scale must be positive"));
        }
        Ok(())
    }

    pub fn quantize(&self, r: f64) -> u8 {
        let q = libm::round(r / self.scale) + f64::from(self.zero_point);
        // NaN clamps to 0 through the saturating cast.
        q.clamp(0.0, 255.0) as u8
    }

    pub fn dequantize(&self, q: u8) -> f64 {
        (f64::from(q) - f64::from(self.zero_point)) * self.scale
    }

    /// Quantize then dequantize.
    pub fn fake(&self, r: f64) -> f64 {
        self.dequantize(self.quantize(r))
    }
}

/// Quantizes `t` against a calibrated range that must contain zero.
pub fn quantize_tensor(t: &[f64], range: (f64, f64)) -> Result<(Vec<u8>, QuantParams)> {
    let (min, max) = range;
    if !(min <= 0.0 && 0.0 <= max) {
        return Err(Error::InvalidParameter("quantization range must contain zero"));
    }
    let params = QuantParams::from_range(min, max)?;
    Ok((t.iter().map(|&r| params.quantize(r)).collect(), params))
}

pub fn dequantize(payload: &[u8], params: &QuantParams) -> Vec<f64> {
    payload.iter().map(|&q| params.dequantize(q)).collect()
}

/// One quantized tensor: byte payload plus its affine parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    pub payload: Vec<u8>,
    pub params: QuantParams,
}

impl QTensor {
    /// Quantizes over the tensor's own min/max.
    pub fn from_values(t: &[f64]) -> Result<Self> {
        let (min, max) = min_max(t).unwrap_or((0.0, 0.0));
        let (payload, params) = quantize_tensor(t, (min.min(0.0), max.max(0.0)))?;
        Ok(QTensor { payload, params })
    }

    pub fn values(&self) -> Vec<f64> {
        dequantize(&self.payload, &self.params)
    }
}

/// Quantized parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum QLayer {
    None,
    Dense { w: QTensor, b: QTensor },
    Conv { w: QTensor, b: QTensor },
}

impl QLayer {
    pub fn tensors(&self) -> Vec<&QTensor> {
        match self {
            QLayer::None => vec![],
            QLayer::Dense { w, b } | QLayer::Conv { w, b } => vec![w, b],
        }
    }
}

fn min_max(t: &[f64]) -> Option<(f64, f64)> {
    let first = *t.first()?;
    Some(t.iter().fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
}

/// Per-activation `(min, max)` over eval-mode forward passes of all samples,
/// widened to include zero. Entry 0 is the input, entry `i + 1` the output of
/// layer `i`.
pub fn calibrate(model: &TrainedModel, representative: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    if representative.is_empty() {
        return Err(Error::EmptyInput("representative set"));
    }
    let size = model.spec.input.len();
    if let Some(bad) = representative.iter().find(|x| x.len() != size) {
        return Err(Error::ShapeMismatch { expected: model.spec.input.dims(), got: vec![bad.len()] });
    }
    let batch: Vec<f64> = representative.iter().flatten().copied().collect();
    let mut ranges = vec![(0.0f64, 0.0f64); model.spec.layers.len() + 1];
    model.eval_with_hook(&batch, representative.len(), |i, a| {
        if let Some((lo, hi)) = min_max(a) {
            ranges[i] = (ranges[i].0.min(lo), ranges[i].1.max(hi));
        }
    });
    if ranges.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite())) {
        return Err(Error::InvalidParameter("calibration produced non-finite activations"));
    }
    Ok(ranges)
}

/// Folds every batch-norm layer's moving statistics into the dense or
/// convolution layer right before it and drops the batch-norm layer.
pub fn fold_batch_norm(model: &TrainedModel) -> Result<TrainedModel> {
    model.validate()?;
    let mut layers: Vec<LayerSpec> = Vec::with_capacity(model.spec.layers.len());
    let mut params: Vec<LayerParams> = Vec::with_capacity(model.params.len());
    for (layer, p) in model.spec.layers.iter().zip(&model.params) {
        let LayerParams::BatchNorm { gamma, beta, moving_mean, moving_var } = p else {
            layers.push(*layer);
            params.push(p.clone());
            continue;
        };
        let Some(LayerParams::Dense { w, b } | LayerParams::Conv { w, b }) = params.last_mut() else {
            return Err(Error::InvalidParameter("batch norm must follow a dense or convolution layer"));
        };
        let n = b.len();
        let factor: Vec<f64> =
            gamma.iter().zip(moving_var).map(|(g, v)| g / libm::sqrt(v + BN_EPSILON)).collect();
        // Output channel is the innermost index of both weight layouts.
        for (i, wi) in w.iter_mut().enumerate() {
            *wi *= factor[i % n];
        }
        for c in 0..n {
            b[c] = (b[c] - moving_mean[c]) * factor[c] + beta[c];
        }
    }
    let spec = ModelSpec::new(&model.spec.name, model.spec.kind, model.spec.input, layers)?;
    Ok(TrainedModel { spec, params, threshold: model.threshold, normalizer: model.normalizer.clone() })
}

/// An 8-bit model. Holds a dequantized copy of its weights for simulated
/// inference, so construction goes through [`QuantizedModel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    spec: ModelSpec,
    layers: Vec<QLayer>,
    activations: Vec<QuantParams>,
    threshold: Option<f64>,
    normalizer: Option<FeatureStats>,
    float: TrainedModel,
}

impl QuantizedModel {
    /// Assembles and checks a quantized model. `spec` must be batch-norm free
    /// and `activations` must hold one entry per layer plus the input.
    pub fn new(
        spec: ModelSpec,
        layers: Vec<QLayer>,
        activations: Vec<QuantParams>,
        threshold: Option<f64>,
        normalizer: Option<FeatureStats>,
    ) -> Result<Self> {
        if spec.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm)) {
            return Err(Error::InvalidParameter("quantized models carry batch norm folded"));
        }
        if layers.len() != spec.layers.len() {
            return Err(Error::LengthMismatch { expected: spec.layers.len(), got: layers.len() });
        }
        if activations.len() != spec.layers.len() + 1 {
            return Err(Error::LengthMismatch { expected: spec.layers.len() + 1, got: activations.len() });
        }
        for p in layers.iter().flat_map(QLayer::tensors).map(|t| &t.params).chain(&activations) {
            p.validate()?;
        }
        let params = layers
            .iter()
            .map(|l| match l {
                QLayer::None => LayerParams::None,
                QLayer::Dense { w, b } => LayerParams::Dense { w: w.values(), b: b.values() },
                QLayer::Conv { w, b } => LayerParams::Conv { w: w.values(), b: b.values() },
            })
            .collect();
        let float = TrainedModel { spec: spec.clone(), params, threshold, normalizer: normalizer.clone() };
        float.validate()?;
        Ok(QuantizedModel { spec, layers, activations, threshold, normalizer, float })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[QLayer] {
        &self.layers
    }

    pub fn activations(&self) -> &[QuantParams] {
        &self.activations
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn normalizer(&self) -> Option<&FeatureStats> {
        self.normalizer.as_ref()
    }

    pub fn set_threshold(&mut self, threshold: Option<f64>) {
        self.threshold = threshold;
        self.float.threshold = threshold;
    }

    /// Float model with the dequantized weights and no activation rounding.
    pub fn dequantized(&self) -> &TrainedModel {
        &self.float
    }

    pub fn count_params(&self) -> usize {
        self.layers.iter().flat_map(QLayer::tensors).map(|t| t.payload.len()).sum()
    }

    /// Simulated-quantization forward pass over a batch of samples.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let batch = self.float.batch_size_of(input)?;
        Ok(self.float.eval_with_hook(input, batch, |i, a| {
            let p = self.activations[i];
            a.iter_mut().for_each(|v| *v = p.fake(*v));
        }))
    }
}

impl Inference for QuantizedModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input)
    }

    fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    fn normalizer(&self) -> Option<&FeatureStats> {
        self.normalizer.as_ref()
    }
}

/// Folds batch norm, quantizes every weight tensor over its own range and
/// calibrates activations on `representative`.
pub fn quantize_model(model: &TrainedModel, representative: &[Vec<f64>]) -> Result<QuantizedModel> {
    let folded = fold_batch_norm(model)?;
    let ranges = calibrate(&folded, representative)?;
    let mut activations = ranges
        .iter()
        .map(|&(lo, hi)| QuantParams::from_range(lo, hi))
        .collect::<Result<Vec<_>>>()?;
    for (i, layer) in folded.spec.layers.iter().enumerate() {
        if matches!(layer, LayerSpec::Softmax) {
            activations[i + 1] = SOFTMAX_OUTPUT;
        }
    }
    let layers = folded
        .params
        .iter()
        .map(|p| {
            Ok(match p {
                LayerParams::Dense { w, b } => QLayer::Dense { w: QTensor::from_values(w)?, b: QTensor::from_values(b)? },
                LayerParams::Conv { w, b } => QLayer::Conv { w: QTensor::from_values(w)?, b: QTensor::from_values(b)? },
                LayerParams::None => QLayer::None,
                LayerParams::BatchNorm { .. } => unreachable!("folded above"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    QuantizedModel::new(folded.spec, layers, activations, model.threshold, model.normalizer.clone())
}

/// Simulated-quantized classification of a single input.
pub fn quantized_forward(qmodel: &QuantizedModel, input: &[f64]) -> Result<(usize, Vec<f64>)> {
    if input.len() != qmodel.spec.input.len() {
        return Err(Error::ShapeMismatch { expected: qmodel.spec.input.dims(), got: vec![input.len()] });
    }
    let probs = qmodel.forward(input)?;
    Ok((argmax(&probs), probs))
}

/// Parameter payload in bytes, excluding any container framing.
pub trait ModelSize {
    fn model_size(&self) -> usize;
}

impl ModelSize for TrainedModel {
    /// Four bytes per stored float, batch-norm statistics included.
    fn model_size(&self) -> usize {
        FLOAT_PARAM_BYTES * self.count_params()
    }
}

impl ModelSize for QuantizedModel {
    /// One byte per parameter plus the stored affine parameters of every
    /// weight tensor and activation.
    fn model_size(&self) -> usize {
        let n_tensors = self.layers.iter().map(|l| l.tensors().len()).sum::<usize>();
        self.count_params() + QUANT_PARAMS_BYTES * (n_tensors + self.activations.len())
    }
}
