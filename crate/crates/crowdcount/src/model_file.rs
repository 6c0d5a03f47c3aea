//! Model container: a single JSON object on one line.
//!
//! ```text
//! {"format_version":1,"model_type":"cnn2d","quantized":false,"layers":[...],"metadata":{...}}
//! ```
//!
//! Float weights are plain decimal arrays written in shortest round-trip form.
//! Quantized weights carry a base64 byte payload with their own scale and zero
//! point, and the activation parameters sit in the metadata. CNN containers
//! also carry the ground pool used to pad clusters, so counting needs nothing
//! but the model file.

use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use crowdcount_core::features::FeatureStats;
use crowdcount_core::nn::{Inference, LayerParams, LayerSpec, ModelKind, ModelSpec, Shape, TrainedModel};
use crowdcount_core::projection::GroundPool;
use crowdcount_core::quant::{QLayer, QTensor, QuantParams, QuantizedModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// A float or an 8-bit model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Float(TrainedModel),
    Quantized(QuantizedModel),
}

impl Model {
    pub fn is_quantized(&self) -> bool {
        matches!(self, Model::Quantized(_))
    }

    pub fn kind(&self) -> ModelKind {
        self.spec().kind
    }
}

impl Inference for Model {
    fn spec(&self) -> &ModelSpec {
        match self {
            Model::Float(m) => &m.spec,
            Model::Quantized(q) => q.spec(),
        }
    }

    fn infer(&self, input: &[f64]) -> crowdcount_core::Result<Vec<f64>> {
        match self {
            Model::Float(m) => m.infer(input),
            Model::Quantized(q) => q.infer(input),
        }
    }

    fn threshold(&self) -> Option<f64> {
        match self {
            Model::Float(m) => m.threshold,
            Model::Quantized(q) => q.threshold(),
        }
    }

    fn normalizer(&self) -> Option<&FeatureStats> {
        match self {
            Model::Float(m) => m.normalizer.as_ref(),
            Model::Quantized(q) => q.normalizer(),
        }
    }
}

/// How a model was trained; informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub ground_pool: Option<GroundPool>,
    pub train: Option<TrainInfo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format_version: u32,
    model_type: String,
    quantized: bool,
    layers: Vec<LayerRecord>,
    metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    name: String,
    input_shape: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalizer: Option<NormalizerRecord>,
    /// Quantized models only: input followed by every layer output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activations: Option<Vec<QuantParamsRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_pool: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train: Option<TrainInfo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormalizerRecord {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantParamsRecord {
    scale: f64,
    zero_point: u8,
}

impl From<QuantParams> for QuantParamsRecord {
    fn from(p: QuantParams) -> Self {
        QuantParamsRecord { scale: p.scale, zero_point: p.zero_point }
    }
}

impl From<QuantParamsRecord> for QuantParams {
    fn from(p: QuantParamsRecord) -> Self {
        QuantParams { scale: p.scale, zero_point: p.zero_point }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TensorRecord {
    Float(Vec<f64>),
    Quantized {
        scale: f64,
        zero_point: u8,
        data: String,
    },
}

impl TensorRecord {
    fn quantized(t: &QTensor) -> Self {
        TensorRecord::Quantized {
            scale: t.params.scale,
            zero_point: t.params.zero_point,
            data: BASE64.encode(&t.payload),
        }
    }

    fn into_float(self) -> Result<Vec<f64>> {
        match self {
            TensorRecord::Float(v) => Ok(v),
            TensorRecord::Quantized { .. } => Err(Error::Model("quantized tensor in a float model".into())),
        }
    }

    fn into_quantized(self) -> Result<QTensor> {
        match self {
            TensorRecord::Quantized { scale, zero_point, data } => {
                let payload = BASE64.decode(data.as_bytes()).map_err(|e| Error::Model(format!("bad payload: {e}")))?;
                Ok(QTensor { payload, params: QuantParams { scale, zero_point } })
            }
            TensorRecord::Float(_) => Err(Error::Model("float tensor in a quantized model".into())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerRecord {
    Dense {
        units: usize,
        weights: TensorRecord,
        bias: TensorRecord,
    },
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        weights: TensorRecord,
        bias: TensorRecord,
    },
    Batchnorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        moving_mean: Vec<f64>,
        moving_var: Vec<f64>,
    },
    Relu,
    Maxpool {
        size: usize,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
    Flatten,
}

/// Layer record without weights; weights are filled in by the caller.
fn layer_record(spec: &LayerSpec, weights: Option<(TensorRecord, TensorRecord)>, bn: Option<&LayerParams>) -> Result<LayerRecord> {
    let missing = || Error::Model(format!("{} layer without weights", spec.name()));
    Ok(match *spec {
        LayerSpec::Dense { units } => {
            let (weights, bias) = weights.ok_or_else(missing)?;
            LayerRecord::Dense { units, weights, bias }
        }
        LayerSpec::Conv2d { filters, kernel, stride } => {
            let (weights, bias) = weights.ok_or_else(missing)?;
            LayerRecord::Conv2d { filters, kernel, stride, weights, bias }
        }
        LayerSpec::BatchNorm => match bn {
            Some(LayerParams::BatchNorm { gamma, beta, moving_mean, moving_var }) => LayerRecord::Batchnorm {
                gamma: gamma.clone(),
                beta: beta.clone(),
                moving_mean: moving_mean.clone(),
                moving_var: moving_var.clone(),
            },
            _ => return Err(missing()),
        },
        LayerSpec::Relu => LayerRecord::Relu,
        LayerSpec::MaxPool { size } => LayerRecord::Maxpool { size },
        LayerSpec::Dropout { rate } => LayerRecord::Dropout { rate },
        LayerSpec::Softmax => LayerRecord::Softmax,
        LayerSpec::Flatten => LayerRecord::Flatten,
    })
}

enum Weights {
    Float(LayerParams),
    Quantized(QLayer),
    None,
}

fn split_record(r: LayerRecord, quantized: bool) -> Result<(LayerSpec, Weights)> {
    let pair = |w: TensorRecord, b: TensorRecord, conv: bool| -> Result<Weights> {
        Ok(if quantized {
            let (w, b) = (w.into_quantized()?, b.into_quantized()?);
            Weights::Quantized(if conv { QLayer::Conv { w, b } } else { QLayer::Dense { w, b } })
        } else {
            let (w, b) = (w.into_float()?, b.into_float()?);
            Weights::Float(if conv { LayerParams::Conv { w, b } } else { LayerParams::Dense { w, b } })
        })
    };
    Ok(match r {
        LayerRecord::Dense { units, weights, bias } => (LayerSpec::Dense { units }, pair(weights, bias, false)?),
        LayerRecord::Conv2d { filters, kernel, stride, weights, bias } => {
            (LayerSpec::Conv2d { filters, kernel, stride }, pair(weights, bias, true)?)
        }
        LayerRecord::Batchnorm { gamma, beta, moving_mean, moving_var } => {
            if quantized {
                return Err(Error::Model("quantized models carry batch norm folded".into()));
            }
            (LayerSpec::BatchNorm, Weights::Float(LayerParams::BatchNorm { gamma, beta, moving_mean, moving_var }))
        }
        LayerRecord::Relu => (LayerSpec::Relu, Weights::None),
        LayerRecord::Maxpool { size } => (LayerSpec::MaxPool { size }, Weights::None),
        LayerRecord::Dropout { rate } => (LayerSpec::Dropout { rate }, Weights::None),
        LayerRecord::Softmax => (LayerSpec::Softmax, Weights::None),
        LayerRecord::Flatten => (LayerSpec::Flatten, Weights::None),
    })
}

fn check_kind(kind: ModelKind) -> Result<()> {
    match kind {
        ModelKind::Autoencoder | ModelKind::Cnn2d => Ok(()),
        ModelKind::Custom => Err(Error::Model("only autoencoder and cnn2d models can be stored".into())),
    }
}

impl ModelFile {
    pub fn new(model: Model) -> Self {
        ModelFile { model, ground_pool: None, train: None }
    }

    fn container(&self) -> Result<Container> {
        let spec = self.model.spec();
        check_kind(spec.kind)?;
        let (layers, activations) = match &self.model {
            Model::Float(m) => {
                let layers = spec
                    .layers
                    .iter()
                    .zip(&m.params)
                    .map(|(l, p)| {
                        let weights = match p {
                            LayerParams::Dense { w, b } | LayerParams::Conv { w, b } => {
                                Some((TensorRecord::Float(w.clone()), TensorRecord::Float(b.clone())))
                            }
                            _ => None,
                        };
                        layer_record(l, weights, Some(p))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (layers, None)
            }
            Model::Quantized(q) => {
                let layers = spec
                    .layers
                    .iter()
                    .zip(q.layers())
                    .map(|(l, ql)| {
                        let weights = match ql {
                            QLayer::Dense { w, b } | QLayer::Conv { w, b } => {
                                Some((TensorRecord::quantized(w), TensorRecord::quantized(b)))
                            }
                            QLayer::None => None,
                        };
                        layer_record(l, weights, None)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (layers, Some(q.activations().iter().map(|&p| p.into()).collect()))
            }
        };
        Ok(Container {
            format_version: FORMAT_VERSION,
            model_type: spec.kind.as_str().to_string(),
            quantized: self.model.is_quantized(),
            layers,
            metadata: Metadata {
                name: spec.name.clone(),
                input_shape: [spec.input.h, spec.input.w, spec.input.c],
                threshold: self.model.threshold(),
                normalizer: self
                    .model
                    .normalizer()
                    .map(|s| NormalizerRecord { mean: s.mean.clone(), std: s.std.clone() }),
                activations,
                ground_pool: self.ground_pool.as_ref().map(|p| p.rows.clone()),
                train: self.train.clone(),
            },
        })
    }

    /// The container as one line of JSON, without the trailing newline.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.container()?).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Container = serde_json::from_str(text.trim()).map_err(|e| Error::Model(e.to_string()))?;
        if c.format_version != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported format_version {}", c.format_version)));
        }
        let kind = ModelKind::parse(&c.model_type)
            .ok_or_else(|| Error::Model(format!("unknown model_type `{}`", c.model_type)))?;
        check_kind(kind)?;
        let [h, w, ch] = c.metadata.input_shape;
        let mut layers = Vec::with_capacity(c.layers.len());
        let mut weights = Vec::with_capacity(c.layers.len());
        for r in c.layers {
            let (l, wts) = split_record(r, c.quantized)?;
            layers.push(l);
            weights.push(wts);
        }
        let spec = ModelSpec::new(&c.metadata.name, kind, Shape::image(h, w, ch), layers)?;
        let normalizer = c.metadata.normalizer.map(|n| FeatureStats { mean: n.mean, std: n.std });
        let threshold = c.metadata.threshold;
        let model = if c.quantized {
            let layers = weights
                .into_iter()
                .map(|w| match w {
                    Weights::Quantized(q) => q,
                    _ => QLayer::None,
                })
                .collect();
            let activations = c
                .metadata
                .activations
                .ok_or_else(|| Error::Model("quantized model without activation parameters".into()))?
                .into_iter()
                .map(QuantParams::from)
                .collect();
            Model::Quantized(QuantizedModel::new(spec, layers, activations, threshold, normalizer)?)
        } else {
            if c.metadata.activations.is_some() {
                return Err(Error::Model("activation parameters in a float model".into()));
            }
            let params = weights
                .into_iter()
                .map(|w| match w {
                    Weights::Float(p) => p,
                    _ => LayerParams::None,
                })
                .collect();
            let m = TrainedModel { spec, params, threshold, normalizer };
            m.validate()?;
            Model::Float(m)
        };
        let ground_pool = c.metadata.ground_pool.map(GroundPool::new).transpose()?;
        Ok(ModelFile { model, ground_pool, train: c.metadata.train })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
