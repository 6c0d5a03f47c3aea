use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Activation shape of one sample: height, width, channels. Vectors are `1 x 1 x n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn image(h: usize, w: usize, c: usize) -> Self {
        Shape { h, w, c }
    }

    pub const fn vector(n: usize) -> Self {
        Shape { h: 1, w: 1, c: n }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_vector(&self) -> bool {
        self.h == 1 && self.w == 1
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.h, self.w, self.c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Dense { units: usize },
    /// Square kernel, no padding.
    Conv2d { filters: usize, kernel: usize, stride: usize },
    BatchNorm,
    Relu,
    /// Non-overlapping square window; trailing rows and columns are dropped.
    MaxPool { size: usize },
    Dropout { rate: f64 },
    Softmax,
    Flatten,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(Error::InvalidParameter("dense units must be positive"));
                }
                if !input.is_vector() {
                    return Err(Error::InvalidParameter("dense layer needs a flat input"));
                }
                Ok(Shape::vector(units))
            }
            LayerSpec::Conv2d { filters, kernel, stride } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::InvalidParameter("conv parameters must be positive"));
                }
                if input.h < kernel || input.w < kernel {
                    return Err(Error::InvalidParameter("conv kernel larger than its input"));
                }
                Ok(Shape::image((input.h - kernel) / stride + 1, (input.w - kernel) / stride + 1, filters))
            }
            LayerSpec::MaxPool { size } => {
                if size == 0 || input.h < size || input.w < size {
                    return Err(Error::InvalidParameter("pool window larger than its input"));
                }
                Ok(Shape::image(input.h / size, input.w / size, input.c))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidParameter("dropout rate must be in [0, 1)"));
                }
                Ok(input)
            }
            LayerSpec::Softmax => {
                if !input.is_vector() {
                    return Err(Error::InvalidParameter("softmax needs a flat input"));
                }
                Ok(input)
            }
            LayerSpec::Flatten => Ok(Shape::vector(input.len())),
            LayerSpec::BatchNorm | LayerSpec::Relu => Ok(input),
        }
    }

    /// Stored parameters, batch-norm moving statistics included.
    pub fn param_count(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Dense { units } => input.len() * units + units,
            LayerSpec::Conv2d { filters, kernel, .. } => kernel * kernel * input.c * filters + filters,
            LayerSpec::BatchNorm => 4 * input.c,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Autoencoder,
    Cnn2d,
    Custom,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Autoencoder => "autoencoder",
            ModelKind::Cnn2d => "cnn2d",
            ModelKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "autoencoder" => Some(ModelKind::Autoencoder),
            "cnn2d" => Some(ModelKind::Cnn2d),
            "custom" => Some(ModelKind::Custom),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(name: &str, kind: ModelKind, input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ModelSpec { name: name.to_string(), kind, input, layers };
        spec.shapes()?;
        Ok(spec)
    }

    /// Output shape after each layer.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.is_empty() {
            return Err(Error::InvalidParameter("model input must be non-empty"));
        }
        let mut shape = self.input;
        self.layers
            .iter()
            .map(|l| {
                shape = l.output_shape(shape)?;
                Ok(shape)
            })
            .collect()
    }

    /// Input shape of each layer.
    pub fn input_shapes(&self) -> Result<Vec<Shape>> {
        let mut inputs = vec![self.input];
        let shapes = self.shapes()?;
        inputs.extend_from_slice(&shapes[..shapes.len().saturating_sub(1)]);
        Ok(inputs)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.shapes()?.last().copied().unwrap_or(self.input))
    }

    pub fn count_params(&self) -> Result<usize> {
        Ok(self
            .layers
            .iter()
            .zip(self.input_shapes()?)
            .map(|(l, s)| l.param_count(s))
            .sum())
    }

    pub fn ends_in_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Softmax))
    }

    /// Widths of the dense layers, in order.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .collect()
    }
}

pub const AE_INPUT: usize = 94;
pub const AE_WIDTHS: [usize; 8] = [104, 72, 124, 8, 76, 84, 76, 94];
const AE_BOTTLENECK: usize = 3;
const AE_DROPOUT: f64 = 0.1;

/// Fully connected autoencoder over the 94 slice features.
///
/// Every hidden dense layer is followed by ReLU; all but the bottleneck are
/// then followed by dropout 0.1. The output layer is linear.
pub fn build_autoencoder() -> ModelSpec {
    let mut layers = Vec::new();
    let last = AE_WIDTHS.len() - 1;
    for (i, &units) in AE_WIDTHS.iter().enumerate() {
        layers.push(LayerSpec::Dense { units });
        if i == last {
            break;
        }
        layers.push(LayerSpec::Relu);
        if i != AE_BOTTLENECK {
            layers.push(LayerSpec::Dropout { rate: AE_DROPOUT });
        }
    }
    ModelSpec::new("autoencoder", ModelKind::Autoencoder, Shape::vector(AE_INPUT), layers)
        .expect("autoencoder layout is valid")
}

/// Three-view projection CNN: three unpadded 3x3 convolutions with batch norm
/// and ReLU (the first two max-pooled), then dense 64 and a 2-way softmax.
pub fn build_cnn2d() -> ModelSpec {
    let conv = |filters| LayerSpec::Conv2d { filters, kernel: 3, stride: 1 };
    let layers = vec![
        conv(32),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2 },
        conv(64),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2 },
        conv(64),
        LayerSpec::BatchNorm,
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 64 },
        LayerSpec::Dense { units: 2 },
        LayerSpec::Softmax,
    ];
    ModelSpec::new("cnn2d", ModelKind::Cnn2d, Shape::image(18, 18, 6), layers).expect("cnn2d layout is valid")
}
