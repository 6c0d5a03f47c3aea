//! Classification with trained models: reconstruction-error thresholding for
//! the autoencoder and softmax argmax for the CNN.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::f1_score;
use crate::features::{apply_normalizer, FeatureStats, FeatureVector};

use super::model::TrainedModel;
use super::spec::{ModelKind, ModelSpec};

/// Class index of people in every label vector and softmax output.
pub const HUMAN: usize = 1;
pub const NON_HUMAN: usize = 0;

/// Read-only inference shared by float and quantized models.
pub trait Inference {
    fn spec(&self) -> &ModelSpec;
    /// Eval-mode forward pass over a batch of concatenated samples.
    fn infer(&self, input: &[f64]) -> Result<Vec<f64>>;
    fn threshold(&self) -> Option<f64>;
    fn normalizer(&self) -> Option<&FeatureStats>;
}

impl Inference for TrainedModel {
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

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn require(spec: &ModelSpec, kind: ModelKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::WrongModelKind { expected: kind.as_str() });
    }
    Ok(())
}

/// Autoencoder input for a raw feature vector: standardized when the model
/// carries a normalizer.
pub fn autoencoder_input<M: Inference>(model: &M, v: &FeatureVector) -> Vec<f64> {
    match model.normalizer() {
        Some(stats) => apply_normalizer(v, stats).0.to_vec(),
        None => v.0.to_vec(),
    }
}

/// Mean squared difference between an autoencoder input and its reconstruction.
pub fn reconstruction_error<M: Inference>(model: &M, input: &[f64]) -> Result<f64> {
    require(model.spec(), ModelKind::Autoencoder)?;
    let out = model.infer(input)?;
    if out.len() != input.len() {
        return Err(Error::LengthMismatch { expected: input.len(), got: out.len() });
    }
    Ok(mse(input, &out))
}

/// Reconstruction error of every sample, evaluated as one batch.
pub fn reconstruction_errors<M: Inference>(model: &M, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    require(model.spec(), ModelKind::Autoencoder)?;
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
    let out = model.infer(&flat)?;
    if out.len() != flat.len() {
        return Err(Error::LengthMismatch { expected: flat.len(), got: out.len() });
    }
    let d = flat.len() / inputs.len();
    Ok(flat.chunks_exact(d).zip(out.chunks_exact(d)).map(|(a, b)| mse(a, b)).collect())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
}

/// Picks the cutoff with the best F1 among the midpoints between consecutive
/// distinct errors. Samples at or below the cutoff count as human. Ties go to
/// the larger cutoff, which keeps recall high. When every error is equal the
/// cutoff is that value.
pub fn threshold_from_errors(errors: &[f64], is_human: &[bool]) -> Result<ThresholdChoice> {
    if errors.len() != is_human.len() {
        return Err(Error::LengthMismatch { expected: errors.len(), got: is_human.len() });
    }
    let positives = is_human.iter().filter(|&&h| h).count();
    if positives == 0 || positives == errors.len() {
        return Err(Error::SingleClassValidation);
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter("reconstruction errors must be finite"));
    }
    let mut pairs: Vec<(f64, bool)> = errors.iter().copied().zip(is_human.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let negatives = errors.len() - positives;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<ThresholdChoice> = None;
    let mut i = 0;
    while i < pairs.len() {
        let value = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == value {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if i == pairs.len() {
            break;
        }
        let threshold = value + (pairs[i].0 - value) / 2.0;
        let f1 = f1_score(tp, fp, positives - tp);
        if best.is_none_or(|b| f1 >= b.f1) {
            best = Some(ThresholdChoice { threshold, f1 });
        }
    }
    Ok(best.unwrap_or_else(|| ThresholdChoice {
        threshold: pairs[0].0,
        f1: f1_score(positives, negatives, 0),
    }))
}

/// Threshold selection on a labeled validation set of autoencoder inputs.
pub fn choose_threshold<M: Inference>(model: &M, inputs: &[Vec<f64>], is_human: &[bool]) -> Result<ThresholdChoice> {
    let errors = reconstruction_errors(model, inputs)?;
    threshold_from_errors(&errors, is_human)
}

/// Human when the reconstruction error is at most `threshold`. Returns the
/// decision with the error.
pub fn classify_ae<M: Inference>(model: &M, threshold: f64, input: &[f64]) -> Result<(bool, f64)> {
    let e = reconstruction_error(model, input)?;
    Ok((e <= threshold, e))
}

/// Predicted class and the softmax probabilities of one image.
pub fn classify_cnn<M: Inference>(model: &M, image: &[f64]) -> Result<(usize, Vec<f64>)> {
    require(model.spec(), ModelKind::Cnn2d)?;
    if image.len() != model.spec().input.len() {
        return Err(Error::ShapeMismatch { expected: model.spec().input.dims(), got: alloc::vec![image.len()] });
    }
    let p = model.infer(image)?;
    Ok((argmax(&p), p))
}

/// [`classify_cnn`] over many images in one batch.
pub fn classify_cnn_batch<M: Inference>(model: &M, images: &[Vec<f64>]) -> Result<Vec<(usize, Vec<f64>)>> {
    require(model.spec(), ModelKind::Cnn2d)?;
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let size = model.spec().input.len();
    if let Some(bad) = images.iter().find(|x| x.len() != size) {
        return Err(Error::ShapeMismatch { expected: model.spec().input.dims(), got: alloc::vec![bad.len()] });
    }
    let flat: Vec<f64> = images.iter().flatten().copied().collect();
    let out = model.infer(&flat)?;
    let k = out.len() / images.len();
    Ok(out.chunks_exact(k).map(|p| (argmax(p), p.to_vec())).collect())
}
