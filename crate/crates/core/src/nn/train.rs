use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

use super::model::{batch_stats, LayerParams, Mode, Trace, TrainedModel, BN_MOMENTUM};
use super::spec::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over samples of the mean squared error per sample.
    Mse,
    /// Categorical cross-entropy on a final softmax layer.
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 0.001,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-7,
            seed: 0,
            loss: Loss::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return Err(Error::InvalidParameter("learning rate and epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("Adam betas must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Training targets, one per input sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// Class index per sample (softmax cross-entropy).
    Classes(Vec<usize>),
    /// Target vector per sample.
    Values(Vec<Vec<f64>>),
    /// The input is its own target.
    Reconstruct,
}

/// Loss of a batch and its gradient with respect to the output of layer
/// `upto - 1`. Cross-entropy is differentiated straight through the softmax.
pub(crate) fn loss_and_grad(
    spec: &ModelSpec,
    trace: &Trace,
    loss: Loss,
    targets: &[&[f64]],
    classes: &[usize],
) -> Result<(f64, Vec<f64>, usize)> {
    let n_layers = spec.layers.len();
    let batch = trace.batch as f64;
    match loss {
        Loss::Mse => {
            let out = trace.output();
            let d = out.len() / trace.batch;
            let mut total = 0.0;
            let mut grad = vec![0.0; out.len()];
            for (s, t) in targets.iter().enumerate() {
                if t.len() != d {
                    return Err(Error::LengthMismatch { expected: d, got: t.len() });
                }
                for k in 0..d {
                    let diff = out[s * d + k] - t[k];
                    total += diff * diff;
                    grad[s * d + k] = 2.0 * diff / (batch * d as f64);
                }
            }
            Ok((total / (batch * d as f64), grad, n_layers))
        }
        Loss::SoftmaxCrossEntropy => {
            if !spec.ends_in_softmax() {
                return Err(Error::InvalidParameter("cross-entropy needs a final softmax layer"));
            }
            let logits = &trace.activations[n_layers - 1];
            let probs = trace.output();
            let k = logits.len() / trace.batch;
            let mut total = 0.0;
            let mut grad = probs.to_vec();
            for (s, &c) in classes.iter().enumerate() {
                if c >= k {
                    return Err(Error::InvalidParameter("class index out of range"));
                }
                let row = &logits[s * k..(s + 1) * k];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
                total += lse - row[c];
                grad[s * k + c] -= 1.0;
            }
            grad.iter_mut().for_each(|g| *g /= batch);
            Ok((total / batch, grad, n_layers - 1))
        }
    }
}

struct Adam {
    m: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
    step: i32,
}

impl Adam {
    fn new(model: &TrainedModel) -> Self {
        let zeros: Vec<Vec<Vec<f64>>> = model
            .params
            .iter()
            .map(|p| p.trainable().iter().map(|t| vec![0.0; t.len()]).collect())
            .collect();
        Adam { m: zeros.clone(), v: zeros, step: 0 }
    }

    fn update(&mut self, model: &mut TrainedModel, grads: &[Vec<Vec<f64>>], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step;
        let lr_t = cfg.learning_rate * libm::sqrt(1.0 - libm::pow(cfg.beta2, t as f64))
            / (1.0 - libm::pow(cfg.beta1, t as f64));
        for (l, p) in model.params.iter_mut().enumerate() {
            for (k, tensor) in p.trainable_mut().into_iter().enumerate() {
                let g = &grads[l][k];
                let m = &mut self.m[l][k];
                let v = &mut self.v[l][k];
                for i in 0..tensor.len() {
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    tensor[i] -= lr_t * m[i] / (libm::sqrt(v[i]) + cfg.adam_epsilon);
                }
            }
        }
    }
}

/// Trains a freshly initialized model; returns it with the mean loss of every epoch.
pub fn train(
    spec: &ModelSpec,
    inputs: &[Vec<f64>],
    targets: &Targets,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<f64>)> {
    let mut model = TrainedModel::init(spec, derive_seed(cfg.seed, 0))?;
    let history = fit(&mut model, inputs, targets, cfg)?;
    Ok((model, history))
}

/// Minibatch Adam on an existing model. Deterministic for a given `cfg.seed`.
pub fn fit(model: &mut TrainedModel, inputs: &[Vec<f64>], targets: &Targets, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let size = model.spec.input.len();
    if let Some(bad) = inputs.iter().find(|x| x.len() != size) {
        return Err(Error::ShapeMismatch { expected: model.spec.input.dims(), got: vec![bad.len()] });
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("training inputs must be finite"));
    }
    match (targets, cfg.loss) {
        (Targets::Classes(c), Loss::SoftmaxCrossEntropy) if c.len() == inputs.len() => {}
        (Targets::Values(v), Loss::Mse) if v.len() == inputs.len() => {}
        (Targets::Reconstruct, Loss::Mse) => {}
        _ => return Err(Error::InvalidParameter("targets do not match the loss or the input count")),
    }

    let mut shuffle_rng = seeded(derive_seed(cfg.seed, 1));
    let mut dropout_rng = seeded(derive_seed(cfg.seed, 2));
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch_input = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch_input.clear();
            for &i in idx {
                batch_input.extend_from_slice(&inputs[i]);
            }
            let trace = model.run(&batch_input, idx.len(), Mode::Train, Some(&mut dropout_rng), true);
            let (value_targets, classes): (Vec<&[f64]>, Vec<usize>) = match targets {
                Targets::Classes(c) => (vec![], idx.iter().map(|&i| c[i]).collect()),
                Targets::Values(v) => (idx.iter().map(|&i| v[i].as_slice()).collect(), vec![]),
                Targets::Reconstruct => (idx.iter().map(|&i| inputs[i].as_slice()).collect(), vec![]),
            };
            let (loss, grad, upto) = loss_and_grad(&model.spec, &trace, cfg.loss, &value_targets, &classes)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss });
            }
            epoch_loss += loss * idx.len() as f64;
            let grads = model.backward(&trace, upto, grad);
            update_moving_stats(model, &trace);
            adam.update(model, &grads, cfg);
        }
        history.push(epoch_loss / inputs.len() as f64);
    }
    Ok(history)
}

fn update_moving_stats(model: &mut TrainedModel, trace: &Trace) {
    let stats = batch_stats(trace);
    for (p, s) in model.params.iter_mut().zip(stats) {
        if let (LayerParams::BatchNorm { moving_mean, moving_var, .. }, Some((mean, var))) = (p, s) {
            for k in 0..mean.len() {
                moving_mean[k] = BN_MOMENTUM * moving_mean[k] + (1.0 - BN_MOMENTUM) * mean[k];
                moving_var[k] = BN_MOMENTUM * moving_var[k] + (1.0 - BN_MOMENTUM) * var[k];
            }
        }
    }
}

/// Replaces the moving statistics of every batch-norm layer with the exact
/// statistics of `inputs` under the current weights, front to back, so eval
/// mode normalizes like the batches seen in training. Inputs are pushed
/// through in chunks of `chunk` samples.
pub fn recalibrate_batch_norm(model: &mut TrainedModel, inputs: &[Vec<f64>], chunk: usize) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("recalibration set"));
    }
    if chunk == 0 {
        return Err(Error::InvalidParameter("chunk must be positive"));
    }
    let size = model.spec.input.len();
    if let Some(bad) = inputs.iter().find(|x| x.len() != size) {
        return Err(Error::ShapeMismatch { expected: model.spec.input.dims(), got: vec![bad.len()] });
    }
    let shapes = model.spec.input_shapes()?;
    let bn_layers: Vec<usize> =
        (0..model.params.len()).filter(|&i| matches!(model.params[i], LayerParams::BatchNorm { .. })).collect();
    let mut flat = Vec::new();
    for j in bn_layers {
        let c = shapes[j].c;
        // Per-channel (count, mean, M2), merged chunk by chunk.
        let mut n = 0.0;
        let mut mean = vec![0.0; c];
        let mut m2 = vec![0.0; c];
        for part in inputs.chunks(chunk) {
            flat.clear();
            part.iter().for_each(|x| flat.extend_from_slice(x));
            model.eval_with_hook(&flat, part.len(), |i, act| {
                if i != j {
                    return;
                }
                let nb = (act.len() / c) as f64;
                let mut mb = vec![0.0; c];
                for row in act.chunks_exact(c) {
                    mb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                }
                mb.iter_mut().for_each(|a| *a /= nb);
                let mut m2b = vec![0.0; c];
                for row in act.chunks_exact(c) {
                    for k in 0..c {
                        let d = row[k] - mb[k];
                        m2b[k] += d * d;
                    }
                }
                let total = n + nb;
                for k in 0..c {
                    let delta = mb[k] - mean[k];
                    mean[k] += delta * nb / total;
                    m2[k] += m2b[k] + delta * delta * n * nb / total;
                }
                n = total;
            });
        }
        if let LayerParams::BatchNorm { moving_mean, moving_var, .. } = &mut model.params[j] {
            *moving_mean = mean;
            *moving_var = m2.iter().map(|v| v / n).collect();
        }
    }
    Ok(())
}

/// Classification accuracy of a softmax model over a labeled set.
pub fn accuracy(model: &TrainedModel, inputs: &[Vec<f64>], classes: &[usize]) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != classes.len() {
        return Err(Error::LengthMismatch { expected: inputs.len(), got: classes.len() });
    }
    let mut correct = 0;
    for (x, &c) in inputs.iter().zip(classes) {
        let p = model.forward(x)?;
        if super::argmax(&p) == c {
            correct += 1;
        }
    }
    Ok(correct as f64 / inputs.len() as f64)
}
