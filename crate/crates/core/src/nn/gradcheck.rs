use alloc::vec::Vec;

use rand::Rng;

use crate::error::Result;
use crate::rng::{derive_seed, seeded, SeededRng};

use super::model::{Cache, Mode, Trace, TrainedModel};
use super::spec::{LayerSpec, ModelSpec};
use super::train::{loss_and_grad, Loss};

const FD_STEP: f64 = 1e-3;
const CHECK_BATCH: usize = 4;

/// Largest relative disagreement between backpropagated gradients and central
/// finite differences (base step `1e-3`, one Richardson refinement) over every
/// trainable parameter.
///
/// The check runs on a seeded random model and batch with dropout off and batch
/// norm on batch statistics. Softmax models use cross-entropy on random
/// classes; everything else uses MSE on random targets.
///
/// A perturbation that flips a ReLU gate or moves a max-pool winner makes the
/// loss non-differentiable inside the stencil, so such parameters are skipped.
/// Biases feeding batch norm are skipped as well, since the loss ignores them.
pub fn gradient_check(spec: &ModelSpec, seed: u64) -> Result<f64> {
    let mut model = TrainedModel::init(spec, derive_seed(seed, 0))?;
    let mut rng = seeded(derive_seed(seed, 1));
    // Move batch-norm affine terms off their trivial init so they get exercised.
    for p in model.params.iter_mut() {
        if let super::model::LayerParams::BatchNorm { gamma, beta, .. } = p {
            gamma.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
            beta.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
        if let super::model::LayerParams::Dense { b, .. } | super::model::LayerParams::Conv { b, .. } = p {
            b.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let in_len = spec.input.len();
    let out_len = spec.output_shape()?.len();
    let input: Vec<f64> = (0..CHECK_BATCH * in_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (loss, classes, values): (Loss, Vec<usize>, Vec<Vec<f64>>) = if spec.ends_in_softmax() {
        (Loss::SoftmaxCrossEntropy, (0..CHECK_BATCH).map(|_| rng.gen_range(0..out_len)).collect(), Vec::new())
    } else {
        let v = (0..CHECK_BATCH).map(|_| (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        (Loss::Mse, Vec::new(), v)
    };
    let value_refs: Vec<&[f64]> = values.iter().map(Vec::as_slice).collect();

    let eval_loss = |m: &TrainedModel| -> Result<(f64, Vec<Vec<usize>>)> {
        let trace = m.run(&input, CHECK_BATCH, Mode::BatchStats, None::<&mut SeededRng>, true);
        Ok((loss_and_grad(&m.spec, &trace, loss, &value_refs, &classes)?.0, kink_pattern(m, &trace)))
    };

    let trace = model.run(&input, CHECK_BATCH, Mode::BatchStats, None::<&mut SeededRng>, true);
    let base_pattern = kink_pattern(&model, &trace);
    let (_, grad, upto) = loss_and_grad(&model.spec, &trace, loss, &value_refs, &classes)?;
    let analytic = model.backward(&trace, upto, grad);

    let mut worst = 0.0f64;
    for l in 0..model.params.len() {
        let n_tensors = model.params[l].trainable().len();
        // Batch norm subtracts the batch mean, so a bias feeding it has no
        // effect on the loss and its difference quotient is pure roundoff.
        let bias_before_bn = matches!(spec.layers.get(l + 1), Some(LayerSpec::BatchNorm));
        for t in 0..n_tensors {
            if t == 1 && bias_before_bn && !matches!(spec.layers[l], LayerSpec::BatchNorm) {
                continue;
            }
            let len = model.params[l].trainable()[t].len();
            for i in 0..len {
                let mut diff = |h: f64| -> Result<Option<f64>> {
                    let orig = model.params[l].trainable()[t][i];
                    model.params[l].trainable_mut()[t][i] = orig + h;
                    let (plus, plus_pattern) = eval_loss(&model)?;
                    model.params[l].trainable_mut()[t][i] = orig - h;
                    let (minus, minus_pattern) = eval_loss(&model)?;
                    model.params[l].trainable_mut()[t][i] = orig;
                    let smooth = plus_pattern == base_pattern && minus_pattern == base_pattern;
                    Ok(smooth.then(|| (plus - minus) / (2.0 * h)))
                };
                let (Some(coarse), Some(fine)) = (diff(FD_STEP)?, diff(FD_STEP / 2.0)?) else {
                    continue;
                };
                // One Richardson step cancels the O(h^2) truncation term.
                let numeric = (4.0 * fine - coarse) / 3.0;
                let a = analytic[l][t][i];
                let rel = libm::fabs(a - numeric) / libm::fabs(a).max(libm::fabs(numeric)).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

/// ReLU gates and max-pool winners for every piecewise layer in the trace.
fn kink_pattern(model: &TrainedModel, trace: &Trace) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for (i, layer) in model.spec.layers.iter().enumerate() {
        match (layer, &trace.caches[i]) {
            (LayerSpec::Relu, _) => out.push(trace.activations[i].iter().map(|&v| usize::from(v > 0.0)).collect()),
            (LayerSpec::MaxPool { .. }, Cache::Argmax(idx)) => out.push(idx.clone()),
            _ => {}
        }
    }
    out
}
