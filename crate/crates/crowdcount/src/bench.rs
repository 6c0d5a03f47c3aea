//! Wall-clock latency of single-cluster inference.

use std::hint::black_box;
use std::time::Instant;

use crowdcount_core::eval::{LatencyReport, LATENCY_BUDGET_MS};
use crowdcount_core::nn::Inference;
use crowdcount_core::pipeline::classify;

use crate::error::{Error, Result};

/// Times `warmup + repetitions` calls of `f` on the current thread and
/// reports the measured ones only. Call `i` receives `i`.
pub fn time_calls<F>(warmup: usize, repetitions: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(usize) -> Result<()>,
{
    for i in 0..warmup {
        f(i)?;
    }
    let mut samples = Vec::with_capacity(repetitions);
    for i in warmup..warmup + repetitions {
        let start = Instant::now();
        f(i)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(samples)
}

/// Latency of [`classify`] on prepared inputs, cycling through them.
pub fn bench_model<M: Inference>(model: &M, inputs: &[Vec<f64>], warmup: usize, repetitions: usize) -> Result<LatencyReport> {
    if inputs.is_empty() {
        return Err(Error::Usage("bench needs at least one input".into()));
    }
    let samples = time_calls(warmup, repetitions, |i| {
        black_box(classify(model, black_box(&inputs[i % inputs.len()]))?);
        Ok(())
    })?;
    Ok(LatencyReport::from_samples(&samples, LATENCY_BUDGET_MS)?)
}
