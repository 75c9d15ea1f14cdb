use super::backward::{cross_entropy, transformer_backward};
use super::forward::transformer_forward;
use super::params::ModelParams;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyperparams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warmup steps; the rate is constant afterwards.
    pub warmup_steps: usize,
}

impl Default for AdamHyperparams {
    fn default() -> Self {
        AdamHyperparams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 100,
        }
    }
}

impl AdamHyperparams {
    pub fn rate_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// Adam moments, structured like the parameters they track.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: usize,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One training example: input token ids plus per-position optional targets.
#[derive(Clone, Debug)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub targets: Vec<Option<usize>>,
}

/// One deterministic optimizer step over a batch. Gradients are averaged over
/// examples in index order, so the result does not depend on evaluation
/// parallelism. Returns the mean loss.
pub fn train_step(
    params: &mut ModelParams,
    state: &mut AdamState,
    batch: &[Example],
    hyper: &AdamHyperparams,
    parallel: bool,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let params_ref: &ModelParams = params;
    let per_example = crate::parallel::map_indexed(batch.len(), parallel, |i| {
        let ex = &batch[i];
        let pass = transformer_forward(params_ref, &ex.tokens)?;
        let (loss, dlogits) = cross_entropy(&pass.logits, &ex.targets)?;
        let grads = transformer_backward(params_ref, &pass, &dlogits)?;
        Ok::<_, Error>((loss, grads))
    });

    let mut grad_sum: Option<ModelParams> = None;
    let mut loss_sum = 0.0;
    for item in per_example {
        let (loss, grads) = item?;
        loss_sum += loss;
        match &mut grad_sum {
            None => grad_sum = Some(grads),
            Some(acc) => acc.accumulate(&grads),
        }
    }
    let mut grads = grad_sum.expect("non-empty batch");
    grads.scale_all(1.0 / batch.len() as f64);
    let loss = loss_sum / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged {
            step: state.step,
            what: format!("loss is {loss}"),
        });
    }

    let lr = hyper.rate_at(state.step);
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - hyper.beta1.powf(t);
    let bc2 = 1.0 - hyper.beta2.powf(t);

    let mut flat_g = grads.flatten();
    let mut flat_m = state.m.flatten();
    let mut flat_v = state.v.flatten();
    let mut flat_p = params.flatten();
    for i in 0..flat_p.len() {
        let g = flat_g[i];
        flat_m[i] = hyper.beta1 * flat_m[i] + (1.0 - hyper.beta1) * g;
        flat_v[i] = hyper.beta2 * flat_v[i] + (1.0 - hyper.beta2) * g * g;
        let mhat = flat_m[i] / bc1;
        let vhat = flat_v[i] / bc2;
        flat_p[i] -= lr * mhat / (vhat.sqrt() + hyper.eps);
        flat_g[i] = 0.0;
    }
    state.m.set_from_flat(&flat_m);
    state.v.set_from_flat(&flat_v);
    params.set_from_flat(&flat_p);
    Ok(loss)
}
