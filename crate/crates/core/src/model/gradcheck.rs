use super::backward::{cross_entropy, transformer_backward};
use super::config::{Activation, ModelConfig, ReuseSchedule, ScheduleVariant};
use super::forward::transformer_forward;
use super::params::ModelParams;
use crate::error::Result;
use crate::numerics::{finite_diff_grad, Rng};

/// Outcome of comparing analytic backprop against central finite differences.
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub num_params: usize,
}

/// The tiny model used for gradient verification across schedule variants.
pub fn tiny_config(schedule: ReuseSchedule) -> ModelConfig {
    ModelConfig {
        layers: schedule.layers(),
        heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab: 11,
        max_n: 5,
        activation: Activation::Gelu,
        schedule,
        detach_reused_scores: false,
    }
}

/// All six schedule variants at the tiny-model scale (L=3, H=2).
pub fn tiny_schedules() -> Vec<(ScheduleVariant, ReuseSchedule)> {
    vec![
        (ScheduleVariant::Baseline, ReuseSchedule::baseline(3, 2)),
        (
            ScheduleVariant::PartialLayer,
            ReuseSchedule::partial_layer(1, 3, 2).unwrap(),
        ),
        (
            ScheduleVariant::FullLayer,
            ReuseSchedule::full_layer(1, 3, 2).unwrap(),
        ),
        (
            ScheduleVariant::Alternate,
            ReuseSchedule::alternate(1, 3, 2).unwrap(),
        ),
        (
            ScheduleVariant::AllEnd,
            ReuseSchedule::all_end(1, 3, 2).unwrap(),
        ),
        (ScheduleVariant::Skip, ReuseSchedule::skip(1, 3, 2).unwrap()),
    ]
}

/// Compares analytic gradients to central finite differences on one model.
///
/// `corrupt` perturbs one analytic gradient coordinate and exists as a
/// negative-control hook: a correct checker must then report a large error.
pub fn gradient_check(config: &ModelConfig, seed: u64, h: f64, corrupt: bool) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let params = ModelParams::init(config, &mut rng)?;
    let n = config.max_n.min(5);
    let tokens: Vec<usize> = (0..n).map(|_| rng.below(config.vocab)).collect();
    let targets: Vec<Option<usize>> = (0..n).map(|_| Some(rng.below(config.vocab))).collect();

    let pass = transformer_forward(&params, &tokens)?;
    let (_, dlogits) = cross_entropy(&pass.logits, &targets)?;
    let grads = transformer_backward(&params, &pass, &dlogits)?;
    let mut analytic = grads.flatten();
    if corrupt {
        analytic[0] += 1.0;
    }

    let theta = params.flatten();
    let loss_fn = |t: &[f64]| {
        let mut p = params.clone();
        p.set_from_flat(t);
        let pass = transformer_forward(&p, &tokens).expect("forward in finite differences");
        cross_entropy(&pass.logits, &targets).expect("loss").0
    };
    let numeric = finite_diff_grad(loss_fn, &theta, h);

    let mut max_rel = 0.0_f64;
    for (a, f) in analytic.iter().zip(&numeric) {
        let denom = a.abs().max(f.abs()).max(1e-6);
        max_rel = max_rel.max((a - f).abs() / denom);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        num_params: theta.len(),
    })
}
