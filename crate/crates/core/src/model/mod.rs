//! Encoder-only Transformer with standard and reuse multi-head attention,
//! hand-written forward/backward passes, Adam, and checkpoint persistence.
//!
//! Layer wiring is pre-norm: layer norm precedes each sublayer, residual
//! connections bypass it. Reuse heads copy score matrices verbatim from the
//! rolling buffer; their backward gradients are routed to the layer that
//! originally computed the scores (configurable via `detach_reused_scores`).

mod backward;
mod checkpoint;
mod config;
mod forward;
mod gradcheck;
mod optimizer;
mod params;

pub use backward::{cross_entropy, transformer_backward};
pub use checkpoint::Checkpoint;
pub use config::{Activation, LayerPlan, ModelConfig, ReuseSchedule, ScheduleVariant};
pub use forward::{
    attention_apply, attention_scores, feedforward, layer_norm, reuse_multihead_forward,
    transformer_forward, AttentionCache, ForwardPass, Provenance, ReuseBuffer,
};
pub use gradcheck::{gradient_check, tiny_config, tiny_schedules, GradCheckReport};
pub use optimizer::{train_step, AdamHyperparams, AdamState, Example};
pub use params::{
    AttentionLayerParams, FeedForwardParams, InitScales, LayerParams, ModelParams,
};

#[cfg(test)]
mod tests;
