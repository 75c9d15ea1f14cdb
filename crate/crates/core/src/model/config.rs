use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Element-wise nonlinearity in the feed-forward sublayer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => gelu(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => gelu_derivative(x),
        }
    }
}

// tanh approximation of GELU; smooth, so finite-difference checks are clean.
const GELU_C: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (k * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    let inner = k * (x + GELU_C * x * x * x);
    let t = inner.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * k * (1.0 + 3.0 * GELU_C * x * x)
}

/// Which heads reuse scores and where, per the glossary's configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariant {
    /// All heads in all layers compute their own scores.
    Baseline,
    /// Layers 2..=L-1 each reuse K heads; first and last layers are exact.
    PartialLayer,
    /// Layers 2..=P+1 reuse all H heads.
    FullLayer,
    /// The first P even-numbered layers reuse all H heads.
    Alternate,
    /// Layers L-P..=L-1 reuse all H heads; the last layer is exact.
    AllEnd,
    /// Layers 2..=P+1 have no attention sublayer at all.
    Skip,
}

/// Per-layer plan entry derived from (variant, P, K).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    /// Number of heads that compute their own scores; the remaining
    /// `H - exact_heads` copy from the reuse buffer.
    pub exact_heads: usize,
    /// True when the layer has no attention sublayer (Skip variant).
    pub skip_attention: bool,
}

/// Derived per-layer plan of exact vs reused heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseSchedule {
    pub variant: ScheduleVariant,
    pub p: usize,
    pub k: usize,
    plan: Vec<LayerPlan>,
}

impl ReuseSchedule {
    pub fn new(variant: ScheduleVariant, p: usize, k: usize, l: usize, h: usize) -> Result<Self> {
        if l == 0 || h == 0 {
            return Err(Error::Schedule("L and H must be positive".into()));
        }
        if k > h {
            return Err(Error::Schedule(format!("K={k} exceeds H={h}")));
        }
        if p + 1 > l {
            return Err(Error::Schedule(format!("P={p} exceeds L-1={}", l - 1)));
        }
        let exact = LayerPlan {
            exact_heads: h,
            skip_attention: false,
        };
        let mut plan = vec![exact; l];
        match variant {
            ScheduleVariant::Baseline => {}
            ScheduleVariant::PartialLayer => {
                if p != l.saturating_sub(2) {
                    return Err(Error::Schedule(format!(
                        "partial-layer reuse requires P = L-2 (got P={p}, L={l})"
                    )));
                }
                for entry in plan.iter_mut().take(l.saturating_sub(1)).skip(1) {
                    entry.exact_heads = h - k;
                }
            }
            ScheduleVariant::FullLayer => {
                for entry in plan.iter_mut().take(p + 1).skip(1) {
                    entry.exact_heads = 0;
                }
            }
            ScheduleVariant::Alternate => {
                let even_layers = l / 2;
                if p > even_layers {
                    return Err(Error::Schedule(format!(
                        "alternate reuse: P={p} exceeds the {even_layers} even-numbered layers"
                    )));
                }
                let mut remaining = p;
                for idx in 0..l {
                    // idx is 0-based; layer number idx+1 is even when idx is odd
                    if idx % 2 == 1 && remaining > 0 {
                        plan[idx].exact_heads = 0;
                        remaining -= 1;
                    }
                }
            }
            ScheduleVariant::AllEnd => {
                if p + 2 > l {
                    return Err(Error::Schedule(format!(
                        "all-end reuse requires P <= L-2 (got P={p}, L={l})"
                    )));
                }
                for entry in plan.iter_mut().take(l - 1).skip(l - 1 - p) {
                    entry.exact_heads = 0;
                }
            }
            ScheduleVariant::Skip => {
                for entry in plan.iter_mut().take(p + 1).skip(1) {
                    entry.exact_heads = 0;
                    entry.skip_attention = true;
                }
            }
        }
        debug_assert_eq!(plan[0].exact_heads, h, "first layer is always exact");
        Ok(ReuseSchedule {
            variant,
            p,
            k,
            plan,
        })
    }

    pub fn baseline(l: usize, h: usize) -> Self {
        ReuseSchedule::new(ScheduleVariant::Baseline, 0, 0, l, h).expect("baseline is always valid")
    }

    pub fn partial_layer(k: usize, l: usize, h: usize) -> Result<Self> {
        ReuseSchedule::new(ScheduleVariant::PartialLayer, l.saturating_sub(2), k, l, h)
    }

    pub fn full_layer(p: usize, l: usize, h: usize) -> Result<Self> {
        ReuseSchedule::new(ScheduleVariant::FullLayer, p, h, l, h)
    }

    pub fn alternate(p: usize, l: usize, h: usize) -> Result<Self> {
        ReuseSchedule::new(ScheduleVariant::Alternate, p, h, l, h)
    }

    pub fn all_end(p: usize, l: usize, h: usize) -> Result<Self> {
        ReuseSchedule::new(ScheduleVariant::AllEnd, p, h, l, h)
    }

    pub fn skip(p: usize, l: usize, h: usize) -> Result<Self> {
        ReuseSchedule::new(ScheduleVariant::Skip, p, h, l, h)
    }

    pub fn layers(&self) -> usize {
        self.plan.len()
    }

    /// Plan for 0-based layer index.
    pub fn layer(&self, idx: usize) -> LayerPlan {
        self.plan[idx]
    }

    pub fn plan(&self) -> &[LayerPlan] {
        &self.plan
    }

    /// Number of reused heads in a layer (0 for skip layers, which have no
    /// attention at all).
    pub fn reused_heads(&self, idx: usize, h: usize) -> usize {
        let p = self.plan[idx];
        if p.skip_attention {
            0
        } else {
            h - p.exact_heads
        }
    }
}

/// Full model hyperparameters plus the reuse schedule.
///
/// Serialized form carries the schedule as `{variant, p, k}` only; the
/// per-layer plan is rebuilt deterministically on load.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab: usize,
    pub max_n: usize,
    pub activation: Activation,
    pub schedule: ReuseSchedule,
    /// When true, reused scores are treated as constants in the backward pass
    /// (no gradient flows to the origin layer's query/key projections).
    pub detach_reused_scores: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSpec {
    variant: ScheduleVariant,
    p: usize,
    k: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfigRepr {
    layers: usize,
    heads: usize,
    d_model: usize,
    d_ff: usize,
    vocab: usize,
    max_n: usize,
    activation: Activation,
    schedule: ScheduleSpec,
    #[serde(default)]
    detach_reused_scores: bool,
}

impl Serialize for ModelConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelConfigRepr {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            vocab: self.vocab,
            max_n: self.max_n,
            activation: self.activation,
            schedule: ScheduleSpec {
                variant: self.schedule.variant,
                p: self.schedule.p,
                k: self.schedule.k,
            },
            detach_reused_scores: self.detach_reused_scores,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModelConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ModelConfigRepr::deserialize(deserializer)?;
        let schedule = ReuseSchedule::new(
            repr.schedule.variant,
            repr.schedule.p,
            repr.schedule.k,
            repr.layers,
            repr.heads,
        )
        .map_err(serde::de::Error::custom)?;
        Ok(ModelConfig {
            layers: repr.layers,
            heads: repr.heads,
            d_model: repr.d_model,
            d_ff: repr.d_ff,
            vocab: repr.vocab,
            max_n: repr.max_n,
            activation: repr.activation,
            schedule,
            detach_reused_scores: repr.detach_reused_scores,
        })
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::Config("all counts must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model={} not divisible by heads={}",
                self.d_model, self.heads
            )));
        }
        if self.vocab == 0 || self.max_n == 0 {
            return Err(Error::Config("vocab and max_n must be positive".into()));
        }
        if self.schedule.layers() != self.layers {
            return Err(Error::Config(format!(
                "schedule covers {} layers, model has {}",
                self.schedule.layers(),
                self.layers
            )));
        }
        if self.schedule.layer(0).exact_heads != self.heads {
            return Err(Error::Config("first layer must be fully exact".into()));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }
}
