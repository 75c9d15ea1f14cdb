//! Closed-form parameter and FLOP accounting for baseline and reuse models,
//! in exact rational arithmetic so breakdown entries always sum to the totals.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ReuseSchedule};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

pub type Count = Ratio<i128>;

fn count(v: i128) -> Count {
    Ratio::from_integer(v)
}

/// How many FLOPs one multiply-add counts for. The ratios reported by
/// [`model_cost`] are invariant to this choice because it multiplies every
/// flop entry uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopConvention {
    pub flops_per_multiply_add: i128,
}

impl Default for FlopConvention {
    fn default() -> Self {
        FlopConvention {
            flops_per_multiply_add: 2,
        }
    }
}

/// Per-layer attention cost in multiply-adds and parameter counts:
/// flops = (1 − K/2H)(4d²n + 2dn²), params = (1 − K/2H)·4d².
pub fn attention_layer_cost(d: usize, n: usize, h: usize, k: usize) -> Result<(Count, Count)> {
    if h == 0 || d == 0 {
        return Err(Error::InvalidDimension {
            what: "attention cost dimensions",
            value: 0,
        });
    }
    if k > h {
        return Err(Error::Config(format!(
            "reuse head count {k} exceeds total heads {h}"
        )));
    }
    if !d.is_multiple_of(h) {
        return Err(Error::Config(format!(
            "model width {d} not divisible by head count {h}"
        )));
    }
    let (d, n, h, k) = (d as i128, n as i128, h as i128, k as i128);
    // 1 - K/(2H)
    let factor = count(1) - Ratio::new(k, 2 * h);
    let flops_full = count(4 * d * d * n + 2 * d * n * n);
    let params_full = count(4 * d * d);
    Ok((factor * flops_full, factor * params_full))
}

#[derive(Clone, Debug)]
pub struct ComponentCost {
    pub name: String,
    pub params: Count,
    pub flops: Count,
}

/// Exact cost accounting for one model at a stated sequence length, with the
/// component breakdown and ratios against the same architecture under the
/// all-exact baseline schedule.
#[derive(Clone, Debug)]
pub struct CostReport {
    pub params_total: Count,
    pub flops_total: Count,
    pub breakdown: Vec<ComponentCost>,
    pub params_ratio: f64,
    pub flops_ratio: f64,
}

/// JSON/CSV-friendly view with rationals resolved to f64.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostSummary {
    pub params_total: f64,
    pub flops_total: f64,
    pub params_ratio: f64,
    pub flops_ratio: f64,
    pub breakdown: Vec<(String, f64, f64)>,
}

impl CostReport {
    pub fn summary(&self) -> CostSummary {
        CostSummary {
            params_total: self.params_total.to_f64().unwrap(),
            flops_total: self.flops_total.to_f64().unwrap(),
            params_ratio: self.params_ratio,
            flops_ratio: self.flops_ratio,
            breakdown: self
                .breakdown
                .iter()
                .map(|c| {
                    (
                        c.name.clone(),
                        c.params.to_f64().unwrap(),
                        c.flops.to_f64().unwrap(),
                    )
                })
                .collect(),
        }
    }
}

fn raw_cost(
    config: &ModelConfig,
    n: usize,
    tie_embeddings: bool,
    convention: FlopConvention,
) -> Result<(Vec<ComponentCost>, Count, Count)> {
    config.validate()?;
    if n > config.max_n {
        return Err(Error::SequenceTooLong {
            n,
            max_n: config.max_n,
        });
    }
    let ma = count(convention.flops_per_multiply_add);
    let d = config.d_model as i128;
    let dff = config.d_ff as i128;
    let vocab = config.vocab as i128;
    let nn = n as i128;
    let max_n = config.max_n as i128;
    let mut breakdown = Vec::new();
    // token + positional embeddings: table lookups, no matmul flops
    breakdown.push(ComponentCost {
        name: "embeddings".into(),
        params: count(vocab * d + max_n * d),
        flops: count(0),
    });
    for (l, plan) in config.schedule.plan().iter().enumerate() {
        let (attn_params, attn_flops) = if plan.skip_attention {
            (count(0), count(0))
        } else {
            let k = config.heads - plan.exact_heads;
            let (f, p) = attention_layer_cost(config.d_model, n, config.heads, k)?;
            (p, f * ma)
        };
        breakdown.push(ComponentCost {
            name: format!("layer{}.attention", l + 1),
            params: attn_params,
            flops: attn_flops,
        });
        breakdown.push(ComponentCost {
            name: format!("layer{}.feed_forward", l + 1),
            params: count(2 * d * dff),
            flops: count(2 * d * dff * nn) * ma,
        });
    }
    breakdown.push(ComponentCost {
        name: "output_head".into(),
        params: if tie_embeddings {
            count(0)
        } else {
            count(vocab * d)
        },
        flops: count(0),
    });
    let params_total: Count = breakdown.iter().map(|c| c.params).sum();
    let flops_total: Count = breakdown.iter().map(|c| c.flops).sum();
    Ok((breakdown, params_total, flops_total))
}

/// Full-model cost with ratios against the all-exact baseline schedule of the
/// same architecture.
pub fn model_cost(
    config: &ModelConfig,
    n: usize,
    tie_embeddings: bool,
    convention: FlopConvention,
) -> Result<CostReport> {
    let (breakdown, params_total, flops_total) = raw_cost(config, n, tie_embeddings, convention)?;
    let mut baseline_config = config.clone();
    baseline_config.schedule = ReuseSchedule::baseline(config.layers, config.heads);
    let (_, base_params, base_flops) = raw_cost(&baseline_config, n, tie_embeddings, convention)?;
    Ok(CostReport {
        params_total,
        flops_total,
        breakdown,
        params_ratio: (params_total / base_params).to_f64().unwrap(),
        flops_ratio: (flops_total / base_flops).to_f64().unwrap(),
    })
}

/// One report per K under the config's schedule variant with its P held fixed.
pub fn cost_sweep(
    config: &ModelConfig,
    n: usize,
    k_values: &[usize],
    tie_embeddings: bool,
    convention: FlopConvention,
) -> Result<Vec<(usize, CostReport)>> {
    let mut out = Vec::new();
    for &k in k_values {
        let mut c = config.clone();
        c.schedule = ReuseSchedule::new(
            config.schedule.variant,
            config.schedule.p,
            k,
            config.layers,
            config.heads,
        )?;
        out.push((k, model_cost(&c, n, tie_embeddings, convention)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
