use super::config::ModelConfig;
use crate::error::Result;
use crate::numerics::{Rng, Tensor2D};

/// Attention sublayer parameters. Exact heads own query/key projections;
/// reuse heads carry only a value projection, which is where the parameter
/// savings come from.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayerParams {
    pub ln_gain: Tensor2D, // 1 x d
    pub ln_bias: Tensor2D, // 1 x d
    pub wq: Vec<Tensor2D>, // exact_heads x (d x d_head)
    pub wk: Vec<Tensor2D>, // exact_heads x (d x d_head)
    pub wv: Vec<Tensor2D>, // heads x (d x d_head)
    pub wo: Tensor2D,      // d x d
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardParams {
    pub ln_gain: Tensor2D, // 1 x d
    pub ln_bias: Tensor2D, // 1 x d
    pub w1: Tensor2D,      // d x d_ff
    pub w2: Tensor2D,      // d_ff x d
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// None for skip layers (no attention sublayer).
    pub attn: Option<AttentionLayerParams>,
    pub ffn: FeedForwardParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tok_embed: Tensor2D, // vocab x d
    pub pos_embed: Tensor2D, // max_n x d
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Tensor2D, // 1 x d
    pub lnf_bias: Tensor2D, // 1 x d
    pub w_out: Tensor2D,    // d x vocab
}

/// Initialization scales. Query/key projections use `qk_std` so that random
/// initialization produces non-degenerate attention logits; everything else
/// uses `std`.
#[derive(Clone, Copy, Debug)]
pub struct InitScales {
    pub std: f64,
    pub qk_std: f64,
}

impl InitScales {
    /// Default scales for a given width: 0.02 for most projections, 1/sqrt(d)
    /// for query/key so pre-softmax logits are O(1) at initialization.
    pub fn for_width(d: usize) -> Self {
        InitScales {
            std: 0.02,
            qk_std: 1.0 / (d as f64).sqrt(),
        }
    }
}

impl ModelParams {
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let scales = InitScales::for_width(config.d_model);
        Ok(Self::init_with_scales(config, rng, scales))
    }

    pub fn init_with_scales(config: &ModelConfig, rng: &mut Rng, scales: InitScales) -> Self {
        let d = config.d_model;
        let dh = config.d_head();
        let tok_embed = rng.normal_tensor(config.vocab, d, scales.std);
        let pos_embed = rng.normal_tensor(config.max_n, d, scales.std);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let plan = config.schedule.layer(l);
            let attn = if plan.skip_attention {
                None
            } else {
                let wq = (0..plan.exact_heads)
                    .map(|_| rng.normal_tensor(d, dh, scales.qk_std))
                    .collect();
                let wk = (0..plan.exact_heads)
                    .map(|_| rng.normal_tensor(d, dh, scales.qk_std))
                    .collect();
                let wv = (0..config.heads)
                    .map(|_| rng.normal_tensor(d, dh, scales.std))
                    .collect();
                Some(AttentionLayerParams {
                    ln_gain: ones(1, d),
                    ln_bias: Tensor2D::zeros(1, d),
                    wq,
                    wk,
                    wv,
                    wo: rng.normal_tensor(d, d, scales.std),
                })
            };
            let ffn = FeedForwardParams {
                ln_gain: ones(1, d),
                ln_bias: Tensor2D::zeros(1, d),
                w1: rng.normal_tensor(d, config.d_ff, scales.std),
                w2: rng.normal_tensor(config.d_ff, d, scales.std),
            };
            layers.push(LayerParams { attn, ffn });
        }
        ModelParams {
            config: config.clone(),
            tok_embed,
            pos_embed,
            layers,
            lnf_gain: ones(1, d),
            lnf_bias: Tensor2D::zeros(1, d),
            w_out: rng.normal_tensor(d, config.vocab, scales.std),
        }
    }

    /// Gradient/moment holder with the same structure, all zeros.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        z.visit_mut(|_, t| {
            for v in t.data_mut() {
                *v = 0.0;
            }
        });
        z
    }

    /// Visits every parameter tensor in a fixed canonical order with a stable
    /// name. The same order defines the checkpoint manifest and the flattened
    /// parameter vector.
    pub fn visit(&self, mut f: impl FnMut(&str, &Tensor2D)) {
        f("tok_embed", &self.tok_embed);
        f("pos_embed", &self.pos_embed);
        for (l, layer) in self.layers.iter().enumerate() {
            if let Some(attn) = &layer.attn {
                f(&format!("layer{l}.attn.ln_gain"), &attn.ln_gain);
                f(&format!("layer{l}.attn.ln_bias"), &attn.ln_bias);
                for (h, t) in attn.wq.iter().enumerate() {
                    f(&format!("layer{l}.attn.wq{h}"), t);
                }
                for (h, t) in attn.wk.iter().enumerate() {
                    f(&format!("layer{l}.attn.wk{h}"), t);
                }
                for (h, t) in attn.wv.iter().enumerate() {
                    f(&format!("layer{l}.attn.wv{h}"), t);
                }
                f(&format!("layer{l}.attn.wo"), &attn.wo);
            }
            f(&format!("layer{l}.ffn.ln_gain"), &layer.ffn.ln_gain);
            f(&format!("layer{l}.ffn.ln_bias"), &layer.ffn.ln_bias);
            f(&format!("layer{l}.ffn.w1"), &layer.ffn.w1);
            f(&format!("layer{l}.ffn.w2"), &layer.ffn.w2);
        }
        f("ln_f.gain", &self.lnf_gain);
        f("ln_f.bias", &self.lnf_bias);
        f("w_out", &self.w_out);
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor2D)) {
        f("tok_embed", &mut self.tok_embed);
        f("pos_embed", &mut self.pos_embed);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            if let Some(attn) = &mut layer.attn {
                f(&format!("layer{l}.attn.ln_gain"), &mut attn.ln_gain);
                f(&format!("layer{l}.attn.ln_bias"), &mut attn.ln_bias);
                for (h, t) in attn.wq.iter_mut().enumerate() {
                    f(&format!("layer{l}.attn.wq{h}"), t);
                }
                for (h, t) in attn.wk.iter_mut().enumerate() {
                    f(&format!("layer{l}.attn.wk{h}"), t);
                }
                for (h, t) in attn.wv.iter_mut().enumerate() {
                    f(&format!("layer{l}.attn.wv{h}"), t);
                }
                f(&format!("layer{l}.attn.wo"), &mut attn.wo);
            }
            f(&format!("layer{l}.ffn.ln_gain"), &mut layer.ffn.ln_gain);
            f(&format!("layer{l}.ffn.ln_bias"), &mut layer.ffn.ln_bias);
            f(&format!("layer{l}.ffn.w1"), &mut layer.ffn.w1);
            f(&format!("layer{l}.ffn.w2"), &mut layer.ffn.w2);
        }
        f("ln_f.gain", &mut self.lnf_gain);
        f("ln_f.bias", &mut self.lnf_bias);
        f("w_out", &mut self.w_out);
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.data().len());
        n
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(|_, t| out.extend_from_slice(t.data()));
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut(|_, t| {
            let len = t.data().len();
            t.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        });
        assert_eq!(off, flat.len(), "flat vector length mismatch");
    }

    /// Accumulates `other` into `self` entry-wise (used for gradient sums).
    pub fn accumulate(&mut self, other: &ModelParams) {
        let mut flat = Vec::new();
        other.visit(|_, t| flat.push(t.clone()));
        let mut i = 0;
        self.visit_mut(|_, t| {
            t.add_assign(&flat[i]).expect("identical structure");
            i += 1;
        });
    }

    pub fn scale_all(&mut self, c: f64) {
        self.visit_mut(|_, t| t.scale_assign(c));
    }

    /// Actual parameter count of one attention sublayer, for checking the
    /// closed-form accounting.
    pub fn attention_param_count(&self, layer: usize) -> usize {
        match &self.layers[layer].attn {
            None => 0,
            Some(a) => {
                let proj: usize = a
                    .wq
                    .iter()
                    .chain(&a.wk)
                    .chain(&a.wv)
                    .map(|t| t.data().len())
                    .sum();
                proj + a.wo.data().len()
            }
        }
    }
}

fn ones(rows: usize, cols: usize) -> Tensor2D {
    let mut t = Tensor2D::zeros(rows, cols);
    for v in t.data_mut() {
        *v = 1.0;
    }
    t
}
