use super::config::Activation;
use super::params::{AttentionLayerParams, FeedForwardParams, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{row_softmax, Tensor2D};

pub const LN_EPS: f64 = 1e-5;

/// Origin of a score matrix: (layer index, head index) where it was computed.
pub type Provenance = (usize, usize);

/// Rolling buffer of the H most recently computed attention score matrices,
/// passed between layers. Slot order follows the algorithm: freshly computed
/// exact heads first, carried-over scores after.
#[derive(Clone, Debug)]
pub struct ReuseBuffer {
    pub heads: Vec<Tensor2D>,
    pub provenance: Vec<Provenance>,
}

impl ReuseBuffer {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// Row-stochastic attention scores for one head:
/// `row_softmax((z Wq)(z Wk)^T / sqrt(d_head))`.
pub fn attention_scores(
    z: &Tensor2D,
    w_q: &Tensor2D,
    w_k: &Tensor2D,
    d_head: usize,
) -> Result<Tensor2D> {
    let q = z.matmul(w_q)?;
    let k = z.matmul(w_k)?;
    let logits = q.matmul_transpose_b(&k)?;
    row_softmax(&logits, 1.0 / (d_head as f64).sqrt())
}

/// Combines per-head score matrices with value projections and the output
/// projection: `concat_h(A_h (z Wv_h)) Wo`.
pub fn attention_apply(
    scores: &[Tensor2D],
    z: &Tensor2D,
    w_v: &[Tensor2D],
    w_o: &Tensor2D,
) -> Result<Tensor2D> {
    if scores.len() != w_v.len() || scores.is_empty() {
        return Err(Error::Config(format!(
            "head count mismatch: {} score matrices vs {} value projections",
            scores.len(),
            w_v.len()
        )));
    }
    let n = z.rows();
    let d_head = w_v[0].cols();
    let d = d_head * w_v.len();
    if w_o.rows() != d {
        return Err(Error::Config(format!(
            "output projection rows {} != heads*d_head {}",
            w_o.rows(),
            d
        )));
    }
    let mut concat = Tensor2D::zeros(n, d);
    for (h, (a, wv)) in scores.iter().zip(w_v).enumerate() {
        let v = z.matmul(wv)?;
        let o = a.matmul(&v)?;
        for i in 0..n {
            let src = o.row(i);
            let dst = &mut concat.row_mut(i)[h * d_head..(h + 1) * d_head];
            dst.copy_from_slice(src);
        }
    }
    concat.matmul(w_o)
}

/// Two-projection feed-forward with the tokenwise nonlinearity between them.
/// Residual and layer norm are applied by the caller.
pub fn feedforward(y: &Tensor2D, ff: &FeedForwardParams, activation: Activation) -> Result<Tensor2D> {
    let pre = y.matmul(&ff.w1)?;
    let act = pre.map(|v| activation.apply(v));
    act.matmul(&ff.w2)
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    /// Normalized rows (x - mu) * invstd, before gain/bias.
    pub normalized: Tensor2D,
    pub invstd: Vec<f64>,
}

/// Row-wise layer norm with gain and bias.
pub fn layer_norm(x: &Tensor2D, gain: &Tensor2D, bias: &Tensor2D) -> (Tensor2D, LayerNormCache) {
    let (n, d) = (x.rows(), x.cols());
    let mut normalized = Tensor2D::zeros(n, d);
    let mut out = Tensor2D::zeros(n, d);
    let mut invstd = vec![0.0; n];
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        invstd[i] = istd;
        for j in 0..d {
            let nv = (row[j] - mean) * istd;
            normalized.set(i, j, nv);
            out.set(i, j, nv * gain.get(0, j) + bias.get(0, j));
        }
    }
    (out, LayerNormCache { normalized, invstd })
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    pub scores: Tensor2D,
    pub provenance: Provenance,
    /// Query/key activations, present only for exact heads.
    pub qk: Option<(Tensor2D, Tensor2D)>,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    pub zn: Tensor2D,
    pub ln: LayerNormCache,
    pub heads: Vec<HeadCache>,
    pub values: Vec<Tensor2D>,
    pub concat: Tensor2D,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    pub x_in: Tensor2D,
    pub attn: Option<AttentionCache>,
    /// Input to the feed-forward sublayer (x_in + attention output, or x_in
    /// for skip layers).
    pub y: Tensor2D,
    pub zn2: Tensor2D,
    pub ln2: LayerNormCache,
    pub ff_pre: Tensor2D,
    pub ff_act: Tensor2D,
}

/// One reuse multi-head attention layer: exact heads compute their own
/// scores, reuse heads copy buffer entries verbatim, all heads apply their
/// own value projections, then residual is added.
///
/// Returns the sublayer output (post-residual, pre-FFN), the updated buffer,
/// and the cache needed for the backward pass.
pub fn reuse_multihead_forward(
    layer_index: usize,
    x: &Tensor2D,
    buffer: Option<&ReuseBuffer>,
    params: &AttentionLayerParams,
    exact_heads: usize,
    heads: usize,
    d_head: usize,
) -> Result<(Tensor2D, ReuseBuffer, AttentionCache)> {
    if layer_index == 0 && exact_heads < heads {
        return Err(Error::Config(
            "first layer must compute all attention scores exactly".into(),
        ));
    }
    let reused = heads - exact_heads;
    if reused > 0 {
        let buf = buffer.ok_or_else(|| {
            Error::Config(format!(
                "layer {layer_index} reuses {reused} heads but no buffer is available"
            ))
        })?;
        if buf.len() < reused {
            return Err(Error::Config(format!(
                "layer {layer_index} needs {reused} buffered scores, buffer has {}",
                buf.len()
            )));
        }
    }
    let (zn, ln) = layer_norm(x, &params.ln_gain, &params.ln_bias);
    let scale = 1.0 / (d_head as f64).sqrt();
    let mut head_caches = Vec::with_capacity(heads);
    for e in 0..exact_heads {
        let q = zn.matmul(&params.wq[e])?;
        let k = zn.matmul(&params.wk[e])?;
        let logits = q.matmul_transpose_b(&k)?;
        let a = row_softmax(&logits, scale)?;
        head_caches.push(HeadCache {
            scores: a,
            provenance: (layer_index, e),
            qk: Some((q, k)),
        });
    }
    if reused > 0 {
        let buf = buffer.unwrap();
        for r in 0..reused {
            // verbatim copy: the reused matrix is bitwise identical to the
            // buffer entry
            head_caches.push(HeadCache {
                scores: buf.heads[r].clone(),
                provenance: buf.provenance[r],
                qk: None,
            });
        }
    }
    let n = x.rows();
    let d = d_head * heads;
    let mut values = Vec::with_capacity(heads);
    let mut concat = Tensor2D::zeros(n, d);
    for (h, hc) in head_caches.iter().enumerate() {
        let v = zn.matmul(&params.wv[h])?;
        let o = hc.scores.matmul(&v)?;
        for i in 0..n {
            concat.row_mut(i)[h * d_head..(h + 1) * d_head].copy_from_slice(o.row(i));
        }
        values.push(v);
    }
    let attn_out = concat.matmul(&params.wo)?;
    let y = x.add(&attn_out)?;
    let new_buffer = ReuseBuffer {
        heads: head_caches.iter().map(|hc| hc.scores.clone()).collect(),
        provenance: head_caches.iter().map(|hc| hc.provenance).collect(),
    };
    let cache = AttentionCache {
        zn,
        ln,
        heads: head_caches,
        values,
        concat,
    };
    Ok((y, new_buffer, cache))
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub x0: Tensor2D,
    pub layers: Vec<LayerCache>,
    pub znf: Tensor2D,
    pub lnf: LayerNormCache,
    pub logits: Tensor2D,
    pub tokens: Vec<usize>,
}

impl ForwardPass {
    /// Per-layer captured score matrices; None for skip layers.
    pub fn capture(&self) -> Vec<Option<Vec<Tensor2D>>> {
        self.layers
            .iter()
            .map(|lc| {
                lc.attn
                    .as_ref()
                    .map(|a| a.heads.iter().map(|h| h.scores.clone()).collect())
            })
            .collect()
    }

    pub fn capture_refs(&self) -> Vec<Option<Vec<&Tensor2D>>> {
        self.layers
            .iter()
            .map(|lc| {
                lc.attn
                    .as_ref()
                    .map(|a| a.heads.iter().map(|h| &h.scores).collect())
            })
            .collect()
    }

    pub fn provenance(&self) -> Vec<Option<Vec<Provenance>>> {
        self.layers
            .iter()
            .map(|lc| {
                lc.attn
                    .as_ref()
                    .map(|a| a.heads.iter().map(|h| h.provenance).collect())
            })
            .collect()
    }
}

/// Full encoder forward pass: embedding lookup plus learned positional
/// embedding, L layers wired per the schedule, final norm and projection to
/// logits. The returned cache holds every intermediate needed for backward
/// and all captured score matrices.
pub fn transformer_forward(params: &ModelParams, tokens: &[usize]) -> Result<ForwardPass> {
    let cfg = &params.config;
    let n = tokens.len();
    if n == 0 {
        return Err(Error::InvalidDimension {
            what: "sequence length",
            value: 0,
        });
    }
    if n > cfg.max_n {
        return Err(Error::SequenceTooLong { n, max_n: cfg.max_n });
    }
    let d = cfg.d_model;
    let mut x = Tensor2D::zeros(n, d);
    for (i, &tok) in tokens.iter().enumerate() {
        if tok >= cfg.vocab {
            return Err(Error::OutOfVocab {
                token: tok,
                vocab: cfg.vocab,
            });
        }
        for j in 0..d {
            x.set(i, j, params.tok_embed.get(tok, j) + params.pos_embed.get(i, j));
        }
    }
    let x0 = x.clone();
    let mut buffer: Option<ReuseBuffer> = None;
    let mut layer_caches = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let plan = cfg.schedule.layer(l);
        let layer = &params.layers[l];
        let (y, attn_cache) = if plan.skip_attention {
            // buffer passes through unchanged
            (x.clone(), None)
        } else {
            let ap = layer.attn.as_ref().expect("non-skip layer has attention");
            let (y, new_buf, cache) = reuse_multihead_forward(
                l,
                &x,
                buffer.as_ref(),
                ap,
                plan.exact_heads,
                cfg.heads,
                cfg.d_head(),
            )?;
            buffer = Some(new_buf);
            (y, Some(cache))
        };
        let (zn2, ln2) = layer_norm(&y, &layer.ffn.ln_gain, &layer.ffn.ln_bias);
        let ff_pre = zn2.matmul(&layer.ffn.w1)?;
        let ff_act = ff_pre.map(|v| cfg.activation.apply(v));
        let ff_out = ff_act.matmul(&layer.ffn.w2)?;
        let x_next = y.add(&ff_out)?;
        layer_caches.push(LayerCache {
            x_in: x,
            attn: attn_cache,
            y,
            zn2,
            ln2,
            ff_pre,
            ff_act,
        });
        x = x_next;
    }
    let (znf, lnf) = layer_norm(&x, &params.lnf_gain, &params.lnf_bias);
    let logits = znf.matmul(&params.w_out)?;
    // the final hidden state is recoverable from the last cache plus ff terms;
    // store it implicitly via znf/lnf and keep x in no extra field
    let _ = x;
    Ok(ForwardPass {
        x0,
        layers: layer_caches,
        znf,
        lnf,
        logits,
        tokens: tokens.to_vec(),
    })
}
