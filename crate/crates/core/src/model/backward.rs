use super::forward::{ForwardPass, LayerNormCache, Provenance};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::{row_softmax_backward, Tensor2D};
use std::collections::HashMap;

/// Backward of row-wise layer norm. Returns (dx, dgain, dbias).
fn layer_norm_backward(
    dout: &Tensor2D,
    cache: &LayerNormCache,
    gain: &Tensor2D,
) -> (Tensor2D, Tensor2D, Tensor2D) {
    let (n, d) = (dout.rows(), dout.cols());
    let mut dx = Tensor2D::zeros(n, d);
    let mut dgain = Tensor2D::zeros(1, d);
    let mut dbias = Tensor2D::zeros(1, d);
    for i in 0..n {
        let go = dout.row(i);
        let xhat = cache.normalized.row(i);
        let istd = cache.invstd[i];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            let dxh = go[j] * gain.get(0, j);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            let dxh = go[j] * gain.get(0, j);
            dx.set(i, j, istd * (dxh - mean_dxhat - xhat[j] * mean_dxhat_xhat));
            dgain.set(0, j, dgain.get(0, j) + go[j] * xhat[j]);
            dbias.set(0, j, dbias.get(0, j) + go[j]);
        }
    }
    (dx, dgain, dbias)
}

/// Exact analytic gradients for every parameter given the upstream gradient
/// of the logits.
///
/// Gradients of reused score matrices are routed back to the layer that
/// originally computed them: processing layers in reverse order, each
/// consumer deposits its score gradient under the origin (layer, head) key,
/// and the origin layer folds the accumulated gradient into its own softmax
/// backward. `detach_reused_scores` in the config turns this routing off.
pub fn transformer_backward(
    params: &ModelParams,
    pass: &ForwardPass,
    dlogits: &Tensor2D,
) -> Result<ModelParams> {
    let cfg = &params.config;
    let mut grads = params.zeros_like();
    if pass.layers.len() != cfg.layers {
        return Err(Error::Config("forward cache does not match config".into()));
    }

    // logits = znf * w_out
    grads.w_out = pass.znf.transpose_a_matmul(dlogits)?;
    let dznf = dlogits.matmul_transpose_b(&params.w_out)?;
    let (mut dx, dgain, dbias) = layer_norm_backward(&dznf, &pass.lnf, &params.lnf_gain);
    grads.lnf_gain = dgain;
    grads.lnf_bias = dbias;

    let scale = 1.0 / (cfg.d_head() as f64).sqrt();
    let d_head = cfg.d_head();
    let mut pending: HashMap<Provenance, Tensor2D> = HashMap::new();

    for l in (0..cfg.layers).rev() {
        let cache = &pass.layers[l];
        let layer = &params.layers[l];
        let glayer = &mut grads.layers[l];

        // x_next = y + act(zn2 w1) w2, zn2 = LN(y)
        glayer.ffn.w2 = cache.ff_act.transpose_a_matmul(&dx)?;
        let d_ff_act = dx.matmul_transpose_b(&layer.ffn.w2)?;
        let mut d_ff_pre = d_ff_act;
        for (g, p) in d_ff_pre.data_mut().iter_mut().zip(cache.ff_pre.data()) {
            *g *= cfg.activation.derivative(*p);
        }
        glayer.ffn.w1 = cache.zn2.transpose_a_matmul(&d_ff_pre)?;
        let dzn2 = d_ff_pre.matmul_transpose_b(&layer.ffn.w1)?;
        let (dy_ln, dg2, db2) = layer_norm_backward(&dzn2, &cache.ln2, &layer.ffn.ln_gain);
        glayer.ffn.ln_gain = dg2;
        glayer.ffn.ln_bias = db2;
        let dy = dx.add(&dy_ln)?;

        let dx_prev = match (&cache.attn, &layer.attn) {
            (None, None) => dy,
            (Some(ac), Some(ap)) => {
                let gattn = glayer.attn.as_mut().expect("gradient structure matches");
                // y = x_in + concat * wo
                gattn.wo = ac.concat.transpose_a_matmul(&dy)?;
                let dconcat = dy.matmul_transpose_b(&ap.wo)?;
                let n = dy.rows();
                let mut dzn = Tensor2D::zeros(n, cfg.d_model);
                for h in 0..cfg.heads {
                    let mut dc_h = Tensor2D::zeros(n, d_head);
                    for i in 0..n {
                        dc_h
                            .row_mut(i)
                            .copy_from_slice(&dconcat.row(i)[h * d_head..(h + 1) * d_head]);
                    }
                    let hc = &ac.heads[h];
                    // O_h = A_h V_h
                    let da_local = dc_h.matmul_transpose_b(&ac.values[h])?;
                    let dv = hc.scores.transpose_a_matmul(&dc_h)?;
                    gattn.wv[h] = ac.zn.transpose_a_matmul(&dv)?;
                    dzn.add_assign(&dv.matmul_transpose_b(&ap.wv[h])?)?;

                    if let Some((q, k)) = &hc.qk {
                        // exact head: fold in gradients deposited by later
                        // consumers of this score matrix
                        let mut da_total = da_local;
                        if let Some(extra) = pending.remove(&(l, h)) {
                            da_total.add_assign(&extra)?;
                        }
                        let dlogits_raw = row_softmax_backward(&hc.scores, &da_total, scale)?;
                        let dq = dlogits_raw.matmul(k)?;
                        let dk = dlogits_raw.transpose_a_matmul(q)?;
                        gattn.wq[h] = ac.zn.transpose_a_matmul(&dq)?;
                        gattn.wk[h] = ac.zn.transpose_a_matmul(&dk)?;
                        dzn.add_assign(&dq.matmul_transpose_b(&ap.wq[h])?)?;
                        dzn.add_assign(&dk.matmul_transpose_b(&ap.wk[h])?)?;
                    } else if !cfg.detach_reused_scores {
                        // reuse head: route the score gradient to the origin
                        match pending.entry(hc.provenance) {
                            std::collections::hash_map::Entry::Occupied(mut e) => {
                                e.get_mut().add_assign(&da_local)?;
                            }
                            std::collections::hash_map::Entry::Vacant(e) => {
                                e.insert(da_local);
                            }
                        }
                    }
                }
                let (dx_ln, dg1, db1) = layer_norm_backward(&dzn, &ac.ln, &ap.ln_gain);
                gattn.ln_gain = dg1;
                gattn.ln_bias = db1;
                dy.add(&dx_ln)?
            }
            _ => return Err(Error::Config("cache/parameter structure mismatch".into())),
        };
        dx = dx_prev;
    }
    debug_assert!(
        pending.is_empty(),
        "unconsumed score gradients: {:?}",
        pending.keys().collect::<Vec<_>>()
    );

    // x0 rows are tok_embed[token] + pos_embed[position]
    for (i, &tok) in pass.tokens.iter().enumerate() {
        for j in 0..cfg.d_model {
            let g = dx.get(i, j);
            grads
                .tok_embed
                .set(tok, j, grads.tok_embed.get(tok, j) + g);
            grads
                .pos_embed
                .set(i, j, grads.pos_embed.get(i, j) + g);
        }
    }
    Ok(grads)
}

/// Token-level cross-entropy averaged over supervised positions.
///
/// `targets[i] = None` marks a position that does not contribute to the loss
/// (e.g. unmasked positions in masked-token training). Returns the loss and
/// the gradient with respect to the logits.
pub fn cross_entropy(logits: &Tensor2D, targets: &[Option<usize>]) -> Result<(f64, Tensor2D)> {
    if logits.rows() != targets.len() {
        return Err(Error::Config(format!(
            "{} logit rows vs {} targets",
            logits.rows(),
            targets.len()
        )));
    }
    let count = targets.iter().flatten().count();
    if count == 0 {
        return Err(Error::Config("no supervised positions in batch".into()));
    }
    let vocab = logits.cols();
    let mut dlogits = Tensor2D::zeros(logits.rows(), vocab);
    let mut loss = 0.0;
    for (i, target) in targets.iter().enumerate() {
        let Some(t) = target else { continue };
        if *t >= vocab {
            return Err(Error::OutOfVocab {
                token: *t,
                vocab,
            });
        }
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss += log_z - row[*t];
        let drow = dlogits.row_mut(i);
        for j in 0..vocab {
            drow[j] = ((row[j] - max).exp() / sum_exp) / count as f64;
        }
        drow[*t] -= 1.0 / count as f64;
    }
    Ok((loss / count as f64, dlogits))
}
