use super::*;
use crate::numerics::{row_softmax, Rng, Tensor2D};

fn config_with(schedule: ReuseSchedule, heads: usize, d: usize) -> ModelConfig {
    ModelConfig {
        layers: schedule.layers(),
        heads,
        d_model: d,
        d_ff: 2 * d,
        vocab: 13,
        max_n: 8,
        activation: Activation::Gelu,
        schedule,
        detach_reused_scores: false,
    }
}

/// Straight-line reimplementation of the score computation, kept independent
/// of the production code path.
fn oracle_attention_scores(z: &Tensor2D, wq: &Tensor2D, wk: &Tensor2D, d_head: usize) -> Tensor2D {
    let n = z.rows();
    let q = z.matmul(wq).unwrap();
    let k = z.matmul(wk).unwrap();
    let mut logits = Tensor2D::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..q.cols() {
                s += q.get(i, p) * k.get(j, p);
            }
            logits.set(i, j, s / (d_head as f64).sqrt());
        }
    }
    let mut out = Tensor2D::zeros(n, n);
    for i in 0..n {
        let max = (0..n).map(|j| logits.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..n {
            sum += (logits.get(i, j) - max).exp();
        }
        for j in 0..n {
            out.set(i, j, (logits.get(i, j) - max).exp() / sum);
        }
    }
    out
}

#[test]
fn single_token_attention_is_one() {
    let mut rng = Rng::new(1);
    let z = rng.normal_tensor(1, 4, 1.0);
    let wq = rng.normal_tensor(4, 2, 1.0);
    let wk = rng.normal_tensor(4, 2, 1.0);
    let a = attention_scores(&z, &wq, &wk, 2).unwrap();
    assert_eq!(a.rows(), 1);
    assert!((a.get(0, 0) - 1.0).abs() < 1e-15);
}

#[test]
fn zero_input_gives_uniform_attention() {
    let z = Tensor2D::zeros(4, 6);
    let mut rng = Rng::new(2);
    let wq = rng.normal_tensor(6, 3, 1.0);
    let wk = rng.normal_tensor(6, 3, 1.0);
    let a = attention_scores(&z, &wq, &wk, 3).unwrap();
    for v in a.data() {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn attention_scores_match_oracle() {
    let mut rng = Rng::new(3);
    let z = rng.normal_tensor(3, 4, 1.0);
    let wq = rng.normal_tensor(4, 4, 1.0);
    let wk = rng.normal_tensor(4, 4, 1.0);
    let a = attention_scores(&z, &wq, &wk, 4).unwrap();
    let oracle = oracle_attention_scores(&z, &wq, &wk, 4);
    for (x, y) in a.data().iter().zip(oracle.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn identity_routing_reproduces_input() {
    // A = I per head, W_V = identity blocks, W_O = identity: output == z
    let n = 3;
    let d = 4;
    let d_head = 2;
    let z = {
        let mut rng = Rng::new(4);
        rng.normal_tensor(n, d, 1.0)
    };
    let scores = vec![Tensor2D::identity(n), Tensor2D::identity(n)];
    let mut wv = Vec::new();
    for h in 0..2 {
        let mut w = Tensor2D::zeros(d, d_head);
        for j in 0..d_head {
            w.set(h * d_head + j, j, 1.0);
        }
        wv.push(w);
    }
    let out = attention_apply(&scores, &z, &wv, &Tensor2D::identity(d)).unwrap();
    for (x, y) in out.data().iter().zip(z.data()) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn uniform_attention_averages_rows() {
    let n = 4;
    let mut rng = Rng::new(5);
    let z = rng.normal_tensor(n, 3, 1.0);
    let wv = vec![rng.normal_tensor(3, 3, 1.0)];
    let wo = rng.normal_tensor(3, 3, 1.0);
    let uniform = Tensor2D::from_vec(n, n, vec![0.25; n * n]).unwrap();
    let out = attention_apply(&[uniform], &z, &wv, &wo).unwrap();
    let zv = z.matmul(&wv[0]).unwrap();
    let mut mean = vec![0.0; 3];
    for i in 0..n {
        for j in 0..3 {
            mean[j] += zv.get(i, j) / n as f64;
        }
    }
    let mean_row = Tensor2D::from_vec(1, 3, mean).unwrap().matmul(&wo).unwrap();
    for i in 0..n {
        for j in 0..3 {
            assert!((out.get(i, j) - mean_row.get(0, j)).abs() < 1e-12);
        }
    }
}

#[test]
fn feedforward_zero_weights_give_zero() {
    let y = {
        let mut rng = Rng::new(6);
        rng.normal_tensor(2, 4, 1.0)
    };
    let ff = FeedForwardParams {
        ln_gain: Tensor2D::zeros(1, 4),
        ln_bias: Tensor2D::zeros(1, 4),
        w1: Tensor2D::zeros(4, 8),
        w2: Tensor2D::zeros(8, 4),
    };
    let out = feedforward(&y, &ff, Activation::Relu).unwrap();
    assert!(out.data().iter().all(|v| *v == 0.0));
}

#[test]
fn relu_kills_negative_preactivations() {
    let y = Tensor2D::from_rows(&[vec![1.0, 1.0]]).unwrap();
    let ff = FeedForwardParams {
        ln_gain: Tensor2D::zeros(1, 2),
        ln_bias: Tensor2D::zeros(1, 2),
        w1: Tensor2D::from_rows(&[vec![-1.0, -2.0], vec![-3.0, -0.5]]).unwrap(),
        w2: {
            let mut rng = Rng::new(7);
            rng.normal_tensor(2, 2, 1.0)
        },
    };
    let out = feedforward(&y, &ff, Activation::Relu).unwrap();
    assert!(out.data().iter().all(|v| *v == 0.0));
}

#[test]
fn feedforward_matches_straightline_oracle() {
    let mut rng = Rng::new(8);
    let y = rng.normal_tensor(3, 4, 1.0);
    let ff = FeedForwardParams {
        ln_gain: Tensor2D::zeros(1, 4),
        ln_bias: Tensor2D::zeros(1, 4),
        w1: rng.normal_tensor(4, 6, 1.0),
        w2: rng.normal_tensor(6, 4, 1.0),
    };
    let out = feedforward(&y, &ff, Activation::Relu).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            let mut s = 0.0;
            for p in 0..6 {
                let mut pre = 0.0;
                for q in 0..4 {
                    pre += y.get(i, q) * ff.w1.get(q, p);
                }
                s += pre.max(0.0) * ff.w2.get(p, j);
            }
            assert!((out.get(i, j) - s).abs() < 1e-12);
        }
    }
}

/// Builds two models with identical weights but different schedules. Shared
/// tensors are copied from the first into the second by name where shapes
/// agree.
fn clone_weights_into(src: &ModelParams, dst: &mut ModelParams) {
    let mut named = std::collections::HashMap::new();
    src.visit(|name, t| {
        named.insert(name.to_string(), t.clone());
    });
    dst.visit_mut(|name, t| {
        if let Some(s) = named.get(name) {
            if s.same_shape(t) {
                *t = s.clone();
            }
        }
    });
}

#[test]
fn degenerate_schedules_are_bitwise_identical_to_baseline() {
    let base_cfg = config_with(ReuseSchedule::baseline(4, 2), 2, 8);
    let mut rng = Rng::new(9);
    let base = ModelParams::init(&base_cfg, &mut rng).unwrap();
    let tokens = vec![1, 5, 3, 7, 2];
    let base_pass = transformer_forward(&base, &tokens).unwrap();

    for schedule in [
        ReuseSchedule::partial_layer(0, 4, 2).unwrap(),
        ReuseSchedule::full_layer(0, 4, 2).unwrap(),
    ] {
        let cfg = config_with(schedule, 2, 8);
        let mut rng2 = Rng::new(999);
        let mut other = ModelParams::init(&cfg, &mut rng2).unwrap();
        clone_weights_into(&base, &mut other);
        let pass = transformer_forward(&other, &tokens).unwrap();
        assert_eq!(
            base_pass.logits.data(),
            pass.logits.data(),
            "bitwise equality required"
        );
    }
}

#[test]
fn full_layer_reuse_copies_all_scores_verbatim() {
    let cfg = config_with(ReuseSchedule::full_layer(1, 3, 2).unwrap(), 2, 8);
    let mut rng = Rng::new(10);
    let params = ModelParams::init(&cfg, &mut rng).unwrap();
    let pass = transformer_forward(&params, &[3, 1, 4, 1, 5]).unwrap();
    let capture = pass.capture();
    let layer1 = capture[0].as_ref().unwrap();
    let layer2 = capture[1].as_ref().unwrap();
    for h in 0..2 {
        assert_eq!(layer1[h].data(), layer2[h].data(), "head {h} not verbatim");
    }
}

/// Hand trace of the rolling buffer for H=2, K=1, L=4 partial-layer reuse:
/// R2 = [exact2, exact1-head1], R3 = [exact3, exact2].
#[test]
fn rolling_window_matches_hand_trace() {
    let cfg = config_with(ReuseSchedule::partial_layer(1, 4, 2).unwrap(), 2, 8);
    let mut rng = Rng::new(11);
    let params = ModelParams::init(&cfg, &mut rng).unwrap();
    let pass = transformer_forward(&params, &[2, 7, 1, 6]).unwrap();
    let prov = pass.provenance();

    // layer 2 (index 1): head 0 exact here, head 1 copied from layer 1 head 0
    assert_eq!(prov[1].as_ref().unwrap()[0], (1, 0));
    assert_eq!(prov[1].as_ref().unwrap()[1], (0, 0));
    // layer 3 (index 2): head 0 exact, head 1 copied from layer 2's exact head
    assert_eq!(prov[2].as_ref().unwrap()[0], (2, 0));
    assert_eq!(prov[2].as_ref().unwrap()[1], (1, 0));
    // layer 4 (index 3): fully exact
    assert_eq!(prov[3].as_ref().unwrap()[0], (3, 0));
    assert_eq!(prov[3].as_ref().unwrap()[1], (3, 1));

    // and the matrices themselves are bitwise equal to their origins
    let capture = pass.capture();
    assert_eq!(
        capture[1].as_ref().unwrap()[1].data(),
        capture[0].as_ref().unwrap()[0].data()
    );
    assert_eq!(
        capture[2].as_ref().unwrap()[1].data(),
        capture[1].as_ref().unwrap()[0].data()
    );
}

#[test]
fn captured_scores_are_row_stochastic() {
    for (_, schedule) in tiny_schedules() {
        let cfg = tiny_config(schedule);
        let mut rng = Rng::new(12);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let pass = transformer_forward(&params, &[1, 2, 3, 4, 5]).unwrap();
        for layer in pass.capture().into_iter().flatten() {
            for a in layer {
                a.check_row_stochastic(1e-10).unwrap();
            }
        }
    }
}

#[test]
fn identical_tokens_without_positions_give_identical_rows() {
    let cfg = config_with(ReuseSchedule::baseline(2, 2), 2, 8);
    let mut rng = Rng::new(13);
    let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
    params.pos_embed = Tensor2D::zeros(cfg.max_n, cfg.d_model);
    let pass = transformer_forward(&params, &[4, 4, 4, 4]).unwrap();
    for layer in pass.capture().into_iter().flatten() {
        for a in layer {
            let first = a.row(0).to_vec();
            for i in 1..a.rows() {
                for (x, y) in a.row(i).iter().zip(&first) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn single_layer_capture_has_h_matrices() {
    let cfg = config_with(ReuseSchedule::baseline(1, 2), 2, 8);
    let mut rng = Rng::new(14);
    let params = ModelParams::init(&cfg, &mut rng).unwrap();
    let pass = transformer_forward(&params, &[0, 1]).unwrap();
    assert_eq!(pass.capture()[0].as_ref().unwrap().len(), 2);
}

#[test]
fn out_of_vocab_and_too_long_rejected() {
    let cfg = config_with(ReuseSchedule::baseline(1, 2), 2, 8);
    let mut rng = Rng::new(15);
    let params = ModelParams::init(&cfg, &mut rng).unwrap();
    assert!(transformer_forward(&params, &[99]).is_err());
    assert!(transformer_forward(&params, &vec![0; cfg.max_n + 1]).is_err());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let cfg = config_with(ReuseSchedule::baseline(2, 2), 2, 8);
    let mut rng = Rng::new(16);
    let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
    let before = params.flatten();
    let mut state = AdamState::new(&params);
    let hyper = AdamHyperparams {
        learning_rate: 0.0,
        ..Default::default()
    };
    let batch = vec![Example {
        tokens: vec![1, 2, 3],
        targets: vec![Some(3), Some(2), Some(1)],
    }];
    train_step(&mut params, &mut state, &batch, &hyper, false).unwrap();
    assert_eq!(before, params.flatten());
}

#[test]
fn training_is_bitwise_deterministic() {
    let cfg = config_with(ReuseSchedule::partial_layer(1, 4, 2).unwrap(), 2, 8);
    let run = || {
        let mut rng = Rng::new(17);
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyperparams::default();
        for step in 0..100 {
            let mut batch_rng = rng.fork(step);
            let batch: Vec<Example> = (0..4)
                .map(|_| {
                    let tokens: Vec<usize> =
                        (0..5).map(|_| batch_rng.below(cfg.vocab)).collect();
                    let targets = tokens.iter().map(|t| Some(*t)).collect();
                    Example { tokens, targets }
                })
                .collect();
            train_step(&mut params, &mut state, &batch, &hyper, false).unwrap();
        }
        params.flatten()
    };
    let a = run();
    let b = run();
    let abits: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
    let bbits: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
    assert_eq!(abits, bbits);
}

#[test]
fn parallel_batch_matches_sequential_bitwise() {
    let cfg = config_with(ReuseSchedule::full_layer(1, 3, 2).unwrap(), 2, 8);
    let run = |parallel: bool| {
        let mut rng = Rng::new(18);
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        let mut state = AdamState::new(&params);
        let hyper = AdamHyperparams::default();
        for step in 0..10 {
            let mut batch_rng = rng.fork(step);
            let batch: Vec<Example> = (0..8)
                .map(|_| {
                    let tokens: Vec<usize> =
                        (0..5).map(|_| batch_rng.below(cfg.vocab)).collect();
                    let targets = tokens.iter().map(|t| Some(*t)).collect();
                    Example { tokens, targets }
                })
                .collect();
            train_step(&mut params, &mut state, &batch, &hyper, parallel).unwrap();
        }
        params.flatten()
    };
    let seq: Vec<u64> = run(false).iter().map(|v| v.to_bits()).collect();
    let par: Vec<u64> = run(true).iter().map(|v| v.to_bits()).collect();
    assert_eq!(seq, par);
}

#[test]
fn first_layer_with_reuse_rejected() {
    // reuse_multihead_forward refuses a first layer that is not fully exact
    let mut rng = Rng::new(19);
    let d = 8;
    let params = AttentionLayerParams {
        ln_gain: Tensor2D::from_vec(1, d, vec![1.0; d]).unwrap(),
        ln_bias: Tensor2D::zeros(1, d),
        wq: vec![rng.normal_tensor(d, 4, 0.1)],
        wk: vec![rng.normal_tensor(d, 4, 0.1)],
        wv: vec![rng.normal_tensor(d, 4, 0.1), rng.normal_tensor(d, 4, 0.1)],
        wo: rng.normal_tensor(d, d, 0.1),
    };
    let x = rng.normal_tensor(3, d, 1.0);
    let err = reuse_multihead_forward(0, &x, None, &params, 1, 2, 4);
    assert!(err.is_err());
}

#[test]
fn softmax_row_convention_in_scores() {
    // sanity: scores built through row_softmax have query rows
    let mut rng = Rng::new(20);
    let z = rng.normal_tensor(4, 8, 1.0);
    let wq = rng.normal_tensor(8, 4, 0.5);
    let wk = rng.normal_tensor(8, 4, 0.5);
    let a = attention_scores(&z, &wq, &wk, 4).unwrap();
    a.check_row_stochastic(1e-12).unwrap();
    let q = z.matmul(&wq).unwrap();
    let k = z.matmul(&wk).unwrap();
    let logits = q.matmul_transpose_b(&k).unwrap();
    let again = row_softmax(&logits, 0.5).unwrap();
    assert_eq!(a.data(), again.data());
}
