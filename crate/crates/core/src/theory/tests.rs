use super::*;
use crate::numerics::{Rng, Tensor2D};

#[test]
fn lemma1_gaussian_ratio_near_one() {
    let v = lemma1_mc(16, 8, 100_000, Distribution::Gaussian, 7, true).unwrap();
    assert!(
        (v.ratio - 1.0).abs() <= 0.05,
        "gaussian ratio {} off target",
        v.ratio
    );
}

#[test]
fn lemma1_rademacher_ratio_near_one() {
    let v = lemma1_mc(16, 8, 100_000, Distribution::Rademacher, 7, true).unwrap();
    assert!(
        (v.ratio - 1.0).abs() <= 0.05,
        "rademacher ratio {} off target",
        v.ratio
    );
}

#[test]
fn lemma1_small_sample_budget() {
    let v = lemma1_mc(16, 8, 10_000, Distribution::Gaussian, 11, true).unwrap();
    assert!((v.ratio - 1.0).abs() <= 0.15, "ratio {} off target", v.ratio);
}

#[test]
fn lemma1_tied_heads_give_zero() {
    let v = lemma1_mc_tied(8, 4, 10_000, Distribution::Gaussian, 3).unwrap();
    assert_eq!(v.lhs, 0.0);
    assert_eq!(v.ratio, 0.0);
}

#[test]
fn lemma1_rejects_tiny_sample_counts() {
    assert!(lemma1_mc(8, 4, 100, Distribution::Gaussian, 1, false).is_err());
}

#[test]
fn lemma1_parallel_matches_sequential_bitwise() {
    let a = lemma1_mc(8, 4, 10_000, Distribution::Gaussian, 5, false).unwrap();
    let b = lemma1_mc(8, 4, 10_000, Distribution::Gaussian, 5, true).unwrap();
    assert_eq!(a.lhs.to_bits(), b.lhs.to_bits());
    assert_eq!(a.rhs.to_bits(), b.rhs.to_bits());
}

#[test]
fn forward_zero_weights_is_identity() {
    let mut rng = Rng::new(1);
    let x = rng.normal_tensor(4, 3, 1.0);
    let a = Tensor2D::identity(4);
    let z = Tensor2D::zeros(3, 3);
    let y = linear_two_layer_forward(&x, &a, &a, &z, &z).unwrap();
    assert!(y.sub(&x).unwrap().max_abs() < 1e-15);
}

#[test]
fn forward_identity_attention_expands() {
    let mut rng = Rng::new(2);
    let x = rng.normal_tensor(4, 3, 1.0);
    let w1 = rng.normal_tensor(3, 3, 0.5);
    let w2 = rng.normal_tensor(3, 3, 0.5);
    let i = Tensor2D::identity(4);
    let y = linear_two_layer_forward(&x, &i, &i, &w1, &w2).unwrap();
    let expected = x
        .add(&x.matmul(&w1).unwrap())
        .unwrap()
        .add(&x.matmul(&w2).unwrap())
        .unwrap()
        .add(&x.matmul(&w1).unwrap().matmul(&w2).unwrap())
        .unwrap();
    assert!(y.sub(&expected).unwrap().max_abs() < 1e-12);
}

#[test]
fn forward_matches_term_by_term_oracle() {
    let mut rng = Rng::new(3);
    let x = rng.normal_tensor(5, 4, 1.0);
    let a1 = {
        let l = rng.normal_tensor(5, 5, 1.0);
        crate::numerics::row_softmax(&l, 1.0).unwrap()
    };
    let a2 = {
        let l = rng.normal_tensor(5, 5, 1.0);
        crate::numerics::row_softmax(&l, 1.0).unwrap()
    };
    let w1 = rng.normal_tensor(4, 4, 0.3);
    let w2 = rng.normal_tensor(4, 4, 0.3);
    let y = linear_two_layer_forward(&x, &a1, &a2, &w1, &w2).unwrap();
    // straight-line recomputation, scalar loops only
    let mut oracle = Tensor2D::zeros(5, 4);
    let term = |a: &Tensor2D, m: &Tensor2D| a.matmul(m).unwrap();
    let t1 = term(&a1, &x.matmul(&w1).unwrap());
    let t2 = term(&a2, &x.matmul(&w2).unwrap());
    let t3 = term(&a2, &term(&a1, &x.matmul(&w1).unwrap().matmul(&w2).unwrap()));
    for r in 0..5 {
        for c in 0..4 {
            let v = x.get(r, c) + t1.get(r, c) + t2.get(r, c) + t3.get(r, c);
            oracle.set(r, c, v);
        }
    }
    assert!(y.sub(&oracle).unwrap().max_abs() < 1e-12);
}

#[test]
fn lemma2_epsilon_zero_gives_zero_error() {
    let inst = sample_lemma2_instance(8, 8, 42, 0.0).unwrap();
    let v = lemma2_check(&inst).unwrap();
    assert!(v.err < 1e-12, "err {} not ~0", v.err);
    assert!(v.holds);
}

#[test]
fn lemma2_target_is_hit_within_ten_percent() {
    let inst = sample_lemma2_instance(8, 8, 9, 0.1).unwrap();
    assert!(
        (0.09..=0.11).contains(&inst.epsilon),
        "achieved epsilon {}",
        inst.epsilon
    );
}

#[test]
fn lemma2_infeasible_target_rejected() {
    assert!(sample_lemma2_instance(8, 8, 1, 3.0).is_err());
}

#[test]
fn lemma2_holds_on_random_instance_sweep() {
    let targets = [0.0, 0.05, 0.1, 0.25, 0.5];
    let verdicts = lemma2_sweep(8, 8, 1234, &targets, 40).unwrap();
    assert_eq!(verdicts.len(), 200);
    for v in &verdicts {
        assert!(
            v.holds,
            "bound violated: eps={} err={} bound={}",
            v.epsilon, v.err, v.bound
        );
    }
}

#[test]
fn lemma2_equal_weights_tighter_bound() {
    // with W1 = W2 the cross term of the error expansion vanishes and the
    // error obeys the tighter eps + eps^2/2
    for seed in 0..20u64 {
        let base = sample_lemma2_instance(8, 8, 1000 + seed, 0.3).unwrap();
        let inst = LinearTwoLayerInstance::new(
            base.x.clone(),
            base.a1.clone(),
            base.a2.clone(),
            base.w1.clone(),
            base.w1.clone(),
        )
        .unwrap();
        let v = lemma2_check(&inst).unwrap();
        let tight = inst.epsilon + inst.epsilon * inst.epsilon / 2.0;
        assert!(
            v.err <= tight + 1e-9,
            "tight bound violated: err={} tight={}",
            v.err,
            tight
        );
    }
}

#[test]
fn lemma2_norm_hypothesis_enforced() {
    let base = sample_lemma2_instance(6, 6, 5, 0.2).unwrap();
    let big_w = base.w1.scale(3.0 / 0.999);
    let err = LinearTwoLayerInstance::new(
        base.x.clone(),
        base.a1.clone(),
        base.a2.clone(),
        big_w,
        base.w2.clone(),
    );
    assert!(err.is_err());
    let msg = format!("{}", err.unwrap_err());
    assert!(msg.contains("W1"), "message should name the norm: {msg}");
}

/// Negative control: a deliberately violated hypothesis (large W1). The bound
/// is not asserted either way; the check must still evaluate cleanly.
#[test]
fn lemma2_negative_control_evaluates() {
    let base = sample_lemma2_instance(6, 6, 5, 0.3).unwrap();
    let norm1 =
        crate::numerics::spectral_norm(&base.w1, 10_000, 1e-12).value;
    let big_w = base.w1.scale(3.0 / norm1);
    let inst = LinearTwoLayerInstance::new_unchecked(
        base.x.clone(),
        base.a1.clone(),
        base.a2.clone(),
        big_w,
        base.w2.clone(),
    )
    .unwrap();
    let v = lemma2_check(&inst).unwrap();
    assert!(v.err.is_finite());
}

#[test]
fn bound_is_monotone_in_epsilon() {
    let targets = [0.0, 0.1, 0.25, 0.5, 1.0];
    let mut prev = -1.0;
    for &t in &targets {
        let inst = sample_lemma2_instance(8, 8, 77, t).unwrap();
        let v = lemma2_check(&inst).unwrap();
        assert!(v.bound >= prev, "bound not nondecreasing at target {t}");
        prev = v.bound;
    }
}
