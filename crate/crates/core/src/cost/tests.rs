use super::*;
use crate::model::{Activation, ModelConfig, ReuseSchedule};
use num_rational::Ratio;

fn config(
    layers: usize,
    heads: usize,
    d_model: usize,
    d_ff: usize,
    vocab: usize,
    max_n: usize,
    schedule: ReuseSchedule,
) -> ModelConfig {
    ModelConfig {
        layers,
        heads,
        d_model,
        d_ff,
        vocab,
        max_n,
        activation: Activation::Gelu,
        schedule,
        detach_reused_scores: false,
    }
}

fn base_like(schedule: ReuseSchedule) -> ModelConfig {
    config(12, 12, 768, 3072, 30522, 512, schedule)
}

fn large_like(schedule: ReuseSchedule) -> ModelConfig {
    config(24, 16, 1024, 4096, 30522, 512, schedule)
}

#[test]
fn attention_cost_closed_form_all_k() {
    for &(d, n, h) in &[(768usize, 512usize, 12usize), (64, 32, 4), (1024, 128, 16)] {
        for k in 0..=h {
            let (flops, params) = attention_layer_cost(d, n, h, k).unwrap();
            let factor = Ratio::from_integer(1i128) - Ratio::new(k as i128, 2 * h as i128);
            let (di, ni) = (d as i128, n as i128);
            assert_eq!(flops, factor * Ratio::from_integer(4 * di * di * ni + 2 * di * ni * ni));
            assert_eq!(params, factor * Ratio::from_integer(4 * di * di));
        }
    }
}

#[test]
fn attention_cost_k_zero_is_baseline() {
    let (flops, params) = attention_layer_cost(768, 512, 12, 0).unwrap();
    let d = 768i128;
    let n = 512i128;
    assert_eq!(flops, Ratio::from_integer(4 * d * d * n + 2 * d * n * n));
    assert_eq!(params, Ratio::from_integer(4 * d * d));
}

#[test]
fn attention_cost_k_equals_h_halves() {
    let (flops, params) = attention_layer_cost(64, 32, 4, 4).unwrap();
    let (f0, p0) = attention_layer_cost(64, 32, 4, 0).unwrap();
    assert_eq!(flops * Ratio::from_integer(2), f0);
    assert_eq!(params * Ratio::from_integer(2), p0);
}

#[test]
fn attention_cost_three_quarters_example() {
    let (flops, _) = attention_layer_cost(768, 512, 12, 6).unwrap();
    let d = 768i128;
    let n = 512i128;
    let full = Ratio::from_integer(4 * d * d * n + 2 * d * n * n);
    assert_eq!(flops, full * Ratio::new(3, 4));
}

#[test]
fn attention_cost_rejects_bad_k() {
    assert!(attention_layer_cost(64, 32, 4, 5).is_err());
}

#[test]
fn base_like_full_layer_ratios() {
    let cfg = base_like(ReuseSchedule::full_layer(6, 12, 12).unwrap());
    let report = model_cost(&cfg, 512, true, FlopConvention::default()).unwrap();
    assert!(
        (report.params_ratio - 0.94).abs() <= 0.01,
        "params ratio {}",
        report.params_ratio
    );
    assert!(
        (report.flops_ratio - 0.90).abs() <= 0.01,
        "flops ratio {}",
        report.flops_ratio
    );
}

#[test]
fn large_like_full_layer_ratios() {
    let cfg = large_like(ReuseSchedule::full_layer(12, 24, 16).unwrap());
    let report = model_cost(&cfg, 512, true, FlopConvention::default()).unwrap();
    assert!(
        (report.params_ratio - 0.92).abs() <= 0.01,
        "params ratio {}",
        report.params_ratio
    );
    assert!(
        (report.flops_ratio - 0.90).abs() <= 0.01,
        "flops ratio {}",
        report.flops_ratio
    );
}

#[test]
fn baseline_ratios_are_exactly_one() {
    let cfg = base_like(ReuseSchedule::baseline(12, 12));
    let report = model_cost(&cfg, 512, true, FlopConvention::default()).unwrap();
    assert_eq!(report.params_ratio, 1.0);
    assert_eq!(report.flops_ratio, 1.0);
}

#[test]
fn totals_equal_breakdown_sum_exactly() {
    let cfg = base_like(ReuseSchedule::partial_layer(6, 12, 12).unwrap());
    let report = model_cost(&cfg, 128, false, FlopConvention::default()).unwrap();
    let p: Count = report.breakdown.iter().map(|c| c.params).sum();
    let f: Count = report.breakdown.iter().map(|c| c.flops).sum();
    assert_eq!(p, report.params_total);
    assert_eq!(f, report.flops_total);
}

#[test]
fn breakdown_attention_matches_layer_cost() {
    let cfg = base_like(ReuseSchedule::partial_layer(6, 12, 12).unwrap());
    let convention = FlopConvention::default();
    let report = model_cost(&cfg, 128, true, convention).unwrap();
    let ma = Ratio::from_integer(convention.flops_per_multiply_add);
    for (l, plan) in cfg.schedule.plan().iter().enumerate() {
        let k = cfg.heads - plan.exact_heads;
        let (f, p) = attention_layer_cost(cfg.d_model, 128, cfg.heads, k).unwrap();
        let entry = report
            .breakdown
            .iter()
            .find(|c| c.name == format!("layer{}.attention", l + 1))
            .unwrap();
        assert_eq!(entry.params, p);
        assert_eq!(entry.flops, f * ma);
    }
}

#[test]
fn ratios_invariant_to_flop_convention() {
    let cfg = base_like(ReuseSchedule::full_layer(6, 12, 12).unwrap());
    let r2 = model_cost(&cfg, 512, true, FlopConvention { flops_per_multiply_add: 2 }).unwrap();
    let r1 = model_cost(&cfg, 512, true, FlopConvention { flops_per_multiply_add: 1 }).unwrap();
    assert!((r1.flops_ratio - r2.flops_ratio).abs() < 1e-12);
    assert!((r1.params_ratio - r2.params_ratio).abs() < 1e-12);
}

#[test]
fn skip_layers_have_zero_attention_cost() {
    let cfg = config(4, 4, 64, 128, 50, 32, ReuseSchedule::skip(2, 4, 4).unwrap());
    let report = model_cost(&cfg, 16, true, FlopConvention::default()).unwrap();
    for l in [2usize, 3] {
        let entry = report
            .breakdown
            .iter()
            .find(|c| c.name == format!("layer{l}.attention"))
            .unwrap();
        assert_eq!(entry.params, Ratio::from_integer(0));
        assert_eq!(entry.flops, Ratio::from_integer(0));
    }
}

#[test]
fn sweep_matches_per_layer_factors() {
    let cfg = base_like(ReuseSchedule::partial_layer(0, 12, 12).unwrap());
    let ks: Vec<usize> = (0..=12).collect();
    let table = cost_sweep(&cfg, 512, &ks, true, FlopConvention::default()).unwrap();
    assert_eq!(table.len(), 13);
    let base_flops = table[0].1.flops_total;
    let (attn_full, _) = attention_layer_cost(768, 512, 12, 0).unwrap();
    let ma = Ratio::from_integer(2i128);
    for (k, report) in &table {
        assert_eq!(report.breakdown.len(), table[0].1.breakdown.len());
        // 10 middle layers each save K/24 of the full attention flops
        let saved = Ratio::new(*k as i128, 24) * attn_full * ma * Ratio::from_integer(10);
        assert_eq!(report.flops_total, base_flops - saved);
    }
}

#[test]
fn sweep_flops_strictly_decreasing_in_k() {
    let cfg = base_like(ReuseSchedule::partial_layer(0, 12, 12).unwrap());
    let ks: Vec<usize> = (0..=12).collect();
    let table = cost_sweep(&cfg, 512, &ks, true, FlopConvention::default()).unwrap();
    for w in table.windows(2) {
        assert!(w[1].1.flops_total < w[0].1.flops_total);
        assert!(w[1].1.params_total < w[0].1.params_total);
    }
}

#[test]
fn sweep_single_baseline_row() {
    let cfg = base_like(ReuseSchedule::baseline(12, 12));
    let table = cost_sweep(&cfg, 512, &[0], true, FlopConvention::default()).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(table[0].1.params_ratio, 1.0);
}

#[test]
fn untied_output_head_adds_params() {
    let cfg = base_like(ReuseSchedule::baseline(12, 12));
    let tied = model_cost(&cfg, 512, true, FlopConvention::default()).unwrap();
    let untied = model_cost(&cfg, 512, false, FlopConvention::default()).unwrap();
    let diff = untied.params_total - tied.params_total;
    assert_eq!(diff, Ratio::from_integer(30522i128 * 768));
}
