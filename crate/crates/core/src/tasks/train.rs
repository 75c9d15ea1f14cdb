use super::{gen_examples, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::model::{
    train_step, transformer_forward, AdamHyperparams, AdamState, Checkpoint, Example, ModelConfig,
    ModelParams, ReuseSchedule,
};
use crate::numerics::Rng;
use crate::parallel::map_indexed;
use crate::similarity::{analyze_capture, AttentionCapture, SimilarityReport};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub model: ModelConfig,
    pub task: TaskSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub hyper: AdamHyperparams,
    pub seed: u64,
    /// Metrics are recorded every this many steps (and at the final step).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Every this many steps one probe forward pass is captured and its score
    /// matrices validated; 0 disables in-run captures.
    #[serde(default)]
    pub capture_every: usize,
    /// Held-out probe set size used for evaluation and similarity capture.
    #[serde(default = "default_probe_examples")]
    pub probe_examples: usize,
}

fn default_log_every() -> usize {
    50
}

fn default_probe_examples() -> usize {
    256
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.task.validate()?;
        if self.batch_size == 0 || self.log_every == 0 || self.probe_examples == 0 {
            return Err(Error::Config(
                "batch_size, log_every and probe_examples must be positive".into(),
            ));
        }
        if self.task.seq_len > self.model.max_n {
            return Err(Error::SequenceTooLong {
                n: self.task.seq_len,
                max_n: self.model.max_n,
            });
        }
        if self.task.vocab > self.model.vocab {
            return Err(Error::Config(format!(
                "task vocab {} exceeds model vocab {}",
                self.task.vocab, self.model.vocab
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRunResult {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRecord>,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

const PROBE_SALT: u64 = 0x9e3779b97f4a7c15;
const STEP_SALT: u64 = 0x2545f4914f6cdd1d;

fn probe_set(config: &TrainRunConfig) -> Vec<Example> {
    gen_examples(
        &config.task,
        config.seed ^ PROBE_SALT,
        config.probe_examples,
    )
}

/// Mean loss and token accuracy (argmax over logits at target positions).
pub fn eval_accuracy(
    params: &ModelParams,
    examples: &[Example],
    parallel: bool,
) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::Config("no evaluation examples".into()));
    }
    let per = map_indexed(examples.len(), parallel, |i| {
        let ex = &examples[i];
        let pass = transformer_forward(params, &ex.tokens)?;
        let (loss, _) = crate::model::cross_entropy(&pass.logits, &ex.targets)?;
        let mut hits = 0usize;
        let mut total = 0usize;
        for (p, target) in ex.targets.iter().enumerate() {
            if let Some(t) = target {
                let row = pass.logits.row(p);
                let argmax = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                total += 1;
                if argmax == *t {
                    hits += 1;
                }
            }
        }
        Ok::<_, Error>((loss, hits, total))
    });
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    let mut total = 0usize;
    for item in per {
        let (l, h, t) = item?;
        loss_sum += l;
        hits += h;
        total += t;
    }
    Ok((
        loss_sum / examples.len() as f64,
        if total == 0 { 0.0 } else { hits as f64 / total as f64 },
    ))
}

/// Forward passes over `examples` collecting every layer's score matrices.
/// Fails for schedules with skip layers, which produce no scores to capture.
pub fn capture_attention(
    params: &ModelParams,
    examples: &[Example],
    parallel: bool,
) -> Result<AttentionCapture> {
    let cfg = &params.config;
    let n = examples
        .first()
        .map(|e| e.tokens.len())
        .ok_or_else(|| Error::Capture("no probe examples".into()))?;
    let captures = map_indexed(examples.len(), parallel, |i| {
        let pass = transformer_forward(params, &examples[i].tokens)?;
        Ok::<_, Error>(pass.capture())
    });
    let mut out = AttentionCapture::new(cfg.layers, cfg.heads, n);
    for item in captures {
        out.push_forward_capture(item?)?;
    }
    Ok(out)
}

/// Deterministic training run: fixed-seed init, per-step generated batches,
/// periodic metrics, and periodic capture validation on a probe sequence.
/// `steps = 0` returns the initialization untouched.
pub fn run_training(config: &TrainRunConfig, parallel: bool) -> Result<TrainRunResult> {
    config.validate()?;
    let mut init_rng = Rng::new(config.seed).fork(1);
    let mut params = ModelParams::init(&config.model, &mut init_rng)?;
    let mut adam = AdamState::new(&params);
    let probe = probe_set(config);
    let mut metrics = Vec::new();

    for step in 0..config.steps {
        let batch = gen_examples(
            &config.task,
            config.seed ^ STEP_SALT.wrapping_mul(step as u64 + 1),
            config.batch_size,
        );
        let loss = train_step(&mut params, &mut adam, &batch, &config.hyper, parallel)?;
        let last = step + 1 == config.steps;
        if (step + 1) % config.log_every == 0 || last {
            let eval_n = probe.len().min(64);
            let (_, acc) = eval_accuracy(&params, &probe[..eval_n], parallel)?;
            metrics.push(MetricsRecord {
                step: step + 1,
                loss,
                accuracy: acc,
                learning_rate: config.hyper.rate_at(step),
            });
        }
        if config.capture_every > 0 && (step + 1) % config.capture_every == 0 {
            // validates row-stochasticity of every captured matrix
            capture_attention(&params, &probe[..1], false)?;
        }
    }

    let (final_loss, final_accuracy) = eval_accuracy(&params, &probe, parallel)?;
    Ok(TrainRunResult {
        checkpoint: Checkpoint {
            params,
            adam,
            seed: config.seed,
        },
        metrics,
        final_loss,
        final_accuracy,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

/// Trains one model per K with identical seeds and budgets. K = 0 uses the
/// all-exact baseline; K > 0 uses partial-layer reuse with that K.
pub fn ablation_sweep(
    base: &TrainRunConfig,
    k_values: &[usize],
    parallel: bool,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &k in k_values {
        let mut config = base.clone();
        config.model.schedule = if k == 0 {
            ReuseSchedule::baseline(config.model.layers, config.model.heads)
        } else {
            ReuseSchedule::partial_layer(k, config.model.layers, config.model.heads)?
        };
        let result = run_training(&config, parallel)?;
        rows.push(AblationRow {
            k,
            final_loss: result.final_loss,
            final_accuracy: result.final_accuracy,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub steps: usize,
    /// Mean adjacent-layer best-head similarity of the trained model.
    pub trained_mean: f64,
    /// Same quantity at random initialization, on the same probe set.
    pub random_mean: f64,
    /// Random-init mean on a second, disjoint probe set.
    pub random_mean_alt_probe: f64,
    pub gap: f64,
    pub probe_delta: f64,
}

fn comparison_model() -> ModelConfig {
    ModelConfig {
        layers: 4,
        heads: 4,
        d_model: 64,
        d_ff: 256,
        vocab: 32,
        max_n: 32,
        activation: crate::model::Activation::Gelu,
        schedule: ReuseSchedule::baseline(4, 4),
        detach_reused_scores: false,
    }
}

fn comparison_task() -> TaskSpec {
    TaskSpec {
        kind: TaskKind::MaskedToken,
        vocab: 32,
        seq_len: 32,
        mask_rate: 0.15,
        corpus_source: super::CorpusSource::Structured,
    }
}

fn mean_adjacent(report: &SimilarityReport) -> f64 {
    report.mean_adjacent_similarity()
}

/// Trains a small masked-token model on the structured corpus and compares
/// its mean adjacent-layer similarity against the same architecture at random
/// initialization, including a probe-set swap control for the random model.
pub fn trained_vs_random_similarity(
    seed: u64,
    steps: usize,
    parallel: bool,
) -> Result<ComparisonReport> {
    let config = TrainRunConfig {
        model: comparison_model(),
        task: comparison_task(),
        steps,
        batch_size: 16,
        hyper: AdamHyperparams::default(),
        seed,
        log_every: 50,
        capture_every: 0,
        probe_examples: 256,
    };
    config.validate()?;
    let probe_a = probe_set(&config);
    let probe_b = gen_examples(&config.task, seed ^ PROBE_SALT ^ 0x0dd5a17, 256);

    let trained = run_training(&config, parallel)?;
    let trained_capture = capture_attention(&trained.checkpoint.params, &probe_a, parallel)?;
    let trained_report = analyze_capture(&trained_capture, "trained", "structured", parallel)?;

    let mut init_rng = Rng::new(seed ^ 0xbead).fork(1);
    let random_params = ModelParams::init(&config.model, &mut init_rng)?;
    let cap_a = capture_attention(&random_params, &probe_a, parallel)?;
    let cap_b = capture_attention(&random_params, &probe_b, parallel)?;
    let report_a = analyze_capture(&cap_a, "random-init", "structured", parallel)?;
    let report_b = analyze_capture(&cap_b, "random-init", "structured-alt", parallel)?;

    let trained_mean = mean_adjacent(&trained_report);
    let random_mean = mean_adjacent(&report_a);
    let random_mean_alt = mean_adjacent(&report_b);
    Ok(ComparisonReport {
        seed,
        steps,
        trained_mean,
        random_mean,
        random_mean_alt_probe: random_mean_alt,
        gap: trained_mean - random_mean,
        probe_delta: (random_mean - random_mean_alt).abs(),
    })
}
