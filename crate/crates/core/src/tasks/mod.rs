//! Synthetic sequence tasks and corpora for desk-scale experiments, plus the
//! training harness, the reuse-head ablation driver, and the
//! trained-vs-random similarity comparison.

mod train;

pub use train::{
    ablation_sweep, capture_attention, eval_accuracy, run_training,
    trained_vs_random_similarity, AblationRow, ComparisonReport, MetricsRecord, TrainRunConfig,
    TrainRunResult,
};

use crate::error::{Error, Result};
use crate::model::Example;
use crate::numerics::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Predict the input token at every position.
    Copy,
    /// Predict the sequence reversed.
    Reverse,
    /// Predict the sequence sorted ascending.
    Sort,
    /// Masked-token prediction; targets only at masked positions. The mask
    /// token is the last vocabulary id.
    MaskedToken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Structured,
    UniformRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub vocab: usize,
    pub seq_len: usize,
    /// Fraction of positions masked; only used by MaskedToken.
    #[serde(default = "default_mask_rate")]
    pub mask_rate: f64,
    /// Corpus for MaskedToken; other tasks always use uniform-random inputs.
    #[serde(default = "default_corpus_source")]
    pub corpus_source: CorpusSource,
}

fn default_mask_rate() -> f64 {
    0.15
}

fn default_corpus_source() -> CorpusSource {
    CorpusSource::Structured
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 {
            return Err(Error::Config("seq_len must be positive".into()));
        }
        let min_vocab = if self.kind == TaskKind::MaskedToken { 3 } else { 2 };
        if self.vocab < min_vocab {
            return Err(Error::Config(format!(
                "vocab {} too small for the task",
                self.vocab
            )));
        }
        if self.kind == TaskKind::MaskedToken && !(0.0 < self.mask_rate && self.mask_rate < 1.0) {
            return Err(Error::Config(format!(
                "mask_rate {} not in (0, 1)",
                self.mask_rate
            )));
        }
        Ok(())
    }

    /// The id reserved for the mask token (last id), for MaskedToken only.
    pub fn mask_id(&self) -> usize {
        self.vocab - 1
    }

    /// Size of the alphabet data tokens are drawn from (excludes the mask
    /// token for MaskedToken).
    pub fn data_vocab(&self) -> usize {
        match self.kind {
            TaskKind::MaskedToken => self.vocab - 1,
            _ => self.vocab,
        }
    }
}

/// Order-2 Markov corpus: each (previous, current) context has two fixed
/// candidate successors chosen deterministically from the seed, sampled with
/// probabilities 0.75 / 0.25. Entropy is far below uniform while remaining
/// learnable from local context.
pub fn gen_structured_corpus(
    seed: u64,
    vocab: usize,
    seq_len: usize,
    count: usize,
) -> Vec<Vec<usize>> {
    assert!(vocab >= 8, "structured corpus needs vocab >= 8");
    let mut rng = Rng::new(seed).fork(0x5e92);
    let successors = |a: usize, b: usize| -> (usize, usize) {
        let mut t = Rng::new(seed).fork(0xc0ffee ^ ((a as u64) << 20 | b as u64));
        (t.below(vocab), t.below(vocab))
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut seq = Vec::with_capacity(seq_len);
        let mut a = rng.below(vocab);
        let mut b = rng.below(vocab);
        for pos in 0..seq_len {
            let tok = match pos {
                0 => a,
                1 => b,
                _ => {
                    let (s1, s2) = successors(a, b);
                    let tok = if rng.uniform() < 0.75 { s1 } else { s2 };
                    a = b;
                    b = tok;
                    tok
                }
            };
            seq.push(tok);
        }
        out.push(seq);
    }
    out
}

/// I.i.d. uniform tokens, deterministic per seed.
pub fn gen_random_corpus(seed: u64, vocab: usize, seq_len: usize, count: usize) -> Vec<Vec<usize>> {
    assert!(vocab >= 1);
    let mut rng = Rng::new(seed).fork(0x7a2d);
    (0..count)
        .map(|_| (0..seq_len).map(|_| rng.below(vocab)).collect())
        .collect()
}

/// Builds one supervised example from a raw token sequence according to the
/// task. MaskedToken draws its masking pattern from `rng` (at least one
/// position is always masked).
pub fn make_example(spec: &TaskSpec, seq: &[usize], rng: &mut Rng) -> Example {
    match spec.kind {
        TaskKind::Copy => Example {
            tokens: seq.to_vec(),
            targets: seq.iter().map(|&t| Some(t)).collect(),
        },
        TaskKind::Reverse => Example {
            tokens: seq.to_vec(),
            targets: seq.iter().rev().map(|&t| Some(t)).collect(),
        },
        TaskKind::Sort => {
            let mut sorted = seq.to_vec();
            sorted.sort_unstable();
            Example {
                tokens: seq.to_vec(),
                targets: sorted.into_iter().map(Some).collect(),
            }
        }
        TaskKind::MaskedToken => {
            let mut tokens = seq.to_vec();
            let mut targets = vec![None; seq.len()];
            let mut any = false;
            for i in 0..seq.len() {
                if rng.uniform() < spec.mask_rate {
                    targets[i] = Some(tokens[i]);
                    tokens[i] = spec.mask_id();
                    any = true;
                }
            }
            if !any {
                let i = rng.below(seq.len());
                targets[i] = Some(tokens[i]);
                tokens[i] = spec.mask_id();
            }
            Example { tokens, targets }
        }
    }
}

/// Deterministic corpus per the task's source selector.
pub fn gen_corpus(spec: &TaskSpec, seed: u64, count: usize) -> Vec<Vec<usize>> {
    let vocab = spec.data_vocab();
    match (spec.kind, spec.corpus_source) {
        (TaskKind::MaskedToken, CorpusSource::Structured) => {
            gen_structured_corpus(seed, vocab, spec.seq_len, count)
        }
        _ => gen_random_corpus(seed, vocab, spec.seq_len, count),
    }
}

/// A deterministic batch of supervised examples drawn from the task's corpus
/// distribution.
pub fn gen_examples(spec: &TaskSpec, seed: u64, count: usize) -> Vec<Example> {
    let corpus = gen_corpus(spec, seed, count);
    let mut rng = Rng::new(seed).fork(0x3a5c);
    corpus
        .iter()
        .map(|seq| make_example(spec, seq, &mut rng))
        .collect()
}
