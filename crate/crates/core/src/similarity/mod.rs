//! Attention-score similarity analysis: total-variation similarity between
//! score matrices, best-head cross-layer scores, all-pairs matrices,
//! adjacent-layer rank profiles, and sample-size convergence curves.

mod capture;
mod svg;

pub use capture::{read_capture, write_capture, AttentionCapture};
pub use svg::heatmap_svg;

use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use serde::{Deserialize, Serialize};

/// TV-based similarity between two row-stochastic score matrices:
/// `1 - (1/n) * sum_p TV(a[p,:], a'[p,:])`, always in [0, 1].
pub fn tv_similarity(a: &Tensor2D, a_prime: &Tensor2D) -> Result<f64> {
    if !a.same_shape(a_prime) {
        return Err(Error::ShapeMismatch {
            op: "tv_similarity",
            lhs_rows: a.rows(),
            lhs_cols: a.cols(),
            rhs_rows: a_prime.rows(),
            rhs_cols: a_prime.cols(),
        });
    }
    a.check_row_stochastic(1e-8)?;
    a_prime.check_row_stochastic(1e-8)?;
    Ok(tv_similarity_unchecked(a, a_prime))
}

#[inline]
fn tv_similarity_unchecked(a: &Tensor2D, a_prime: &Tensor2D) -> f64 {
    let n = a.rows();
    let mut total = 0.0;
    for p in 0..n {
        let mut l1 = 0.0;
        for (x, y) in a.row(p).iter().zip(a_prime.row(p)) {
            l1 += (x - y).abs();
        }
        total += 0.5 * l1;
    }
    1.0 - total / n as f64
}

/// Streaming accumulator of per-head-pair mean similarities over examples.
///
/// The running sums are updated per example in index order (commutative
/// additions, deterministic reduction), so large example counts need no
/// stored matrices.
#[derive(Clone, Debug)]
pub struct SimilarityAccumulator {
    layers: usize,
    heads: usize,
    t: usize,
    /// sums[(l*H + h) * L*H + (l2*H + h2)] of S(A_{l,h}, A_{l2,h2}) over examples.
    sums: Vec<f64>,
}

impl SimilarityAccumulator {
    pub fn new(layers: usize, heads: usize) -> Self {
        let lh = layers * heads;
        SimilarityAccumulator {
            layers,
            heads,
            t: 0,
            sums: vec![0.0; lh * lh],
        }
    }

    pub fn examples(&self) -> usize {
        self.t
    }

    /// Adds one example's L x H score matrices.
    pub fn add_example(&mut self, scores: &[Vec<Tensor2D>], parallel: bool) -> Result<()> {
        if scores.len() != self.layers || scores.iter().any(|l| l.len() != self.heads) {
            return Err(Error::Capture(format!(
                "expected {}x{} score matrices",
                self.layers, self.heads
            )));
        }
        for layer in scores {
            for a in layer {
                a.check_row_stochastic(1e-10)?;
            }
        }
        let lh = self.layers * self.heads;
        let flat: Vec<&Tensor2D> = scores.iter().flatten().collect();
        let rows = crate::parallel::map_indexed(lh, parallel, |i| {
            let mut row = vec![0.0; lh];
            for (j, other) in flat.iter().enumerate() {
                row[j] = tv_similarity_unchecked(flat[i], other);
            }
            row
        });
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                self.sums[i * lh + j] += v;
            }
        }
        self.t += 1;
        Ok(())
    }

    pub fn add_capture(&mut self, capture: &AttentionCapture, parallel: bool) -> Result<()> {
        for t in 0..capture.examples() {
            self.add_example(capture.example(t), parallel)?;
        }
        Ok(())
    }

    /// Mean similarity of (l, h) against (l2, h2) over the examples seen.
    pub fn mean(&self, l: usize, h: usize, l2: usize, h2: usize) -> f64 {
        let lh = self.layers * self.heads;
        self.sums[(l * self.heads + h) * lh + (l2 * self.heads + h2)] / self.t as f64
    }

    /// Best-head similarity: `max_{h'} mean_t S(A_{l,h}, A_{l',h'})` with the
    /// average taken before the max; ties broken by the lowest head index.
    pub fn best_head(&self, l: usize, h: usize, l_prime: usize) -> Result<(f64, usize)> {
        if self.t == 0 {
            return Err(Error::Capture("no examples accumulated".into()));
        }
        if l >= self.layers || l_prime >= self.layers || h >= self.heads {
            return Err(Error::Capture(format!(
                "indices (l={l}, h={h}, l'={l_prime}) out of range"
            )));
        }
        let mut best = f64::NEG_INFINITY;
        let mut best_h = 0;
        for h2 in 0..self.heads {
            let m = self.mean(l, h, l_prime, h2);
            if m > best {
                best = m;
                best_h = h2;
            }
        }
        Ok((best, best_h))
    }

    /// All-pairs matrix: entry (l, l') = `max_h` best-head similarity from
    /// source layer l (rows) to target layer l' (columns).
    pub fn all_pairs_best(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![vec![0.0; self.layers]; self.layers];
        for l in 0..self.layers {
            for l2 in 0..self.layers {
                let mut best = f64::NEG_INFINITY;
                for h in 0..self.heads {
                    best = best.max(self.best_head(l, h, l2)?.0);
                }
                out[l][l2] = best;
            }
        }
        Ok(out)
    }

    /// For each layer l >= 2, the H best-head similarities against layer l-1,
    /// sorted ascending (rank 1 = least similar head).
    pub fn adjacent_rank_profiles(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        for l in 1..self.layers {
            let mut vals = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                vals.push(self.best_head(l, h, l - 1)?.0);
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.push(vals);
        }
        Ok(out)
    }
}

/// All-pairs best-head matrix plus per-layer adjacent rank profiles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub layers: usize,
    pub heads: usize,
    pub examples: usize,
    /// Rows index the source layer l, columns the target layer l'.
    pub all_pairs: Vec<Vec<f64>>,
    /// Entry i holds the sorted profile for layer i+2 vs layer i+1 (1-based).
    pub adjacent_profiles: Vec<Vec<f64>>,
    pub model: String,
    pub dataset: String,
}

impl SimilarityReport {
    pub fn from_accumulator(
        acc: &SimilarityAccumulator,
        model: impl Into<String>,
        dataset: impl Into<String>,
    ) -> Result<Self> {
        Ok(SimilarityReport {
            layers: acc.layers,
            heads: acc.heads,
            examples: acc.t,
            all_pairs: acc.all_pairs_best()?,
            adjacent_profiles: acc.adjacent_rank_profiles()?,
            model: model.into(),
            dataset: dataset.into(),
        })
    }

    /// Mean of the (l, l-1) all-pairs entries, the adjacent-layer summary used
    /// in trained-vs-random comparisons.
    pub fn mean_adjacent_similarity(&self) -> f64 {
        if self.layers < 2 {
            return 1.0;
        }
        let mut sum = 0.0;
        for l in 1..self.layers {
            sum += self.all_pairs[l][l - 1];
        }
        sum / (self.layers - 1) as f64
    }
}

/// Convenience wrapper: build a report from a capture in one shot.
pub fn analyze_capture(
    capture: &AttentionCapture,
    model: &str,
    dataset: &str,
    parallel: bool,
) -> Result<SimilarityReport> {
    let mut acc = SimilarityAccumulator::new(capture.layers(), capture.heads());
    acc.add_capture(capture, parallel)?;
    SimilarityReport::from_accumulator(&acc, model, dataset)
}

/// All-pairs matrices on nested prefixes of the example set, for sample-size
/// convergence checks. `sample_sizes` entries must not exceed the capture's
/// example count; output preserves input order.
pub fn convergence_curve(
    capture: &AttentionCapture,
    sample_sizes: &[usize],
    parallel: bool,
) -> Result<Vec<(usize, Vec<Vec<f64>>)>> {
    let t = capture.examples();
    for &s in sample_sizes {
        if s == 0 || s > t {
            return Err(Error::Capture(format!(
                "sample size {s} out of range 1..={t}"
            )));
        }
    }
    let mut sorted: Vec<usize> = sample_sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut acc = SimilarityAccumulator::new(capture.layers(), capture.heads());
    let mut snapshots = std::collections::HashMap::new();
    let mut next = sorted.iter().peekable();
    for i in 0..t {
        acc.add_example(capture.example(i), parallel)?;
        while let Some(&&s) = next.peek() {
            if s == i + 1 {
                snapshots.insert(s, acc.all_pairs_best()?);
                next.next();
            } else {
                break;
            }
        }
    }
    Ok(sample_sizes
        .iter()
        .map(|s| (*s, snapshots[s].clone()))
        .collect())
}
