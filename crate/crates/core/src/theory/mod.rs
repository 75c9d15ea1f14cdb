//! Numerical verification of the two supporting results: the
//! random-attention dissimilarity identity (Monte-Carlo) and the
//! two-layer linear reuse-error bound (direct evaluation of its explicit
//! construction).

use crate::error::{Error, Result};
use crate::numerics::{row_softmax, spectral_norm, Rng, Tensor2D};
use crate::parallel::map_indexed;
use serde::{Deserialize, Serialize};

const SPECTRAL_ITERS: usize = 10_000;
const SPECTRAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Gaussian,
    Rademacher,
}

impl Distribution {
    fn sample(self, rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Tensor2D {
        match self {
            Distribution::Gaussian => rng.normal_tensor(rows, cols, std),
            Distribution::Rademacher => {
                let mut t = rng.rademacher_tensor(rows, cols);
                t.scale_assign(std);
                t
            }
        }
    }
}

/// One Monte-Carlo trial: a fixed input X and two heads whose query/key
/// projections are sampled independently with zero-mean entries.
#[derive(Clone, Debug)]
pub struct RandomHeadPair {
    pub x: Tensor2D,
    pub wq1: Tensor2D,
    pub wk1: Tensor2D,
    pub wq2: Tensor2D,
    pub wk2: Tensor2D,
}

impl RandomHeadPair {
    pub fn sample(x: &Tensor2D, distribution: Distribution, rng: &mut Rng) -> Self {
        let d = x.cols();
        let std = 1.0 / (d as f64).sqrt();
        RandomHeadPair {
            x: x.clone(),
            wq1: distribution.sample(rng, d, d, std),
            wk1: distribution.sample(rng, d, d, std),
            wq2: distribution.sample(rng, d, d, std),
            wk2: distribution.sample(rng, d, d, std),
        }
    }

    /// Pre-softmax scores Ã = (X W_q)(X W_k)ᵀ for one head.
    pub fn scores(&self, wq: &Tensor2D, wk: &Tensor2D) -> Tensor2D {
        let q = self.x.matmul(wq).unwrap();
        let k = self.x.matmul(wk).unwrap();
        q.matmul_transpose_b(&k).unwrap()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma1Verdict {
    pub d: usize,
    pub n: usize,
    pub samples: usize,
    pub distribution: Distribution,
    pub seed: u64,
    /// Mean over entries of E[(Ã₁ − Ã₂)²].
    pub lhs: f64,
    /// Mean over entries of 2 E[Ã₁²].
    pub rhs: f64,
    pub ratio: f64,
}

/// Monte-Carlo estimate of the identity E[(Ã₁ − Ã₂)²ᵢⱼ] = 2 E[(Ã₁)²ᵢⱼ] for
/// independently sampled zero-mean projection matrices. X is drawn once per
/// run; both expectations are averaged over all (i, j) entries.
pub fn lemma1_mc(
    d: usize,
    n: usize,
    samples: usize,
    distribution: Distribution,
    seed: u64,
    parallel: bool,
) -> Result<Lemma1Verdict> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidDimension {
            what: "lemma 1 matrix sizes",
            value: 0,
        });
    }
    if samples < 10_000 {
        return Err(Error::Config(format!(
            "lemma1_mc needs at least 10000 samples, got {samples}"
        )));
    }
    let mut rng = Rng::new(seed);
    let x = rng.normal_tensor(n, d, 1.0);
    if x.max_abs() == 0.0 {
        return Err(Error::Config("input X is all zeros".into()));
    }
    let x_ref = &x;
    // each trial forks its own deterministic stream so parallel == sequential
    let per_trial: Vec<(f64, f64)> = map_indexed(samples, parallel, |i| {
        let mut trial_rng = Rng::new(seed).fork(i as u64 + 1);
        let pair = RandomHeadPair::sample(x_ref, distribution, &mut trial_rng);
        let a1 = pair.scores(&pair.wq1, &pair.wk1);
        let a2 = pair.scores(&pair.wq2, &pair.wk2);
        let mut diff_sq = 0.0;
        let mut a1_sq = 0.0;
        for (u, v) in a1.data().iter().zip(a2.data()) {
            diff_sq += (u - v) * (u - v);
            a1_sq += u * u;
        }
        let entries = (a1.rows() * a1.cols()) as f64;
        (diff_sq / entries, a1_sq / entries)
    });
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (ds, asq) in &per_trial {
        lhs += ds;
        rhs += 2.0 * asq;
    }
    lhs /= samples as f64;
    rhs /= samples as f64;
    Ok(Lemma1Verdict {
        d,
        n,
        samples,
        distribution,
        seed,
        lhs,
        rhs,
        ratio: if rhs == 0.0 { f64::NAN } else { lhs / rhs },
    })
}

/// Same estimate but with head 2's projections tied to head 1's — the
/// independence hypothesis deliberately violated, giving lhs = 0.
pub fn lemma1_mc_tied(
    d: usize,
    n: usize,
    samples: usize,
    distribution: Distribution,
    seed: u64,
) -> Result<Lemma1Verdict> {
    if samples < 10_000 {
        return Err(Error::Config(format!(
            "lemma1_mc needs at least 10000 samples, got {samples}"
        )));
    }
    let mut rng = Rng::new(seed);
    let x = rng.normal_tensor(n, d, 1.0);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..samples {
        let mut trial_rng = Rng::new(seed).fork(i as u64 + 1);
        let mut pair = RandomHeadPair::sample(&x, distribution, &mut trial_rng);
        pair.wq2 = pair.wq1.clone();
        pair.wk2 = pair.wk1.clone();
        let a1 = pair.scores(&pair.wq1, &pair.wk1);
        let a2 = pair.scores(&pair.wq2, &pair.wk2);
        let entries = (a1.rows() * a1.cols()) as f64;
        for (u, v) in a1.data().iter().zip(a2.data()) {
            lhs += (u - v) * (u - v) / entries;
            rhs += 2.0 * u * u / entries;
        }
    }
    lhs /= samples as f64;
    rhs /= samples as f64;
    Ok(Lemma1Verdict {
        d,
        n,
        samples,
        distribution,
        seed,
        lhs,
        rhs,
        ratio: if rhs == 0.0 { f64::NAN } else { lhs / rhs },
    })
}

/// Y = X + A₁XW₁ + A₂XW₂ + A₂A₁XW₁W₂ — the two-layer linear model with the
/// residual stream kept and all nonlinearities dropped.
pub fn linear_two_layer_forward(
    x: &Tensor2D,
    a1: &Tensor2D,
    a2: &Tensor2D,
    w1: &Tensor2D,
    w2: &Tensor2D,
) -> Result<Tensor2D> {
    let xw1 = x.matmul(w1)?;
    let t1 = a1.matmul(&xw1)?;
    let t2 = a2.matmul(&x.matmul(w2)?)?;
    let t3 = a2.matmul(&a1.matmul(&xw1.matmul(w2)?)?)?;
    x.add(&t1)?.add(&t2)?.add(&t3)
}

/// The explicit reuse construction for the error bound: the second layer's
/// attention is replaced by Â = (A₁ + A₂)/2 in both layers, keeping
/// W₃ = W₁, W₄ = W₂. ε is the spectral norm of A₁ − A₂.
#[derive(Clone, Debug)]
pub struct LinearTwoLayerInstance {
    pub x: Tensor2D,
    pub w1: Tensor2D,
    pub w2: Tensor2D,
    pub a1: Tensor2D,
    pub a2: Tensor2D,
    pub a_hat: Tensor2D,
    pub epsilon: f64,
}

impl LinearTwoLayerInstance {
    /// Builds an instance, validating the hypothesis that the spectral norms
    /// of X, W₁ and W₂ are each at most 1 (small slack for power-iteration
    /// error).
    pub fn new(
        x: Tensor2D,
        a1: Tensor2D,
        a2: Tensor2D,
        w1: Tensor2D,
        w2: Tensor2D,
    ) -> Result<Self> {
        a1.check_row_stochastic(1e-8)?;
        a2.check_row_stochastic(1e-8)?;
        for (name, m) in [("X", &x), ("W1", &w1), ("W2", &w2)] {
            let norm = spectral_norm(m, SPECTRAL_ITERS, SPECTRAL_TOL).value;
            if norm > 1.0 + 1e-9 {
                return Err(Error::NormConstraint {
                    what: name,
                    norm,
                    limit: 1.0,
                });
            }
        }
        Self::new_unchecked(x, a1, a2, w1, w2)
    }

    /// Same construction without the norm hypothesis — used for negative
    /// controls where the hypothesis is deliberately violated.
    pub fn new_unchecked(
        x: Tensor2D,
        a1: Tensor2D,
        a2: Tensor2D,
        w1: Tensor2D,
        w2: Tensor2D,
    ) -> Result<Self> {
        let mut a_hat = a1.add(&a2)?;
        a_hat.scale_assign(0.5);
        let epsilon = spectral_norm(&a1.sub(&a2)?, SPECTRAL_ITERS, SPECTRAL_TOL).value;
        Ok(LinearTwoLayerInstance {
            x,
            w1,
            w2,
            a1,
            a2,
            a_hat,
            epsilon,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lemma2Verdict {
    pub epsilon: f64,
    pub err: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates ‖Ŷ − Y‖₂ against the bound 2ε + ε²/2, where Ŷ uses Â in place of
/// both attention matrices.
pub fn lemma2_check(instance: &LinearTwoLayerInstance) -> Result<Lemma2Verdict> {
    let y = linear_two_layer_forward(
        &instance.x,
        &instance.a1,
        &instance.a2,
        &instance.w1,
        &instance.w2,
    )?;
    let y_hat = linear_two_layer_forward(
        &instance.x,
        &instance.a_hat,
        &instance.a_hat,
        &instance.w1,
        &instance.w2,
    )?;
    let err = spectral_norm(&y_hat.sub(&y)?, SPECTRAL_ITERS, SPECTRAL_TOL).value;
    let eps = instance.epsilon;
    let bound = 2.0 * eps + eps * eps / 2.0;
    Ok(Lemma2Verdict {
        epsilon: eps,
        err,
        bound,
        holds: err <= bound + 1e-9,
    })
}

fn random_stochastic(rng: &mut Rng, n: usize) -> Tensor2D {
    let logits = rng.normal_tensor(n, n, 1.0);
    row_softmax(&logits, 1.0).unwrap()
}

fn rescale_to_unit_norm(m: &Tensor2D) -> Tensor2D {
    let norm = spectral_norm(m, SPECTRAL_ITERS, SPECTRAL_TOL).value;
    if norm <= 1.0 {
        m.clone()
    } else {
        m.scale(1.0 / norm)
    }
}

/// Samples an instance whose ε lands within 10% of `epsilon_target` (exactly 0
/// for a zero target) by mixing A₁ toward an independent stochastic matrix.
/// The weights are rescaled so the norm hypotheses hold.
pub fn sample_lemma2_instance(
    n: usize,
    d: usize,
    seed: u64,
    epsilon_target: f64,
) -> Result<LinearTwoLayerInstance> {
    if !(0.0..=2.0).contains(&epsilon_target) {
        return Err(Error::EpsilonTarget {
            target: epsilon_target,
            why: "the spectral distance between row-stochastic matrices cannot exceed 2".into(),
        });
    }
    let mut rng = Rng::new(seed).fork(0x4c32);
    let x = rescale_to_unit_norm(&rng.normal_tensor(n, d, 1.0));
    let w1 = rescale_to_unit_norm(&rng.normal_tensor(d, d, 1.0));
    let w2 = rescale_to_unit_norm(&rng.normal_tensor(d, d, 1.0));
    let a1 = random_stochastic(&mut rng, n);
    if epsilon_target == 0.0 {
        let a2 = a1.clone();
        return LinearTwoLayerInstance::new(x, a1, a2, w1, w2);
    }
    let lo = epsilon_target * 0.9;
    let hi = epsilon_target * 1.1;
    for _ in 0..10_000 {
        let b = random_stochastic(&mut rng, n);
        let full = spectral_norm(&a1.sub(&b)?, SPECTRAL_ITERS, SPECTRAL_TOL).value;
        if full < lo {
            continue;
        }
        // A₂(t) = (1-t) A₁ + t B is stochastic with ‖A₁ − A₂(t)‖ = t·full;
        // pick t to hit the target, then verify.
        let t = (epsilon_target / full).min(1.0);
        let a2 = a1.scale(1.0 - t).add(&b.scale(t))?;
        let eps = spectral_norm(&a1.sub(&a2)?, SPECTRAL_ITERS, SPECTRAL_TOL).value;
        if eps >= lo && eps <= hi {
            return LinearTwoLayerInstance::new(x, a1, a2, w1, w2);
        }
    }
    Err(Error::EpsilonTarget {
        target: epsilon_target,
        why: "rejection sampling did not land within 10% of the target".into(),
    })
}

/// Sweep of the bound over ε targets: per point, the achieved ε, err, bound,
/// and whether the bound held.
pub fn lemma2_sweep(
    n: usize,
    d: usize,
    seed: u64,
    epsilon_targets: &[f64],
    trials_per_target: usize,
) -> Result<Vec<Lemma2Verdict>> {
    let mut out = Vec::new();
    for (i, &target) in epsilon_targets.iter().enumerate() {
        for trial in 0..trials_per_target {
            let inst =
                sample_lemma2_instance(n, d, seed ^ ((i as u64) << 32) ^ trial as u64, target)?;
            out.push(lemma2_check(&inst)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
