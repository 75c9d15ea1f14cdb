use super::rng::Rng;
use super::tensor::Tensor2D;

/// Result of a power-iteration spectral norm estimate.
#[derive(Clone, Copy, Debug)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
    /// Set when the input is the zero matrix; the value is then exactly 0.
    pub degenerate: bool,
}

/// Largest singular value of `m` by power iteration on `m^T m`.
///
/// The start vector is drawn from a fixed seed so results are reproducible.
/// Convergence is declared when the relative change of the estimate drops
/// below `tol`; otherwise `converged` is false after `max_iters`.
pub fn spectral_norm(m: &Tensor2D, max_iters: usize, tol: f64) -> SpectralEstimate {
    if m.data().iter().all(|v| *v == 0.0) {
        return SpectralEstimate {
            value: 0.0,
            converged: true,
            degenerate: true,
        };
    }
    let mut rng = Rng::new(0x5eed_5eed);
    let mut v: Vec<f64> = (0..m.cols()).map(|_| rng.normal()).collect();
    normalize(&mut v);
    let mut sigma = 0.0_f64;
    let mut converged = false;
    for _ in 0..max_iters {
        // w = m v; u = m^T w
        let w = apply(m, &v);
        let wnorm = norm(&w);
        if wnorm == 0.0 {
            // v landed in the null space; restart from the next random direction
            for x in v.iter_mut() {
                *x = rng.normal();
            }
            normalize(&mut v);
            continue;
        }
        let u = apply_transpose(m, &w);
        let new_sigma = wnorm;
        v = u;
        normalize(&mut v);
        if (new_sigma - sigma).abs() <= tol * new_sigma.max(f64::MIN_POSITIVE) {
            sigma = new_sigma;
            converged = true;
            break;
        }
        sigma = new_sigma;
    }
    SpectralEstimate {
        value: sigma,
        converged,
        degenerate: false,
    }
}

fn apply(m: &Tensor2D, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut s = 0.0;
        for j in 0..v.len() {
            s += row[j] * v[j];
        }
        out[i] = s;
    }
    out
}

fn apply_transpose(m: &Tensor2D, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        let row = m.row(i);
        let vi = v[i];
        for j in 0..out.len() {
            out[j] += row[j] * vi;
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}
