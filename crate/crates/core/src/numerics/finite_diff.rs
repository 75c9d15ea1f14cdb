/// Central-difference gradient of a scalar function of a parameter vector.
///
/// The loss function must be deterministic; each coordinate costs two
/// evaluations.
pub fn finite_diff_grad(loss_fn: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step size must be positive");
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + h;
        let fp = loss_fn(&work);
        work[i] = orig - h;
        let fm = loss_fn(&work);
        work[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}
