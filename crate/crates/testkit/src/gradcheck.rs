//! Central finite-difference validation of reverse-mode gradients.

use fsta_core::Tensor;

/// Compare analytic gradients against central finite differences.
///
/// `f` must build a scalar loss from exactly the tensors it is handed (no
/// captured parameters), so that perturbing an element and re-evaluating
/// reflects the change. Each element of each parameter is perturbed by
/// `±eps`; the relative error
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)` must stay within
/// `tol`.
///
/// Parameters are checked whether or not they require gradients on entry; a
/// parameter the sweep never reaches is treated as having zero gradient.
pub fn check_gradients<F>(f: F, params: &[Tensor<f64>], eps: f64, tol: f64) -> Result<(), String>
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let tracked: Vec<Tensor<f64>> = params.iter().map(|p| p.with_grad()).collect();
    let loss = f(&tracked);
    if loss.numel() != 1 {
        return Err(format!("loss must be scalar, got shape {:?}", loss.shape()));
    }
    let grads = loss.backward().map_err(|e| format!("backward failed: {e}"))?;

    for (pi, param) in tracked.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(param) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; param.numel()],
        };
        for j in 0..param.numel() {
            let plus = eval_perturbed(&f, &tracked, pi, j, eps);
            let minus = eval_perturbed(&f, &tracked, pi, j, -eps);
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic[j].abs().max(numeric.abs()).max(1.0);
            let err = (analytic[j] - numeric).abs() / denom;
            if !err.is_finite() || err > tol {
                return Err(format!(
                    "gradient mismatch at param {pi} element {j}: \
                     analytic {a}, numeric {numeric}, relative error {err} > tol {tol}",
                    a = analytic[j]
                ));
            }
        }
    }
    Ok(())
}

fn eval_perturbed<F>(f: &F, params: &[Tensor<f64>], pi: usize, j: usize, delta: f64) -> f64
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let mut data = params[pi].data().to_vec();
    data[j] += delta;
    let perturbed = Tensor::from_vec(params[pi].shape().to_vec(), data)
        .expect("same shape as original")
        .with_grad();
    let mut set: Vec<Tensor<f64>> = params.to_vec();
    set[pi] = perturbed;
    f(&set).item()
}
