use ndarray::{ArrayView2, ArrayView3};

use super::{forward, loss_and_grads, mse, EmError, EmModel};

/// Largest relative difference between the analytic gradient and central
/// finite differences with step `eps`, over every parameter.
///
/// Relative error is |a − n| / max(|a|, |n|, 1e-8). Meant for toy-sized models.
pub fn grad_check(m: &EmModel, inputs: ArrayView3<f64>, targets: ArrayView2<f64>, eps: f64) -> Result<f64, EmError> {
    let (_, analytic) = loss_and_grads(m, inputs, targets)?;
    grad_check_against(m, &analytic, inputs, targets, eps)
}

/// As [`grad_check`], comparing against a supplied gradient.
pub fn grad_check_against(
    m: &EmModel,
    analytic: &EmModel,
    inputs: ArrayView3<f64>,
    targets: ArrayView2<f64>,
    eps: f64,
) -> Result<f64, EmError> {
    let loss = |model: &EmModel| -> Result<f64, EmError> {
        let pred = forward(model, inputs)?;
        Ok(mse(&pred.view(), &targets))
    };
    let mut probe = m.clone();
    let mut worst = 0.0f64;
    let analytic = analytic.tensors();
    for (tensor, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let original = probe.tensors()[tensor][k];
            probe.tensors_mut()[tensor][k] = original + eps;
            let plus = loss(&probe)?;
            probe.tensors_mut()[tensor][k] = original - eps;
            let minus = loss(&probe)?;
            probe.tensors_mut()[tensor][k] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
