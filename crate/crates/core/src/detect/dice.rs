use crate::error::{Error, Result};

/// Soft dice loss `1 - (2 * sum(p * t) + eps) / (sum(p) + sum(t) + eps)` and
/// its gradient with respect to `pred`.
pub fn dice_loss(pred: &[f64], target: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(pred.len(), target.len()));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("dice eps", format!("{eps} must be > 0")));
    }
    let inter: f64 = pred.iter().zip(target).map(|(p, t)| p * t).sum();
    let denom = pred.iter().sum::<f64>() + target.iter().sum::<f64>() + eps;
    let numer = 2.0 * inter + eps;
    let loss = 1.0 - numer / denom;
    let d2 = denom * denom;
    let grad = target
        .iter()
        .map(|&t| -(2.0 * t * denom - numer) / d2)
        .collect();
    Ok((loss, grad))
}
