use crate::error::{Error, Result};
use crate::tensorize::l2;

/// Stabilizer added to the target norm.
pub const LOSS_EPS: f64 = 1e-8;

/// Floor on `‖x̂ − x‖` in the gradient so a perfect reconstruction yields a
/// zero gradient instead of 0/0.
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Relative reconstruction error `‖x̂ − x‖₂ / (‖x‖₂ + eps)`.
pub fn recon_loss(xhat: &[f64], x: &[f64], eps: f64) -> Result<f64> {
    if xhat.len() != x.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: xhat.len(),
        });
    }
    let r: f64 = xhat
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(r / (l2(x) + eps))
}

/// `∂ recon_loss / ∂ x̂`.
pub(crate) fn recon_loss_grad(xhat: &[f64], x: &[f64], eps: f64) -> Vec<f64> {
    let r: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| a - b).collect();
    let denom = l2(&r).max(RESIDUAL_FLOOR) * (l2(x) + eps);
    r.into_iter().map(|v| v / denom).collect()
}

/// Mean of per-sample losses.
pub fn total_loss(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::InvalidParam("total_loss of an empty set".into()));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}
