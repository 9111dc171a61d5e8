use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Unit-variance Gaussian negative log-likelihood up to constants, i.e. mean squared error.
///
/// Returns the loss (mean over every entry) and its gradient `2 (pred - target) / count`.
pub fn gaussian_nll_as_mse<T: Scalar>(pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(format!(
            "prediction has {} entries, target has {}",
            pred.len(),
            target.len()
        )));
    }
    let count = pred.len() as f64;
    let scale = T::from_f64(2.0 / count);
    let mut sum = 0.0f64;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.to_f64() * d.to_f64();
            scale * d
        })
        .collect();
    Ok((sum / count, grad))
}
