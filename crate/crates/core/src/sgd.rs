use crate::error::{Error, Result};

/// Averaged SGD update `w ← w − γ (V/m + λ w)`.
///
/// `v` is the data part of the gradient summed over `m` samples. Fails
/// without touching `w` if any input or updated value is non-finite.
pub fn sgd_step(m: usize, lambda: f64, gamma: f64, w: &mut [f64], v: &[f64]) -> Result<()> {
    if m == 0 || w.len() != v.len() {
        return Err(Error::Internal(format!(
            "sgd step with m = {m}, |w| = {}, |V| = {}",
            w.len(),
            v.len()
        )));
    }
    let inv_m = 1.0 / m as f64;
    let finite = w
        .iter()
        .zip(v)
        .all(|(&wi, &vi)| (wi - gamma * (vi * inv_m + lambda * wi)).is_finite());
    if !finite {
        return Err(Error::Numeric(format!(
            "SGD step produced a non-finite parameter (gamma = {gamma}); try a smaller learning rate"
        )));
    }
    for (wi, &vi) in w.iter_mut().zip(v) {
        *wi -= gamma * (vi * inv_m + lambda * *wi);
    }
    Ok(())
}
