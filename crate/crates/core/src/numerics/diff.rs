use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central finite-difference gradient of `f` at `point` with step `h`.
///
/// Serves as the independent oracle for every analytic gradient in the crate.
pub fn finite_diff_grad<T, F>(mut f: F, point: &[T], h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    assert!(h > T::zero(), "finite-difference step must be positive");
    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for k in 0..point.len() {
        let x0 = probe[k];
        probe[k] = x0 + h;
        let fp = f(&probe);
        probe[k] = x0 - h;
        let fm = f(&probe);
        probe[k] = x0;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEvaluation(k));
        }
        grad.push((fp - fm) / (h + h));
    }
    Ok(grad)
}
