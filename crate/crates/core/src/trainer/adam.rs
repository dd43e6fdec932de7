use crate::scalar::Scalar;

/// First/second moment estimates aligned with a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    /// Number of steps taken.
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, params: &mut [T], grads: &[T], lr: T) {
    assert_eq!(params.len(), grads.len(), "gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "moment length mismatch");
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(state.t.min(i32::MAX as u64) as i32);
    let c2 = T::one() - b2.powi(state.t.min(i32::MAX as u64) as i32);
    let step = lr / c1;
    let c2s = c2.sqrt();
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.m[i] + (T::one() - b1) * g;
        let v = b2 * state.v[i] + (T::one() - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        // lr·m̂/(√v̂ + ε) with m̂ = m/c1, v̂ = v/c2
        params[i] -= step * m / (v.sqrt() / c2s + state.eps);
    }
}
