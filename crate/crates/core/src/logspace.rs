use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `log Σ exp(v_i)` with max subtraction. Empty or all `-∞` input gives `-∞`.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// `exp(v_i - logsumexp(v))`. Entries may be `-∞` (weight 0) but not `NaN` or
/// `+∞`; at least one entry must be finite.
pub fn normalize_log_weights<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.iter().any(|v| v.is_nan() || *v == T::infinity()) {
        return Err(Error::InvalidParameter("log weight is NaN or +inf".into()));
    }
    let lse = log_sum_exp(values);
    if !lse.is_finite() {
        return Err(Error::AllDegenerate);
    }
    Ok(values.iter().map(|&v| (v - lse).exp()).collect())
}
