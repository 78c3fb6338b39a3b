//! Log-domain simplex arithmetic.
//!
//! Simplex iterates are kept as log-weights so that the multiplicative
//! updates of the solvers never underflow. Normalized log-weights are floored
//! at `LOG_FLOOR` below the maximum; `exp` of the floor is strictly positive
//! but below the resolution of any f64 sum, so the floor never changes a
//! downstream value while keeping materialized points strictly positive.

pub const LOG_FLOOR: f64 = -700.0;

pub fn logsumexp(logw: &[f64]) -> f64 {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = logw.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

/// Normalizes log-weights in place so that `sum(exp(logw)) = 1`, flooring at
/// `LOG_FLOOR`.
pub fn log_normalize(logw: &mut [f64]) {
    let lse = logsumexp(logw);
    for v in logw.iter_mut() {
        *v = (*v - lse).max(LOG_FLOOR);
    }
}

/// Materializes a probability vector from normalized log-weights.
pub fn exp_normalized(logw: &[f64]) -> Vec<f64> {
    logw.iter().map(|&v| v.exp()).collect()
}

/// Normalizes (a copy of) arbitrary log-weights and materializes them.
pub fn simplex_from_logs(logw: &[f64]) -> Vec<f64> {
    let mut w = logw.to_vec();
    log_normalize(&mut w);
    exp_normalized(&w)
}

/// Normalized log-weights of the uniform distribution on `d` atoms.
pub fn uniform_logs(d: usize) -> Vec<f64> {
    vec![-(d as f64).ln(); d]
}

/// Negative entropy `sum_j y_j ln y_j`, with `0 ln 0 := 0`.
pub fn neg_entropy(y: &[f64]) -> f64 {
    y.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum()
}

/// `KL(y' || y)` for plain vectors on the simplex. A zero coordinate of `y`
/// where `y'` is positive yields `+inf`, per the convention that divergences
/// are total functions.
pub fn kl(y_new: &[f64], y_old: &[f64]) -> f64 {
    assert_eq!(y_new.len(), y_old.len(), "kl: length mismatch");
    let mut acc = 0.0;
    for (&p, &q) in y_new.iter().zip(y_old) {
        if p > 0.0 {
            if q <= 0.0 {
                return f64::INFINITY;
            }
            acc += p * (p.ln() - q.ln());
        }
    }
    acc
}

/// `KL(y' || y)` from normalized log-weights; always finite.
pub fn kl_from_logs(log_new: &[f64], log_old: &[f64]) -> f64 {
    assert_eq!(log_new.len(), log_old.len(), "kl_from_logs: length mismatch");
    log_new
        .iter()
        .zip(log_old)
        .map(|(&lp, &lq)| lp.exp() * (lp - lq))
        .sum()
}
