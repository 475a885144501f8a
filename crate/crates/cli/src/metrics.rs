//! Comparison metrics for per-site probability distributions.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("entry {0} outside [0, 1]")]
    BadEntry(f64),
}

/// ℓ1 distance between per-site probability vectors: Σ_j |q_j − p_j|.
pub fn l1_distance(q: &[f64], p: &[f64]) -> Result<f64, MetricsError> {
    if q.len() != p.len() {
        return Err(MetricsError::LengthMismatch(q.len(), p.len()));
    }
    for &v in q.iter().chain(p) {
        if !(0.0..=1.0).contains(&v) {
            return Err(MetricsError::BadEntry(v));
        }
    }
    Ok(q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum())
}
