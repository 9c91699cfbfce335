use crate::{Error, Result};

/// Mann-Whitney AUC: the fraction of (watermarked, clean) pairs where the
/// watermarked p-value is smaller, ties counting one half.
pub fn auc(p_watermarked: &[f64], p_clean: &[f64]) -> Result<f64> {
    if p_watermarked.is_empty() || p_clean.is_empty() {
        return Err(Error::param("auc", "both p-value lists must be non-empty"));
    }
    if p_watermarked.iter().chain(p_clean).any(|p| p.is_nan()) {
        return Err(Error::NonFinite("auc"));
    }
    let mut clean = p_clean.to_vec();
    clean.sort_by(|a, b| a.total_cmp(b));
    let mut wins = 0.0;
    for &p in p_watermarked {
        // Clean values strictly above p win; equal ones tie.
        let lower = clean.partition_point(|&c| c < p);
        let upper = clean.partition_point(|&c| c <= p);
        wins += (clean.len() - upper) as f64 + 0.5 * (upper - lower) as f64;
    }
    Ok(wins / (p_watermarked.len() * p_clean.len()) as f64)
}
