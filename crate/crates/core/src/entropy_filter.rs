//! Interquartile-range filter on trajectory entropies.
//!
//! Within one prompt's pool, a trajectory is a low-entropy outlier when its
//! entropy is below `Q1 - k * (Q3 - Q1)`. Only the lower tail is pruned.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub k: f64,
    /// Pools smaller than this are kept whole.
    pub min_pool_for_filter: usize,
    pub enabled: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            k: 0.75,
            min_pool_for_filter: 4,
            enabled: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("filter.k must be finite and >= 0 (got {})", self.k)));
        }
        if self.min_pool_for_filter < 2 {
            return Err(Error::Config(format!(
                "filter.min_pool_for_filter must be >= 2 (got {})",
                self.min_pool_for_filter
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub keep_mask: Vec<bool>,
    /// `-inf` when the filter was bypassed.
    pub threshold: f64,
    /// `NaN` when the filter was bypassed.
    pub q1: f64,
    /// `NaN` when the filter was bypassed.
    pub q3: f64,
    pub removed_count: usize,
}

impl FilterOutcome {
    fn keep_all(n: usize) -> Self {
        Self {
            keep_mask: vec![true; n],
            threshold: f64::NEG_INFINITY,
            q1: f64::NAN,
            q3: f64::NAN,
            removed_count: 0,
        }
    }
}

/// Linear-interpolation quantile of sorted data at fractional index `(n-1)q`.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    }
}

/// First and third quartiles.
pub fn quartiles(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    check_finite("value", values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted_quantile(&sorted, 0.25), sorted_quantile(&sorted, 0.75)))
}

pub fn iqr_filter(entropies: &[f64], config: &FilterConfig) -> Result<FilterOutcome> {
    check_finite("entropy", entropies)?;
    if !config.enabled || entropies.len() < config.min_pool_for_filter.max(2) {
        return Ok(FilterOutcome::keep_all(entropies.len()));
    }
    let (q1, q3) = quartiles(entropies)?;
    let threshold = q1 - config.k * (q3 - q1);
    let keep_mask: Vec<bool> = entropies.iter().map(|&e| e >= threshold).collect();
    let removed_count = keep_mask.iter().filter(|&&keep| !keep).count();
    Ok(FilterOutcome {
        keep_mask,
        threshold,
        q1,
        q3,
        removed_count,
    })
}
