//! Gap metric and the paired Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest number of nonzero pairs handled with the exact null distribution.
pub const EXACT_LIMIT: usize = 25;
pub const MIN_PAIRS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("reference cost must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all paired differences are zero")]
    Degenerate,
    #[error("{0} nonzero differences, at least {MIN_PAIRS} needed")]
    TooFewPairs(usize),
    #[error("non-finite sample value")]
    NonFinite,
}

/// `100 (z - z_ref) / z_ref`. Negative gaps are returned as they are.
pub fn gap_percent(z: f64, z_ref: f64) -> Result<f64, StatsError> {
    if z_ref.is_nan() || z_ref <= 0.0 {
        return Err(StatsError::NonPositiveReference(z_ref));
    }
    Ok(100.0 * (z - z_ref) / z_ref)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// min(W+, W-).
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Midranks of `values` (1-based). Values within a relative 1e-12 of each other tie.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k + 1;
        while e < idx.len() && same(values[idx[e]], values[idx[k]]) {
            e += 1;
        }
        let r = (k + 1 + e) as f64 / 2.0;
        for &i in &idx[k..e] {
            ranks[i] = r;
        }
        k = e;
    }
    ranks
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Two-tailed paired signed-rank test on `a - b`. Zero differences are dropped.
pub fn wilcoxon_paired(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&x| x != 0.0).collect();
    if d.is_empty() {
        return Err(StatsError::Degenerate);
    }
    if d.len() < MIN_PAIRS {
        return Err(StatsError::TooFewPairs(d.len()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let (p, exact) = if n <= EXACT_LIMIT {
        (exact_p(&ranks, w_plus), true)
    } else {
        (normal_p(&ranks, w_plus), false)
    };
    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        p_value: p,
        n,
        exact,
    })
}

/// Exact two-tailed p-value by counting sign assignments over doubled (integer) ranks.
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total: f64 = counts.iter().sum();
    let t = (2.0 * w_plus).round() as usize;
    let lower: f64 = counts[..=t].iter().sum();
    let upper: f64 = counts[t..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut k = 0;
    while k < sorted.len() {
        let mut e = k + 1;
        while e < sorted.len() && sorted[e] == sorted[k] {
            e += 1;
        }
        let t = (e - k) as f64;
        tie_term += t * t * t - t;
        k = e;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}
