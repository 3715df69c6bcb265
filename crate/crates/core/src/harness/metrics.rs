use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::EdgeKey;

use super::experiments::TrialCounts;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
}

fn exceed_fraction(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s > threshold).count() as f64 / scores.len() as f64
}

/// Empirical ROC for a "score above threshold means H1" detector. Without a
/// grid, thresholds are `-inf` followed by every distinct observed score.
pub fn roc_curve(h0: &[f64], h1: &[f64], grid: Option<&[f64]>) -> Vec<RocPoint> {
    let thresholds: Vec<f64> = match grid {
        Some(g) => {
            let mut g = g.to_vec();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
        None => {
            let mut all: Vec<f64> = h0.iter().chain(h1).copied().filter(|s| !s.is_nan()).collect();
            all.sort_by(f64::total_cmp);
            all.dedup();
            std::iter::once(f64::NEG_INFINITY).chain(all).collect()
        }
    };
    thresholds
        .into_iter()
        .map(|t| RocPoint {
            threshold: t,
            pfa: exceed_fraction(h0, t),
            pd: exceed_fraction(h1, t),
        })
        .collect()
}

/// Detection rate at the smallest threshold whose empirical false-alarm rate
/// does not exceed `pfa`.
pub fn pd_at_pfa(h0: &[f64], h1: &[f64], pfa: f64) -> f64 {
    let mut sorted = h0.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let allowed = (pfa * sorted.len() as f64).floor() as usize;
    let threshold = match sorted.get(allowed) {
        Some(&t) => t,
        None => return 1.0,
    };
    exceed_fraction(h1, threshold)
}

/// Per-trial true/false positives and misses.
pub fn trial_counts(truth: &[EdgeKey], found: &[EdgeKey]) -> TrialCounts {
    let truth: BTreeSet<EdgeKey> = truth.iter().copied().collect();
    let found: BTreeSet<EdgeKey> = found.iter().copied().collect();
    let tp = truth.intersection(&found).count();
    TrialCounts {
        tp,
        fp: found.len() - tp,
        fn_: truth.len() - tp,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro-averaged F-score `sum 2tp / sum (2tp + fn + fp)`.
pub fn fscore(counts: &[TrialCounts]) -> f64 {
    let num: usize = counts.iter().map(|c| 2 * c.tp).sum();
    let den: usize = counts.iter().map(|c| 2 * c.tp + c.fn_ + c.fp).sum();
    ratio(num, den)
}

/// Leave-one-trial-out jackknife standard error of the micro F-score.
pub fn fscore_jackknife_se(counts: &[TrialCounts]) -> f64 {
    let l = counts.len();
    if l < 2 {
        return 0.0;
    }
    let num: usize = counts.iter().map(|c| 2 * c.tp).sum();
    let den: usize = counts.iter().map(|c| 2 * c.tp + c.fn_ + c.fp).sum();
    let leave_out: Vec<f64> = counts
        .iter()
        .map(|c| ratio(num - 2 * c.tp, den - (2 * c.tp + c.fn_ + c.fp)))
        .collect();
    let mean = leave_out.iter().sum::<f64>() / l as f64;
    let ss: f64 = leave_out.iter().map(|f| (f - mean).powi(2)).sum();
    ((l as f64 - 1.0) / l as f64 * ss).sqrt()
}
