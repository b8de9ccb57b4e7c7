//! Classification and fairness metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Area under the ROC curve as the Mann–Whitney pair statistic: the share of
/// (positive, negative) pairs where the positive scores higher, ties counting
/// one half. Uses midranks, O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { expected: scores.len(), got: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("auc needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of thresholded decisions (`prob >= threshold`) equal to the label.
pub fn accuracy(probs: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension { expected: probs.len(), got: labels.len() });
    }
    if probs.is_empty() {
        return Err(Error::data("accuracy of an empty sample"));
    }
    let correct = probs.iter().zip(labels).filter(|(&p, &l)| (p >= threshold) == l).count();
    Ok(correct as f64 / probs.len() as f64)
}

/// Fraction of positives with `prob >= threshold`.
pub fn tpr(probs: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension { expected: probs.len(), got: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::data("tpr needs at least one positive"));
    }
    let hits = probs.iter().zip(labels).filter(|(&p, &l)| l && p >= threshold).count();
    Ok(hits as f64 / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parity {
    /// `P(d=1 | S=1) − P(d=1 | S=0)`.
    pub signed: f64,
}

impl Parity {
    pub fn abs(&self) -> f64 {
        self.signed.abs()
    }
}

/// Statistical parity difference between the `sensitive = true` and
/// `sensitive = false` groups.
pub fn statistical_parity(decisions: &[bool], sensitive: &[bool]) -> Result<Parity> {
    if decisions.len() != sensitive.len() {
        return Err(Error::Dimension { expected: decisions.len(), got: sensitive.len() });
    }
    let (mut pos1, mut n1, mut pos0, mut n0) = (0usize, 0usize, 0usize, 0usize);
    for (&d, &s) in decisions.iter().zip(sensitive) {
        if s {
            n1 += 1;
            pos1 += d as usize;
        } else {
            n0 += 1;
            pos0 += d as usize;
        }
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::data("statistical parity needs both sensitive groups"));
    }
    Ok(Parity { signed: pos1 as f64 / n1 as f64 - pos0 as f64 / n0 as f64 })
}
