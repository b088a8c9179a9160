//! Identification accuracy, unweighted accuracy, verification EER and the
//! relative-change columns used in result tables.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub score: f64,
    pub same_class: bool,
}

/// Which side of a threshold counts as "accept".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Acceptance {
    /// Accept when `score >= threshold`.
    #[default]
    HigherAccepts,
    /// Accept when `score <= threshold`.
    LowerAccepts,
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean per-class recall. Every class in `0..num_classes` must occur in
/// `labels`.
pub fn unweighted_accuracy(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut total = vec![0usize; num_classes];
    let mut hit = vec![0usize; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= num_classes {
            return Err(Error::Index {
                index: l,
                len: num_classes,
            });
        }
        total[l] += 1;
        if p == l {
            hit[l] += 1;
        }
    }
    if let Some(c) = total.iter().position(|&n| n == 0) {
        return Err(Error::contract(format!("class {c} absent from labels")));
    }
    let recall_sum: f64 = hit.iter().zip(&total).map(|(&h, &n)| h as f64 / n as f64).sum();
    Ok(recall_sum / num_classes as f64)
}

/// Cosine similarity of two nonzero vectors.
pub fn cosine_score(a: &Tensor, b: &Tensor) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::contract("cosine score of a zero vector"));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Equal error rate with `score >= threshold` accepting.
pub fn compute_eer(pairs: &[ScoredPair]) -> Result<f64> {
    compute_eer_with(pairs, Acceptance::HigherAccepts)
}

/// Equal error rate over the thresholds `{-∞, every distinct score, +∞}`.
///
/// At each threshold FAR is the fraction of different-class pairs accepted
/// and FRR the fraction of same-class pairs rejected. The result is
/// `(FAR + FRR) / 2` at the threshold minimizing `|FAR − FRR|`; among equal
/// minimizers the most permissive threshold wins (the lowest one when higher
/// scores accept).
pub fn compute_eer_with(pairs: &[ScoredPair], acceptance: Acceptance) -> Result<f64> {
    let n_same = pairs.iter().filter(|p| p.same_class).count();
    let n_diff = pairs.len() - n_same;
    if n_same == 0 || n_diff == 0 {
        return Err(Error::contract(
            "EER needs at least one same-class and one different-class pair",
        ));
    }
    if pairs.iter().any(|p| !p.score.is_finite()) {
        return Err(Error::contract("non-finite verification score"));
    }
    // Orient so that "accept" always means key >= threshold.
    let key = |p: &ScoredPair| match acceptance {
        Acceptance::HigherAccepts => p.score,
        Acceptance::LowerAccepts => -p.score,
    };
    let mut sorted: Vec<(f64, bool)> = pairs.iter().map(|p| (key(p), p.same_class)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sweep thresholds from most to least permissive. At threshold t the
    // accepted pairs are those with key >= t.
    let rates = |rejected_same: usize, rejected_diff: usize| {
        let far = (n_diff - rejected_diff) as f64 / n_diff as f64;
        let frr = rejected_same as f64 / n_same as f64;
        (far, frr)
    };
    let (far, frr) = rates(0, 0);
    let mut best = ((far - frr).abs(), (far + frr) / 2.0);
    let (mut rej_same, mut rej_diff) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        // Threshold at sorted[i].0 accepts everything from i on; the -∞
        // threshold and the lowest score coincide, which is harmless.
        let (far, frr) = rates(rej_same, rej_diff);
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, (far + frr) / 2.0);
        }
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                rej_same += 1;
            } else {
                rej_diff += 1;
            }
            i += 1;
        }
    }
    // +∞: everything rejected.
    let (far, frr) = rates(rej_same, rej_diff);
    if (far - frr).abs() < best.0 {
        best = ((far - frr).abs(), (far + frr) / 2.0);
    }
    Ok(best.1)
}

/// Relative change in percent, signed so that improvement is positive.
pub fn relative_delta(before: f64, after: f64, higher_is_better: bool) -> Result<f64> {
    if !(before > 0.0) {
        return Err(Error::contract(format!("relative delta needs before > 0, got {before}")));
    }
    Ok(if higher_is_better {
        100.0 * (after - before) / before
    } else {
        100.0 * (before - after) / before
    })
}

/// Round to two decimals, ties to even.
pub fn round_pct(v: f64) -> f64 {
    (v * 100.0).round_ties_even() / 100.0
}
