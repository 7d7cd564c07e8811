//! Scalar evaluation formulas.
//!
//! Continuous variables are scored with the normalized MSE
//! `sum (y - yhat)^2 / sum (y - ybar)^2`, which equals `1 - R^2`. Categorical
//! variables are scored with the Brier score divided by the Brier score of a
//! predictor that always outputs the class proportions,
//! `BS / (1 - sum p_j^2)`, which equals `1 - BSS`. Under both definitions the
//! reference (mean / class-proportion) predictor scores exactly 1.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("class index {0} out of range")]
    BadClass(usize),
    #[error("non-finite value in input")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(MetricError::Length(a, b));
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn mse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    same_len(truth.len(), pred.len())?;
    Ok(truth.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / truth.len() as f64)
}

/// `sum (y - yhat)^2 / sum (y - ref_mean)^2`.
pub fn nmse_continuous(truth: &[f64], pred: &[f64], ref_mean: f64) -> Result<f64> {
    same_len(truth.len(), pred.len())?;
    let num: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum();
    let den: f64 = truth.iter().map(|y| (y - ref_mean) * (y - ref_mean)).sum();
    if den == 0.0 {
        return Err(MetricError::Degenerate("truth has zero spread around the reference mean"));
    }
    Ok(num / den)
}

/// `1 - NMSE` with the truth's own mean as reference.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(1.0 - nmse_continuous(truth, pred, mean(truth))?)
}

fn check_probs(truth: &[u32], probs: &[f64], n_classes: usize) -> Result<()> {
    if n_classes == 0 {
        return Err(MetricError::Degenerate("no classes"));
    }
    same_len(truth.len() * n_classes, probs.len())?;
    if let Some(&c) = truth.iter().find(|&&c| c as usize >= n_classes) {
        return Err(MetricError::BadClass(c as usize));
    }
    Ok(())
}

/// Multi-class Brier score, `(1/N) sum_i sum_j (p_ij - y_ij)^2`, with `probs`
/// row-major `N x n_classes`.
pub fn brier(truth: &[u32], probs: &[f64], n_classes: usize) -> Result<f64> {
    check_probs(truth, probs, n_classes)?;
    let total: f64 = truth
        .iter()
        .zip(probs.chunks(n_classes))
        .map(|(&t, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &p)| {
                    let d = p - if j == t as usize { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / truth.len() as f64)
}

/// Brier score of the constant class-proportion predictor, `1 - sum p_j^2`.
pub fn brier_ref(proportions: &[f64]) -> f64 {
    1.0 - proportions.iter().map(|p| p * p).sum::<f64>()
}

pub fn class_proportions(labels: &[u32], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_classes];
    for &l in labels {
        counts[l as usize] += 1.0;
    }
    counts.iter().map(|c| c / labels.len() as f64).collect()
}

/// `BS / BSref` where the reference proportions are supplied by the caller
/// (normally the observed training proportions).
pub fn nmse_categorical(truth: &[u32], probs: &[f64], n_classes: usize, proportions: &[f64]) -> Result<f64> {
    if proportions.len() != n_classes {
        return Err(MetricError::Length(proportions.len(), n_classes));
    }
    let reference = brier_ref(proportions);
    if reference <= 0.0 {
        return Err(MetricError::Degenerate("reference Brier score is zero (single class)"));
    }
    Ok(brier(truth, probs, n_classes)? / reference)
}

/// Brier skill score, `1 - BS / BSref`.
pub fn bss(truth: &[u32], probs: &[f64], n_classes: usize, proportions: &[f64]) -> Result<f64> {
    Ok(1.0 - nmse_categorical(truth, probs, n_classes, proportions)?)
}

/// Misclassification error rate.
pub fn mer(truth: &[u32], pred: &[u32]) -> Result<f64> {
    same_len(truth.len(), pred.len())?;
    Ok(truth.iter().zip(pred).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64)
}

fn confusion(truth: &[u32], pred: &[u32], class: u32) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == class, p == class) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

fn f1_from(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp + fp == 0.0 || tp + fn_ == 0.0 {
        return 0.0;
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// F1 of `positive`; undefined precision or recall gives 0.
pub fn f1(truth: &[u32], pred: &[u32], positive: u32) -> Result<f64> {
    same_len(truth.len(), pred.len())?;
    let (tp, fp, fn_) = confusion(truth, pred, positive);
    Ok(f1_from(tp, fp, fn_))
}

/// Unweighted mean of per-class F1 over the classes that occur in the truth
/// or the prediction.
pub fn macro_f1(truth: &[u32], pred: &[u32]) -> Result<f64> {
    same_len(truth.len(), pred.len())?;
    let mut classes: Vec<u32> = truth.iter().chain(pred).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (tp, fp, fn_) = confusion(truth, pred, c);
            f1_from(tp, fp, fn_)
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// Area under the ROC curve via the Mann-Whitney rank-sum statistic, with
/// tied scores sharing their mid-rank.
pub fn auroc(truth: &[bool], scores: &[f64]) -> Result<f64> {
    same_len(truth.len(), scores.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Degenerate("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based: the tie group spans ranks i+1 ..= j+1
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid_rank * order[i..=j].iter().filter(|&&k| truth[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_examples() {
        let truth = [1.0, 2.0, 3.0];
        assert_eq!(nmse_continuous(&truth, &[2.0, 2.0, 2.0], 2.0).unwrap(), 1.0);
        assert_eq!(nmse_continuous(&truth, &truth, 2.0).unwrap(), 0.0);
        assert_eq!(nmse_continuous(&truth, &[1.0, 2.0, 4.0], 2.0).unwrap(), 0.5);
        assert!(matches!(nmse_continuous(&[4.0, 4.0], &[4.0, 4.0], 4.0), Err(MetricError::Degenerate(_))));
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier_ref(&[0.5, 0.5]), 0.5);
        // truth is the first class, predicted (0.8, 0.2)
        let bs = brier(&[0], &[0.8, 0.2], 2).unwrap();
        assert!((bs - 0.08).abs() < 1e-15);
        assert!(matches!(nmse_categorical(&[0, 0], &[1.0, 0.0, 1.0, 0.0], 2, &[1.0, 0.0]), Err(MetricError::Degenerate(_))));
    }

    #[test]
    fn class_proportion_predictor_scores_one() {
        let truth = [0, 1, 2, 1, 1, 0];
        let props = class_proportions(&truth, 3);
        let probs: Vec<f64> = truth.iter().flat_map(|_| props.clone()).collect();
        let v = nmse_categorical(&truth, &probs, 3, &props).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mer_examples() {
        assert_eq!(mer(&[0, 1, 2], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(mer(&[0, 1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(mer(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.25);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&[1, 0, 1], &[1, 0, 1], 1).unwrap(), 1.0);
        // TP=1, FP=1, FN=1
        assert_eq!(f1(&[1, 0, 1], &[1, 1, 0], 1).unwrap(), 0.5);
        assert_eq!(f1(&[1, 1, 0], &[0, 0, 0], 1).unwrap(), 0.0);
    }

    #[test]
    fn macro_f1_averages_over_observed_classes() {
        // class 2 never occurs, so the average is over classes 0 and 1
        assert_eq!(macro_f1(&[0, 1], &[0, 1]).unwrap(), 1.0);
        let v = macro_f1(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap();
        assert!((v - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[false, true], &[0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(auroc(&[false, false, true, true], &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auroc(&[false, true], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(matches!(auroc(&[true, true], &[0.1, 0.2]), Err(MetricError::Degenerate(_))));
    }

    #[test]
    fn auroc_of_independent_scores_is_near_chance() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(42);
        let truth: Vec<bool> = (0..10_000).map(|_| rng.random::<f64>() < 0.3).collect();
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        assert!((auroc(&truth, &scores).unwrap() - 0.5).abs() < 0.02);
    }
}
