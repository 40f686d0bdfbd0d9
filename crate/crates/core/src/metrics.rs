//! Evaluation metrics: support-weighted F1, recall@k, ROC AUC, binary F1.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("sample {0} has an empty truth set")]
    EmptyTruth(usize),
    #[error("no class has positive support")]
    AllZeroSupport,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

type Result<T> = std::result::Result<T, MetricsError>;

/// Indices of the `k` largest scores; ties go to the smaller index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Mean over samples of `|top-k ∩ truth| / |truth|`.
pub fn recall_at_k(scores: &Tensor, truth: &[Vec<usize>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    if scores.rows() != truth.len() {
        return Err(MetricsError::ShapeMismatch(scores.shape(), (truth.len(), scores.cols())));
    }
    let mut total = 0.0;
    for (i, t) in truth.iter().enumerate() {
        if t.is_empty() {
            return Err(MetricsError::EmptyTruth(i));
        }
        let top = top_k(scores.row(i), k);
        let hits = t.iter().filter(|c| top.contains(c)).count();
        total += hits as f64 / t.len() as f64;
    }
    Ok(total / truth.len().max(1) as f64)
}

fn f1_from_counts(tp: f64, fp: f64, fneg: f64) -> f64 {
    let denom = 2.0 * tp + fp + fneg;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp / denom
    }
}

/// Per-class F1 over the whole corpus, averaged with weights equal to each
/// class's true support. Inputs are 0/1 matrices (samples × classes).
pub fn weighted_f1(predictions: &Tensor, truth: &Tensor) -> Result<f64> {
    if predictions.shape() != truth.shape() {
        return Err(MetricsError::ShapeMismatch(predictions.shape(), truth.shape()));
    }
    let mut weighted = 0.0;
    let mut support_total = 0.0;
    for c in 0..truth.cols() {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for r in 0..truth.rows() {
            match (predictions.get(r, c) > 0.5, truth.get(r, c) > 0.5) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                (false, false) => {}
            }
        }
        let support = tp + fneg;
        if support > 0.0 {
            weighted += support * f1_from_counts(tp, fp, fneg);
            support_total += support;
        }
    }
    if support_total == 0.0 {
        return Err(MetricsError::AllZeroSupport);
    }
    Ok(weighted / support_total)
}

/// Thresholds scores at `threshold` (inclusive) into a 0/1 matrix.
pub fn binarize(scores: &Tensor, threshold: f64) -> Tensor {
    scores.map(|s| if s >= threshold { 1.0 } else { 0.0 })
}

/// Mann–Whitney estimate of ROC AUC; tied pairs count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MetricsError::ShapeMismatch((scores.len(), 1), (labels.len(), 1)));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average 1-based ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// F1 of the positive class with `score >= threshold` predicted positive;
/// 0 when nothing is predicted positive.
pub fn binary_f1(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fneg += 1.0,
            (false, false) => {}
        }
    }
    if tp + fp == 0.0 {
        return 0.0;
    }
    f1_from_counts(tp, fp, fneg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w_f1: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub r_at: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    pub samples: usize,
    pub threshold: f64,
}

/// Diagnosis: w-F1 at `threshold` plus R@k for every `k`.
pub fn evaluate_diagnosis(scores: &Tensor, labels: &Tensor, ks: &[usize], threshold: f64) -> Result<EvalReport> {
    let truth: Vec<Vec<usize>> = (0..labels.rows())
        .map(|r| (0..labels.cols()).filter(|&c| labels.get(r, c) > 0.5).collect())
        .collect();
    let mut r_at = BTreeMap::new();
    for &k in ks {
        r_at.insert(k.to_string(), recall_at_k(scores, &truth, k)?);
    }
    Ok(EvalReport {
        task: "diagnosis".into(),
        w_f1: Some(weighted_f1(&binarize(scores, threshold), labels)?),
        r_at,
        auc: None,
        f1: None,
        samples: labels.rows(),
        threshold,
    })
}

/// Heart failure: AUC and F1 at `threshold`.
pub fn evaluate_binary(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    Ok(EvalReport {
        task: "heart_failure".into(),
        w_f1: None,
        r_at: BTreeMap::new(),
        auc: Some(auc(scores, labels)?),
        f1: Some(binary_f1(scores, labels, threshold)),
        samples: labels.len(),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_counts_hits() {
        let mut row = vec![0.0; 20];
        for (i, s) in row.iter_mut().enumerate() {
            *s = -(i as f64);
        }
        // top-10 = 0..10; truth {0, 1, 15, 16}
        let scores = Tensor::from_rows(&[row]).unwrap();
        assert_eq!(recall_at_k(&scores, &[vec![0, 1, 15, 16]], 10).unwrap(), 0.5);
        assert_eq!(recall_at_k(&scores, &[vec![3, 4]], 10).unwrap(), 1.0);
        assert_eq!(recall_at_k(&scores, &[vec![]], 10), Err(MetricsError::EmptyTruth(0)));
    }

    #[test]
    fn ties_break_toward_smaller_ids() {
        assert_eq!(top_k(&[0.5, 0.9, 0.5, 0.5], 3), vec![1, 0, 2]);
    }

    #[test]
    fn weighted_f1_cases() {
        let t = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(weighted_f1(&t, &t).unwrap(), 1.0);
        // single class: TP=1 FP=1 FN=1
        let p = Tensor::column(vec![1.0, 1.0, 0.0]);
        let y = Tensor::column(vec![1.0, 0.0, 1.0]);
        assert_eq!(weighted_f1(&p, &y).unwrap(), 0.5);
        // supports 3 and 1 with F1 1 and 0
        let y = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let p = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(weighted_f1(&p, &y).unwrap(), 0.75);
        assert_eq!(weighted_f1(&p, &Tensor::zeros(3, 2)), Err(MetricsError::AllZeroSupport));
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.9, 0.8, 0.7, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false]).unwrap(), 0.75);
        assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(MetricsError::SingleClass));
    }

    #[test]
    fn binary_f1_cases() {
        let labels = [true, true, false, false];
        assert_eq!(binary_f1(&[0.9, 0.6, 0.2, 0.1], &labels, 0.5), 1.0);
        assert!((binary_f1(&[0.9; 4], &labels, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(binary_f1(&[0.1; 4], &labels, 0.5), 0.0);
    }

    #[test]
    fn report_json_shape() {
        let scores = Tensor::from_rows(&[vec![0.9, 0.1, 0.3]]).unwrap();
        let labels = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let r = evaluate_diagnosis(&scores, &labels, &[1, 2], 0.5).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"task":"diagnosis","w_f1":1.0,"r_at":{"1":1.0,"2":1.0},"samples":1,"threshold":0.5}"#);
    }
}
