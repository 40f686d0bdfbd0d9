//! Brute-force reference metrics, written from the definitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sherbet::metrics;
use sherbet::tensor::Tensor;

/// Position of `c` when codes are ordered by descending score, ties by
/// ascending index.
fn position(scores: &[f64], c: usize) -> usize {
    (0..scores.len())
        .filter(|&o| scores[o] > scores[c] || (scores[o] == scores[c] && o < c))
        .count()
}

pub fn recall_at_k(scores: &Tensor, truth: &[Vec<usize>], k: usize) -> f64 {
    let mut total = 0.0;
    for (r, t) in truth.iter().enumerate() {
        let hits = t.iter().filter(|&&c| position(scores.row(r), c) < k).count();
        total += hits as f64 / t.len() as f64;
    }
    total / truth.len() as f64
}

fn f1(tp: usize, fp: usize, fneg: usize) -> f64 {
    let d = 2 * tp + fp + fneg;
    if d == 0 {
        0.0
    } else {
        (2 * tp) as f64 / d as f64
    }
}

pub fn weighted_f1(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> f64 {
    let classes = truth[0].len();
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..classes {
        let tp = (0..truth.len()).filter(|&r| pred[r][c] && truth[r][c]).count();
        let fp = (0..truth.len()).filter(|&r| pred[r][c] && !truth[r][c]).count();
        let fneg = (0..truth.len()).filter(|&r| !pred[r][c] && truth[r][c]).count();
        let support = tp + fneg;
        if support > 0 {
            num += support as f64 * f1(tp, fp, fneg);
            den += support as f64;
        }
    }
    num / den
}

/// Pairwise definition: P(score_pos > score_neg) + ½ P(tie).
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice_wins, mut pairs) = (0usize, 0usize);
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        for j in (0..scores.len()).filter(|&j| !labels[j]) {
            pairs += 1;
            twice_wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    (twice_wins as f64 / 2.0) / pairs as f64
}

pub fn binary_f1(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let tp = (0..labels.len()).filter(|&i| predicted[i] && labels[i]).count();
    let fp = (0..labels.len()).filter(|&i| predicted[i] && !labels[i]).count();
    let fneg = (0..labels.len()).filter(|&i| !predicted[i] && labels[i]).count();
    if tp + fp == 0 {
        0.0
    } else {
        f1(tp, fp, fneg)
    }
}

/// Compares every library metric with its reference on one random,
/// tie-heavy instance. Returns a description of the first mismatch.
pub fn compare_on_random_instance(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..12);
    let cols = rng.random_range(2..15);
    // Coarse score grid so ties are common.
    let scores = Tensor::from_fn(rows, cols, |_, _| f64::from(rng.random_range(0..6u8)) / 5.0);
    let truth: Vec<Vec<usize>> = (0..rows)
        .map(|_| {
            let mut t: Vec<usize> = (0..cols).filter(|_| rng.random_bool(0.3)).collect();
            if t.is_empty() {
                t.push(rng.random_range(0..cols));
            }
            t
        })
        .collect();
    for k in [1, 3, 5, 10] {
        let (got, want) = (metrics::recall_at_k(&scores, &truth, k).unwrap(), recall_at_k(&scores, &truth, k));
        if got != want {
            return Err(format!("seed {seed}: R@{k} {got} != {want}"));
        }
    }

    let threshold = 0.5;
    let truth01 = Tensor::from_fn(rows, cols, |r, c| f64::from(u8::from(truth[r].contains(&c))));
    let pred_bool: Vec<Vec<bool>> = (0..rows).map(|r| scores.row(r).iter().map(|&s| s >= threshold).collect()).collect();
    let truth_bool: Vec<Vec<bool>> = (0..rows).map(|r| (0..cols).map(|c| truth[r].contains(&c)).collect()).collect();
    let got = metrics::weighted_f1(&metrics::binarize(&scores, threshold), &truth01).unwrap();
    let want = weighted_f1(&pred_bool, &truth_bool);
    if got != want {
        return Err(format!("seed {seed}: w-F1 {got} != {want}"));
    }

    let n = rng.random_range(2..40);
    let flat: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 7.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let (got, want) = (metrics::auc(&flat, &labels).unwrap(), auc(&flat, &labels));
    if got != want {
        return Err(format!("seed {seed}: AUC {got} != {want}"));
    }
    let (got, want) = (metrics::binary_f1(&flat, &labels, threshold), binary_f1(&flat, &labels, threshold));
    if got != want {
        return Err(format!("seed {seed}: F1 {got} != {want}"));
    }
    Ok(())
}
