mod support;

use sherbet::metrics::{self, MetricsError};
use sherbet::tensor::Tensor;

#[test]
fn library_metrics_equal_brute_force() {
    for seed in 0..100 {
        support::oracle::compare_on_random_instance(seed).unwrap();
    }
}

#[test]
fn perfect_ranking_has_unit_auc_and_recall() {
    let scores = [0.1, 0.9, 0.8, 0.2];
    let labels = [false, true, true, false];
    assert_eq!(metrics::auc(&scores, &labels).unwrap(), 1.0);
    let t = Tensor::from_rows(&[scores.to_vec()]).unwrap();
    assert_eq!(metrics::recall_at_k(&t, &[vec![1, 2]], 2).unwrap(), 1.0);
}

#[test]
fn constant_scores_give_half_auc() {
    assert_eq!(metrics::auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
}

#[test]
fn degenerate_inputs_are_rejected() {
    assert!(matches!(metrics::auc(&[0.1, 0.2], &[true, true]), Err(MetricsError::SingleClass)));
    let t = Tensor::zeros(1, 3);
    assert!(matches!(metrics::recall_at_k(&t, &[vec![]], 1), Err(MetricsError::EmptyTruth(0))));
    assert!(matches!(metrics::recall_at_k(&t, &[vec![0]], 0), Err(MetricsError::InvalidK)));
    assert!(matches!(metrics::weighted_f1(&t, &t), Err(MetricsError::AllZeroSupport)));
}
