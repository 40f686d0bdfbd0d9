mod support;

use std::time::Instant;

use sherbet::hyperbolic::{train_hyperbolic, HyperbolicConfig, BALL_EPS};

fn quick() -> HyperbolicConfig {
    HyperbolicConfig {
        dim: 8,
        epochs: 150,
        ..HyperbolicConfig::default()
    }
}

#[test]
fn parents_rank_near_the_top() {
    let start = Instant::now();
    let success = support::hyperbolic_reconstruction_success(0);
    let secs = start.elapsed().as_secs_f64();
    assert!(success >= 0.8, "success {success}");
    assert!(secs < 120.0, "took {secs:.1}s");
}

#[test]
fn chain_loss_decreases() {
    let ont = support::tree(&[("a", "b"), ("b", "c")]);
    let model = train_hyperbolic(&ont, &quick(), 3).unwrap();
    let curve = &model.loss_curve;
    assert!(curve.last().unwrap() < &curve[0], "{} -> {}", curve[0], curve.last().unwrap());
}

#[test]
fn embeddings_stay_inside_the_ball() {
    let ont = support::balanced_tree(3, 4);
    let model = train_hyperbolic(&ont, &quick(), 1).unwrap();
    assert!(model.max_norm_seen <= 1.0 - BALL_EPS + 1e-12);
    let e = model.embeddings(&ont).unwrap();
    for r in 0..e.public.rows() {
        let n: f64 = e.public.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n < 1.0, "row {r} norm {n}");
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let ont = support::toy_ontology();
    let a = train_hyperbolic(&ont, &quick(), 9).unwrap();
    let b = train_hyperbolic(&ont, &quick(), 9).unwrap();
    assert_eq!(a.params.shared, b.params.shared);
    assert_eq!(a.params.local, b.params.local);
    assert_eq!(a.params.logits, b.params.logits);
    assert_eq!(a.loss_curve, b.loss_curve);
    let c = train_hyperbolic(&ont, &quick(), 10).unwrap();
    assert_ne!(a.loss_curve, c.loss_curve);
}
