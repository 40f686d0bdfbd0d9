//! Values worked out by hand on tiny inputs.

use sherbet::decoder::{self, DecoderKind, DecoderLayout, HierarchyTargets};
use sherbet::graph::{count_cooccurrence_indices, CooccurrenceGraph};
use sherbet::hyperbolic::poincare_distance;
use sherbet::tensor::{Tape, Tensor};

const EXACT: f64 = 1e-12;

fn three_code_graph() -> CooccurrenceGraph {
    let adms: Vec<&[usize]> = vec![&[0, 1], &[0, 1, 2]];
    CooccurrenceGraph::build(count_cooccurrence_indices(adms, 3).unwrap(), 0.9).unwrap()
}

pub fn pair_counts_by_hand() {
    let g = three_code_graph();
    let b = g.counts();
    assert_eq!(b.get(0, 1), 2.0);
    assert_eq!(b.get(1, 0), 2.0);
    assert_eq!(b.get(0, 2), 1.0);
    assert_eq!(b.get(2, 1), 1.0);
    assert_eq!(b.get(1, 1), 0.0);
    assert_eq!(g.row_sums(), &[3.0, 3.0, 2.0]);
}

pub fn three_code_adjacency() {
    let g = three_code_graph();
    let a = g.adjacency();
    let expect = [[0.0, 2.0 / 3.0, 1.0 / 3.0], [2.0 / 3.0, 0.0, 1.0 / 3.0], [0.5, 0.5, 0.0]];
    for (i, row) in expect.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert!((a.get(i, j) - v).abs() < EXACT, "A[{i}][{j}] = {}", a.get(i, j));
        }
    }
    // Ã = 0.1 A + 0.9 I, already row-stochastic.
    let n = g.normalized();
    assert!((n.get(0, 0) - 0.9).abs() < EXACT);
    assert!((n.get(0, 1) - 0.2 / 3.0).abs() < EXACT);
    assert!((n.get(2, 1) - 0.05).abs() < EXACT);
}

pub fn isolated_code_gets_self_loop() {
    let adms: Vec<&[usize]> = vec![&[0, 1], &[0, 1, 2], &[3]];
    let g = CooccurrenceGraph::build(count_cooccurrence_indices(adms, 4).unwrap(), 0.9).unwrap();
    assert_eq!(g.adjacency().get(3, 3), 1.0);
    assert_eq!(g.adjacency().row_sum(3), 1.0);
    assert!((g.normalized().get(3, 3) - 1.0).abs() < EXACT);
}

pub fn distance_to_origin_is_ln4() {
    let d = poincare_distance(&[0.6, 0.0], &[0.0, 0.0]).unwrap();
    assert!((d - 4f64.ln()).abs() < EXACT, "{d}");
    assert!((d - 1.386294).abs() < 1e-6);
}

pub fn zero_logit_decoder_chain() {
    let ont = super::toy_ontology();
    let layout = DecoderLayout::new(&ont).unwrap();
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_rows(&[vec![0.4, -1.0, 2.0], vec![0.0, 0.3, 0.1]]).unwrap());
    let heads: Vec<_> = layout
        .predicted_levels(DecoderKind::Hierarchical)
        .iter()
        .map(|&h| tape.constant(Tensor::zeros(layout.count(h), 3)))
        .collect();
    let preds = decoder::hierarchical_forward(&mut tape, p, &heads, &layout, DecoderKind::Hierarchical, None).unwrap();
    for (pred, h) in preds.iter().zip(2..) {
        let expect = 0.5f64.powi(h - 1);
        assert!(tape.value(*pred).data().iter().all(|&v| (v - expect).abs() < EXACT), "level {h}");
    }
}

pub fn half_chain_ssl_loss_by_hand() {
    // Toy tree: n_2 = 3 ({A, B, C}), n_3 = 6. Targets: one patient with a1.
    let ont = super::toy_ontology();
    let layout = DecoderLayout::new(&ont).unwrap();
    let a1 = ont.code_vocabulary().index("a1").unwrap();
    let targets = decoder::build_targets(&[vec![vec![a1]]], &layout, DecoderKind::Hierarchical).unwrap();
    let mut tape = Tape::new();
    let preds: Vec<_> = targets
        .levels
        .iter()
        .map(|&h| tape.constant(Tensor::filled(1, layout.count(h), 0.5f64.powi(h as i32 - 1))))
        .collect();
    let loss = decoder::ssl_loss(&mut tape, &preds, &targets).unwrap();
    // Level 2: one positive, two negatives at 0.5 → ln 2 each.
    let l2 = 2f64.ln();
    // Level 3: one positive at 0.25 (−ln 0.25) and five negatives (−ln 0.75).
    let l3 = (-(0.25f64).ln() - 5.0 * 0.75f64.ln()) / 6.0;
    assert!((tape.value(loss).item() - (l2 + l3) / 2.0).abs() < EXACT);
}

pub fn targets_of_two_admissions() {
    let ont = super::toy_ontology();
    let layout = DecoderLayout::new(&ont).unwrap();
    let vocab = ont.code_vocabulary();
    let a1 = vocab.index("a1").unwrap();
    let b2 = vocab.index("b2").unwrap();
    let HierarchyTargets { levels, targets } =
        decoder::build_targets(&[vec![vec![a1], vec![b2]]], &layout, DecoderKind::Hierarchical).unwrap();
    assert_eq!(levels, vec![2, 3]);
    assert_eq!(targets[0].sum(), 2.0);
    assert_eq!(targets[1].sum(), 2.0);
    assert_eq!(targets[1].get(0, a1), 1.0);
    assert_eq!(targets[1].get(0, b2), 1.0);
    let a = ont.level_position(ont.id_of("A").unwrap());
    let b = ont.level_position(ont.id_of("B").unwrap());
    assert_eq!(targets[0].get(0, a), 1.0);
    assert_eq!(targets[0].get(0, b), 1.0);
}

/// Every hand-computed check, by name.
pub const ALL: &[(&str, fn())] = &[
    ("pair_counts_by_hand", pair_counts_by_hand),
    ("three_code_adjacency", three_code_adjacency),
    ("isolated_code_gets_self_loop", isolated_code_gets_self_loop),
    ("distance_to_origin_is_ln4", distance_to_origin_is_ln4),
    ("zero_logit_decoder_chain", zero_logit_decoder_chain),
    ("half_chain_ssl_loss_by_hand", half_chain_ssl_loss_by_hand),
    ("targets_of_two_admissions", targets_of_two_admissions),
];
