//! Strategies and property bodies for the invariant suite.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sherbet::decoder::{self, DecoderKind, DecoderLayout};
use sherbet::encoder::{encode_patients, glorot, EncoderDims, EncoderParams};
use sherbet::graph::{count_cooccurrence_indices, CooccurrenceGraph};
use sherbet::hyperbolic::poincare_distance;
use sherbet::interpret::compute_delta;
use sherbet::ontology::Ontology;
use sherbet::tensor::{Tape, Tensor};

pub const CASES: u32 = 256;
const TIGHT: f64 = 1e-12;

pub type Patients = Vec<Vec<Vec<usize>>>;

pub fn admissions(codes: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0..codes, 1..6), 0..20)
}

pub fn patients(codes: usize) -> impl Strategy<Value = Patients> {
    prop::collection::vec(prop::collection::vec(prop::collection::vec(0..codes, 1..5), 1..5), 1..5)
}

/// Random three-level tree: each category has 0 (recorded directly) to 4 leaves.
pub fn ontology() -> impl Strategy<Value = Ontology> {
    prop::collection::vec(0usize..5, 1..6).prop_map(|sizes| {
        let mut e = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            e.push(("root".to_string(), format!("k{c}")));
            for l in 0..n {
                e.push((format!("k{c}"), format!("k{c}.{l}")));
            }
        }
        Ontology::from_edges(&e).unwrap().pad_virtual_leaves("~v")
    })
}

fn close(a: f64, b: f64, what: &str) -> Result<(), TestCaseError> {
    prop_assert!((a - b).abs() < TIGHT, "{what}: {a} vs {b}");
    Ok(())
}

pub fn check_adjacency(adms: &[Vec<usize>], codes: usize, phi: f64) -> Result<(), TestCaseError> {
    let refs: Vec<&[usize]> = adms.iter().map(Vec::as_slice).collect();
    let g = CooccurrenceGraph::build(count_cooccurrence_indices(refs, codes).unwrap(), phi).unwrap();
    let (b, a, norm) = (g.counts(), g.adjacency(), g.normalized());
    for i in 0..codes {
        prop_assert_eq!(b.get(i, i), 0.0);
        close(a.row_sum(i), 1.0, "A row sum")?;
        close(norm.row_sum(i), 1.0, "Â row sum")?;
        for j in 0..codes {
            prop_assert_eq!(b.get(i, j), b.get(j, i));
            let tilde = (1.0 - phi) * a.get(i, j) + if i == j { phi } else { 0.0 };
            close(norm.get(i, j), tilde, "Â vs Ã")?;
        }
    }
    Ok(())
}

pub fn small_dims() -> EncoderDims {
    EncoderDims {
        embed: 5,
        hidden: 4,
        patient: 3,
        code_attention: 4,
        admission_attention: 3,
        layers: 1,
    }
}

pub fn random_encoder(codes: usize, patients: &Patients, seed: u64) -> (EncoderParams, std::sync::Arc<sherbet::tensor::SparseMatrix>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = small_dims();
    let mut enc = EncoderParams::init(glorot(codes, dims.embed, &mut rng), &dims, true, &mut rng);
    // Larger weights make attention far from uniform.
    for t in enc.tensors_mut() {
        *t = t.map(|v| 3.0 * v);
    }
    let refs: Vec<&[usize]> = patients.iter().flatten().map(Vec::as_slice).collect();
    let g = CooccurrenceGraph::build(count_cooccurrence_indices(refs, codes).unwrap(), 0.9).unwrap();
    (enc, g.normalized().clone())
}

pub fn check_attention_normalized(patients: &Patients, codes: usize, seed: u64) -> Result<(), TestCaseError> {
    let (enc, adj) = random_encoder(codes, patients, seed);
    for e in encode_patients(&enc, &adj, patients).unwrap() {
        for alpha in &e.alpha {
            close(alpha.iter().sum(), 1.0, "Σα")?;
            prop_assert!(alpha.iter().all(|&a| a > 0.0));
        }
        close(e.beta.iter().sum(), 1.0, "Σβ")?;
        for k in 0..e.theta[0].len() {
            close(e.theta.iter().map(|t| t[k]).sum(), 1.0, "Σθ per dimension")?;
        }
    }
    Ok(())
}

pub fn check_patient_vector_invariance(patients: &Patients, codes: usize, seed: u64) -> Result<(), TestCaseError> {
    let (enc, adj) = random_encoder(codes, patients, seed);
    let base = encode_patients(&enc, &adj, patients).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let shuffled: Patients = patients
        .iter()
        .map(|p| {
            let mut adms: Vec<Vec<usize>> = p
                .iter()
                .map(|a| {
                    let mut a = a.clone();
                    shuffle(&mut a, &mut rng);
                    a
                })
                .collect();
            shuffle(&mut adms, &mut rng);
            adms
        })
        .collect();
    let moved = encode_patients(&enc, &adj, &shuffled).unwrap();
    for (x, y) in base.iter().zip(&moved) {
        for (a, b) in x.patient.iter().zip(&y.patient) {
            prop_assert!((a - b).abs() < 1e-12, "p changed: {a} vs {b}");
        }
    }
    Ok(())
}

fn shuffle<T>(v: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
}

pub fn check_delta_bounds(patients: &Patients, codes: usize, outputs: usize, seed: u64) -> Result<(), TestCaseError> {
    let (enc, adj) = random_encoder(codes, patients, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let head = Tensor::from_fn(outputs, small_dims().patient, |_, _| rng.random_range(-5.0..5.0));
    for e in encode_patients(&enc, &adj, patients).unwrap() {
        let delta = compute_delta(&e.beta, &e.theta, Some(&head)).unwrap();
        for j in 0..outputs {
            let s: f64 = (0..delta.rows()).map(|t| delta.get(t, j)).sum();
            prop_assert!(s > 0.0 && s <= 1.0 + 1e-12, "Σδ = {s}");
            prop_assert!((0..delta.rows()).all(|t| delta.get(t, j) >= 0.0));
        }
    }
    Ok(())
}

pub fn check_decoder_monotone(ont: &Ontology, seed: u64) -> Result<(), TestCaseError> {
    let layout = DecoderLayout::new(ont).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_fn(3, 4, |_, _| rng.random_range(-2.0..2.0)));
    let levels = layout.predicted_levels(DecoderKind::Hierarchical);
    let heads: Vec<_> = levels
        .iter()
        .map(|&h| tape.constant(Tensor::from_fn(layout.count(h), 4, |_, _| rng.random_range(-3.0..3.0))))
        .collect();
    let preds = decoder::hierarchical_forward(&mut tape, p, &heads, &layout, DecoderKind::Hierarchical, None).unwrap();
    let depth = layout.depth();
    let leaf = tape.value(preds[depth - 2]).clone();
    for r in 0..3 {
        for c in 0..layout.codes() {
            let y_leaf = leaf.get(r, c);
            prop_assert!(y_leaf > 0.0 && y_leaf < 1.0);
            for h in 2..depth {
                let y_anc = tape.value(preds[h - 2]).get(r, layout.ancestor(c, h));
                prop_assert!(y_leaf <= y_anc, "leaf {c}: {y_leaf} > level-{h} ancestor {y_anc}");
            }
        }
    }
    Ok(())
}

pub fn check_target_closure(ont: &Ontology, raw: &Patients) -> Result<(), TestCaseError> {
    let layout = DecoderLayout::new(ont).unwrap();
    let n = layout.codes();
    let patients: Patients = raw
        .iter()
        .map(|p| p.iter().map(|a| a.iter().map(|&c| c % n).collect()).collect())
        .collect();
    let t = decoder::build_targets(&patients, &layout, DecoderKind::Hierarchical).unwrap();
    for (row, p) in patients.iter().enumerate() {
        for (target, &h) in t.targets.iter().zip(&t.levels) {
            let mut expect = vec![0.0; layout.count(h)];
            for &c in p.iter().flatten() {
                expect[layout.ancestor(c, h)] = 1.0;
            }
            prop_assert_eq!(target.row(row), expect.as_slice(), "level {}", h);
        }
        // Closure: every marked node's parent chain is marked.
        for w in t.levels.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            for c in 0..n {
                if t.targets[hi - 2].get(row, layout.ancestor(c, hi)) == 1.0 {
                    prop_assert_eq!(t.targets[lo - 2].get(row, layout.ancestor(c, lo)), 1.0);
                }
            }
        }
    }
    Ok(())
}

pub fn in_ball(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, dim), 0.0f64..0.95).prop_map(|(v, r)| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            v
        } else {
            v.iter().map(|x| x / n * r).collect()
        }
    })
}

pub fn check_poincare_metric(x: &[f64], y: &[f64], z: &[f64]) -> Result<(), TestCaseError> {
    let d = |a: &[f64], b: &[f64]| poincare_distance(a, b).unwrap();
    prop_assert_eq!(d(x, x), 0.0);
    let (xy, yx) = (d(x, y), d(y, x));
    prop_assert!((xy - yx).abs() <= 1e-12 * xy.max(1.0));
    prop_assert!(xy >= 0.0);
    prop_assert!(d(x, z) <= xy + d(y, z) + 1e-9, "triangle inequality");
    Ok(())
}
