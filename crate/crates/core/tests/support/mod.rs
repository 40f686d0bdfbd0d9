//! Toy fixtures and oracle helpers shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sherbet::data::{Task, TaskInstance};
use sherbet::decoder::{DecoderKind, DecoderLayout, DecoderParams};
use sherbet::encoder::{glorot, EncoderDims, EncoderParams, EncoderVars};
use sherbet::graph::{count_cooccurrence_indices, CooccurrenceGraph, DEFAULT_PHI};
use sherbet::hyperbolic::{self, FlowGraph, NegativeSampler};
use sherbet::ontology::Ontology;
use sherbet::tensor::grad_check;
use sherbet::tensor::{SparseMatrix, Tensor, TensorError};
use sherbet::training::{finetune_batch_loss, ssl_batch_loss, SslContext};

pub mod golden;
pub mod oracle;
pub mod props;

pub const FD_STEP: f64 = 1e-5;

pub fn tree(edges: &[(&str, &str)]) -> Ontology {
    let e: Vec<(String, String)> = edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    Ontology::from_edges(&e).unwrap().pad_virtual_leaves("~v")
}

/// Three-level toy: `r → {A, B, C}`, `A → a1..a3`, `B → b1, b2`, `C`
/// recorded directly (padded to a virtual leaf). Six codes.
pub fn toy_ontology() -> Ontology {
    tree(&[
        ("r", "A"),
        ("r", "B"),
        ("r", "C"),
        ("A", "a1"),
        ("A", "a2"),
        ("A", "a3"),
        ("B", "b1"),
        ("B", "b2"),
    ])
}

/// Root with `categories` children of `leaves` leaves each.
pub fn balanced_tree(categories: usize, leaves: usize) -> Ontology {
    let mut e = Vec::new();
    for c in 0..categories {
        e.push(("root".to_string(), format!("c{c}")));
        for l in 0..leaves {
            e.push((format!("c{c}"), format!("c{c}.{l}")));
        }
    }
    Ontology::from_edges(&e).unwrap().pad_virtual_leaves("~v")
}

fn domain<E: std::fmt::Display>(e: E) -> TensorError {
    TensorError::Domain(e.to_string())
}

fn uniform(rows: usize, cols: usize, range: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-range..range))
}

/// Largest relative error of the reconstruction-loss gradient with respect
/// to shared vectors, local vectors and mixing logits (5-node tree, K = 2).
pub fn reconstruction_grad_error() -> f64 {
    let ont = tree(&[("r", "a"), ("r", "b"), ("a", "c"), ("a", "d")]);
    let n = ont.len();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shared = uniform(n, 3, 0.3, &mut rng);
    let local = uniform(n, 3, 0.3, &mut rng);
    let logits = uniform(n, 1, 1.0, &mut rng);
    let flow = FlowGraph::new(&ont);
    let edges = hyperbolic::positive_edges(&ont, false);
    let sampler = NegativeSampler::new(&ont, 2, false);
    let negatives: Vec<Vec<usize>> = edges.iter().map(|&(i, _)| sampler.sample(i, &mut rng)).collect();
    grad_check(
        |t, v| {
            let (_, public) = hyperbolic::flow_from_vars(t, v[0], v[1], v[2], &flow).map_err(domain)?;
            hyperbolic::reconstruction_loss_on_tape(t, public, &edges, &negatives).map_err(domain)
        },
        &[shared, local, logits],
        FD_STEP,
    )
    .unwrap()
}

pub fn toy_dims() -> EncoderDims {
    EncoderDims {
        embed: 4,
        hidden: 3,
        patient: 3,
        code_attention: 3,
        admission_attention: 2,
        layers: 1,
    }
}

/// Three toy patients over the six toy codes.
pub fn toy_patients() -> Vec<Vec<Vec<usize>>> {
    vec![
        vec![vec![0, 1], vec![1, 3, 5]],
        vec![vec![2], vec![0, 4], vec![3]],
        vec![vec![4, 5, 1], vec![2, 3]],
    ]
}

pub fn adjacency_for(patients: &[Vec<Vec<usize>>], codes: usize) -> Arc<SparseMatrix> {
    let adms: Vec<&[usize]> = patients.iter().flatten().map(Vec::as_slice).collect();
    let b = count_cooccurrence_indices(adms, codes).unwrap();
    CooccurrenceGraph::build(b, DEFAULT_PHI).unwrap().normalized().clone()
}

fn encoder_tensors(enc: &EncoderParams) -> Vec<Tensor> {
    enc.named().into_iter().map(|(_, t)| t.clone()).collect()
}

/// Relative error of the SSL loss gradient through the GNN, both attention
/// levels and the hierarchical decoder.
pub fn ssl_grad_error(kind: DecoderKind) -> f64 {
    let ont = toy_ontology();
    let layout = DecoderLayout::new(&ont).unwrap();
    let patients = toy_patients();
    let adjacency = adjacency_for(&patients, layout.codes());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = toy_dims();
    let enc = EncoderParams::init(glorot(layout.codes(), dims.embed, &mut rng), &dims, true, &mut rng);
    let dec = DecoderParams::init(&layout, kind, dims.patient, &mut rng);
    let mut params = encoder_tensors(&enc);
    let n_enc = params.len();
    params.extend(dec.named().into_iter().map(|(_, t)| t.clone()));
    let ctx = SslContext {
        adjacency: &adjacency,
        layout: &layout,
        kind,
    };
    grad_check(
        |t, v| {
            let vars = EncoderVars::from_slice(&v[..n_enc], dims.layers);
            ssl_batch_loss(t, &vars, &v[n_enc..], &ctx, &patients, None).map_err(domain)
        },
        &params,
        FD_STEP,
    )
    .unwrap()
}

/// Relative error of the fine-tuning loss gradient for `task`.
pub fn finetune_grad_error(task: Task) -> f64 {
    let codes = 6;
    let patients = toy_patients();
    let adjacency = adjacency_for(&patients, codes);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dims = toy_dims();
    let enc = EncoderParams::init(glorot(codes, dims.embed, &mut rng), &dims, true, &mut rng);
    let outputs = task.output_dim(codes);
    let head = glorot(outputs, dims.patient, &mut rng);
    let instances: Vec<TaskInstance> = patients
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (last, inputs) = p.split_last().unwrap();
            let label = match task {
                Task::Diagnosis => (0..codes).map(|c| f64::from(u8::from(last.contains(&c)))).collect(),
                Task::HeartFailure => vec![f64::from(u8::from(i % 2 == 0))],
            };
            TaskInstance {
                patient: i,
                inputs: inputs.to_vec(),
                label,
            }
        })
        .collect();
    let refs: Vec<&TaskInstance> = instances.iter().collect();
    let mut params = encoder_tensors(&enc);
    let n_enc = params.len();
    params.push(head);
    grad_check(
        |t, v| {
            let vars = EncoderVars::from_slice(&v[..n_enc], dims.layers);
            finetune_batch_loss(t, &vars, v[n_enc], &adjacency, &refs, codes, None).map_err(domain)
        },
        &params,
        FD_STEP,
    )
    .unwrap()
}

/// Share of non-root nodes whose parent is closer than all but at most
/// `top_fraction` of `samples` sampled non-neighbors.
pub fn parent_rank_success(ont: &Ontology, public: &Tensor, samples: usize, top_fraction: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ont.len();
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        let Some(parent) = ont.parent(i) else { continue };
        let neighbors: Vec<usize> = ont.children(i).iter().copied().chain([parent, i]).collect();
        let pool: Vec<usize> = (0..n).filter(|j| !neighbors.contains(j)).collect();
        if pool.is_empty() {
            continue;
        }
        let d_parent = hyperbolic::poincare_distance(public.row(i), public.row(parent)).unwrap();
        let closer = (0..samples)
            .filter(|_| {
                let j = pool[rng.random_range(0..pool.len())];
                hyperbolic::poincare_distance(public.row(i), public.row(j)).unwrap() < d_parent
            })
            .count();
        total += 1;
        if (closer as f64) <= top_fraction * samples as f64 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Trains the default hyperbolic configuration on a 5 × 8 balanced tree and
/// returns the parent-rank success rate (50 non-neighbors, top 20%).
pub fn hyperbolic_reconstruction_success(seed: u64) -> f64 {
    let ont = balanced_tree(5, 8);
    let model = hyperbolic::train_hyperbolic(&ont, &hyperbolic::HyperbolicConfig::default(), seed).unwrap();
    let e = model.embeddings(&ont).unwrap();
    parent_rank_success(&ont, &e.public, 50, 0.2, seed ^ 0x5EED)
}

/// Seconds-scale run: a small synthetic corpus and a few epochs per stage.
pub fn tiny_config(out: &std::path::Path, seed: u64, task: Task) -> sherbet::config::RunConfig {
    let mut cfg: sherbet::config::RunConfig = serde_json::from_value(serde_json::json!({
        "seed": seed,
        "synth": {"seed": seed, "single_patients": 150, "multi_patients": 90, "chapters": 3, "categories_per_chapter": 3, "clusters": 6},
        "split": {"train": 50, "valid": 10, "test": 30},
        "hyperbolic": {"dim": 6, "epochs": 10},
        "encoder": {"embed": 6, "hidden": 5, "patient": 4, "code_attention": 4, "admission_attention": 3, "layers": 1},
        "ssl": {"epochs": 3},
        "finetune": {"epochs": 3},
        "eval": {"trace_patients": 3}
    }))
    .unwrap();
    cfg.task = task;
    cfg.paths.out = out.to_path_buf();
    cfg
}

/// The workstation configuration shipped in `configs/desk.json`.
pub fn desk_config(out: &std::path::Path, seed: u64) -> sherbet::config::RunConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    let mut cfg = sherbet::config::RunConfig::load(&path).unwrap();
    cfg.seed = seed;
    cfg.paths.out = out.to_path_buf();
    cfg
}
