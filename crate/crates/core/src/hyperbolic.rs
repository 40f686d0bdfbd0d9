//! Poincaré-ball pre-training of the code hierarchy.
//!
//! Every node owns a shared vector `s`, a local vector `t` and a mixing
//! logit `ℓ` with `λ = σ(ℓ)`. The public embedding `e' = λs + (1-λ)t` is
//! refined by one pass of information flow: the shared part is replaced by
//! the parent's `e'` (downward) and the local part by the mean of the
//! children's `t` (upward). The resulting `e` is trained so that tree
//! neighbours are close in hyperbolic distance relative to sampled
//! non-neighbours.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{NodeId, Ontology};
use crate::tensor::{CustomOp, SparseMatrix, Tape, Tensor, TensorError, Var};
use crate::training::optim::{Algorithm, OptimizerState};
use crate::training::schedule::LrSchedule;

/// Ball margin: embeddings are kept at norm `≤ 1 - BALL_EPS`.
pub const BALL_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum HyperbolicError {
    #[error("point with norm {norm} lies outside the unit ball")]
    PointOutsideBall { norm: f64 },
    #[error("edge set is empty")]
    EmptyEdgeSet,
    #[error("non-finite reconstruction loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyperbolic config: {0}")]
    Config(String),
    #[error("embedding csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, HyperbolicError>;

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `z = 2‖x−y‖² / ((1−‖x‖²)(1−‖y‖²))`, so that `d = arcosh(1 + z)`.
fn distance_argument(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let a = sq_norm(x);
    let b = sq_norm(y);
    for n in [a, b] {
        if n >= 1.0 {
            return Err(HyperbolicError::PointOutsideBall { norm: n.sqrt() });
        }
    }
    let q: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
    let z = 2.0 * q / ((1.0 - a) * (1.0 - b));
    Ok((z, q, 1.0 - a, 1.0 - b))
}

/// Hyperbolic distance between two points of the open unit ball.
pub fn poincare_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    let (z, ..) = distance_argument(x, y)?;
    // arcosh(1 + z) = ln(1 + z + √(z(z+2))), accurate for small z.
    Ok((z + (z * (z + 2.0)).sqrt()).ln_1p())
}

/// Row-wise distance `d(u_r, v_r)` as a tape op.
#[derive(Debug)]
struct PoincareDistanceRows;

impl CustomOp for PoincareDistanceRows {
    fn name(&self) -> &'static str {
        "poincare_distance"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let (u, v) = (inputs[0], inputs[1]);
        let mut gu = Tensor::zeros(u.rows(), u.cols());
        let mut gv = Tensor::zeros(v.rows(), v.cols());
        for r in 0..u.rows() {
            let (x, y) = (u.row(r), v.row(r));
            let (z, q, alpha, beta) = distance_argument(x, y).expect("checked in forward");
            let root = (z * (z + 2.0)).sqrt();
            if root <= f64::MIN_POSITIVE {
                continue;
            }
            // dd/dz = 1/√(z(z+2)); dz/dx = 4/(αβ)·[(x−y) + q x/α]
            let c = grad.get(r, 0) / root * 4.0 / (alpha * beta);
            for (k, (gx, gy)) in gu.row_mut(r).iter_mut().zip(gv.row_mut(r).iter_mut()).enumerate() {
                let diff = x[k] - y[k];
                *gx = c * (diff + q * x[k] / alpha);
                *gy = c * (-diff + q * y[k] / beta);
            }
        }
        vec![gu, gv]
    }
}

/// Records `d(u_r, v_r)` for every row pair; output is a column.
pub fn distance_rows(tape: &mut Tape, u: Var, v: Var) -> Result<Var> {
    let (ut, vt) = (tape.value(u), tape.value(v));
    if ut.shape() != vt.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "poincare_distance",
            left: ut.shape(),
            right: vt.shape(),
        }
        .into());
    }
    let mut out = Vec::with_capacity(ut.rows());
    for r in 0..ut.rows() {
        out.push(poincare_distance(ut.row(r), vt.row(r))?);
    }
    Ok(tape.custom(&[u, v], Tensor::column(out), Box::new(PoincareDistanceRows)))
}

/// Rescales rows whose norm exceeds `max_norm` back onto that sphere.
#[derive(Debug)]
struct ClipRowNorms {
    max_norm: f64,
}

impl CustomOp for ClipRowNorms {
    fn name(&self) -> &'static str {
        "clip_row_norms"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let x = inputs[0];
        let mut gx = grad.clone();
        for r in 0..x.rows() {
            let norm = sq_norm(x.row(r)).sqrt();
            if norm <= self.max_norm {
                continue;
            }
            let s = self.max_norm / norm;
            let xr = x.row(r);
            let dot: f64 = xr.iter().zip(grad.row(r)).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
            for (k, g) in gx.row_mut(r).iter_mut().enumerate() {
                *g = s * (grad.get(r, k) - xr[k] * dot);
            }
        }
        vec![gx]
    }
}

fn clip_rows_value(t: &Tensor, max_norm: f64) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        let norm = sq_norm(out.row(r)).sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
    }
    out
}

pub fn clip_rows(tape: &mut Tape, x: Var, max_norm: f64) -> Var {
    let value = clip_rows_value(tape.value(x), max_norm);
    tape.custom(&[x], value, Box::new(ClipRowNorms { max_norm }))
}

/// Trainable per-node vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicParams {
    pub shared: Tensor,
    pub local: Tensor,
    /// Mixing logits; `λ = σ(logit)`.
    pub logits: Tensor,
}

impl HyperbolicParams {
    /// `s, t ~ U[-range, range]^d`, logits zero (λ = 0.5).
    pub fn init<R: Rng + ?Sized>(nodes: usize, dim: usize, range: f64, rng: &mut R) -> Self {
        let mut draw = || Tensor::from_fn(nodes, dim, |_, _| rng.random_range(-range..=range));
        let shared = draw();
        let local = draw();
        Self {
            shared,
            local,
            logits: Tensor::zeros(nodes, 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.shared.cols()
    }

    pub fn mixing(&self) -> Vec<f64> {
        self.logits.data().iter().map(|&l| 1.0 / (1.0 + (-l).exp())).collect()
    }

    /// Largest row norm over `s` and `t`.
    pub fn max_norm(&self) -> f64 {
        (0..self.shared.rows())
            .flat_map(|r| [sq_norm(self.shared.row(r)), sq_norm(self.local.row(r))])
            .fold(0.0f64, f64::max)
            .sqrt()
    }

    /// Pulls every row of `s` and `t` back to norm `1 - eps` if it left.
    pub fn project(&mut self, eps: f64) {
        self.shared = clip_rows_value(&self.shared, 1.0 - eps);
        self.local = clip_rows_value(&self.local, 1.0 - eps);
    }
}

/// Index structures for the two flows.
#[derive(Clone, Debug)]
pub struct FlowGraph {
    /// Row of `[e'; s]` that becomes `s'`: the parent's `e'`, or the
    /// root's own `s` (offset by the node count).
    down_index: Vec<usize>,
    /// Row-averaging over children; identity rows for leaves.
    child_mean: Arc<SparseMatrix>,
}

impl FlowGraph {
    pub fn new(ont: &Ontology) -> Self {
        let n = ont.len();
        let down_index = (0..n).map(|i| ont.parent(i).unwrap_or(n + i)).collect();
        let mut triplets = Vec::new();
        for i in 0..n {
            let kids = ont.children(i);
            if kids.is_empty() {
                triplets.push((i, i, 1.0));
            } else {
                let w = 1.0 / kids.len() as f64;
                triplets.extend(kids.iter().map(|&k| (i, k, w)));
            }
        }
        let child_mean = Arc::new(SparseMatrix::from_triplets(n, n, &triplets).expect("ids are in range"));
        Self {
            down_index,
            child_mean,
        }
    }
}

/// Tape handles for one step.
#[derive(Clone, Copy, Debug)]
pub struct FlowVars {
    pub shared: Var,
    pub local: Var,
    pub logits: Var,
    pub pre_flow: Var,
    pub public: Var,
}

/// Records the information flow for all nodes and returns the post-flow
/// public embeddings `e`, clipped to the ball margin.
pub fn flow_on_tape(tape: &mut Tape, params: &HyperbolicParams, flow: &FlowGraph, trainable: bool) -> Result<FlowVars> {
    let mut input = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
    let shared = input(&params.shared);
    let local = input(&params.local);
    let logits = input(&params.logits);
    let (pre_flow, public) = flow_from_vars(tape, shared, local, logits, flow)?;
    Ok(FlowVars {
        shared,
        local,
        logits,
        pre_flow,
        public,
    })
}

/// Flow over already-recorded `(s, t, ℓ)`; returns `(e', e)`.
pub fn flow_from_vars(tape: &mut Tape, shared: Var, local: Var, logits: Var, flow: &FlowGraph) -> Result<(Var, Var)> {
    let lambda = tape.sigmoid(logits);
    let rest = tape.affine(lambda, -1.0, 1.0);
    let mix = |tape: &mut Tape, s: Var, t: Var| -> Result<Var> {
        let a = tape.scale_rows(s, lambda)?;
        let b = tape.scale_rows(t, rest)?;
        Ok(tape.add(a, b)?)
    };
    let pre_flow = mix(tape, shared, local)?;
    let stacked = tape.concat_rows(&[pre_flow, shared])?;
    let shared_in = tape.gather_rows(stacked, &flow.down_index)?;
    let local_in = tape.spmm(flow.child_mean.clone(), local)?;
    let public = mix(tape, shared_in, local_in)?;
    Ok((pre_flow, clip_rows(tape, public, 1.0 - BALL_EPS)))
}

/// Pre-flow `e'` and post-flow `e` for every node.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicEmbeddings {
    pub pre_flow: Tensor,
    pub public: Tensor,
}

impl PublicEmbeddings {
    /// `E`: rows of `e` for the leaves, in `C` order.
    pub fn leaf_matrix(&self, ont: &Ontology) -> Tensor {
        let d = self.public.cols();
        let mut data = Vec::with_capacity(ont.leaf_count() * d);
        for &leaf in ont.leaves() {
            data.extend_from_slice(self.public.row(leaf));
        }
        Tensor::from_vec(ont.leaf_count(), d, data).expect("rows have width d")
    }
}

pub fn information_flow(params: &HyperbolicParams, ont: &Ontology) -> Result<PublicEmbeddings> {
    let flow = FlowGraph::new(ont);
    let mut tape = Tape::new();
    let vars = flow_on_tape(&mut tape, params, &flow, false)?;
    Ok(PublicEmbeddings {
        pre_flow: tape.value(vars.pre_flow).clone(),
        public: tape.value(vars.public).clone(),
    })
}

/// Tree edges used as positives, parent→child (and child→parent when
/// `bidirectional`).
pub fn positive_edges(ont: &Ontology, bidirectional: bool) -> Vec<(NodeId, NodeId)> {
    let mut out = ont.edges();
    if bidirectional {
        let rev: Vec<_> = out.iter().map(|&(p, c)| (c, p)).collect();
        out.extend(rev);
    }
    out
}

/// Draws non-adjacent nodes for the softmax denominator.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    candidates: Vec<Vec<NodeId>>,
    per_positive: usize,
    full: bool,
}

impl NegativeSampler {
    /// `per_positive` draws with replacement per edge, or every candidate
    /// when `full` is set.
    pub fn new(ont: &Ontology, per_positive: usize, full: bool) -> Self {
        let n = ont.len();
        let candidates = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && ont.parent(i) != Some(j) && ont.parent(j) != Some(i))
                    .collect()
            })
            .collect();
        Self {
            candidates,
            per_positive,
            full,
        }
    }

    pub fn candidates(&self, i: NodeId) -> &[NodeId] {
        &self.candidates[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, anchor: NodeId, rng: &mut R) -> Vec<NodeId> {
        let pool = &self.candidates[anchor];
        if self.full {
            return pool.clone();
        }
        if pool.is_empty() {
            return Vec::new();
        }
        (0..self.per_positive).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

/// Records `-Σ log softmax` of the positive over `{positive} ∪ negatives`
/// for each edge.
pub fn reconstruction_loss_on_tape(
    tape: &mut Tape,
    public: Var,
    edges: &[(NodeId, NodeId)],
    negatives: &[Vec<NodeId>],
) -> Result<Var> {
    if edges.is_empty() {
        return Err(HyperbolicError::EmptyEdgeSet);
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut offsets = vec![0];
    let mut positives = Vec::with_capacity(edges.len());
    for (&(i, j), negs) in edges.iter().zip(negatives) {
        positives.push(left.len());
        left.push(i);
        right.push(j);
        for &n in negs {
            left.push(i);
            right.push(n);
        }
        offsets.push(left.len());
    }
    let u = tape.gather_rows(public, &left)?;
    let v = tape.gather_rows(public, &right)?;
    let dist = distance_rows(tape, u, v)?;
    let neg_dist = tape.scale(dist, -1.0);
    let log_p = tape.segment_log_softmax(neg_dist, &offsets)?;
    let pos = tape.gather_rows(log_p, &positives)?;
    let total = tape.sum(pos);
    Ok(tape.scale(total, -1.0))
}

/// Same loss evaluated directly from an embedding matrix.
pub fn reconstruction_loss(public: &Tensor, edges: &[(NodeId, NodeId)], negatives: &[Vec<NodeId>]) -> Result<f64> {
    if edges.is_empty() {
        return Err(HyperbolicError::EmptyEdgeSet);
    }
    let mut total = 0.0;
    for (&(i, j), negs) in edges.iter().zip(negatives) {
        let pos = poincare_distance(public.row(i), public.row(j))?;
        let mut scores = vec![-pos];
        for &n in negs {
            scores.push(-poincare_distance(public.row(i), public.row(n))?);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        total += lse + pos;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperbolicConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    /// Use every non-adjacent node in the denominator instead of sampling.
    pub full_denominator: bool,
    /// Count each tree edge in both directions.
    pub bidirectional: bool,
    /// Rescale Euclidean gradients of `s`, `t` by `(1-‖θ‖²)²/4`.
    pub riemannian: bool,
    pub init_range: f64,
    pub schedule: LrSchedule,
}

impl Default for HyperbolicConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            epochs: 500,
            batch_size: 256,
            negatives: 20,
            full_denominator: false,
            bidirectional: false,
            riemannian: false,
            init_range: 1e-3,
            schedule: LrSchedule::hyperbolic_default(),
        }
    }
}

impl HyperbolicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(HyperbolicError::Config("dim, epochs and batch_size must be positive".into()));
        }
        if !(self.init_range > 0.0 && self.init_range < 1.0) {
            return Err(HyperbolicError::Config(format!("init_range {} outside (0, 1)", self.init_range)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HyperbolicModel {
    pub params: HyperbolicParams,
    /// Summed reconstruction loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Largest `s`/`t` row norm seen after any optimizer step.
    pub max_norm_seen: f64,
}

impl HyperbolicModel {
    pub fn embeddings(&self, ont: &Ontology) -> Result<PublicEmbeddings> {
        information_flow(&self.params, ont)
    }

    /// `E` for the leaves of `ont`.
    pub fn leaf_embeddings(&self, ont: &Ontology) -> Result<Tensor> {
        Ok(self.embeddings(ont)?.leaf_matrix(ont))
    }
}

fn riemannian_rescale(grad: &mut Tensor, point: &Tensor) {
    for r in 0..grad.rows() {
        let f = (1.0 - sq_norm(point.row(r))).powi(2) / 4.0;
        grad.row_mut(r).iter_mut().for_each(|g| *g *= f);
    }
}

/// Adam over `(s, t, ℓ)` with the flow recomputed every step and `s`, `t`
/// projected back into the ball after each update.
pub fn train_hyperbolic(ont: &Ontology, config: &HyperbolicConfig, seed: u64) -> Result<HyperbolicModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = HyperbolicParams::init(ont.len(), config.dim, config.init_range, &mut rng);
    let flow = FlowGraph::new(ont);
    let mut edges = positive_edges(ont, config.bidirectional);
    if edges.is_empty() {
        return Err(HyperbolicError::EmptyEdgeSet);
    }
    let sampler = NegativeSampler::new(ont, config.negatives, config.full_denominator);
    let shapes = [params.shared.shape(), params.local.shape(), params.logits.shape()];
    let mut opt = OptimizerState::new(Algorithm::Adam, &shapes, config.schedule.lr_at(0));
    let mut curve = Vec::with_capacity(config.epochs);
    let mut max_norm_seen: f64 = 0.0;

    for epoch in 0..config.epochs {
        opt.set_lr(config.schedule.lr_at(epoch));
        edges.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in edges.chunks(config.batch_size) {
            let negatives: Vec<Vec<NodeId>> = batch.iter().map(|&(i, _)| sampler.sample(i, &mut rng)).collect();
            let mut tape = Tape::new();
            let vars = flow_on_tape(&mut tape, &params, &flow, true)?;
            let loss = reconstruction_loss_on_tape(&mut tape, vars.public, batch, &negatives)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(HyperbolicError::NonFiniteLoss { epoch });
            }
            epoch_loss += value;
            let mut grads = tape.backward(loss)?;
            let mut gs = grads.take(vars.shared);
            let mut gt = grads.take(vars.local);
            let gl = grads.take(vars.logits);
            if config.riemannian {
                riemannian_rescale(&mut gs, &params.shared);
                riemannian_rescale(&mut gt, &params.local);
            }
            opt.step(
                &mut [&mut params.shared, &mut params.local, &mut params.logits],
                &[gs, gt, gl],
            );
            params.project(BALL_EPS);
            max_norm_seen = max_norm_seen.max(params.max_norm());
        }
        curve.push(epoch_loss);
    }
    Ok(HyperbolicModel {
        params,
        loss_curve: curve,
        max_norm_seen,
    })
}

/// Writes `code,<prefix>0,...` rows with shortest round-trip decimals.
pub fn write_embedding_csv<W: Write>(writer: W, labels: &[String], matrix: &Tensor, prefix: &str) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let csv_err = |e: csv::Error| HyperbolicError::Csv(e.to_string());
    let mut header = vec!["code".to_string()];
    header.extend((0..matrix.cols()).map(|k| format!("{prefix}{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (r, label) in labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(matrix.row(r).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embedding_csv<R: Read>(reader: R) -> Result<(Vec<String>, Tensor)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let csv_err = |e: csv::Error| HyperbolicError::Csv(e.to_string());
    let width = rdr.headers().map_err(csv_err)?.len();
    if width < 2 {
        return Err(HyperbolicError::Csv("no embedding columns".into()));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != width {
            return Err(HyperbolicError::Csv(format!("row has {} fields, expected {width}", rec.len())));
        }
        labels.push(rec[0].to_string());
        for f in rec.iter().skip(1) {
            data.push(f.parse::<f64>().map_err(|e| HyperbolicError::Csv(format!("{f:?}: {e}")))?);
        }
    }
    let rows = labels.len();
    Ok((labels, Tensor::from_vec(rows, width - 1, data)?))
}
