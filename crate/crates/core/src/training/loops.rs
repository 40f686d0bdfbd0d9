use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::optim::{Algorithm, OptimizerState};
use super::schedule::LrSchedule;
use crate::data::{Task, TaskInstance};
use crate::decoder::{self, DecoderError, DecoderKind, DecoderLayout, DecoderParams};
use crate::encoder::{self, glorot, Dropout, EncoderError, EncoderParams, EncoderVars, PatientBatch};
use crate::metrics::{self, EvalReport, MetricsError};
use crate::tensor::{SparseMatrix, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("patient {0} has a single admission and cannot be fine-tuned on")]
    SingleAdmissionPatientInFineTune(usize),
    #[error("no training data")]
    EmptyData,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub graph_dropout: f64,
    pub decoder_dropout: f64,
    /// Fine-tuning only: stop after this many epochs without a better
    /// validation score and restore the best parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping: Option<usize>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("epochs and batch_size must be positive".into()));
        }
        for (name, r) in [("graph_dropout", self.graph_dropout), ("decoder_dropout", self.decoder_dropout)] {
            if !(0.0..1.0).contains(&r) {
                return Err(TrainError::Config(format!("{name} = {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// One line of the per-epoch training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<EvalReport>,
}

/// Output layer `ŷ' = σ(W p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FineTuneHead {
    /// `o × p`.
    pub weight: Tensor,
}

impl FineTuneHead {
    pub fn init(outputs: usize, patient_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: glorot(outputs, patient_dim, rng),
        }
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

impl EncoderVars {
    /// Rebuilds handles from a flat slice in [`EncoderParams::named`] order.
    pub fn from_slice(vars: &[Var], layers: usize) -> Self {
        let g = &vars[1..1 + layers];
        let r = &vars[1 + layers..];
        Self {
            embedding: vars[0],
            gnn: g.to_vec(),
            w_c: r[0],
            w_alpha: r[1],
            w_u: r[2],
            w_v: r[3],
            w_beta: r[4],
            w_theta: r[5],
        }
    }
}

/// Everything the SSL objective needs besides parameters.
pub struct SslContext<'a> {
    pub adjacency: &'a Arc<SparseMatrix>,
    pub layout: &'a DecoderLayout,
    pub kind: DecoderKind,
}

/// Proxy-task loss of one batch, recorded on `tape`.
pub fn ssl_batch_loss<A: AsRef<[Vec<usize>]>>(
    tape: &mut Tape,
    enc: &EncoderVars,
    heads: &[Var],
    ctx: &SslContext<'_>,
    patients: &[A],
    mut dropout: Option<(f64, f64, &mut ChaCha8Rng)>,
) -> Result<Var> {
    let batch = PatientBatch::new(patients, ctx.layout.codes())?;
    let targets = decoder::build_targets(patients, ctx.layout, ctx.kind)?;
    let out = match dropout.as_mut() {
        Some((g, _, rng)) => {
            let mut d = Dropout { rate: *g, rng };
            encoder::forward(tape, enc, ctx.adjacency, &batch, Some(&mut d))?
        }
        None => encoder::forward(tape, enc, ctx.adjacency, &batch, None)?,
    };
    let preds = match dropout {
        Some((_, r, rng)) => {
            let mut d = Dropout { rate: r, rng };
            decoder::hierarchical_forward(tape, out.patient, heads, ctx.layout, ctx.kind, Some(&mut d))?
        }
        None => decoder::hierarchical_forward(tape, out.patient, heads, ctx.layout, ctx.kind, None)?,
    };
    Ok(decoder::ssl_loss(tape, &preds, &targets)?)
}

/// Fine-tuning loss of one batch: mean BCE of `σ(W p)` against labels.
pub fn finetune_batch_loss(
    tape: &mut Tape,
    enc: &EncoderVars,
    head: Var,
    adjacency: &Arc<SparseMatrix>,
    instances: &[&TaskInstance],
    codes: usize,
    mut dropout: Option<(f64, f64, &mut ChaCha8Rng)>,
) -> Result<Var> {
    let inputs: Vec<&[Vec<usize>]> = instances.iter().map(|i| i.inputs.as_slice()).collect();
    let batch = PatientBatch::new(&inputs, codes)?;
    let out = match dropout.as_mut() {
        Some((g, _, rng)) => {
            let mut d = Dropout { rate: *g, rng };
            encoder::forward(tape, enc, adjacency, &batch, Some(&mut d))?
        }
        None => encoder::forward(tape, enc, adjacency, &batch, None)?,
    };
    let p = match dropout {
        Some((_, r, rng)) => tape.dropout(out.patient, r, rng)?,
        None => out.patient,
    };
    let logits = tape.matmul_t(p, head)?;
    let pred = tape.sigmoid(logits);
    let mut labels = Vec::with_capacity(instances.len() * instances.first().map_or(0, |i| i.label.len()));
    for inst in instances {
        labels.extend_from_slice(&inst.label);
    }
    let target = Tensor::from_vec(instances.len(), tape.shape(pred).1, labels)?;
    Ok(tape.bce_mean(pred, Arc::new(target), decoder::BCE_EPS)?)
}

fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size)
}

/// Self-supervised training of encoder and decoder with RMSProp. Returns
/// the patient-weighted mean loss of every epoch.
pub fn run_ssl<A: AsRef<[Vec<usize>]> + Sync>(
    encoder: &mut EncoderParams,
    decoder: &mut DecoderParams,
    ctx: &SslContext<'_>,
    patients: &[A],
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if patients.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<_> = encoder
        .named()
        .into_iter()
        .chain(decoder.named())
        .map(|(_, t)| t.shape())
        .collect();
    let mut opt = OptimizerState::new(Algorithm::RmsProp, &shapes, config.schedule.lr_at(0));
    let mut order: Vec<usize> = (0..patients.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(epoch);
        opt.set_lr(lr);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in batches(&order, config.batch_size).enumerate() {
            let group: Vec<&[Vec<usize>]> = idx.iter().map(|&i| patients[i].as_ref()).collect();
            let mut tape = Tape::new();
            let enc = encoder.record(&mut tape, true);
            let heads = decoder.record(&mut tape, true);
            let loss = ssl_batch_loss(
                &mut tape,
                &enc,
                &heads,
                ctx,
                &group,
                Some((config.graph_dropout, config.decoder_dropout, &mut rng)),
            )?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            total += value * idx.len() as f64;
            let mut grads = tape.backward(loss)?;
            let g: Vec<Tensor> = enc.all().into_iter().chain(heads).map(|v| grads.take(v)).collect();
            let mut params: Vec<&mut Tensor> = encoder.tensors_mut();
            params.extend(decoder.tensors_mut());
            opt.step(&mut params, &g);
        }
        logs.push(EpochLog {
            epoch,
            loss: total / patients.len() as f64,
            lr,
            val: None,
        });
    }
    Ok(logs)
}

/// `σ(W p)` for every instance, without dropout.
pub fn predict(
    encoder: &EncoderParams,
    head: &FineTuneHead,
    adjacency: &Arc<SparseMatrix>,
    instances: &[TaskInstance],
) -> Result<Tensor> {
    let mut data = Vec::with_capacity(instances.len() * head.outputs());
    for chunk in instances.chunks(256) {
        let inputs: Vec<&[Vec<usize>]> = chunk.iter().map(|i| i.inputs.as_slice()).collect();
        let batch = PatientBatch::new(&inputs, encoder.codes())?;
        let mut tape = Tape::new();
        let vars = encoder.record(&mut tape, false);
        let w = tape.constant(head.weight.clone());
        let out = encoder::forward(&mut tape, &vars, adjacency, &batch, None)?;
        let logits = tape.matmul_t(out.patient, w)?;
        let pred = tape.sigmoid(logits);
        data.extend_from_slice(tape.value(pred).data());
    }
    Ok(Tensor::from_vec(instances.len(), head.outputs(), data)?)
}

/// Metrics of predictions against instance labels.
pub fn evaluate(task: Task, scores: &Tensor, instances: &[TaskInstance], ks: &[usize], threshold: f64) -> Result<EvalReport> {
    match task {
        Task::Diagnosis => {
            let mut labels = Vec::with_capacity(scores.len());
            for i in instances {
                labels.extend_from_slice(&i.label);
            }
            let labels = Tensor::from_vec(instances.len(), scores.cols(), labels)?;
            Ok(metrics::evaluate_diagnosis(scores, &labels, ks, threshold)?)
        }
        Task::HeartFailure => {
            let labels: Vec<bool> = instances.iter().map(|i| i.label[0] > 0.5).collect();
            Ok(metrics::evaluate_binary(scores.data(), &labels, threshold)?)
        }
    }
}

/// Score used for early stopping: R@smallest-k for diagnosis, AUC for HF.
fn selection_score(report: &EvalReport) -> Option<f64> {
    report.auc.or_else(|| {
        report
            .r_at
            .iter()
            .min_by_key(|(k, _)| k.parse::<usize>().unwrap_or(usize::MAX))
            .map(|(_, v)| *v)
    })
}

pub struct FineTuneSetup<'a> {
    pub task: Task,
    pub adjacency: &'a Arc<SparseMatrix>,
    pub ks: &'a [usize],
    pub threshold: f64,
    /// Train only the head, keeping encoder and embeddings fixed.
    pub freeze_encoder: bool,
}

/// Supervised training of encoder and head with RMSProp; validation
/// metrics are logged every epoch when `valid` is non-empty.
pub fn run_finetune(
    encoder: &mut EncoderParams,
    head: &mut FineTuneHead,
    setup: &FineTuneSetup<'_>,
    train: &[TaskInstance],
    valid: &[TaskInstance],
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyData);
    }
    if let Some(bad) = train.iter().chain(valid).find(|i| i.inputs.is_empty()) {
        return Err(TrainError::SingleAdmissionPatientInFineTune(bad.patient));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes: Vec<_> = if setup.freeze_encoder {
        Vec::new()
    } else {
        encoder.named().into_iter().map(|(_, t)| t.shape()).collect()
    };
    shapes.push(head.weight.shape());
    let mut opt = OptimizerState::new(Algorithm::RmsProp, &shapes, config.schedule.lr_at(0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, EncoderParams, FineTuneHead)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(epoch);
        opt.set_lr(lr);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in batches(&order, config.batch_size).enumerate() {
            let group: Vec<&TaskInstance> = idx.iter().map(|&i| &train[i]).collect();
            let mut tape = Tape::new();
            let enc = encoder.record(&mut tape, !setup.freeze_encoder);
            let w = tape.param(head.weight.clone());
            let loss = finetune_batch_loss(
                &mut tape,
                &enc,
                w,
                setup.adjacency,
                &group,
                encoder.codes(),
                Some((config.graph_dropout, config.decoder_dropout, &mut rng)),
            )?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            total += value * idx.len() as f64;
            let mut grads = tape.backward(loss)?;
            if setup.freeze_encoder {
                opt.step(&mut [&mut head.weight], &[grads.take(w)]);
            } else {
                let g: Vec<Tensor> = enc.all().into_iter().chain([w]).map(|v| grads.take(v)).collect();
                let mut params = encoder.tensors_mut();
                params.push(&mut head.weight);
                opt.step(&mut params, &g);
            }
        }
        let val = if valid.is_empty() {
            None
        } else {
            let scores = predict(encoder, head, setup.adjacency, valid)?;
            evaluate(setup.task, &scores, valid, setup.ks, setup.threshold).ok()
        };
        let score = val.as_ref().and_then(selection_score);
        logs.push(EpochLog {
            epoch,
            loss: total / train.len() as f64,
            lr,
            val,
        });
        if let (Some(patience), Some(score)) = (config.early_stopping, score) {
            if best.as_ref().is_none_or(|(s, ..)| score > *s) {
                best = Some((score, encoder.clone(), head.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, e, h)) = best {
        *encoder = e;
        *head = h;
    }
    Ok(logs)
}
