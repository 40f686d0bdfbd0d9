//! Patient encoder: GNN over the co-occurrence graph, code-level attention
//! pooling each admission, admission-level attention pooling the patient.
//!
//! Batches are ragged. Codes of all admissions are laid out back to back
//! and admissions of all patients likewise; segment offsets delimit them,
//! so every softmax runs over exactly the real entries without padding.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{SparseMatrix, Tape, Tensor, TensorError, Var};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("patient {patient} admission {admission} is empty")]
    EmptyAdmission { patient: usize, admission: usize },
    #[error("patient {0} has no admissions")]
    NoAdmissions(usize),
    #[error("code {code} outside vocabulary of {len}")]
    CodeOutOfRange { code: usize, len: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderDims {
    /// Input embedding width `d`.
    pub embed: usize,
    /// Hidden code width `m` after the GNN.
    pub hidden: usize,
    /// Patient vector width `p`.
    pub patient: usize,
    /// Code-attention width `a`.
    pub code_attention: usize,
    /// Admission-attention width `b`.
    pub admission_attention: usize,
    /// GNN depth `L`.
    pub layers: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            embed: 128,
            hidden: 64,
            patient: 64,
            code_attention: 64,
            admission_attention: 32,
            layers: 1,
        }
    }
}

/// Glorot-uniform matrix.
pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// `E`, one row per code; trainable after pre-training.
    pub embedding: Tensor,
    /// `W_g^(l)`; empty when the GNN is skipped.
    pub gnn: Vec<Tensor>,
    pub w_c: Tensor,
    pub w_alpha: Tensor,
    pub w_u: Tensor,
    pub w_v: Tensor,
    pub w_beta: Tensor,
    pub w_theta: Tensor,
}

impl EncoderParams {
    /// Random weights around a given `E`. With `use_graph == false` the
    /// GNN is skipped and codes enter attention with width `d`.
    pub fn init<R: Rng + ?Sized>(embedding: Tensor, dims: &EncoderDims, use_graph: bool, rng: &mut R) -> Self {
        let d = embedding.cols();
        let (gnn, m) = if use_graph {
            let mut widths = vec![d];
            widths.extend(std::iter::repeat_n(dims.hidden, dims.layers));
            let gnn = widths.windows(2).map(|w| glorot(w[0], w[1], rng)).collect();
            (gnn, if dims.layers == 0 { d } else { dims.hidden })
        } else {
            (Vec::new(), d)
        };
        let (a, b, p) = (dims.code_attention, dims.admission_attention, dims.patient);
        Self {
            embedding,
            gnn,
            w_c: glorot(a, m, rng),
            w_alpha: glorot(a, 1, rng),
            w_u: glorot(p, m, rng),
            w_v: glorot(b, p, rng),
            w_beta: glorot(b, 1, rng),
            w_theta: glorot(b, p, rng),
        }
    }

    pub fn codes(&self) -> usize {
        self.embedding.rows()
    }

    pub fn uses_graph(&self) -> bool {
        !self.gnn.is_empty()
    }

    pub fn patient_dim(&self) -> usize {
        self.w_u.rows()
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        out.extend(self.gnn.iter().enumerate().map(|(l, w)| (format!("gnn.{l}"), w)));
        out.extend([
            ("w_c".to_string(), &self.w_c),
            ("w_alpha".to_string(), &self.w_alpha),
            ("w_u".to_string(), &self.w_u),
            ("w_v".to_string(), &self.w_v),
            ("w_beta".to_string(), &self.w_beta),
            ("w_theta".to_string(), &self.w_theta),
        ]);
        out
    }

    /// Same order as [`EncoderParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.gnn.iter_mut());
        out.extend([
            &mut self.w_c,
            &mut self.w_alpha,
            &mut self.w_u,
            &mut self.w_v,
            &mut self.w_beta,
            &mut self.w_theta,
        ]);
        out
    }

    /// Puts every tensor on the tape (as parameters or constants).
    pub fn record(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        let mut put = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        EncoderVars {
            embedding: put(&self.embedding),
            gnn: self.gnn.iter().map(&mut put).collect(),
            w_c: put(&self.w_c),
            w_alpha: put(&self.w_alpha),
            w_u: put(&self.w_u),
            w_v: put(&self.w_v),
            w_beta: put(&self.w_beta),
            w_theta: put(&self.w_theta),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub embedding: Var,
    pub gnn: Vec<Var>,
    pub w_c: Var,
    pub w_alpha: Var,
    pub w_u: Var,
    pub w_v: Var,
    pub w_beta: Var,
    pub w_theta: Var,
}

impl EncoderVars {
    /// Same order as [`EncoderParams::named`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        out.extend(&self.gnn);
        out.extend([self.w_c, self.w_alpha, self.w_u, self.w_v, self.w_beta, self.w_theta]);
        out
    }
}

/// Training-mode dropout source.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// `H^(l+1) = ReLU(Â H^(l) W_g^(l))`, dropout on each layer output.
/// Without GNN weights returns `E` itself.
pub fn gnn_forward(
    tape: &mut Tape,
    adjacency: &Arc<SparseMatrix>,
    embedding: Var,
    weights: &[Var],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<Var> {
    let mut h = embedding;
    for &w in weights {
        let agg = tape.spmm(adjacency.clone(), h)?;
        let lin = tape.matmul(agg, w)?;
        h = tape.relu(lin);
        if let Some(d) = dropout.as_deref_mut() {
            h = tape.dropout(h, d.rate, d.rng)?;
        }
    }
    Ok(h)
}

/// Ragged batch of patients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatientBatch {
    codes: Vec<usize>,
    /// Code range of each admission.
    adm_offsets: Vec<usize>,
    /// Admission range of each patient.
    pat_offsets: Vec<usize>,
}

impl PatientBatch {
    /// Codes inside each admission are deduplicated and sorted.
    pub fn new<A: AsRef<[Vec<usize>]>>(patients: &[A], vocab_size: usize) -> Result<Self> {
        let mut codes = Vec::new();
        let mut adm_offsets = vec![0];
        let mut pat_offsets = vec![0];
        for (pi, p) in patients.iter().enumerate() {
            let adms = p.as_ref();
            if adms.is_empty() {
                return Err(EncoderError::NoAdmissions(pi));
            }
            for (ai, adm) in adms.iter().enumerate() {
                let mut set = adm.clone();
                set.sort_unstable();
                set.dedup();
                if set.is_empty() {
                    return Err(EncoderError::EmptyAdmission {
                        patient: pi,
                        admission: ai,
                    });
                }
                if let Some(&bad) = set.last().filter(|&&c| c >= vocab_size) {
                    return Err(EncoderError::CodeOutOfRange {
                        code: bad,
                        len: vocab_size,
                    });
                }
                codes.extend(set);
                adm_offsets.push(codes.len());
            }
            pat_offsets.push(adm_offsets.len() - 1);
        }
        Ok(Self {
            codes,
            adm_offsets,
            pat_offsets,
        })
    }

    pub fn patients(&self) -> usize {
        self.pat_offsets.len() - 1
    }

    pub fn admissions(&self) -> usize {
        self.adm_offsets.len() - 1
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn adm_offsets(&self) -> &[usize] {
        &self.adm_offsets
    }

    pub fn pat_offsets(&self) -> &[usize] {
        &self.pat_offsets
    }

    /// Codes of admission `a` (global admission index).
    pub fn admission_codes(&self, a: usize) -> &[usize] {
        &self.codes[self.adm_offsets[a]..self.adm_offsets[a + 1]]
    }
}

/// Tape handles of one batched encoding.
#[derive(Clone, Copy, Debug)]
pub struct EncodeVars {
    /// Hidden code matrix `X`.
    pub hidden: Var,
    /// `α`, one row per (admission, code), column.
    pub alpha: Var,
    /// `v_τ`, one row per admission.
    pub admission: Var,
    /// `ṽ_τ`.
    pub projected: Var,
    /// `β`, one row per admission, column.
    pub beta: Var,
    /// `θ_τ`, one row per admission.
    pub theta: Var,
    /// `p`, one row per patient.
    pub patient: Var,
}

/// Code-level then admission-level attention over a batch, given `X`.
pub fn encode_batch(tape: &mut Tape, vars: &EncoderVars, hidden: Var, batch: &PatientBatch) -> Result<EncodeVars> {
    let x = tape.gather_rows(hidden, &batch.codes)?;
    let z = tape.matmul_t(x, vars.w_c)?;
    let z = tape.tanh(z);
    let scores = tape.matmul(z, vars.w_alpha)?;
    let alpha = tape.segment_softmax(scores, &batch.adm_offsets)?;
    let weighted = tape.scale_rows(x, alpha)?;
    let admission = tape.segment_sum(weighted, &batch.adm_offsets)?;

    let proj = tape.matmul_t(admission, vars.w_u)?;
    let projected = tape.leaky_relu(proj, LEAKY_SLOPE);
    let r = tape.matmul_t(projected, vars.w_v)?;
    let r = tape.tanh(r);
    let beta_scores = tape.matmul(r, vars.w_beta)?;
    let beta = tape.segment_softmax(beta_scores, &batch.pat_offsets)?;
    let theta_scores = tape.matmul(r, vars.w_theta)?;
    let theta = tape.segment_softmax(theta_scores, &batch.pat_offsets)?;
    let gated = tape.hadamard(theta, projected)?;
    let gated = tape.scale_rows(gated, beta)?;
    let patient = tape.segment_sum(gated, &batch.pat_offsets)?;
    Ok(EncodeVars {
        hidden,
        alpha,
        admission,
        projected,
        beta,
        theta,
        patient,
    })
}

/// Full forward (GNN + attention) with everything recorded on `tape`.
pub fn forward(
    tape: &mut Tape,
    vars: &EncoderVars,
    adjacency: &Arc<SparseMatrix>,
    batch: &PatientBatch,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<EncodeVars> {
    let hidden = gnn_forward(tape, adjacency, vars.embedding, &vars.gnn, dropout)?;
    encode_batch(tape, vars, hidden, batch)
}

/// Evaluation-mode encoding of one patient, with attention records.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientEncoding {
    /// Sorted distinct codes per admission.
    pub codes: Vec<Vec<usize>>,
    pub alpha: Vec<Vec<f64>>,
    pub admission: Vec<Vec<f64>>,
    pub projected: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub patient: Vec<f64>,
}

fn rows(t: &Tensor, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    range.map(|r| t.row(r).to_vec()).collect()
}

/// Hidden code matrix `X` without dropout.
pub fn hidden_codes(params: &EncoderParams, adjacency: &Arc<SparseMatrix>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, false);
    let x = gnn_forward(&mut tape, adjacency, vars.embedding, &vars.gnn, None)?;
    Ok(tape.value(x).clone())
}

/// Encodes patients with frozen parameters, keeping every attention record.
pub fn encode_patients<A: AsRef<[Vec<usize>]>>(
    params: &EncoderParams,
    adjacency: &Arc<SparseMatrix>,
    patients: &[A],
) -> Result<Vec<PatientEncoding>> {
    let batch = PatientBatch::new(patients, params.codes())?;
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, false);
    let enc = forward(&mut tape, &vars, adjacency, &batch, None)?;
    let alpha = tape.value(enc.alpha);
    let admission = tape.value(enc.admission);
    let projected = tape.value(enc.projected);
    let beta = tape.value(enc.beta);
    let theta = tape.value(enc.theta);
    let patient = tape.value(enc.patient);
    Ok((0..batch.patients())
        .map(|p| {
            let adms = batch.pat_offsets[p]..batch.pat_offsets[p + 1];
            PatientEncoding {
                codes: adms.clone().map(|a| batch.admission_codes(a).to_vec()).collect(),
                alpha: adms
                    .clone()
                    .map(|a| (batch.adm_offsets[a]..batch.adm_offsets[a + 1]).map(|k| alpha.get(k, 0)).collect())
                    .collect(),
                admission: rows(admission, adms.clone()),
                projected: rows(projected, adms.clone()),
                beta: adms.clone().map(|a| beta.get(a, 0)).collect(),
                theta: rows(theta, adms),
                patient: patient.row(p).to_vec(),
            }
        })
        .collect())
}
