//! Per-patient attention traces and output attributions.
//!
//! `δ_τ = β_τ · softmax_τ(W θ_τ)`: how much admission `τ` contributes to
//! each output, combining admission attention with the head's view of the
//! per-dimension weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::PatientEncoding;
use crate::metrics::top_k;
use crate::tensor::Tensor;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum InterpretError {
    #[error("no fine-tuned head available")]
    HeadMissing,
    #[error("head width {head} does not match patient width {patient}")]
    ShapeMismatch { head: usize, patient: usize },
}

/// `T × o` contribution matrix.
pub fn compute_delta(beta: &[f64], theta: &[Vec<f64>], head: Option<&Tensor>) -> Result<Tensor, InterpretError> {
    let w = head.ok_or(InterpretError::HeadMissing)?;
    let t = beta.len();
    let mut proj = Tensor::zeros(t, w.rows());
    for (tau, th) in theta.iter().enumerate() {
        if th.len() != w.cols() {
            return Err(InterpretError::ShapeMismatch {
                head: w.cols(),
                patient: th.len(),
            });
        }
        for j in 0..w.rows() {
            proj.set(tau, j, w.row(j).iter().zip(th).map(|(a, b)| a * b).sum());
        }
    }
    for j in 0..w.rows() {
        let max = (0..t).map(|tau| proj.get(tau, j)).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = (0..t).map(|tau| (proj.get(tau, j) - max).exp()).sum();
        for (tau, &b) in beta.iter().enumerate() {
            let s = (proj.get(tau, j) - max).exp() / total;
            proj.set(tau, j, b * s);
        }
    }
    Ok(proj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeWeight {
    pub code: String,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissionTrace {
    pub index: usize,
    pub codes: Vec<CodeWeight>,
    pub beta: f64,
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputAttribution {
    pub output: String,
    pub score: f64,
    /// Admission with the largest `δ` for this output.
    pub admission: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub schema_version: u32,
    pub patient_id: String,
    pub admissions: Vec<AdmissionTrace>,
    pub top_outputs: Vec<OutputAttribution>,
}

/// Assembles the trace of one encoded patient. `labels[c]` names code
/// `c`; `outputs[j]` names output `j` of the head.
pub fn export_trace(
    patient_id: &str,
    encoding: &PatientEncoding,
    head: Option<&Tensor>,
    labels: &[String],
    outputs: &[String],
    k: usize,
) -> Result<AttentionTrace, InterpretError> {
    let w = head.ok_or(InterpretError::HeadMissing)?;
    let delta = compute_delta(&encoding.beta, &encoding.theta, Some(w))?;
    let scores: Vec<f64> = (0..w.rows())
        .map(|j| {
            let z: f64 = w.row(j).iter().zip(&encoding.patient).map(|(a, b)| a * b).sum();
            1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let admissions = (0..encoding.beta.len())
        .map(|tau| AdmissionTrace {
            index: tau,
            codes: encoding.codes[tau]
                .iter()
                .zip(&encoding.alpha[tau])
                .map(|(&c, &a)| CodeWeight {
                    code: labels[c].clone(),
                    alpha: a,
                })
                .collect(),
            beta: encoding.beta[tau],
            theta: encoding.theta[tau].clone(),
            delta: delta.row(tau).to_vec(),
        })
        .collect();
    let top_outputs = top_k(&scores, k)
        .into_iter()
        .map(|j| {
            let best = (0..delta.rows())
                .max_by(|&a, &b| delta.get(a, j).total_cmp(&delta.get(b, j)).then(b.cmp(&a)))
                .expect("at least one admission");
            OutputAttribution {
                output: outputs[j].clone(),
                score: scores[j],
                admission: best,
                delta: delta.get(best, j),
            }
        })
        .collect();
    Ok(AttentionTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        patient_id: patient_id.to_string(),
        admissions,
        top_outputs,
    })
}
