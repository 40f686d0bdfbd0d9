//! Hierarchy-factorized decoder for the historical-prediction proxy task.
//!
//! Level `k` has its own sigmoid head; the probability of a level-`h` node
//! is the product of the heads along its ancestor chain, so a child can
//! never be more likely than its parent.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{glorot, Dropout};
use crate::ontology::Ontology;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Clamp applied inside every binary cross-entropy.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("hierarchy of depth {0} has no levels below the root")]
    TooShallow(usize),
    #[error("code {code} outside vocabulary of {len}")]
    UnknownCode { code: usize, len: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Result<T> = std::result::Result<T, DecoderError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// One head per level `2..=H`, chained along ancestors.
    Hierarchical,
    /// A single head over level `H` only.
    Flat,
}

/// Level structure the decoder needs from the ontology.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderLayout {
    depth: usize,
    /// `n_h` for `h = 1..=H`.
    counts: Vec<usize>,
    /// `parents[h]`: level-(h-1) position of each level-h node's parent.
    parents: Vec<Vec<usize>>,
    /// `ancestors[c][h-1]`: level-h position of leaf `c`'s ancestor.
    ancestors: Vec<Vec<usize>>,
}

impl DecoderLayout {
    pub fn new(ont: &Ontology) -> Result<Self> {
        let depth = ont.depth();
        if depth < 2 {
            return Err(DecoderError::TooShallow(depth));
        }
        let mut parents = vec![Vec::new(), Vec::new()];
        parents.extend((2..=depth).map(|h| ont.parent_positions(h)));
        let map = ont.ancestor_map();
        let ancestors = (0..ont.leaf_count())
            .map(|c| (1..=depth).map(|h| ont.level_position(map.get(c, h))).collect())
            .collect();
        Ok(Self {
            depth,
            counts: ont.level_counts(),
            parents,
            ancestors,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `n_h`.
    pub fn count(&self, h: usize) -> usize {
        self.counts[h - 1]
    }

    pub fn codes(&self) -> usize {
        self.ancestors.len()
    }

    /// Level-`h` position of the ancestor of code `c`.
    pub fn ancestor(&self, c: usize, h: usize) -> usize {
        self.ancestors[c][h - 1]
    }

    /// Levels the decoder predicts.
    pub fn predicted_levels(&self, kind: DecoderKind) -> Vec<usize> {
        match kind {
            DecoderKind::Hierarchical => (2..=self.depth).collect(),
            DecoderKind::Flat => vec![self.depth],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub kind: DecoderKind,
    /// `w_k` (`n_k × p`) for each predicted level, in level order.
    pub heads: Vec<Tensor>,
}

impl DecoderParams {
    pub fn init<R: Rng + ?Sized>(layout: &DecoderLayout, kind: DecoderKind, patient_dim: usize, rng: &mut R) -> Self {
        let heads = layout
            .predicted_levels(kind)
            .into_iter()
            .map(|h| glorot(layout.count(h), patient_dim, rng))
            .collect();
        Self { kind, heads }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        self.heads.iter().enumerate().map(|(i, w)| (format!("decoder.{i}"), w)).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.heads.iter_mut().collect()
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.heads
            .iter()
            .map(|w| if trainable { tape.param(w.clone()) } else { tape.constant(w.clone()) })
            .collect()
    }
}

/// `y^h` for every predicted level; rows are patients.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyTargets {
    pub levels: Vec<usize>,
    pub targets: Vec<Tensor>,
}

/// Ancestor indicators of every code seen in any admission of each patient.
pub fn build_targets<A: AsRef<[Vec<usize>]>>(
    patients: &[A],
    layout: &DecoderLayout,
    kind: DecoderKind,
) -> Result<HierarchyTargets> {
    let levels = layout.predicted_levels(kind);
    let mut targets: Vec<Tensor> = levels.iter().map(|&h| Tensor::zeros(patients.len(), layout.count(h))).collect();
    for (row, p) in patients.iter().enumerate() {
        for &c in p.as_ref().iter().flatten() {
            if c >= layout.codes() {
                return Err(DecoderError::UnknownCode {
                    code: c,
                    len: layout.codes(),
                });
            }
            for (t, &h) in targets.iter_mut().zip(&levels) {
                t.set(row, layout.ancestor(c, h), 1.0);
            }
        }
    }
    Ok(HierarchyTargets { levels, targets })
}

/// `ŷ^h` per predicted level, one row per patient.
pub fn hierarchical_forward(
    tape: &mut Tape,
    patient: Var,
    heads: &[Var],
    layout: &DecoderLayout,
    kind: DecoderKind,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<Vec<Var>> {
    let input = match dropout {
        Some(d) => tape.dropout(patient, d.rate, d.rng)?,
        None => patient,
    };
    let mut out: Vec<Var> = Vec::with_capacity(heads.len());
    for (&w, h) in heads.iter().zip(layout.predicted_levels(kind)) {
        let logits = tape.matmul_t(input, w)?;
        let cond = tape.sigmoid(logits);
        let y = match (kind, out.last()) {
            (DecoderKind::Hierarchical, Some(&prev)) => {
                let up = tape.gather_cols(prev, &layout.parents[h])?;
                tape.hadamard(cond, up)?
            }
            _ => cond,
        };
        out.push(y);
    }
    Ok(out)
}

/// Mean over predicted levels of the per-level mean BCE.
pub fn ssl_loss(tape: &mut Tape, predictions: &[Var], targets: &HierarchyTargets) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (&pred, target) in predictions.iter().zip(&targets.targets) {
        let l = tape.bce_mean(pred, Arc::new(target.clone()), BCE_EPS)?;
        total = Some(match total {
            Some(t) => tape.add(t, l)?,
            None => l,
        });
    }
    let total = total.expect("at least one predicted level");
    Ok(tape.scale(total, 1.0 / predictions.len() as f64))
}
