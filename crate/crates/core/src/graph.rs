//! Directed, weighted co-occurrence graph over the recorded codes.
//!
//! `B` counts, per unordered pair, the admissions containing both codes.
//! `A` normalizes each row by its count total `q_i` (a lone self-loop for
//! codes that never co-occur), and the GNN consumes the self-loop-boosted,
//! row-normalized `Â`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::ontology::{CodeVocabulary, OntologyError};
use crate::tensor::SparseMatrix;

/// Self-loop weight `φ` used unless configured otherwise.
pub const DEFAULT_PHI: f64 = 0.9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown code {0:?}")]
    UnknownCode(String),
    #[error("code index {index} outside vocabulary of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("self-loop weight {0} outside (0, 1)")]
    InvalidPhi(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, GraphError>;

/// Pair counts from admissions given as code indices. Duplicates inside an
/// admission count once.
pub fn count_cooccurrence_indices<'a, I>(admissions: I, n: usize) -> Result<SparseMatrix>
where
    I: IntoParallelIterator<Item = &'a [usize]>,
{
    let merged = admissions
        .into_par_iter()
        .try_fold(HashMap::<(usize, usize), u64>::new, |mut acc, adm| {
            let mut codes = adm.to_vec();
            codes.sort_unstable();
            codes.dedup();
            if let Some(&bad) = codes.last().filter(|&&c| c >= n) {
                return Err(GraphError::IndexOutOfRange { index: bad, len: n });
            }
            for (k, &i) in codes.iter().enumerate() {
                for &j in &codes[k + 1..] {
                    *acc.entry((i, j)).or_default() += 1;
                }
            }
            Ok(acc)
        })
        .try_reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            Ok(a)
        })?;
    let mut triplets = Vec::with_capacity(merged.len() * 2);
    for ((i, j), c) in merged {
        triplets.push((i, j, c as f64));
        triplets.push((j, i, c as f64));
    }
    Ok(SparseMatrix::from_triplets(n, n, &triplets).expect("indices checked above"))
}

/// Pair counts from admissions given as code strings.
pub fn count_cooccurrence<S: AsRef<str>>(admissions: &[Vec<S>], vocab: &CodeVocabulary) -> Result<SparseMatrix> {
    let indexed = admissions
        .iter()
        .map(|adm| {
            adm.iter()
                .map(|c| {
                    vocab.index(c.as_ref()).map_err(|e| match e {
                        OntologyError::UnknownCode(code) => GraphError::UnknownCode(code),
                        other => GraphError::UnknownCode(other.to_string()),
                    })
                })
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let slices: Vec<&[usize]> = indexed.iter().map(Vec::as_slice).collect();
    count_cooccurrence_indices(slices, vocab.len())
}

#[derive(Clone, Debug)]
pub struct CooccurrenceGraph {
    counts: SparseMatrix,
    row_sums: Vec<f64>,
    adjacency: SparseMatrix,
    normalized: Arc<SparseMatrix>,
    phi: f64,
}

impl CooccurrenceGraph {
    pub fn build(counts: SparseMatrix, phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(GraphError::InvalidPhi(phi));
        }
        let n = counts.rows();
        let row_sums: Vec<f64> = (0..n).map(|i| counts.row_sum(i)).collect();

        let mut a = Vec::with_capacity(counts.nnz() + n);
        for (i, &q) in row_sums.iter().enumerate() {
            if q == 0.0 {
                a.push((i, i, 1.0));
            } else {
                a.extend(counts.row_entries(i).filter(|&(j, _)| j != i).map(|(j, b)| (i, j, b / q)));
            }
        }
        let adjacency = SparseMatrix::from_triplets(n, n, &a).expect("square");

        let mut tilde: Vec<(usize, usize, f64)> = a.iter().map(|&(i, j, v)| (i, j, (1.0 - phi) * v)).collect();
        tilde.extend((0..n).map(|i| (i, i, phi)));
        let tilde = SparseMatrix::from_triplets(n, n, &tilde).expect("square");
        let normalized: Vec<_> = (0..n)
            .flat_map(|i| {
                let total = tilde.row_sum(i);
                tilde.row_entries(i).map(move |(j, v)| (i, j, v / total)).collect::<Vec<_>>()
            })
            .collect();
        let normalized = Arc::new(SparseMatrix::from_triplets(n, n, &normalized).expect("square"));

        Ok(Self {
            counts,
            row_sums,
            adjacency,
            normalized,
            phi,
        })
    }

    pub fn len(&self) -> usize {
        self.row_sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_sums.is_empty()
    }

    /// `B`.
    pub fn counts(&self) -> &SparseMatrix {
        &self.counts
    }

    /// `q`.
    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// `A`.
    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    /// `Â`.
    pub fn normalized(&self) -> &Arc<SparseMatrix> {
        &self.normalized
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Dumps non-zero entries of `A` as `i,j,weight`.
    pub fn write_adjacency_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,weight")?;
        for (i, j, v) in self.adjacency.triplets() {
            writeln!(w, "{i},{j},{v:?}")?;
        }
        Ok(())
    }
}
