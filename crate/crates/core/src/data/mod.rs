//! EHR datasets: JSON I/O, patient splits, task labels and a seeded
//! synthetic generator.

mod synth;

pub use synth::{generate_synthetic, SynthConfig, SynthCorpus};

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::CodeVocabulary;

/// Code-string prefix that marks the heart-failure outcome.
pub const HF_PREFIX: &str = "428";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset schema: {0}")]
    Schema(String),
    #[error("patient {patient:?}: admission {index} has no codes")]
    EmptyAdmission { patient: String, index: usize },
    #[error("unknown code {0:?} (strict vocabulary mode)")]
    UnknownCodeInStrictMode(String),
    #[error("patient {0:?} has no admissions")]
    NoAdmissions(String),
    #[error("duplicate patient id {0:?}")]
    DuplicatePatient(String),
    #[error("split needs {requested} multiple-admission patients, only {available} available")]
    InsufficientPatients { requested: usize, available: usize },
    #[error("patient {0:?} has a single admission and cannot form a task instance")]
    SingleAdmissionPatient(String),
    #[error("unknown patient id {0:?}")]
    UnknownPatient(String),
    #[error("synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, DataError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionRecord {
    pub t: i64,
    pub codes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientRecord {
    pub id: String,
    pub admissions: Vec<AdmissionRecord>,
}

/// Raw, validated records as stored on disk.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhrDataset {
    pub patients: Vec<PatientRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub patients: usize,
    pub admissions: usize,
    /// Patients whose admissions were re-sorted by timestamp.
    pub resorted_patients: usize,
    /// Unknown codes dropped in lenient mode.
    pub dropped_codes: usize,
}

impl EhrDataset {
    /// Parses and validates; admissions are sorted by `t` (stable).
    pub fn read_json<R: Read>(reader: R) -> Result<(Self, LoadReport)> {
        let mut ds: EhrDataset = serde_json::from_reader(reader).map_err(|e| DataError::Schema(e.to_string()))?;
        let mut report = LoadReport::default();
        let mut ids = std::collections::HashSet::new();
        for p in &mut ds.patients {
            if !ids.insert(p.id.clone()) {
                return Err(DataError::DuplicatePatient(p.id.clone()));
            }
            if p.admissions.is_empty() {
                return Err(DataError::NoAdmissions(p.id.clone()));
            }
            if let Some(index) = p.admissions.iter().position(|a| a.codes.is_empty()) {
                return Err(DataError::EmptyAdmission {
                    patient: p.id.clone(),
                    index,
                });
            }
            if p.admissions.windows(2).any(|w| w[0].t > w[1].t) {
                p.admissions.sort_by_key(|a| a.t);
                report.resorted_patients += 1;
            }
            report.admissions += p.admissions.len();
        }
        report.patients = ds.patients.len();
        if report.resorted_patients > 0 {
            log::warn!("re-sorted admissions of {} patients by timestamp", report.resorted_patients);
        }
        Ok((ds, report))
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self).map_err(|e| DataError::Schema(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_json(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    /// Maps codes to positions in `C`. In strict mode an unknown code is an
    /// error; otherwise it is dropped (admissions left empty are dropped
    /// too, and patients left without admissions are skipped).
    pub fn encode(&self, vocab: &CodeVocabulary, strict: bool, report: &mut LoadReport) -> Result<Vec<Patient>> {
        let mut out = Vec::with_capacity(self.patients.len());
        for p in &self.patients {
            let mut admissions = Vec::with_capacity(p.admissions.len());
            for a in &p.admissions {
                let mut codes = Vec::with_capacity(a.codes.len());
                for c in &a.codes {
                    match vocab.index(c) {
                        Ok(i) => codes.push(i),
                        Err(_) if strict => return Err(DataError::UnknownCodeInStrictMode(c.clone())),
                        Err(_) => report.dropped_codes += 1,
                    }
                }
                codes.sort_unstable();
                codes.dedup();
                if !codes.is_empty() {
                    admissions.push(codes);
                }
            }
            if !admissions.is_empty() {
                out.push(Patient {
                    id: p.id.clone(),
                    admissions,
                });
            }
        }
        Ok(out)
    }
}

/// A patient with admissions as sorted, deduplicated code positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patient {
    pub id: String,
    pub admissions: Vec<Vec<usize>>,
}

impl Patient {
    pub fn is_multi(&self) -> bool {
        self.admissions.len() >= 2
    }
}

/// Reads, validates and encodes a dataset file.
pub fn load_dataset(path: &Path, vocab: &CodeVocabulary, strict: bool) -> Result<(Vec<Patient>, LoadReport)> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let (ds, mut report) = EhrDataset::read_json(file)?;
    let patients = ds.encode(vocab, strict, &mut report)?;
    Ok((patients, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 440,
            valid: 40,
            test: 120,
        }
    }
}

/// Patient indices per role. Multiple-admission patients not drawn into
/// any split are left out entirely.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub single: Vec<usize>,
}

impl Splits {
    /// Patients allowed into co-occurrence counting and SSL: all
    /// single-admission patients plus the training split.
    pub fn pretrain_pool(&self) -> Vec<usize> {
        let mut pool: Vec<usize> = self.single.iter().chain(&self.train).copied().collect();
        pool.sort_unstable();
        pool
    }

    pub fn to_ids(&self, patients: &[Patient]) -> SplitIds {
        let ids = |v: &[usize]| v.iter().map(|&i| patients[i].id.clone()).collect();
        SplitIds {
            train: ids(&self.train),
            valid: ids(&self.valid),
            test: ids(&self.test),
            single: ids(&self.single),
        }
    }
}

/// On-disk form of [`Splits`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
    pub single: Vec<String>,
}

impl SplitIds {
    pub fn resolve(&self, patients: &[Patient]) -> Result<Splits> {
        let index: std::collections::HashMap<&str, usize> =
            patients.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let look = |v: &[String]| {
            v.iter()
                .map(|id| index.get(id.as_str()).copied().ok_or_else(|| DataError::UnknownPatient(id.clone())))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Splits {
            train: look(&self.train)?,
            valid: look(&self.valid)?,
            test: look(&self.test)?,
            single: look(&self.single)?,
        })
    }
}

/// Random disjoint train/valid/test draw over multiple-admission patients.
pub fn split(patients: &[Patient], counts: SplitCounts, seed: u64) -> Result<Splits> {
    let mut multi: Vec<usize> = (0..patients.len()).filter(|&i| patients[i].is_multi()).collect();
    let requested = counts.train + counts.valid + counts.test;
    if requested > multi.len() {
        return Err(DataError::InsufficientPatients {
            requested,
            available: multi.len(),
        });
    }
    multi.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut take = |n: usize| {
        let mut part: Vec<usize> = multi.drain(..n).collect();
        part.sort_unstable();
        part
    };
    let train = take(counts.train);
    let valid = take(counts.valid);
    let test = take(counts.test);
    let single = (0..patients.len()).filter(|&i| !patients[i].is_multi()).collect();
    Ok(Splits {
        train,
        valid,
        test,
        single,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Diagnosis,
    HeartFailure,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Diagnosis => "diagnosis",
            Task::HeartFailure => "heart_failure",
        }
    }

    /// Output width `o`.
    pub fn output_dim(self, codes: usize) -> usize {
        match self {
            Task::Diagnosis => codes,
            Task::HeartFailure => 1,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "diagnosis" => Ok(Task::Diagnosis),
            "heart_failure" | "heart-failure" | "hf" => Ok(Task::HeartFailure),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// Inputs are admissions `1..T-1`; the label comes from admission `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskInstance {
    pub patient: usize,
    pub inputs: Vec<Vec<usize>>,
    pub label: Vec<f64>,
}

pub fn is_heart_failure(code: &str) -> bool {
    code.starts_with(HF_PREFIX)
}

pub fn make_task_instances(
    patients: &[Patient],
    members: &[usize],
    task: Task,
    vocab: &CodeVocabulary,
) -> Result<Vec<TaskInstance>> {
    members
        .iter()
        .map(|&i| {
            let p = &patients[i];
            let (last, inputs) = match p.admissions.split_last() {
                Some((last, inputs)) if !inputs.is_empty() => (last, inputs),
                _ => return Err(DataError::SingleAdmissionPatient(p.id.clone())),
            };
            let label = match task {
                Task::Diagnosis => {
                    let mut y = vec![0.0; vocab.len()];
                    for &c in last {
                        y[c] = 1.0;
                    }
                    y
                }
                Task::HeartFailure => {
                    let hit = last.iter().any(|&c| is_heart_failure(vocab.label(c)));
                    vec![if hit { 1.0 } else { 0.0 }]
                }
            };
            Ok(TaskInstance {
                patient: i,
                inputs: inputs.to_vec(),
                label,
            })
        })
        .collect()
}
