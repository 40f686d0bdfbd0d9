//! Stage-by-stage orchestration over files in one output directory.
//!
//! Every stage reads earlier artifacts, writes its own, refreshes the
//! resolved config and records input/output hashes in `manifest.json`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{stage_seed, ConfigError, RunConfig};
use crate::data::{self, DataError, EhrDataset, Patient, SplitIds, Splits, Task, TaskInstance};
use crate::decoder::{DecoderError, DecoderKind, DecoderLayout, DecoderParams};
use crate::encoder::{self, glorot, EncoderError, EncoderParams};
use crate::graph::{self, CooccurrenceGraph, GraphError};
use crate::hyperbolic::{self, HyperbolicError};
use crate::interpret::{self, InterpretError};
use crate::metrics::EvalReport;
use crate::ontology::{self, CodeVocabulary, Ontology, OntologyError, DEFAULT_VIRTUAL_SUFFIX};
use crate::tensor::{SparseMatrix, Tensor};
use crate::training::{self, EpochLog, FineTuneHead, FineTuneSetup, SslContext, TrainError};

pub const ONTOLOGY: &str = "ontology.csv";
pub const DATASET: &str = "dataset.json";
pub const EMBEDDINGS: &str = "embeddings.csv";
pub const HYPERBOLIC_LOG: &str = "hyperbolic_log.jsonl";
pub const SPLITS: &str = "splits.json";
pub const ADJACENCY: &str = "adjacency.csv";
pub const SSL_CHECKPOINT: &str = "ssl.ckpt";
pub const SSL_LOG: &str = "ssl_log.jsonl";
pub const FINETUNE_CHECKPOINT: &str = "finetune.ckpt";
pub const FINETUNE_LOG: &str = "finetune_log.jsonl";
pub const METRICS: &str = "metrics.json";
pub const TRACES: &str = "traces";
pub const HIDDEN_EMBEDDINGS: &str = "hidden_embeddings.csv";
pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "config.resolved.json";

const SEED_HYPERBOLIC: u64 = 1;
const SEED_SPLIT: u64 = 2;
const SEED_ENCODER_INIT: u64 = 3;
const SEED_SSL: u64 = 4;
const SEED_HEAD_INIT: u64 = 5;
const SEED_FINETUNE: u64 = 6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing artifact {0} (run the earlier stage first)")]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::MissingArtifact(_) => "MissingArtifact",
            Self::Config(_) => "ConfigError",
            Self::Ontology(_) => "OntologyError",
            Self::Data(_) => "DataError",
            Self::Hyperbolic(_) => "HyperbolicError",
            Self::Graph(_) => "GraphError",
            Self::Encoder(_) => "EncoderError",
            Self::Decoder(_) => "DecoderError",
            Self::Train(_) => "TrainError",
            Self::Checkpoint(_) => "CheckpointError",
            Self::Interpret(_) => "InterpretError",
            Self::Json(_) => "JsonError",
            Self::Io(_) => "IoError",
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenSynth,
    EmbedHier,
    BuildGraph,
    PretrainSsl,
    Finetune,
    Evaluate,
    Explain,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::GenSynth,
        Stage::EmbedHier,
        Stage::BuildGraph,
        Stage::PretrainSsl,
        Stage::Finetune,
        Stage::Evaluate,
        Stage::Explain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenSynth => "gen-synth",
            Stage::EmbedHier => "embed-hier",
            Stage::BuildGraph => "build-graph",
            Stage::PretrainSsl => "pretrain-ssl",
            Stage::Finetune => "finetune",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact(path.to_path_buf()))
    }
}

/// Model pieces restored from a checkpoint.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub encoder: EncoderParams,
    pub decoder: Option<DecoderParams>,
    pub head: Option<FineTuneHead>,
}

/// Result of a full pipeline run.
#[derive(Clone, Debug)]
pub struct PipelineSummary {
    pub hyperbolic_losses: Vec<f64>,
    pub ssl_logs: Vec<EpochLog>,
    pub finetune_logs: Vec<EpochLog>,
    pub metrics: EvalReport,
}

/// One output directory plus the configuration driving it.
pub struct Runner {
    config: RunConfig,
    out: PathBuf,
}

impl Runner {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let out = config.paths.out.clone();
        std::fs::create_dir_all(&out)?;
        Ok(Self { config, out })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn label_for(&self, p: &Path) -> String {
        p.strip_prefix(&self.out)
            .map(|r| r.display().to_string())
            .unwrap_or_else(|_| p.display().to_string())
    }

    fn record(&self, stage: Stage, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        write_json_pretty(&self.path(RESOLVED_CONFIG), &self.config.resolved())?;
        let manifest_path = self.path(MANIFEST);
        let mut manifest: Manifest = if manifest_path.exists() {
            serde_json::from_slice(&std::fs::read(&manifest_path)?)?
        } else {
            Manifest::default()
        };
        let hash_all = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths.iter().map(|p| Ok((self.label_for(p), sha256_file(p)?))).collect()
        };
        manifest.stages.insert(
            stage.name().to_string(),
            StageRecord {
                config_hash: self.config.hash(),
                inputs: hash_all(inputs)?,
                outputs: hash_all(outputs)?,
            },
        );
        write_json_pretty(&manifest_path, &manifest)
    }

    pub fn load_ontology(&self) -> Result<Ontology> {
        let path = self.config.ontology_path();
        let ont = Ontology::load(require(&path)?)?;
        Ok(ont.pad_virtual_leaves(DEFAULT_VIRTUAL_SUFFIX))
    }

    pub fn load_patients(&self, vocab: &CodeVocabulary) -> Result<Vec<Patient>> {
        let path = self.config.dataset_path();
        let (patients, report) = data::load_dataset(require(&path)?, vocab, self.config.strict_codes)?;
        if report.dropped_codes > 0 {
            log::warn!("dropped {} unknown codes", report.dropped_codes);
        }
        Ok(patients)
    }

    pub fn load_splits(&self, patients: &[Patient]) -> Result<Splits> {
        let path = self.path(SPLITS);
        let ids: SplitIds = serde_json::from_slice(&std::fs::read(require(&path)?)?)?;
        Ok(ids.resolve(patients)?)
    }

    /// Co-occurrence graph over single-admission and training patients.
    pub fn build_graph(&self, patients: &[Patient], splits: &Splits, codes: usize) -> Result<CooccurrenceGraph> {
        let pool = splits.pretrain_pool();
        let admissions: Vec<&[usize]> = pool
            .iter()
            .flat_map(|&i| patients[i].admissions.iter().map(Vec::as_slice))
            .collect();
        let counts = graph::count_cooccurrence_indices(admissions, codes)?;
        Ok(CooccurrenceGraph::build(counts, self.config.phi)?)
    }

    pub fn load_embeddings(&self, vocab: &CodeVocabulary) -> Result<Tensor> {
        let path = self.path(EMBEDDINGS);
        let (labels, e) = hyperbolic::read_embedding_csv(std::fs::File::open(require(&path)?)?)?;
        if labels != vocab.labels() {
            return Err(PipelineError::Config(ConfigError::Invalid(
                "embedding rows do not match the ontology's codes".into(),
            )));
        }
        Ok(e)
    }

    fn decoder_kind(&self) -> DecoderKind {
        if self.config.ablation.no_hierarchy {
            DecoderKind::Flat
        } else {
            DecoderKind::Hierarchical
        }
    }

    fn skeleton(&self, codes: usize, layout: &DecoderLayout) -> (EncoderParams, DecoderParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(self.config.seed, SEED_ENCODER_INIT));
        let e = Tensor::zeros(codes, self.config.encoder.embed);
        let enc = EncoderParams::init(e, &self.config.encoder, !self.config.ablation.no_graph, &mut rng);
        let dec = DecoderParams::init(layout, self.decoder_kind(), enc.patient_dim(), &mut rng);
        (enc, dec)
    }

    pub fn load_model(&self, path: &Path, ont: &Ontology) -> Result<LoadedModel> {
        let ckpt = Checkpoint::load(require(path)?)?;
        let layout = DecoderLayout::new(ont)?;
        let (mut enc, mut dec) = self.skeleton(ont.leaf_count(), &layout);
        let names: Vec<String> = enc.named().into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.into_iter().zip(enc.tensors_mut()) {
            ckpt.load_into(&format!("encoder.{name}"), t)?;
        }
        let decoder = if ckpt.contains("decoder.0") {
            let names: Vec<String> = dec.named().into_iter().map(|(n, _)| n).collect();
            for (name, t) in names.into_iter().zip(dec.tensors_mut()) {
                ckpt.load_into(&name, t)?;
            }
            Some(dec)
        } else {
            None
        };
        let head = match ckpt.contains("head.weight") {
            true => Some(FineTuneHead {
                weight: ckpt.get("head.weight")?.clone(),
            }),
            false => None,
        };
        Ok(LoadedModel {
            encoder: enc,
            decoder,
            head,
        })
    }

    pub fn task_instances(&self, patients: &[Patient], members: &[usize], vocab: &CodeVocabulary) -> Result<Vec<TaskInstance>> {
        Ok(data::make_task_instances(patients, members, self.config.task, vocab)?)
    }

    /// Writes the synthetic ontology and dataset.
    pub fn gen_synth(&self) -> Result<()> {
        let corpus = data::generate_synthetic(&self.config.synth_config())?;
        let (ont_path, data_path) = (self.config.ontology_path(), self.config.dataset_path());
        ontology::write_edges_csv(&corpus.edges, std::fs::File::create(&ont_path)?)?;
        corpus.dataset.save(&data_path)?;
        log::info!("gen-synth: {} patients", corpus.dataset.len());
        self.record(Stage::GenSynth, &[], &[ont_path, data_path])
    }

    /// Hyperbolic pre-training (or a random `E` under `no_hyperbolic`).
    pub fn embed_hier(&self) -> Result<Vec<f64>> {
        let ont = self.load_ontology()?;
        let vocab = ont.code_vocabulary();
        let seed = stage_seed(self.config.seed, SEED_HYPERBOLIC);
        let (e, losses) = if self.config.ablation.no_hyperbolic {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (glorot(ont.leaf_count(), self.config.hyperbolic.dim, &mut rng), Vec::new())
        } else {
            let model = hyperbolic::train_hyperbolic(&ont, &self.config.hyperbolic, seed)?;
            (model.leaf_embeddings(&ont)?, model.loss_curve)
        };
        let out = self.path(EMBEDDINGS);
        hyperbolic::write_embedding_csv(std::fs::File::create(&out)?, vocab.labels(), &e, "dim_")?;
        let log_rows: Vec<_> = losses
            .iter()
            .enumerate()
            .map(|(epoch, loss)| {
                serde_json::json!({"epoch": epoch, "loss": loss, "lr": self.config.hyperbolic.schedule.lr_at(epoch)})
            })
            .collect();
        write_jsonl(&self.path(HYPERBOLIC_LOG), &log_rows)?;
        log::info!("embed-hier: final loss {:?}", losses.last());
        self.record(
            Stage::EmbedHier,
            &[self.config.ontology_path()],
            &[out, self.path(HYPERBOLIC_LOG)],
        )?;
        Ok(losses)
    }

    /// Splits patients and dumps the adjacency built from the pretraining pool.
    pub fn build_graph_stage(&self) -> Result<()> {
        let ont = self.load_ontology()?;
        let vocab = ont.code_vocabulary();
        let patients = self.load_patients(&vocab)?;
        let splits = data::split(&patients, self.config.split, stage_seed(self.config.seed, SEED_SPLIT))?;
        write_json_pretty(&self.path(SPLITS), &splits.to_ids(&patients))?;
        let g = self.build_graph(&patients, &splits, vocab.len())?;
        g.write_adjacency_csv(std::io::BufWriter::new(std::fs::File::create(self.path(ADJACENCY))?))?;
        self.record(
            Stage::BuildGraph,
            &[self.config.ontology_path(), self.config.dataset_path()],
            &[self.path(SPLITS), self.path(ADJACENCY)],
        )
    }

    /// Initializes the encoder around `E` and trains it on the proxy task.
    pub fn pretrain_ssl(&self) -> Result<Vec<EpochLog>> {
        let ont = self.load_ontology()?;
        let vocab = ont.code_vocabulary();
        let patients = self.load_patients(&vocab)?;
        let splits = self.load_splits(&patients)?;
        let g = self.build_graph(&patients, &splits, vocab.len())?;
        let layout = DecoderLayout::new(&ont)?;
        let (mut enc, mut dec) = self.skeleton(vocab.len(), &layout);
        enc.embedding = self.load_embeddings(&vocab)?;

        let logs = if self.config.ablation.no_ssl {
            Vec::new()
        } else {
            let pool: Vec<&[Vec<usize>]> = splits
                .pretrain_pool()
                .iter()
                .map(|&i| patients[i].admissions.as_slice())
                .collect();
            let ctx = SslContext {
                adjacency: g.normalized(),
                layout: &layout,
                kind: self.decoder_kind(),
            };
            training::run_ssl(
                &mut enc,
                &mut dec,
                &ctx,
                &pool,
                &self.config.ssl_config(),
                stage_seed(self.config.seed, SEED_SSL),
            )?
        };
        write_jsonl(&self.path(SSL_LOG), &logs)?;
        let mut ckpt = Checkpoint::new("ssl", &self.config.hash());
        ckpt.extend("encoder.", enc.named());
        ckpt.extend("", dec.named());
        ckpt.save(&self.path(SSL_CHECKPOINT))?;
        self.record(
            Stage::PretrainSsl,
            &[
                self.config.ontology_path(),
                self.config.dataset_path(),
                self.path(SPLITS),
                self.path(EMBEDDINGS),
            ],
            &[self.path(SSL_CHECKPOINT), self.path(SSL_LOG)],
        )?;
        Ok(logs)
    }

    fn fresh_head(&self, codes: usize, patient_dim: usize) -> FineTuneHead {
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(self.config.seed, SEED_HEAD_INIT));
        FineTuneHead::init(self.config.task.output_dim(codes), patient_dim, &mut rng)
    }

    /// Supervised fine-tuning of encoder and head on the training split.
    pub fn finetune(&self) -> Result<Vec<EpochLog>> {
        let ont = self.load_ontology()?;
        let vocab = ont.code_vocabulary();
        let patients = self.load_patients(&vocab)?;
        let splits = self.load_splits(&patients)?;
        let g = self.build_graph(&patients, &splits, vocab.len())?;
        let model = self.load_model(&self.path(SSL_CHECKPOINT), &ont)?;
        let mut enc = model.encoder;
        let mut head = self.fresh_head(vocab.len(), enc.patient_dim());
        let train = self.task_instances(&patients, &splits.train, &vocab)?;
        let valid = self.task_instances(&patients, &splits.valid, &vocab)?;
        let setup = FineTuneSetup {
            task: self.config.task,
            adjacency: g.normalized(),
            ks: &self.config.eval.ks,
            threshold: self.config.eval.threshold,
            freeze_encoder: false,
        };
        let logs = training::run_finetune(
            &mut enc,
            &mut head,
            &setup,
            &train,
            &valid,
            &self.config.finetune_config(),
            stage_seed(self.config.seed, SEED_FINETUNE),
        )?;
        write_jsonl(&self.path(FINETUNE_LOG), &logs)?;
        let mut ckpt = Checkpoint::new("finetune", &self.config.hash());
        ckpt.extend("encoder.", enc.named());
        ckpt.push("head.weight", &head.weight);
        ckpt.save(&self.path(FINETUNE_CHECKPOINT))?;
        self.record(
            Stage::Finetune,
            &[
                self.config.ontology_path(),
                self.config.dataset_path(),
                self.path(SPLITS),
                self.path(SSL_CHECKPOINT),
            ],
            &[self.path(FINETUNE_CHECKPOINT), self.path(FINETUNE_LOG)],
        )?;
        Ok(logs)
    }

    /// Test-split metrics of a checkpoint (default: the fine-tuned one). A
    /// checkpoint without a head is scored with a freshly initialized head.
    pub fn evaluate(&self, checkpoint: Option<&Path>) -> Result<EvalReport> {
        let ckpt_path = checkpoint.map_or_else(|| self.path(FINETUNE_CHECKPOINT), Path::to_path_buf);
        let ont = self.load_ontology()?;
        let vocab = ont.code_vocabulary();
        let patients = self.load_patients(&vocab)?;
        let splits = self.load_splits(&patients)?;
        let g = self.build_graph(&patients, &splits, vocab.len())?;
        let model = self.load_model(&ckpt_path, &ont)?;
        let head = model
            .head
            .unwrap_or_else(|| self.fresh_head(vocab.len(), model.encoder.patient_dim()));
        let test = self.task_instances(&patients, &splits.test, &vocab)?;
        let scores = training::predict(&model.encoder, &head, g.normalized(), &test)?;
        let report = training::evaluate(self.config.task, &scores, &test, &self.config.eval.ks, self.config.eval.threshold)?;
        write_json_pretty(&self.path(METRICS), &report)?;
        self.record(
            Stage::Evaluate,
            &[
                self.config.ontology_path(),
                self.config.dataset_path(),
                self.path(SPLITS),
                ckpt_path,
            ],
            &[self.path(METRICS)],
        )?;
        Ok(report)
    }

    /// Attention traces for the first test patients plus the `X` export.
    pub fn explain(&self) -> Result<Vec<PathBuf>> {
        let ont = self.load_ontology()?;
        let vocab = ont.code_vocabulary();
        let patients = self.load_patients(&vocab)?;
        let splits = self.load_splits(&patients)?;
        let g = self.build_graph(&patients, &splits, vocab.len())?;
        let model = self.load_model(&self.path(FINETUNE_CHECKPOINT), &ont)?;
        let head = model.head.ok_or(InterpretError::HeadMissing)?;
        let chosen: Vec<usize> = splits.test.iter().copied().take(self.config.eval.trace_patients).collect();
        let instances = self.task_instances(&patients, &chosen, &vocab)?;
        let inputs: Vec<&[Vec<usize>]> = instances.iter().map(|i| i.inputs.as_slice()).collect();
        let encodings = encoder::encode_patients(&model.encoder, g.normalized(), &inputs)?;
        let outputs: Vec<String> = match self.config.task {
            Task::Diagnosis => vocab.labels().to_vec(),
            Task::HeartFailure => vec!["heart_failure".to_string()],
        };
        let dir = self.path(TRACES);
        std::fs::create_dir_all(&dir)?;
        let mut written = Vec::new();
        for (inst, enc) in instances.iter().zip(&encodings) {
            let id = &patients[inst.patient].id;
            let trace = interpret::export_trace(
                id,
                enc,
                Some(&head.weight),
                vocab.labels(),
                &outputs,
                self.config.eval.trace_top_k,
            )?;
            let path = dir.join(format!("{id}.json"));
            write_json_pretty(&path, &trace)?;
            written.push(path);
        }
        let x = encoder::hidden_codes(&model.encoder, g.normalized())?;
        let hidden = self.path(HIDDEN_EMBEDDINGS);
        hyperbolic::write_embedding_csv(std::fs::File::create(&hidden)?, vocab.labels(), &x, "hidden_")?;
        let mut outs = written.clone();
        outs.push(hidden);
        self.record(
            Stage::Explain,
            &[
                self.config.ontology_path(),
                self.config.dataset_path(),
                self.path(SPLITS),
                self.path(FINETUNE_CHECKPOINT),
            ],
            &outs,
        )?;
        Ok(written)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::GenSynth => self.gen_synth(),
            Stage::EmbedHier => self.embed_hier().map(drop),
            Stage::BuildGraph => self.build_graph_stage(),
            Stage::PretrainSsl => self.pretrain_ssl().map(drop),
            Stage::Finetune => self.finetune().map(drop),
            Stage::Evaluate => self.evaluate(None).map(drop),
            Stage::Explain => self.explain().map(drop),
        }
    }

    /// All stages in order; the synthetic corpus is generated unless a
    /// dataset path is configured.
    pub fn run_pipeline(&self) -> Result<PipelineSummary> {
        if self.config.paths.dataset.is_none() {
            self.gen_synth()?;
        }
        let hyperbolic_losses = self.embed_hier()?;
        self.build_graph_stage()?;
        let ssl_logs = self.pretrain_ssl()?;
        let finetune_logs = self.finetune()?;
        let metrics = self.evaluate(None)?;
        self.explain()?;
        Ok(PipelineSummary {
            hyperbolic_losses,
            ssl_logs,
            finetune_logs,
            metrics,
        })
    }
}

/// Normalized adjacency of an already-built graph, for callers that only
/// need the encoder input.
pub fn adjacency_of(graph: &CooccurrenceGraph) -> Arc<SparseMatrix> {
    graph.normalized().clone()
}

/// Reads a dataset file without encoding it.
pub fn read_raw_dataset(path: &Path) -> Result<EhrDataset> {
    let (ds, _) = EhrDataset::read_json(std::io::BufReader::new(std::fs::File::open(require(path)?)?))?;
    Ok(ds)
}
