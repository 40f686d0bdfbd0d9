use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sherbet::config::RunConfig;
use sherbet::data::Task;
use sherbet::pipeline::{PipelineError, Runner, Stage};

#[derive(Parser, Debug)]
#[command(name = "sherbet", version, about = "Hyperbolic pre-training, graph encoding and hierarchy-aware self-supervision for EHR prediction")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Ontology edge list `parent,child` (default: <out>/ontology.csv).
    #[arg(long, global = true)]
    ontology: Option<PathBuf>,
    /// Patient JSON (default: <out>/dataset.json).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_task)]
    task: Option<Task>,
    /// Decision threshold for w-F1 and binary F1.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Random code embeddings instead of hyperbolic pre-training.
    #[arg(long, global = true)]
    no_hyperbolic: bool,
    /// Flat decoder predicting only the leaf level.
    #[arg(long, global = true)]
    no_hierarchy: bool,
    /// Skip self-supervised pre-training.
    #[arg(long, global = true)]
    no_ssl: bool,
    /// Skip the graph layer.
    #[arg(long, global = true)]
    no_graph: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic ontology and patient corpus.
    GenSynth,
    /// Train Poincaré code embeddings with information flow.
    EmbedHier,
    /// Split patients and dump the co-occurrence adjacency.
    BuildGraph,
    /// Self-supervised pre-training of the encoder.
    PretrainSsl,
    /// Supervised fine-tuning on the selected task.
    Finetune,
    /// Score the test split.
    Evaluate {
        /// Checkpoint to score (default: <out>/finetune.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Export attention traces and hidden code embeddings.
    Explain,
    /// Run every stage in order.
    Pipeline,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

fn build_config(g: &Global) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.paths.out = out.clone();
    }
    if let Some(p) = &g.ontology {
        cfg.paths.ontology = Some(p.clone());
    }
    if let Some(p) = &g.dataset {
        cfg.paths.dataset = Some(p.clone());
    }
    if let Some(t) = g.task {
        cfg.task = t;
    }
    if let Some(t) = g.threshold {
        cfg.eval.threshold = t;
    }
    cfg.ablation.no_hyperbolic |= g.no_hyperbolic;
    cfg.ablation.no_hierarchy |= g.no_hierarchy;
    cfg.ablation.no_ssl |= g.no_ssl;
    cfg.ablation.no_graph |= g.no_graph;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value, PipelineError> {
    let runner = Runner::new(build_config(&cli.global)?)?;
    let out = runner.out().display().to_string();
    let stage = match &cli.command {
        Command::GenSynth => Stage::GenSynth,
        Command::EmbedHier => Stage::EmbedHier,
        Command::BuildGraph => Stage::BuildGraph,
        Command::PretrainSsl => Stage::PretrainSsl,
        Command::Finetune => Stage::Finetune,
        Command::Explain => Stage::Explain,
        Command::Evaluate { checkpoint } => {
            let report = runner.evaluate(checkpoint.as_deref())?;
            return Ok(json!({"status": "ok", "stage": "evaluate", "out": out, "metrics": report}));
        }
        Command::Pipeline => {
            let summary = runner.run_pipeline()?;
            return Ok(json!({"status": "ok", "stage": "pipeline", "out": out, "metrics": summary.metrics}));
        }
    };
    runner.run_stage(stage)?;
    Ok(json!({"status": "ok", "stage": stage.name(), "out": out}))
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenSynth => "gen-synth",
            Command::EmbedHier => "embed-hier",
            Command::BuildGraph => "build-graph",
            Command::PretrainSsl => "pretrain-ssl",
            Command::Finetune => "finetune",
            Command::Evaluate { .. } => "evaluate",
            Command::Explain => "explain",
            Command::Pipeline => "pipeline",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.global.threads) {
        eprintln!("{}", json!({"status": "error", "error": "ConfigError", "message": format!("{e:#}")}));
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!(
                "{}",
                json!({"status": "error", "error": e.kind(), "message": e.to_string(), "command": cli.command.name()})
            );
            ExitCode::FAILURE
        }
    }
}
