//! The `claimpipe` command line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use claimpipe_core::eval::{
    evaluate, generate_corpus, recount, train_on_corpus, Corpus, EvalRun, GeneratorConfig, TrainOptions,
};
use claimpipe_core::pipeline::{Pipeline, PipelineConfig, PipelineError};
use claimpipe_core::preprocess::RawDocument;
use claimpipe_server::AppState;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "claimpipe", version, about = "Claim document understanding pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides `service.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Process documents and print one JSON result per line.
    Process {
        #[command(flatten)]
        config: ConfigArg,
        /// Treat all paths as the documents of a single claim.
        #[arg(long)]
        bundle: bool,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Fit the text classifier on a generated corpus.
    Train(TrainArgs),
    /// Score the pipeline on a generated corpus.
    Eval(EvalArgs),
    /// Synthetic corpus tools.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArg {
    /// Pipeline configuration (TOML). `CLAIMPIPE_*` variables override it.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    pub fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        cfg.apply_env()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Also write the held-out evaluation as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Where to write the metrics report (JSON).
    #[arg(long)]
    pub report: PathBuf,
    /// Text classifier model; overrides `classify.model`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Claim store for the run; a temporary directory when unset.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Write a seeded synthetic corpus with its fixtures and gold labels.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML); flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        documents: Option<usize>,
        #[arg(long)]
        error_rate: Option<f64>,
        #[arg(long)]
        unmappable_rate: Option<f64>,
    },
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve { config, bind } => serve(&config, bind),
        Command::Process { config, bundle, paths } => process(&config, bundle, &paths),
        Command::Train(args) => train(&args),
        Command::Eval(args) => eval(&args).map(|_| ExitCode::SUCCESS),
        Command::Corpus { command: CorpusCommand::Generate { out, config, seed, documents, error_rate, unmappable_rate } } => {
            let mut cfg: GeneratorConfig = match config {
                Some(p) => toml::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => GeneratorConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.documents = documents.unwrap_or(cfg.documents);
            cfg.error_rate = error_rate.unwrap_or(cfg.error_rate);
            cfg.unmappable_title_rate = unmappable_rate.unwrap_or(cfg.unmappable_title_rate);
            generate_corpus(&out, cfg)?;
            let corpus = Corpus::load(&out)?;
            println!("{}", json!({"out": out, "documents": corpus.documents.len(), "pages": corpus.page_count()}));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn serve(config: &ConfigArg, bind: Option<String>) -> Result<ExitCode> {
    let mut cfg = config.load()?;
    if let Some(b) = bind {
        cfg.service.bind = b;
    }
    let state = Arc::new(AppState::from_config(&cfg)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(claimpipe_server::serve(state, &cfg.service.bind))?;
    Ok(ExitCode::SUCCESS)
}

fn read_document(path: &Path) -> Result<RawDocument, serde_json::Value> {
    let bytes = std::fs::read(path).map_err(|e| json!({"code": "io_error", "message": format!("{}: {e}", path.display())}))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    RawDocument::new(name, bytes).map_err(|e| json!({"code": e.code(), "message": format!("{}: {e}", path.display())}))
}

fn process(config: &ConfigArg, bundle: bool, paths: &[PathBuf]) -> Result<ExitCode> {
    let pipeline = Pipeline::from_config(&config.load()?)?;
    let groups: Vec<Vec<&PathBuf>> = if bundle { vec![paths.iter().collect()] } else { paths.iter().map(|p| vec![p]).collect() };
    let mut out = std::io::stdout().lock();
    let mut failed = false;
    for group in groups {
        let outcome = group
            .iter()
            .map(|p| read_document(p))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|docs| pipeline.process_bundle(docs).map_err(|e| pipeline_error(&e)));
        let line = match outcome {
            Ok(r) => serde_json::to_string(&r)?,
            Err(error) => {
                failed = true;
                json!({"files": group, "error": error}).to_string()
            }
        };
        writeln!(out, "{line}")?;
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn pipeline_error(e: &PipelineError) -> serde_json::Value {
    let mut v = json!({"code": e.code(), "message": e.to_string()});
    if let PipelineError::Preprocess { claim_id, .. } = e {
        v["claim_id"] = json!(claim_id);
    }
    v
}

fn train(args: &TrainArgs) -> Result<ExitCode> {
    let corpus = Corpus::load(&args.corpus)?;
    let mut opts = TrainOptions { seed: args.seed, train_fraction: args.train_fraction, ..Default::default() };
    let hp = &mut opts.hyperparams;
    hp.l2_lambda = args.lambda.unwrap_or(hp.l2_lambda);
    hp.learning_rate = args.learning_rate.unwrap_or(hp.learning_rate);
    hp.max_iters = args.max_iters.unwrap_or(hp.max_iters);
    let outcome = train_on_corpus(&corpus, &opts)?;
    outcome.classifier.save(&args.out)?;
    let summary = json!({
        "model": args.out,
        "options": opts,
        "train_pages": outcome.train_pages,
        "iterations": outcome.report.iterations,
        "converged": outcome.report.converged,
        "final_loss": outcome.report.losses.last(),
        "heldout": outcome.heldout,
    });
    if let Some(p) = &args.report {
        std::fs::write(p, serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

/// Runs the evaluation described by `args`, writes the report and checks it
/// against an independent recount of the persisted results.
pub fn eval(args: &EvalArgs) -> Result<EvalRun> {
    let corpus = Corpus::load(&args.corpus)?;
    let mut cfg = args.config.load()?;
    let root = corpus.root.clone();
    if !cfg.fixtures.roots.contains(&root) {
        cfg.fixtures.roots.push(root);
    }
    if let Some(m) = &args.model {
        cfg.classify.model = Some(m.clone());
    }
    let _scratch;
    cfg.service.store_dir = match &args.store {
        Some(s) => s.clone(),
        None => {
            let dir = tempfile::tempdir()?;
            let path = dir.path().to_path_buf();
            _scratch = dir;
            path
        }
    };
    let pipeline = Pipeline::from_config(&cfg)?;
    let run = evaluate(&corpus, &pipeline)?;
    let again = recount(&corpus, pipeline.store().as_ref(), &run.runs, pipeline.registry())?;
    if again != run.report.tally {
        bail!("recount of persisted results disagrees with the evaluation pass");
    }
    std::fs::write(&args.report, run.report.to_json_pretty() + "\n").with_context(|| format!("writing {}", args.report.display()))?;
    println!("{}", run.report.render_table());
    Ok(run)
}
