use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use summrank::config::RunConfig;
use summrank::corpus::{parse_corpus, write_corpus, Cluster};
use summrank::ilp::{load_external_candidates, CandidateSummary, LengthUnit};
use summrank::par::Execution;
use summrank::pipeline::{self, Manifest, Models, SelectionRecord};
use summrank::reranker::{KlDirection, MaskPreset};
use summrank::synthetic::{generate_records, SyntheticConfig};

#[derive(Parser, Debug)]
#[command(
    name = "summrank",
    version,
    about = "ILP candidate summaries reranked with a pairwise ranker"
)]
struct Cli {
    #[command(flatten)]
    opts: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Run settings. Each one overrides the same key of `--config`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML or JSON file with run settings
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// words or bytes
    #[arg(long, global = true)]
    unit: Option<LengthUnit>,
    /// Comma-separated values in [0, 1]
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    lambdas: Option<Vec<f64>>,
    #[arg(long, global = true)]
    per_lambda: Option<usize>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Per-solve time limit; unlimited when absent
    #[arg(long, global = true)]
    timeout_ms: Option<u64>,
    /// Word vectors, one `word v1 v2 ...` per line
    #[arg(long, global = true, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// all, no-word, no-sentence, no-summary or no-embedding
    #[arg(long, global = true)]
    mask: Option<MaskPreset>,
    /// summary-document or document-summary
    #[arg(long, global = true)]
    kl_direction: Option<KlDirection>,
    #[arg(long, global = true)]
    seed_svr: Option<u64>,
    #[arg(long, global = true)]
    seed_ranker: Option<u64>,
    /// Run on one thread
    #[arg(long, global = true)]
    sequential: bool,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and normalize a corpus, and write per-set statistics
    Ingest {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
    },
    /// Train the importance regressors and the ranker
    Train {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
    },
    /// Generate, score and select one summary per set
    Summarize {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Directory written by `train`
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
    },
    /// Score a summarize run against the corpus references
    Evaluate {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// Directory written by `summarize` or `rerank-external`
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
    },
    /// Rerank summaries produced by other systems
    RerankExternal {
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        /// JSONL with set_id, system_id and text per line
        #[arg(long, value_name = "FILE")]
        candidates: PathBuf,
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
    },
    /// Retrain the ranker under every feature mask and compare
    Ablate {
        #[arg(long, value_name = "FILE")]
        train: PathBuf,
        #[arg(long, value_name = "FILE")]
        test: PathBuf,
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
    },
    /// Write a seeded synthetic corpus with references
    Synth {
        #[arg(long, default_value_t = 20)]
        clusters: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<summrank::Error> for Failure {
    fn from(e: summrank::Error) -> Self {
        match e {
            summrank::Error::Config(_) => Failure::Usage(e.to_string()),
            e if e.is_data_error() => Failure::Data(e.to_string()),
            e => Failure::Internal(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn load_config(opts: &Overrides) -> Outcome<RunConfig> {
    let mut cfg = match &opts.config {
        Some(path) => read_config_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = opts.budget {
        cfg.budget = v;
    }
    if let Some(v) = opts.unit {
        cfg.unit = v;
    }
    if let Some(v) = &opts.lambdas {
        cfg.lambdas = v.clone();
    }
    if let Some(v) = opts.per_lambda {
        cfg.per_lambda = v;
    }
    if let Some(v) = opts.beta {
        cfg.beta = v;
    }
    if opts.timeout_ms.is_some() {
        cfg.timeout_ms = opts.timeout_ms;
    }
    if opts.embeddings.is_some() {
        cfg.embeddings = opts.embeddings.clone();
    }
    if let Some(v) = opts.mask {
        cfg.mask = v;
    }
    if let Some(v) = opts.kl_direction {
        cfg.kl_direction = v;
    }
    if let Some(v) = opts.seed_svr {
        cfg.seed_svr = v;
    }
    if let Some(v) = opts.seed_ranker {
        cfg.seed_ranker = v;
    }
    if opts.sequential {
        cfg.execution = Execution::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_config_file(path: &Path) -> Outcome<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json =
        path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

fn out_dir(opts: &Overrides) -> Outcome<&Path> {
    opts.out
        .as_deref()
        .ok_or_else(|| Failure::Usage("--out is required for this command".into()))
}

fn corpus(path: &Path) -> Outcome<Vec<Cluster>> {
    Ok(parse_corpus(path)?)
}

fn set_ids(clusters: &[Cluster]) -> Vec<String> {
    clusters.iter().map(|c| c.docs.set_id.clone()).collect()
}

fn finish(dir: &Path, command: &str, cfg: &RunConfig, sets: Vec<String>, mut files: Vec<String>) -> Outcome {
    pipeline::write_json(&dir.join(pipeline::CONFIG_FILE), cfg)?;
    files.push(pipeline::CONFIG_FILE.into());
    let manifest = Manifest::new(command, cfg, sets, files);
    pipeline::write_json(&dir.join(pipeline::MANIFEST_FILE), &manifest)?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli.opts)?;
    let out = out_dir(&cli.opts)?;
    let emb = pipeline::load_embeddings(&cfg)?;
    let emb = emb.as_ref();
    match cli.command {
        Command::Ingest { corpus: path } => {
            let clusters = corpus(&path)?;
            pipeline::create_dir(out)?;
            write_corpus(out.join(pipeline::INGEST_FILE), &clusters)?;
            let stats = pipeline::ingest_stats(&clusters);
            pipeline::write_json(&out.join(pipeline::INGEST_STATS_FILE), &stats)?;
            let files = vec![pipeline::INGEST_FILE.into(), pipeline::INGEST_STATS_FILE.into()];
            finish(out, "ingest", &cfg, set_ids(&clusters), files)?;
            println!("ingested {} sets", clusters.len());
        }
        Command::Train { corpus: path } => {
            let clusters = corpus(&path)?;
            let trained = pipeline::train(&clusters, &cfg, emb)?;
            pipeline::create_dir(out)?;
            let files = trained.models.save(out)?;
            finish(out, "train", &cfg, set_ids(&clusters), files)?;
            println!(
                "trained on {} sets, {} pairs, training pairwise accuracy {:.4}",
                clusters.len(),
                trained.models.ranker.metadata.pairs,
                trained.models.ranker.metadata.training_accuracy
            );
        }
        Command::Summarize { corpus: path, models } => {
            let clusters = corpus(&path)?;
            let models = Models::load(&models)?;
            let output = pipeline::summarize(&clusters, &models, &cfg, emb)?;
            let files = pipeline::write_run(out, &output)?;
            finish(out, "summarize", &cfg, set_ids(&clusters), files)?;
            let candidates: usize = output.pools.iter().map(|p| p.candidates.len()).sum();
            println!(
                "selected {} summaries from {candidates} candidates",
                output.selections.len()
            );
        }
        Command::Evaluate { corpus: path, run } => {
            let clusters = corpus(&path)?;
            let pool: Vec<CandidateSummary> = pipeline::read_jsonl(&run.join(pipeline::POOL_FILE))?;
            let selections: Vec<SelectionRecord> = pipeline::read_jsonl(&run.join(pipeline::SELECTIONS_FILE))?;
            let report = pipeline::evaluate(&clusters, &pool, &selections, &cfg)?;
            let files = pipeline::write_report(out, &report)?;
            finish(out, "evaluate", &cfg, report.per_set.keys().cloned().collect(), files)?;
            print!("{}", report.render_table());
        }
        Command::RerankExternal {
            corpus: path,
            candidates,
            models,
        } => {
            let clusters = corpus(&path)?;
            let models = Models::load(&models)?;
            let known = set_ids(&clusters).into_iter().collect();
            let external = load_external_candidates(&candidates, &known)?;
            let output = pipeline::rerank_external(&clusters, external, &models.ranker, &cfg, emb)?;
            let mut files = pipeline::write_run(out, &output)?;
            let pool: Vec<CandidateSummary> = output.pools.iter().flat_map(|p| p.candidates.clone()).collect();
            let report = pipeline::evaluate(&clusters, &pool, &output.selections, &cfg)?;
            files.extend(pipeline::write_report(out, &report)?);
            finish(out, "rerank-external", &cfg, set_ids(&clusters), files)?;
            print!("{}", report.render_table());
        }
        Command::Ablate { train, test, models } => {
            let train = corpus(&train)?;
            let test = corpus(&test)?;
            let models = Models::load(&models)?;
            let train_pools = pipeline::candidate_pools(&train, &models.word, &models.sentence, &cfg, emb)?;
            let train_pools = pipeline::training_pools(&train, &train_pools, &cfg)?;
            let test_pools = pipeline::candidate_pools(&test, &models.word, &models.sentence, &cfg, emb)?;
            let rows = pipeline::ablate(&train_pools, &test, &test_pools, &cfg)?;
            pipeline::create_dir(out)?;
            pipeline::write_json(&out.join("ablation.json"), &rows)?;
            let table = summrank::report::render_ablation(&rows);
            let path = out.join("ablation.txt");
            std::fs::write(&path, &table).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            let files = vec!["ablation.json".into(), "ablation.txt".into()];
            finish(out, "ablate", &cfg, set_ids(&test), files)?;
            print!("{table}");
        }
        Command::Synth { clusters, seed } => {
            let records = generate_records(&SyntheticConfig {
                clusters,
                seed,
                ..Default::default()
            });
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                pipeline::create_dir(parent)?;
            }
            pipeline::write_jsonl(out, &records)?;
            println!("wrote {} synthetic sets to {}", records.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(failure)) => {
            eprintln!("summrank: {failure}");
            ExitCode::from(failure.code())
        }
        Err(_) => ExitCode::from(3),
    }
}
