use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use solvekit::memory::{IngestRecord, MemoryStore, RetrievalConfig};
use solvekit::pipeline::{
    evaluate_suite, hash_dir, load_suite, replay_run, Pipeline, PipelineError, RunConfig,
};
use solvekit::providers::{EmbeddingProvider, HashEmbedder};

// Exit codes: 0 success, 2 validation failed, 3 stage error, 4 config error.
const EXIT_VALIDATION_FAILED: u8 = 2;
const EXIT_STAGE_ERROR: u8 = 3;
const EXIT_CONFIG_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "solvekit", about = "Natural-language decision problems to validated optimization solutions", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one problem statement.
    Solve {
        /// Path to a file holding the problem statement.
        #[arg(long)]
        problem: PathBuf,
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Directory for run artifacts.
        #[arg(long)]
        run_dir: PathBuf,
        /// Resume from the last persisted stage of an earlier run.
        #[arg(long)]
        resume: bool,
    },
    /// Score a JSON-lines benchmark suite.
    Evaluate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Instance fan-out; defaults to the configured batch size.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Embed and index a corpus of solved examples into a memory store.
    Ingest {
        /// JSON-lines corpus: description/formulation/code/problem_type.
        #[arg(long)]
        corpus: PathBuf,
        /// Store file (created if missing).
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Retrieve examples for a query with diversity-aware selection.
    Retrieve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        config: PathBuf,
        /// Number of examples to select.
        #[arg(long)]
        k: Option<usize>,
        /// Relevance/diversity trade-off in [0, 1].
        #[arg(long)]
        lambda: Option<f64>,
        /// Candidate pool size.
        #[arg(long)]
        pool: Option<usize>,
        /// Minimum cosine similarity admitted to the pool (may be negative).
        #[arg(long, allow_hyphen_values = true)]
        threshold: Option<f64>,
    },
    /// Re-execute a persisted run from its provider log and compare
    /// artifacts byte-for-byte.
    Replay {
        /// Source run directory.
        #[arg(long)]
        run: PathBuf,
        /// Output directory for the replayed run.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Config(_) => ExitCode::from(EXIT_CONFIG_ERROR),
                _ => ExitCode::from(EXIT_STAGE_ERROR),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Solve { problem, config, run_dir, resume } => {
            let cfg = RunConfig::load(&config)?;
            let problem_text = std::fs::read_to_string(&problem).map_err(|source| {
                PipelineError::Io { path: problem.display().to_string(), source }
            })?;
            let mut pipeline = Pipeline::create(cfg, &run_dir, resume)?;
            let bundle = pipeline.solve(&problem_text)?;
            println!("{}", serde_json::to_string_pretty(&bundle).expect("bundle serializes"));
            if let Some(stage) = &bundle.failed_stage {
                eprintln!("failed at stage: {stage}");
                return Ok(ExitCode::from(EXIT_STAGE_ERROR));
            }
            if !bundle.succeeded() {
                eprintln!("completed, but validation did not pass");
                return Ok(ExitCode::from(EXIT_VALIDATION_FAILED));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { suite, config, out, parallelism } => {
            let cfg = RunConfig::load(&config)?;
            let records = load_suite(&suite)?;
            let parallelism = parallelism.unwrap_or(cfg.hyperparameters.batch_size);
            let started = std::time::Instant::now();
            let report = evaluate_suite(&records, &cfg, parallelism)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            eprintln!(
                "evaluated {} instances in {:.3}s",
                report.num_instances,
                started.elapsed().as_secs_f64()
            );
            print!("{}", report.to_table());
            if let Some(out) = out {
                let mut text =
                    serde_json::to_string_pretty(&report).expect("report serializes");
                text.push('\n');
                std::fs::write(&out, text).map_err(|source| PipelineError::Io {
                    path: out.display().to_string(),
                    source,
                })?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest { corpus, store, config } => {
            let cfg = RunConfig::load(&config)?;
            let embedder =
                HashEmbedder::new(cfg.providers.embedder_seed, cfg.providers.embedding_dim);
            let mut memory = if store.exists() {
                MemoryStore::load(&store).map_err(|e| PipelineError::Config(e.to_string()))?
            } else {
                MemoryStore::new(embedder.id(), embedder.dimension())
            };
            memory
                .check_embedder(&embedder)
                .map_err(|e| PipelineError::Config(e.to_string()))?;

            let text = std::fs::read_to_string(&corpus).map_err(|source| {
                PipelineError::Io { path: corpus.display().to_string(), source }
            })?;
            let mut records = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: IngestRecord = serde_json::from_str(line).map_err(|e| {
                    PipelineError::Config(format!("{}:{}: {e}", corpus.display(), lineno + 1))
                })?;
                records.push(record);
            }
            let added = memory
                .ingest(&records, &embedder)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            memory.save(&store).map_err(|e| PipelineError::Config(e.to_string()))?;
            println!("ingested {added} new entries ({} total)", memory.len());
            println!("per-type histogram:");
            for (problem_type, count) in memory.type_histogram() {
                println!("  {problem_type:<22} {count}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Retrieve { store, query, config, k, lambda, pool, threshold } => {
            let cfg = RunConfig::load(&config)?;
            let memory =
                MemoryStore::load(&store).map_err(|e| PipelineError::Config(e.to_string()))?;
            let embedder =
                HashEmbedder::new(cfg.providers.embedder_seed, cfg.providers.embedding_dim);
            memory
                .check_embedder(&embedder)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            let defaults = cfg.retrieval_config();
            let retrieval_cfg = RetrievalConfig {
                pool_size: pool.unwrap_or(defaults.pool_size),
                select_k: k.unwrap_or(defaults.select_k),
                lambda: lambda.unwrap_or(defaults.lambda),
                similarity_threshold: threshold.unwrap_or(defaults.similarity_threshold),
            };
            let query_embedding = embedder
                .embed(&[query])
                .map_err(|e| PipelineError::Config(e.to_string()))?
                .remove(0);
            let pool = memory
                .retrieve_pool(&query_embedding, &retrieval_cfg)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            if pool.is_empty() {
                println!("no entries above the similarity threshold");
                return Ok(ExitCode::SUCCESS);
            }
            let query_sim: std::collections::BTreeMap<String, f64> =
                pool.iter().map(|(e, s)| (e.id.clone(), *s)).collect();
            let entries: Vec<_> = pool.iter().map(|(e, _)| e.clone()).collect();
            let selected = MemoryStore::diversity_select(&query_sim, &entries, &retrieval_cfg)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            for (i, entry) in selected.iter().enumerate() {
                println!(
                    "{}. {} (similarity {:.4}, {}): {}",
                    i + 1,
                    entry.id,
                    query_sim[&entry.id],
                    entry.problem_type,
                    entry.description.lines().next().unwrap_or("")
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { run, out } => {
            let outcome = replay_run(&run, &out)?;
            if outcome.identical {
                let files = hash_dir(&out)?.len();
                println!("replay identical: {files} artifacts match byte-for-byte");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("replay mismatch");
                for path in &outcome.mismatched {
                    eprintln!("  differs: {path}");
                }
                for path in &outcome.missing {
                    eprintln!("  missing in replay: {path}");
                }
                for path in &outcome.extra {
                    eprintln!("  extra in replay: {path}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}
