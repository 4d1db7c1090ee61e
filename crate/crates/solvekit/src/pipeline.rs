//! End-to-end orchestration: extract → MBR select → recommend → gate →
//! optimize ensemble → consensus → validate, with every intermediate
//! artifact persisted under a run directory and full replay from the
//! recorded provider log.
//!
//! Run directory layout (fixed):
//!
//! ```text
//! run/
//!   config.json              resolved run configuration
//!   problem.txt              the problem statement
//!   providers.jsonl          provider call log (replay source)
//!   examples/                retrieved memory entries, one file each
//!   extraction/              candidates, MBR scores, judge verdict, selection
//!   recommendation/          ranked solver recommendations
//!   optimizer_runs/          per-iteration variant runs + ensemble reports
//!   validation/              simulator gate + validation results
//!   bundle.json              final stage summary
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusConfig, ConsensusResult};
use crate::evaluation::{
    run_suite, BenchmarkInstance, EvalError, PipelineOutcome, SuiteReport,
};
use crate::mbr::{
    consistency_metrics, default_component_weights, judge_rerank, select_top_q, utilities,
    ComponentKind, ExtractionCandidate, JudgeSelection, MbrConfig,
};
use crate::memory::{MemoryEntry, MemoryStore, RetrievalConfig};
use crate::model::{
    parse_decision_process, serialize_decision_process, DecisionProcess, SolverStatus, VarType,
};
use crate::providers::{
    complete_with_retry, EmbeddingProvider, HashEmbedder, LlmProvider, ProviderError,
    ProviderLogWriter, ProviderRequest, RecordingEmbedder, RecordingLlm, ReplayEmbedder,
    ReplayLlm, ReplayLog, RequestKind, RetryPolicy, ScriptedEnsembleDriver, ScriptedLlm,
    ToyConfig, VariableDomain,
};
use crate::recommend::{recommend, SolverRecommendation};
use crate::validation::{
    refinement_loop, simulator_gate, ExprSimulator, GateReport, Simulator, SimulatorCheck,
    ValidationConfig, ValidationReport,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{stage} stage failed: {message}")]
    Stage { stage: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Table of pipeline hyperparameters. Defaults are the standard operating
/// point: n=5 extraction candidates, top-q 3, pool 9, k=3, lambda 0.5,
/// similarity threshold 0.6, component weights 0.6/0.2/0.1/0.1, T=3
/// variants, 3 validation loops, batch size 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParameters {
    pub num_candidates: usize,
    pub top_q: usize,
    pub pool_size: usize,
    pub select_k: usize,
    pub lambda: f64,
    pub similarity_threshold: f64,
    pub component_weights: BTreeMap<ComponentKind, f64>,
    pub num_variants: usize,
    pub max_validation_loops: usize,
    pub batch_size: usize,
}

impl Default for HyperParameters {
    fn default() -> Self {
        HyperParameters {
            num_candidates: 5,
            top_q: 3,
            pool_size: 9,
            select_k: 3,
            lambda: 0.5,
            similarity_threshold: 0.6,
            component_weights: default_component_weights(),
            num_variants: 3,
            max_validation_loops: 3,
            batch_size: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Hash embedder only; any LLM call fails as unavailable.
    Mock,
    /// Hash embedder plus scripted LLM responses from a file.
    #[default]
    Scripted,
    /// HTTP providers (requires the `http-providers` build feature).
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub script: Option<PathBuf>,
    pub embedder_seed: u64,
    pub embedding_dim: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub live: Option<LiveSettings>,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            kind: ProviderKind::Scripted,
            script: None,
            embedder_seed: 42,
            embedding_dim: 32,
            retries: 2,
            backoff_ms: 0,
            live: None,
        }
    }
}

/// Live-provider endpoints. The API key is read from the named environment
/// variable at provider construction, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LiveSettings {
    pub llm_endpoint: String,
    pub llm_model: String,
    pub embed_endpoint: String,
    pub embed_model: String,
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySettings {
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub domain: Option<PathBuf>,
    pub available_solvers: Vec<String>,
    pub max_variables: Option<usize>,
    pub max_grid_points: Option<u64>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            domain: None,
            available_solvers: vec!["toy-bruteforce".to_string()],
            max_variables: None,
            max_grid_points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    pub rtol: f64,
    pub atol: f64,
    pub gate_checks: Option<PathBuf>,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        ValidationSettings { rtol: 1e-6, atol: 1e-9, gate_checks: None }
    }
}

/// The full run configuration. Loaded from TOML; every field defaults so a
/// minimal config works. Relative paths resolve against the config file's
/// directory. The run directory itself is a CLI argument, never part of
/// the config, so replayed runs hash identically from any location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub hyperparameters: HyperParameters,
    pub providers: ProviderSettings,
    pub memory: MemorySettings,
    pub optimizer: OptimizerSettings,
    pub validation: ValidationSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        let base = base.canonicalize().unwrap_or(base);
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Make every configured path absolute relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&path);
                }
            }
        };
        resolve(&mut self.providers.script);
        resolve(&mut self.memory.store);
        resolve(&mut self.optimizer.domain);
        resolve(&mut self.validation.gate_checks);
    }

    /// Cross-check every field against its module's invariants.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let h = &self.hyperparameters;
        self.mbr_config().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.retrieval_config().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.validation_config().validate().map_err(PipelineError::Config)?;
        self.consensus_config(crate::model::Direction::Minimize)
            .validate()
            .map_err(PipelineError::Config)?;
        if h.batch_size == 0 {
            return Err(PipelineError::Config("batch_size must be positive".into()));
        }
        if self.providers.embedding_dim == 0 {
            return Err(PipelineError::Config("embedding_dim must be positive".into()));
        }
        if self.providers.kind == ProviderKind::Scripted && self.providers.script.is_none() {
            return Err(PipelineError::Config(
                "providers.kind = \"scripted\" requires providers.script".into(),
            ));
        }
        if self.optimizer.available_solvers.is_empty() {
            return Err(PipelineError::Config("available_solvers must not be empty".into()));
        }
        Ok(())
    }

    pub fn mbr_config(&self) -> MbrConfig {
        MbrConfig {
            num_candidates: self.hyperparameters.num_candidates,
            top_q: self.hyperparameters.top_q,
            weights: self.hyperparameters.component_weights.clone(),
        }
    }

    pub fn retrieval_config(&self) -> RetrievalConfig {
        RetrievalConfig {
            pool_size: self.hyperparameters.pool_size,
            select_k: self.hyperparameters.select_k,
            lambda: self.hyperparameters.lambda,
            similarity_threshold: self.hyperparameters.similarity_threshold,
        }
    }

    pub fn validation_config(&self) -> ValidationConfig {
        ValidationConfig {
            rtol: self.validation.rtol,
            atol: self.validation.atol,
            max_iterations: self.hyperparameters.max_validation_loops,
        }
    }

    pub fn consensus_config(&self, direction: crate::model::Direction) -> ConsensusConfig {
        ConsensusConfig {
            num_variants: self.hyperparameters.num_variants,
            rtol: self.validation.rtol,
            atol: self.validation.atol,
            direction,
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.providers.retries, backoff_ms: self.providers.backoff_ms }
    }

    pub fn toy_config(&self) -> ToyConfig {
        let defaults = ToyConfig::default();
        ToyConfig {
            max_variables: self.optimizer.max_variables.unwrap_or(defaults.max_variables),
            max_grid_points: self.optimizer.max_grid_points.unwrap_or(defaults.max_grid_points),
        }
    }
}

// ---------------------------------------------------------------------------
// Bundle and stage artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievedExample {
    pub id: String,
    pub similarity: f64,
    pub problem_type: crate::memory::ProblemType,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct RetrievalArtifact {
    retrieved: Vec<RetrievedExample>,
    formulations: Vec<String>,
    codes: Vec<String>,
    descriptions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CandidateRecord {
    id: u32,
    status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MbrScoreRow {
    id: u32,
    score: f64,
    status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MbrScoresArtifact {
    total_candidates: usize,
    scores: Vec<MbrScoreRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConsistencyArtifact {
    consistency: f64,
    stability: f64,
}

/// Final result bundle: stage ledger plus the consensus and validation
/// outcomes. Stage failures still produce a bundle, with the failing stage
/// named.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveBundle {
    pub run_id: String,
    pub stages: Vec<StageStatus>,
    pub retrieved_examples: Vec<RetrievedExample>,
    pub selected_candidate_id: Option<u32>,
    pub recommendations: Vec<SolverRecommendation>,
    pub gate_passed: Option<bool>,
    pub consensus: Option<ConsensusResult>,
    pub validation: Option<ValidationReport>,
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SolveBundle {
    fn new(run_id: String) -> Self {
        SolveBundle {
            run_id,
            stages: Vec::new(),
            retrieved_examples: Vec::new(),
            selected_candidate_id: None,
            recommendations: Vec::new(),
            gate_passed: None,
            consensus: None,
            validation: None,
            failed_stage: None,
            error: None,
        }
    }

    fn stage_ok(&mut self, name: &str) {
        self.stages.push(StageStatus { name: name.into(), status: "ok".into() });
    }

    fn stage_failed(&mut self, name: &str, error: String) {
        self.stages.push(StageStatus { name: name.into(), status: "failed".into() });
        self.failed_stage = Some(name.into());
        self.error = Some(error);
    }

    /// True when the run completed and validation passed.
    pub fn succeeded(&self) -> bool {
        self.failed_stage.is_none()
            && self.validation.as_ref().map(|v| v.passed).unwrap_or(false)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("bad artifact {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

pub struct Pipeline {
    cfg: RunConfig,
    run_dir: PathBuf,
    resume: bool,
    llm: Box<dyn LlmProvider>,
    embedder: Box<dyn EmbeddingProvider>,
}

impl Pipeline {
    /// Build a pipeline with providers from the config, wrapped in
    /// recorders that log every call to `run_dir/providers.jsonl`.
    pub fn create(cfg: RunConfig, run_dir: &Path, resume: bool) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let (llm, embedder) = build_providers(&cfg)?;
        Self::with_providers(cfg, run_dir, resume, llm, embedder)
    }

    /// Build a pipeline that replays a recorded provider log.
    pub fn create_replaying(
        cfg: RunConfig,
        run_dir: &Path,
        log: Rc<ReplayLog>,
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let llm = Box::new(ReplayLlm::new(Rc::clone(&log)));
        let embedder = Box::new(ReplayEmbedder::new(log));
        Self::with_providers(cfg, run_dir, false, llm, embedder)
    }

    fn with_providers(
        cfg: RunConfig,
        run_dir: &Path,
        resume: bool,
        llm: Box<dyn LlmProvider>,
        embedder: Box<dyn EmbeddingProvider>,
    ) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
        let log_path = run_dir.join("providers.jsonl");
        let log = if resume && log_path.exists() {
            // Appending after resume keeps earlier records; replay lookup
            // is keyed, so repeats are harmless.
            ProviderLogWriter::append_to(&log_path).map_err(io_err(&log_path))?
        } else {
            ProviderLogWriter::create(&log_path, &embedder.id(), embedder.dimension())
                .map_err(io_err(&log_path))?
        };
        Ok(Pipeline {
            cfg,
            run_dir: run_dir.to_path_buf(),
            resume,
            llm: Box::new(RecordingLlm::new(llm, Rc::clone(&log))),
            embedder: Box::new(RecordingEmbedder::new(embedder, log)),
        })
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    fn artifact(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    /// Load a previously persisted stage artifact when resuming, otherwise
    /// compute and persist it.
    fn stage_artifact<T: Serialize + DeserializeOwned>(
        &self,
        rel: &str,
        compute: impl FnOnce() -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        let path = self.artifact(rel);
        if self.resume && path.exists() {
            log::info!("resume: loading {rel}");
            return read_json(&path);
        }
        let value = compute()?;
        write_json(&path, &value)?;
        Ok(value)
    }

    /// Execute the full stage graph. Stage failures produce a partial
    /// bundle naming the failing stage; only setup-level problems error.
    pub fn solve(&mut self, problem: &str) -> Result<SolveBundle, PipelineError> {
        let run_id = run_id_for(problem);
        let mut bundle = SolveBundle::new(run_id.clone());

        write_text(&self.artifact("problem.txt"), problem)?;
        write_json(&self.artifact("config.json"), &self.cfg)?;
        for dir in ["examples", "extraction", "recommendation", "optimizer_runs", "validation"] {
            let path = self.artifact(dir);
            std::fs::create_dir_all(&path).map_err(io_err(&path))?;
        }

        // Retrieval (optional; zero-shot when no store is configured).
        let retrieval = match self.stage_retrieval(problem) {
            Ok(artifact) => {
                bundle.retrieved_examples = artifact.retrieved.clone();
                bundle.stage_ok("retrieval");
                artifact
            }
            Err(e) => {
                bundle.stage_failed("retrieval", e.to_string());
                self.persist_bundle(&bundle)?;
                return Ok(bundle);
            }
        };

        // Extraction + MBR + judge.
        let process = match self.stage_extraction(problem, &retrieval, &mut bundle) {
            Ok(process) => {
                bundle.stage_ok("extraction");
                process
            }
            Err(e) => {
                bundle.stage_failed("extraction", e.to_string());
                self.persist_bundle(&bundle)?;
                return Ok(bundle);
            }
        };

        // Solver recommendation.
        let recommendations = match self.stage_recommendation(&process) {
            Ok(recs) => {
                bundle.recommendations = recs.clone();
                bundle.stage_ok("recommendation");
                recs
            }
            Err(e) => {
                bundle.stage_failed("recommendation", e.to_string());
                self.persist_bundle(&bundle)?;
                return Ok(bundle);
            }
        };

        let backend = recommendations
            .iter()
            .find(|r| r.solver == "toy-bruteforce")
            .map(|r| r.solver.clone());
        let Some(_backend) = backend else {
            bundle.stage_failed(
                "recommendation",
                "no recommended solver has a registered driver (need toy-bruteforce)".into(),
            );
            self.persist_bundle(&bundle)?;
            return Ok(bundle);
        };

        // Simulator gate.
        let simulator = match ExprSimulator::new(&process) {
            Ok(sim) => sim,
            Err(e) => {
                bundle.stage_failed("simulator-gate", e.to_string());
                self.persist_bundle(&bundle)?;
                return Ok(bundle);
            }
        };
        match self.stage_gate(&simulator) {
            Ok(report) => {
                bundle.gate_passed = Some(report.passed);
                if !report.passed {
                    bundle.stage_failed(
                        "simulator-gate",
                        "simulator failed its consistency checks; refinement blocked".into(),
                    );
                    self.persist_bundle(&bundle)?;
                    return Ok(bundle);
                }
                bundle.stage_ok("simulator-gate");
            }
            Err(e) => {
                bundle.stage_failed("simulator-gate", e.to_string());
                self.persist_bundle(&bundle)?;
                return Ok(bundle);
            }
        }

        // Optimize + validate.
        match self.stage_optimize(&process, &simulator) {
            Ok((consensus, validation)) => {
                bundle.consensus = consensus;
                bundle.validation = Some(validation);
                bundle.stage_ok("optimize-validate");
            }
            Err(e) => {
                bundle.stage_failed("optimize-validate", e.to_string());
                self.persist_bundle(&bundle)?;
                return Ok(bundle);
            }
        }

        self.persist_bundle(&bundle)?;
        Ok(bundle)
    }

    fn persist_bundle(&self, bundle: &SolveBundle) -> Result<(), PipelineError> {
        write_json(&self.artifact("bundle.json"), bundle)
    }

    fn stage_retrieval(&self, problem: &str) -> Result<RetrievalArtifact, PipelineError> {
        let Some(store_path) = self.cfg.memory.store.clone() else {
            return Ok(RetrievalArtifact::default());
        };
        self.stage_artifact("examples/retrieved.json", || {
            let store = MemoryStore::load(&store_path)
                .map_err(|e| stage_err("retrieval", e))?;
            store
                .check_embedder(self.embedder.as_ref())
                .map_err(|e| stage_err("retrieval", e))?;
            let query = self
                .embedder
                .embed(&[problem.to_string()])
                .map_err(|e| stage_err("retrieval", e))?
                .remove(0);
            let retrieval_cfg = self.cfg.retrieval_config();
            let pool = store
                .retrieve_pool(&query, &retrieval_cfg)
                .map_err(|e| stage_err("retrieval", e))?;
            if pool.is_empty() {
                log::info!("no memory entries above threshold; continuing zero-shot");
                return Ok(RetrievalArtifact::default());
            }
            let query_sim: BTreeMap<String, f64> =
                pool.iter().map(|(e, s)| (e.id.clone(), *s)).collect();
            let entries: Vec<MemoryEntry> = pool.iter().map(|(e, _)| e.clone()).collect();
            let selected = MemoryStore::diversity_select(&query_sim, &entries, &retrieval_cfg)
                .map_err(|e| stage_err("retrieval", e))?;

            let mut artifact = RetrievalArtifact::default();
            for (i, entry) in selected.iter().enumerate() {
                let similarity = query_sim[&entry.id];
                artifact.retrieved.push(RetrievedExample {
                    id: entry.id.clone(),
                    similarity,
                    problem_type: entry.problem_type,
                });
                artifact.formulations.push(entry.formulation.clone());
                artifact.codes.push(entry.code.clone());
                artifact.descriptions.push(entry.description.clone());
                let file = format!(
                    "\"\"\"\nTraining Example {} | Similarity: {:.3} | Type: {}\n{}\n\"\"\"\n\n{}\n",
                    i + 1,
                    similarity,
                    entry.problem_type,
                    entry.description,
                    entry.code
                );
                write_text(&self.artifact(&format!("examples/example_{}.py", i + 1)), &file)?;
            }
            Ok(artifact)
        })
    }

    fn stage_extraction(
        &self,
        problem: &str,
        retrieval: &RetrievalArtifact,
        bundle: &mut SolveBundle,
    ) -> Result<DecisionProcess, PipelineError> {
        let selected_path = self.artifact("extraction/selected.json");
        if self.resume && selected_path.exists() {
            log::info!("resume: loading extraction/selected.json");
            let text = std::fs::read_to_string(&selected_path).map_err(io_err(&selected_path))?;
            let judge: Option<JudgeSelection> =
                read_json(&self.artifact("extraction/judge_verdict.json")).ok();
            bundle.selected_candidate_id = judge.map(|j| j.selected_id);
            return parse_decision_process(&text).map_err(|e| stage_err("extraction", e));
        }

        if problem.trim().is_empty() {
            return Err(stage_err("extraction", "problem statement is empty"));
        }
        let n = self.cfg.hyperparameters.num_candidates;
        let policy = self.cfg.retry_policy();
        let mut candidates = Vec::new();
        let mut records = Vec::new();
        for i in 1..=n {
            let prompt = extraction_prompt(problem, &retrieval.formulations, i, n);
            let request = ProviderRequest::new(RequestKind::Extract, prompt);
            let response = complete_with_retry(self.llm.as_ref(), &request, &policy)
                .map_err(|e| stage_err("extraction", e))?;
            write_text(
                &self.artifact(&format!("extraction/candidate_{i}_response.txt")),
                &response,
            )?;
            match parse_decision_process(response.trim()) {
                Ok(process) => {
                    write_text(
                        &self.artifact(&format!("extraction/candidate_{i}.json")),
                        &(serialize_decision_process(&process) + "\n"),
                    )?;
                    let candidate =
                        ExtractionCandidate::from_process(i as u32, process, self.embedder.as_ref())
                            .map_err(|e| stage_err("extraction", e))?;
                    candidates.push(candidate);
                    records.push(CandidateRecord { id: i as u32, status: "parsed".into(), error: None });
                }
                Err(e) => {
                    log::warn!("candidate {i} rejected: {e}");
                    records.push(CandidateRecord {
                        id: i as u32,
                        status: "rejected".into(),
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        write_json(&self.artifact("extraction/candidates.json"), &records)?;
        if candidates.is_empty() {
            return Err(stage_err("extraction", "no extraction candidate parsed"));
        }

        let chosen = if candidates.len() == 1 {
            bundle.selected_candidate_id = Some(candidates[0].id);
            write_json(
                &self.artifact("extraction/judge_verdict.json"),
                &JudgeSelection {
                    selected_id: candidates[0].id,
                    mode: crate::mbr::JudgeMode::SingleCandidate,
                },
            )?;
            candidates.remove(0)
        } else {
            let mbr_cfg = MbrConfig {
                num_candidates: candidates.len().max(2),
                top_q: self.cfg.hyperparameters.top_q.min(candidates.len()),
                weights: self.cfg.hyperparameters.component_weights.clone(),
            };
            let scored = utilities(&candidates, &mbr_cfg).map_err(|e| stage_err("extraction", e))?;
            let mut rows: Vec<MbrScoreRow> = scored
                .iter()
                .map(|(id, score)| MbrScoreRow { id: *id, score: *score, status: String::new() })
                .collect();
            rows.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
            for (rank, row) in rows.iter_mut().enumerate() {
                row.status = if rank < mbr_cfg.top_q { "PASSED" } else { "FILTERED" }.to_string();
            }
            write_json(
                &self.artifact("extraction/mbr_scores.json"),
                &MbrScoresArtifact { total_candidates: candidates.len(), scores: rows },
            )?;

            let (consistency, stability) =
                consistency_metrics(&candidates).map_err(|e| stage_err("extraction", e))?;
            write_json(
                &self.artifact("extraction/consistency.json"),
                &ConsistencyArtifact { consistency, stability },
            )?;

            let top = select_top_q(&candidates, &mbr_cfg).map_err(|e| stage_err("extraction", e))?;
            let (chosen, selection) = judge_rerank(&top, problem, self.llm.as_ref(), &mbr_cfg)
                .map_err(|e| stage_err("extraction", e))?;
            bundle.selected_candidate_id = Some(selection.selected_id);
            write_json(&self.artifact("extraction/judge_verdict.json"), &selection)?;
            chosen
        };

        write_text(
            &selected_path,
            &(serialize_decision_process(&chosen.process) + "\n"),
        )?;
        Ok(chosen.process)
    }

    fn stage_recommendation(
        &self,
        process: &DecisionProcess,
    ) -> Result<Vec<SolverRecommendation>, PipelineError> {
        self.stage_artifact("recommendation/recommendations.json", || {
            recommend(process, &self.cfg.optimizer.available_solvers, self.llm.as_ref())
                .map_err(|e| stage_err("recommendation", e))
        })
    }

    fn stage_gate(&self, simulator: &dyn Simulator) -> Result<GateReport, PipelineError> {
        self.stage_artifact("validation/simulator_gate.json", || {
            let checks: Vec<SimulatorCheck> = match &self.cfg.validation.gate_checks {
                Some(path) => read_json::<GateChecksFile>(path)?.checks,
                None => Vec::new(),
            };
            Ok(simulator_gate(simulator, &checks, &self.cfg.validation_config()))
        })
    }

    fn stage_optimize(
        &self,
        process: &DecisionProcess,
        simulator: &dyn Simulator,
    ) -> Result<(Option<ConsensusResult>, ValidationReport), PipelineError> {
        let domain = match &self.cfg.optimizer.domain {
            Some(path) => VariableDomain::load(path).map_err(|e| stage_err("optimize", e))?,
            None => {
                return Err(stage_err(
                    "optimize",
                    "the toy backend needs a variable-domain file (optimizer.domain)",
                ))
            }
        };
        let mut driver = ScriptedEnsembleDriver::clean(
            self.cfg.hyperparameters.num_variants,
            domain,
            self.cfg.toy_config(),
        );
        let (consensus, report, iterations) = refinement_loop(
            process,
            &mut driver,
            simulator,
            &self.cfg.validation_config(),
            &self.cfg.consensus_config(process.objective_function.direction),
        );
        for artifact in &iterations {
            let dir = format!("optimizer_runs/iteration_{}", artifact.iteration);
            write_json(&self.artifact(&format!("{dir}/variant_runs.json")), &artifact.runs)?;
            write_json(
                &self.artifact(&format!("{dir}/ensemble.json")),
                &artifact.consensus.to_ensemble_report(),
            )?;
            if let Some(discrepancy) = &artifact.discrepancy {
                write_json(&self.artifact(&format!("{dir}/discrepancy.json")), discrepancy)?;
                write_text(
                    &self.artifact(&format!("{dir}/discrepancy.txt")),
                    &discrepancy.to_text(),
                )?;
            }
        }
        write_json(&self.artifact("validation/validation_results.json"), &report)?;
        Ok((consensus, report))
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct GateChecksFile {
    checks: Vec<SimulatorCheck>,
}

fn stage_err(stage: &str, message: impl ToString) -> PipelineError {
    PipelineError::Stage { stage: stage.into(), message: message.to_string() }
}

fn run_id_for(problem: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(problem.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

type ProviderPair = (Box<dyn LlmProvider>, Box<dyn EmbeddingProvider>);

fn build_providers(cfg: &RunConfig) -> Result<ProviderPair, PipelineError> {
    let embedder: Box<dyn EmbeddingProvider> = match (&cfg.providers.kind, &cfg.providers.live) {
        (ProviderKind::Live, Some(live)) => build_live_embedder(cfg, live)?,
        (ProviderKind::Live, None) => {
            return Err(PipelineError::Config(
                "providers.kind = \"live\" requires a [providers.live] section".into(),
            ))
        }
        _ => Box::new(HashEmbedder::new(cfg.providers.embedder_seed, cfg.providers.embedding_dim)),
    };
    let llm: Box<dyn LlmProvider> = match cfg.providers.kind {
        ProviderKind::Mock => Box::new(UnconfiguredLlm),
        ProviderKind::Scripted => {
            let script = cfg.providers.script.as_ref().expect("validated");
            Box::new(ScriptedLlm::from_file(script).map_err(|e| PipelineError::Config(e.to_string()))?)
        }
        ProviderKind::Live => build_live_llm(cfg)?,
    };
    Ok((llm, embedder))
}

struct UnconfiguredLlm;

impl LlmProvider for UnconfiguredLlm {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Unavailable(format!(
            "no language-model provider configured (request kind `{}`)",
            request.kind.as_str()
        )))
    }
}

#[cfg(feature = "http-providers")]
fn build_live_llm(cfg: &RunConfig) -> Result<Box<dyn LlmProvider>, PipelineError> {
    let live = cfg.providers.live.as_ref().ok_or_else(|| {
        PipelineError::Config("providers.kind = \"live\" requires [providers.live]".into())
    })?;
    let key = live.api_key_env.as_ref().and_then(|name| std::env::var(name).ok());
    Ok(Box::new(crate::providers::HttpLlmProvider::new(
        live.llm_endpoint.clone(),
        live.llm_model.clone(),
        key,
    )))
}

#[cfg(not(feature = "http-providers"))]
fn build_live_llm(_cfg: &RunConfig) -> Result<Box<dyn LlmProvider>, PipelineError> {
    Err(PipelineError::Config(
        "live providers require building with the `http-providers` feature".into(),
    ))
}

#[cfg(feature = "http-providers")]
fn build_live_embedder(
    cfg: &RunConfig,
    live: &LiveSettings,
) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    let key = live.api_key_env.as_ref().and_then(|name| std::env::var(name).ok());
    Ok(Box::new(crate::providers::HttpEmbeddingProvider::new(
        live.embed_endpoint.clone(),
        live.embed_model.clone(),
        key,
        cfg.providers.embedding_dim,
    )))
}

#[cfg(not(feature = "http-providers"))]
fn build_live_embedder(
    _cfg: &RunConfig,
    _live: &LiveSettings,
) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    Err(PipelineError::Config(
        "live providers require building with the `http-providers` feature".into(),
    ))
}

fn extraction_prompt(problem: &str, formulations: &[String], sample: usize, total: usize) -> String {
    let mut prompt = format!(
        "[sample {sample}/{total}]\n\
         Extract the complete mathematical structure of the decision problem below.\n\
         Materialize all tabular data as explicit nested lists, express every\n\
         constraint as an atomic Python-style symbolic expression, and do not\n\
         invent unstated information.\n\n\
         Return exactly one JSON object with these keys:\n\
         problem_description, decision_variables (name/type/description,\n\
         type one of INTEGER|CONTINUOUS|BINARY), inputs (name/value/units/description),\n\
         exogenous_variables, exogenous_uncertainties, state_variables,\n\
         transition_function, objective_function (direction minimize|maximize,\n\
         expression, description), constraints (expression/description).\n\n\
         Problem description:\n{problem}\n"
    );
    if !formulations.is_empty() {
        prompt.push_str("\nReference formulations from similar solved problems:\n");
        for (i, formulation) in formulations.iter().enumerate() {
            prompt.push_str(&format!("--- reference {} ---\n{formulation}\n", i + 1));
        }
    }
    prompt
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Outcome of replaying a run: per-file comparison of the two directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub identical: bool,
    pub mismatched: Vec<String>,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn hash_dir(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    use sha2::{Digest, Sha256};
    let mut hashes = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| PipelineError::Config(format!("walk {}: {e}", dir.display())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walked path is under dir")
            .to_string_lossy()
            .replace('\\', "/");
        let bytes = std::fs::read(entry.path()).map_err(io_err(entry.path()))?;
        let digest = Sha256::digest(&bytes);
        hashes.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
    }
    Ok(hashes)
}

/// Re-execute a persisted run from its provider log into `out_dir` and
/// compare every artifact byte-for-byte.
pub fn replay_run(source_run: &Path, out_dir: &Path) -> Result<ReplayOutcome, PipelineError> {
    let cfg: RunConfig = read_json(&source_run.join("config.json"))?;
    let problem_path = source_run.join("problem.txt");
    let problem = std::fs::read_to_string(&problem_path).map_err(io_err(&problem_path))?;
    let log = ReplayLog::load(&source_run.join("providers.jsonl"))
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    let mut pipeline = Pipeline::create_replaying(cfg, out_dir, Rc::new(log))?;
    pipeline.solve(&problem)?;

    let source_hashes = hash_dir(source_run)?;
    let replay_hashes = hash_dir(out_dir)?;
    let mut mismatched = Vec::new();
    let mut missing = Vec::new();
    for (path, hash) in &source_hashes {
        match replay_hashes.get(path) {
            Some(other) if other == hash => {}
            Some(_) => mismatched.push(path.clone()),
            None => missing.push(path.clone()),
        }
    }
    let extra: Vec<String> = replay_hashes
        .keys()
        .filter(|p| !source_hashes.contains_key(*p))
        .cloned()
        .collect();
    Ok(ReplayOutcome {
        identical: mismatched.is_empty() && missing.is_empty() && extra.is_empty(),
        mismatched,
        missing,
        extra,
    })
}

// ---------------------------------------------------------------------------
// Suite evaluation (direct mode)
// ---------------------------------------------------------------------------

/// One suite line: a benchmark instance, optionally with an embedded
/// decision process and variable domain for provider-free evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteRecord {
    #[serde(flatten)]
    pub instance: BenchmarkInstance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<VariableDomain>,
}

/// Load a JSON-lines suite file.
pub fn load_suite(path: &Path) -> Result<Vec<SuiteRecord>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SuiteRecord = serde_json::from_str(line).map_err(|e| {
            PipelineError::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Solve one embedded-process instance offline: gate, toy ensemble,
/// consensus, validation.
pub fn solve_embedded(
    record: &SuiteRecord,
    cfg: &RunConfig,
) -> Result<PipelineOutcome, String> {
    let process_value =
        record.process.as_ref().ok_or("instance has no embedded process")?;
    let process =
        parse_decision_process(&process_value.to_string()).map_err(|e| e.to_string())?;
    let domain = record.domain.clone().ok_or("instance has no variable domain")?;

    let simulator = ExprSimulator::new(&process).map_err(|e| e.to_string())?;
    let gate = simulator_gate(&simulator, &[], &cfg.validation_config());
    if !gate.passed {
        return Err("simulator gate failed".into());
    }

    let mut driver = ScriptedEnsembleDriver::clean(
        cfg.hyperparameters.num_variants,
        domain,
        cfg.toy_config(),
    );
    let (consensus, report, _) = refinement_loop(
        &process,
        &mut driver,
        &simulator,
        &cfg.validation_config(),
        &cfg.consensus_config(process.objective_function.direction),
    );
    let consensus = consensus.ok_or("optimizer produced no runs")?;
    let exhaustive_infeasible = consensus.status == SolverStatus::Infeasible
        && consensus
            .variant_results
            .iter()
            .all(|v| v.status == SolverStatus::Infeasible);
    let has_discrete_variables = process
        .decision_variables
        .iter()
        .any(|v| matches!(v.var_type, VarType::Integer | VarType::Binary));
    Ok(PipelineOutcome {
        consensus_status: consensus.status,
        objective: consensus.objective_value,
        validation_passed: Some(report.passed),
        gate_passed: gate.passed,
        exhaustive_infeasible,
        has_discrete_variables,
    })
}

/// Evaluate a suite in direct (embedded-process) mode with the configured
/// batch-size fan-out.
pub fn evaluate_suite(
    records: &[SuiteRecord],
    cfg: &RunConfig,
    parallelism: usize,
) -> Result<SuiteReport, EvalError> {
    let instances: Vec<BenchmarkInstance> =
        records.iter().map(|r| r.instance.clone()).collect();
    let by_id: BTreeMap<String, &SuiteRecord> =
        records.iter().map(|r| (r.instance.id.clone(), r)).collect();
    run_suite(
        &instances,
        |instance| {
            let record = by_id.get(&instance.id).expect("instance came from records");
            solve_embedded(record, cfg)
        },
        parallelism,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips_through_toml() {
        let cfg = RunConfig { providers: ProviderSettings { kind: ProviderKind::Mock, ..Default::default() }, ..Default::default() };
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn scripted_kind_requires_a_script_path() {
        let cfg = RunConfig::default();
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
    }

    #[test]
    fn bad_hyperparameters_are_rejected() {
        let mut cfg = RunConfig {
            providers: ProviderSettings { kind: ProviderKind::Mock, ..Default::default() },
            ..Default::default()
        };
        cfg.hyperparameters.select_k = 99;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig {
            providers: ProviderSettings { kind: ProviderKind::Mock, ..Default::default() },
            ..Default::default()
        };
        cfg.hyperparameters.component_weights.insert(ComponentKind::Constraints, 0.9);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut cfg = RunConfig::default();
        cfg.providers.script = Some(PathBuf::from("script.json"));
        cfg.resolve_paths(Path::new("/tmp/fixtures"));
        assert_eq!(cfg.providers.script.as_deref(), Some(Path::new("/tmp/fixtures/script.json")));
    }

    #[test]
    fn run_id_is_stable_per_problem() {
        assert_eq!(run_id_for("abc"), run_id_for("abc"));
        assert_ne!(run_id_for("abc"), run_id_for("abd"));
        assert_eq!(run_id_for("abc").len(), 12);
    }
}
