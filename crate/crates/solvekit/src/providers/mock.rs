//! Deterministic offline providers: a scripted language model, a seeded
//! hash-to-vector embedder, and the recording/replay wrappers that make any
//! run reproducible from its provider log.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    embedding_fingerprint, EmbeddingProvider, LlmProvider, ProviderError, ProviderRequest,
    RequestKind,
};

/// One scripted response. Matchers narrow from exact fingerprint to prompt
/// substring to kind-level default; `fail_times` injects that many
/// rate-limit failures before the response is served.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub kind: RequestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_json: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_times: Option<u32>,
    #[serde(skip)]
    failures_served: Cell<u32>,
}

impl ScriptEntry {
    pub fn new(kind: RequestKind, response: impl Into<String>) -> Self {
        ScriptEntry {
            kind,
            prompt_sha256: None,
            prompt_contains: None,
            response: Some(response.into()),
            response_json: None,
            response_file: None,
            fail_times: None,
            failures_served: Cell::new(0),
        }
    }

    pub fn matching(kind: RequestKind, contains: impl Into<String>, response: impl Into<String>) -> Self {
        let mut entry = ScriptEntry::new(kind, response);
        entry.prompt_contains = Some(contains.into());
        entry
    }

    pub fn with_failures(kind: RequestKind, response: impl Into<String>, fail_times: u32) -> Self {
        let mut entry = ScriptEntry::new(kind, response);
        entry.fail_times = Some(fail_times);
        entry
    }

    fn response_text(&self, base_dir: Option<&Path>) -> Result<String, ProviderError> {
        if let Some(text) = &self.response {
            return Ok(text.clone());
        }
        if let Some(value) = &self.response_json {
            return Ok(serde_json::to_string(value).expect("script value serializes"));
        }
        if let Some(file) = &self.response_file {
            let path = match base_dir {
                Some(dir) if file.is_relative() => dir.join(file),
                _ => file.clone(),
            };
            return std::fs::read_to_string(&path).map_err(|e| {
                ProviderError::Unavailable(format!("script response file {}: {e}", path.display()))
            });
        }
        Err(ProviderError::Unavailable("script entry has no response".into()))
    }
}

#[derive(Debug, Default, Deserialize)]
struct ScriptFile {
    entries: Vec<ScriptEntry>,
}

/// Language model that replays scripted responses. Lookup is a pure
/// function of (kind, prompt hash, script); the only state is the
/// fail-counter used to exercise retry paths.
#[derive(Debug, Default)]
pub struct ScriptedLlm {
    entries: Vec<ScriptEntry>,
    base_dir: Option<PathBuf>,
}

impl ScriptedLlm {
    pub fn builder() -> ScriptedLlmBuilder {
        ScriptedLlmBuilder { entries: Vec::new() }
    }

    /// Load a script from a JSON file; relative `response_file` paths
    /// resolve against the script's own directory.
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ProviderError::Unavailable(format!("cannot read script {}: {e}", path.display()))
        })?;
        let file: ScriptFile = serde_json::from_str(&text).map_err(|e| {
            ProviderError::Contract(format!("bad script {}: {e}", path.display()))
        })?;
        Ok(ScriptedLlm {
            entries: file.entries,
            base_dir: path.parent().map(Path::to_path_buf),
        })
    }
}

pub struct ScriptedLlmBuilder {
    entries: Vec<ScriptEntry>,
}

impl ScriptedLlmBuilder {
    pub fn entry(mut self, entry: ScriptEntry) -> Self {
        self.entries.push(entry);
        self
    }

    pub fn build(self) -> ScriptedLlm {
        ScriptedLlm { entries: self.entries, base_dir: None }
    }
}

impl LlmProvider for ScriptedLlm {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let fingerprint = request.fingerprint();
        let of_kind: Vec<&ScriptEntry> =
            self.entries.iter().filter(|e| e.kind == request.kind).collect();
        let chosen = of_kind
            .iter()
            .find(|e| e.prompt_sha256.as_deref() == Some(fingerprint.as_str()))
            .or_else(|| {
                of_kind.iter().find(|e| {
                    e.prompt_sha256.is_none()
                        && e.prompt_contains
                            .as_deref()
                            .map(|needle| request.prompt.contains(needle))
                            .unwrap_or(false)
                })
            })
            .or_else(|| {
                of_kind
                    .iter()
                    .find(|e| e.prompt_sha256.is_none() && e.prompt_contains.is_none())
            });
        match chosen {
            Some(entry) => {
                if let Some(budget) = entry.fail_times {
                    let served = entry.failures_served.get();
                    if served < budget {
                        entry.failures_served.set(served + 1);
                        return Err(ProviderError::RateLimited(format!(
                            "scripted failure {}/{budget}",
                            served + 1
                        )));
                    }
                }
                entry.response_text(self.base_dir.as_deref())
            }
            None => Err(ProviderError::Unavailable(format!(
                "no scripted response for kind `{}`",
                request.kind.as_str()
            ))),
        }
    }
}

/// Seeded hash-to-vector embedder: identical text always maps to the
/// identical vector, distinct texts to (near-orthogonal) pseudo-random
/// ones. Component `i` of `embed(t)` is a uniform value in [-1, 1] derived
/// from SHA-256(seed, dim, t, i).
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { seed, dim }
    }

    fn component(&self, text: &str, i: usize) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update(text.as_bytes());
        hasher.update((i as u64).to_le_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        let unit = u64::from_le_bytes(bytes) as f64 / u64::MAX as f64;
        unit * 2.0 - 1.0
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::Contract("cannot embed an empty text list".into()));
        }
        Ok(texts
            .iter()
            .map(|t| (0..self.dim).map(|i| self.component(t, i)).collect())
            .collect())
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("hash-v1/seed{}/dim{}", self.seed, self.dim)
    }
}

/// One line of the provider log. LLM records use the request kind;
/// embedding records use kind `embed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderLogRecord {
    pub kind: String,
    pub fingerprint: String,
    pub response: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogMeta {
    embedder_id: String,
    embedding_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogHeader {
    meta: LogMeta,
}

/// Append-only provider log shared by the recording wrappers.
#[derive(Debug)]
pub struct ProviderLogWriter {
    file: std::io::BufWriter<std::fs::File>,
}

impl ProviderLogWriter {
    pub fn create(
        path: &Path,
        embedder_id: &str,
        embedding_dim: usize,
    ) -> std::io::Result<Rc<RefCell<Self>>> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = LogHeader {
            meta: LogMeta { embedder_id: embedder_id.to_string(), embedding_dim },
        };
        writeln!(file, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        file.flush()?;
        Ok(Rc::new(RefCell::new(ProviderLogWriter { file })))
    }

    /// Reopen an existing log for appending (resumed runs). The header is
    /// assumed present.
    pub fn append_to(path: &Path) -> std::io::Result<Rc<RefCell<Self>>> {
        let file = std::fs::OpenOptions::new().append(true).open(path)?;
        Ok(Rc::new(RefCell::new(ProviderLogWriter { file: std::io::BufWriter::new(file) })))
    }

    fn append(&mut self, record: &ProviderLogRecord) {
        let line = serde_json::to_string(record).expect("log record serializes");
        let _ = writeln!(self.file, "{line}");
        let _ = self.file.flush();
    }
}

/// Logs every completion for later replay.
pub struct RecordingLlm {
    inner: Box<dyn LlmProvider>,
    log: Rc<RefCell<ProviderLogWriter>>,
}

impl RecordingLlm {
    pub fn new(inner: Box<dyn LlmProvider>, log: Rc<RefCell<ProviderLogWriter>>) -> Self {
        RecordingLlm { inner, log }
    }
}

impl LlmProvider for RecordingLlm {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let response = self.inner.complete(request)?;
        self.log.borrow_mut().append(&ProviderLogRecord {
            kind: request.kind.as_str().to_string(),
            fingerprint: request.fingerprint(),
            response: response.clone(),
        });
        Ok(response)
    }
}

/// Logs every embedding batch for later replay.
pub struct RecordingEmbedder {
    inner: Box<dyn EmbeddingProvider>,
    log: Rc<RefCell<ProviderLogWriter>>,
}

impl RecordingEmbedder {
    pub fn new(inner: Box<dyn EmbeddingProvider>, log: Rc<RefCell<ProviderLogWriter>>) -> Self {
        RecordingEmbedder { inner, log }
    }
}

impl EmbeddingProvider for RecordingEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let vectors = self.inner.embed(texts)?;
        self.log.borrow_mut().append(&ProviderLogRecord {
            kind: "embed".to_string(),
            fingerprint: embedding_fingerprint(texts),
            response: serde_json::to_string(&vectors).expect("vectors serialize"),
        });
        Ok(vectors)
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}

/// A parsed provider log, ready to serve replays.
#[derive(Debug, Clone)]
pub struct ReplayLog {
    embedder_id: String,
    embedding_dim: usize,
    responses: BTreeMap<(String, String), String>,
}

impl ReplayLog {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let file = std::fs::File::open(path).map_err(|e| {
            ProviderError::Unavailable(format!("cannot open provider log {}: {e}", path.display()))
        })?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| ProviderError::Contract("provider log is empty".into()))?
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let header: LogHeader = serde_json::from_str(&header_line)
            .map_err(|e| ProviderError::Contract(format!("bad log header: {e}")))?;
        let mut responses = BTreeMap::new();
        for line in lines {
            let line = line.map_err(|e| ProviderError::Transport(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ProviderLogRecord = serde_json::from_str(&line)
                .map_err(|e| ProviderError::Contract(format!("bad log record: {e}")))?;
            responses.insert((record.kind, record.fingerprint), record.response);
        }
        Ok(ReplayLog {
            embedder_id: header.meta.embedder_id,
            embedding_dim: header.meta.embedding_dim,
            responses,
        })
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }
}

/// Serves completions verbatim from a recorded log.
pub struct ReplayLlm {
    log: Rc<ReplayLog>,
}

impl ReplayLlm {
    pub fn new(log: Rc<ReplayLog>) -> Self {
        ReplayLlm { log }
    }
}

impl LlmProvider for ReplayLlm {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let key = (request.kind.as_str().to_string(), request.fingerprint());
        self.log.responses.get(&key).cloned().ok_or_else(|| {
            ProviderError::Unavailable(format!(
                "no recorded response for kind `{}` fingerprint {}",
                request.kind.as_str(),
                key.1
            ))
        })
    }
}

/// Serves embeddings verbatim from a recorded log.
pub struct ReplayEmbedder {
    log: Rc<ReplayLog>,
}

impl ReplayEmbedder {
    pub fn new(log: Rc<ReplayLog>) -> Self {
        ReplayEmbedder { log }
    }
}

impl EmbeddingProvider for ReplayEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::Contract("cannot embed an empty text list".into()));
        }
        let key = ("embed".to_string(), embedding_fingerprint(texts));
        let response = self.log.responses.get(&key).ok_or_else(|| {
            ProviderError::Unavailable(format!("no recorded embedding for fingerprint {}", key.1))
        })?;
        serde_json::from_str(response)
            .map_err(|e| ProviderError::Contract(format!("bad recorded embedding: {e}")))
    }

    fn dimension(&self) -> usize {
        self.log.embedding_dim
    }

    fn id(&self) -> String {
        self.log.embedder_id.clone()
    }
}
