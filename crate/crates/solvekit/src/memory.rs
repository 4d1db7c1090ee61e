//! Vector store over (description, formulation, code) triplets with
//! diversity-aware greedy retrieval.
//!
//! Retrieval is restricted to problem descriptions: a query first pulls a
//! candidate pool of the most cosine-similar entries above a threshold, then
//! a greedy pass picks `k` of them, trading query relevance against mean
//! similarity to the examples already selected. Search is a linear scan; at
//! a few thousand entries nothing fancier is warranted.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::providers::{EmbeddingProvider, ProviderError};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("vector dimensions differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("the memory store is empty")]
    EmptyStore,
    #[error("no query similarity supplied for entry `{0}`")]
    MissingSimilarity(String),
    #[error("embedding provider failed at entry {index}: {source}")]
    Provider {
        index: usize,
        #[source]
        source: ProviderError,
    },
    #[error("store file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store file format error: {0}")]
    Format(String),
    #[error("store embedder `{expected}` does not match `{actual}`")]
    EmbedderMismatch { expected: String, actual: String },
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

/// The fifteen problem categories entries are labeled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProblemType {
    Knapsack,
    Assignment,
    Scheduling,
    Transportation,
    #[serde(rename = "Facility Location")]
    FacilityLocation,
    #[serde(rename = "Network Flow")]
    NetworkFlow,
    #[serde(rename = "TSP")]
    Tsp,
    #[serde(rename = "Vehicle Routing")]
    VehicleRouting,
    #[serde(rename = "Resource Allocation")]
    ResourceAllocation,
    #[serde(rename = "Production Planning")]
    ProductionPlanning,
    #[serde(rename = "Inventory Management")]
    InventoryManagement,
    #[serde(rename = "Cutting Stock")]
    CuttingStock,
    #[serde(rename = "Bin Packing")]
    BinPacking,
    #[serde(rename = "Linear Programming")]
    LinearProgramming,
    Miscellaneous,
}

impl ProblemType {
    pub const ALL: [ProblemType; 15] = [
        ProblemType::Knapsack,
        ProblemType::Assignment,
        ProblemType::Scheduling,
        ProblemType::Transportation,
        ProblemType::FacilityLocation,
        ProblemType::NetworkFlow,
        ProblemType::Tsp,
        ProblemType::VehicleRouting,
        ProblemType::ResourceAllocation,
        ProblemType::ProductionPlanning,
        ProblemType::InventoryManagement,
        ProblemType::CuttingStock,
        ProblemType::BinPacking,
        ProblemType::LinearProgramming,
        ProblemType::Miscellaneous,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ProblemType::Knapsack => "Knapsack",
            ProblemType::Assignment => "Assignment",
            ProblemType::Scheduling => "Scheduling",
            ProblemType::Transportation => "Transportation",
            ProblemType::FacilityLocation => "Facility Location",
            ProblemType::NetworkFlow => "Network Flow",
            ProblemType::Tsp => "TSP",
            ProblemType::VehicleRouting => "Vehicle Routing",
            ProblemType::ResourceAllocation => "Resource Allocation",
            ProblemType::ProductionPlanning => "Production Planning",
            ProblemType::InventoryManagement => "Inventory Management",
            ProblemType::CuttingStock => "Cutting Stock",
            ProblemType::BinPacking => "Bin Packing",
            ProblemType::LinearProgramming => "Linear Programming",
            ProblemType::Miscellaneous => "Miscellaneous",
        }
    }
}

impl fmt::Display for ProblemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One stored triplet: description, formulation, and code, plus the
/// description embedding used for retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: String,
    pub description: String,
    pub formulation: String,
    pub code: String,
    pub problem_type: ProblemType,
    pub embedding: Vec<f64>,
}

/// Retrieval knobs: pool size, picks, relevance/diversity trade-off, and
/// the minimum cosine similarity admitted into the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub pool_size: usize,
    pub select_k: usize,
    pub lambda: f64,
    pub similarity_threshold: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { pool_size: 9, select_k: 3, lambda: 0.5, similarity_threshold: 0.6 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.pool_size == 0 || self.select_k == 0 {
            return Err(MemoryError::InvalidConfig("pool_size and select_k must be positive".into()));
        }
        if self.select_k > self.pool_size {
            return Err(MemoryError::InvalidConfig(format!(
                "select_k ({}) must not exceed pool_size ({})",
                self.select_k, self.pool_size
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(MemoryError::InvalidConfig("lambda must be in [0, 1]".into()));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return Err(MemoryError::InvalidConfig(
                "similarity_threshold must be in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Cosine of the angle between two vectors, in [-1, 1]. Embeddings are
/// stored unnormalized; normalization happens here.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MemoryError> {
    if a.len() != b.len() {
        return Err(MemoryError::DimensionMismatch { a: a.len(), b: b.len() });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MemoryError::ZeroVector);
    }
    Ok(dot / (na * nb))
}

/// Ingest payload: the triplet plus its taxonomy label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestRecord {
    pub description: String,
    pub formulation: String,
    pub code: String,
    pub problem_type: ProblemType,
}

fn content_id(record: &IngestRecord) -> String {
    let mut hasher = Sha256::new();
    hasher.update(record.description.as_bytes());
    hasher.update([0x1f]);
    hasher.update(record.formulation.as_bytes());
    hasher.update([0x1f]);
    hasher.update(record.code.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("m-{hex}")
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    version: u32,
    embedder: String,
    embedding_dim: usize,
}

/// In-memory store with newline-delimited JSON persistence. Reads are
/// `&self` and ingest is `&mut self`, so the borrow checker enforces the
/// snapshot semantics: a retrieval sees a consistent point-in-time index.
#[derive(Debug, Clone)]
pub struct MemoryStore {
    embedder_id: String,
    dim: usize,
    entries: Vec<MemoryEntry>,
}

impl MemoryStore {
    pub fn new(embedder_id: impl Into<String>, dim: usize) -> Self {
        MemoryStore { embedder_id: embedder_id.into(), dim, entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn embedding_dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Embed and index new triplets. Idempotent on identical
    /// (description, formulation, code) content; returns the number of
    /// entries actually added.
    pub fn ingest(
        &mut self,
        records: &[IngestRecord],
        embedder: &dyn EmbeddingProvider,
    ) -> Result<usize, MemoryError> {
        let mut added = 0;
        for (index, record) in records.iter().enumerate() {
            let id = content_id(record);
            if self.entries.iter().any(|e| e.id == id) {
                continue;
            }
            let embedding = embedder
                .embed(std::slice::from_ref(&record.description))
                .map_err(|source| MemoryError::Provider { index, source })?
                .into_iter()
                .next()
                .ok_or(MemoryError::Provider {
                    index,
                    source: ProviderError::Contract("embedder returned no vector".into()),
                })?;
            if embedding.len() != self.dim {
                return Err(MemoryError::DimensionMismatch { a: self.dim, b: embedding.len() });
            }
            self.entries.push(MemoryEntry {
                id,
                description: record.description.clone(),
                formulation: record.formulation.clone(),
                code: record.code.clone(),
                problem_type: record.problem_type,
                embedding,
            });
            added += 1;
        }
        Ok(added)
    }

    /// Entry counts per taxonomy label.
    pub fn type_histogram(&self) -> BTreeMap<ProblemType, usize> {
        let mut histogram = BTreeMap::new();
        for entry in &self.entries {
            *histogram.entry(entry.problem_type).or_insert(0) += 1;
        }
        histogram
    }

    /// Top-N candidate pool: entries with similarity at or above the
    /// threshold, sorted by descending similarity (ties by ascending id),
    /// truncated to `pool_size`.
    pub fn retrieve_pool(
        &self,
        query_embedding: &[f64],
        cfg: &RetrievalConfig,
    ) -> Result<Vec<(MemoryEntry, f64)>, MemoryError> {
        cfg.validate()?;
        if self.entries.is_empty() {
            return Err(MemoryError::EmptyStore);
        }
        let mut scored = Vec::new();
        for entry in &self.entries {
            let sim = cosine_similarity(query_embedding, &entry.embedding)?;
            if sim >= cfg.similarity_threshold {
                scored.push((entry.clone(), sim));
            }
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
        scored.truncate(cfg.pool_size);
        Ok(scored)
    }

    /// Greedy relevance/diversity selection over a candidate pool.
    ///
    /// The first pick is the entry most similar to the query. Each later
    /// pick maximizes `sim(query, c) - lambda * mean(sim(c, m))` over the
    /// already-selected `m`. Ties break by ascending id; output preserves
    /// selection order and has size `min(select_k, pool)`. Both score terms
    /// stay in [0, 1] only when similarities are non-negative; the formula
    /// is applied as written either way.
    pub fn diversity_select(
        query_sim: &BTreeMap<String, f64>,
        pool: &[MemoryEntry],
        cfg: &RetrievalConfig,
    ) -> Result<Vec<MemoryEntry>, MemoryError> {
        cfg.validate()?;
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        for entry in pool {
            if !query_sim.contains_key(&entry.id) {
                return Err(MemoryError::MissingSimilarity(entry.id.clone()));
            }
        }
        let k = cfg.select_k.min(pool.len());
        let mut selected: Vec<usize> = Vec::with_capacity(k);
        let mut remaining: Vec<usize> = (0..pool.len()).collect();

        while selected.len() < k {
            let mut best: Option<(usize, f64)> = None;
            for &candidate in &remaining {
                let relevance = query_sim[&pool[candidate].id];
                let score = if selected.is_empty() {
                    relevance
                } else {
                    let mut redundancy = 0.0;
                    for &chosen in &selected {
                        redundancy += cosine_similarity(
                            &pool[candidate].embedding,
                            &pool[chosen].embedding,
                        )?;
                    }
                    relevance - cfg.lambda * redundancy / selected.len() as f64
                };
                let better = match best {
                    None => true,
                    Some((best_idx, best_score)) => {
                        score > best_score
                            || (score == best_score
                                && pool[candidate].id < pool[best_idx].id)
                    }
                };
                if better {
                    best = Some((candidate, score));
                }
            }
            let (winner, _) = best.expect("remaining pool is non-empty");
            selected.push(winner);
            remaining.retain(|&i| i != winner);
        }
        Ok(selected.into_iter().map(|i| pool[i].clone()).collect())
    }

    /// Write the store as NDJSON: a header line with the embedder identity
    /// and dimensionality, then one entry per line.
    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = StoreHeader {
            version: 1,
            embedder: self.embedder_id.clone(),
            embedding_dim: self.dim,
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for entry in &self.entries {
            writeln!(out, "{}", serde_json::to_string(entry).expect("entry serializes"))?;
        }
        Ok(())
    }

    /// Reload a store without re-embedding.
    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| MemoryError::Format("store file is empty".into()))??;
        let header: StoreHeader = serde_json::from_str(&header_line)
            .map_err(|e| MemoryError::Format(format!("bad header: {e}")))?;
        let mut store = MemoryStore::new(header.embedder, header.embedding_dim);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MemoryEntry = serde_json::from_str(&line)
                .map_err(|e| MemoryError::Format(format!("line {}: {e}", lineno + 2)))?;
            if entry.embedding.len() != store.dim {
                return Err(MemoryError::DimensionMismatch {
                    a: store.dim,
                    b: entry.embedding.len(),
                });
            }
            store.entries.push(entry);
        }
        Ok(store)
    }

    /// Guard that a query embedder matches the one the store was built with.
    pub fn check_embedder(&self, embedder: &dyn EmbeddingProvider) -> Result<(), MemoryError> {
        if embedder.id() != self.embedder_id {
            return Err(MemoryError::EmbedderMismatch {
                expected: self.embedder_id.clone(),
                actual: embedder.id(),
            });
        }
        Ok(())
    }
}
