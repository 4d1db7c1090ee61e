//! Build a small memory store and compare pure-relevance retrieval with
//! diversity-aware greedy selection.
//!
//! ```bash
//! cargo run -p solvekit --example memory_retrieval
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use solvekit::memory::{IngestRecord, MemoryStore, RetrievalConfig};
use solvekit::providers::{EmbeddingProvider, HashEmbedder};

fn main() {
    let embedder = HashEmbedder::new(42, 32);
    let mut store = MemoryStore::new(embedder.id(), embedder.dimension());

    let corpus_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus_small.jsonl");
    let corpus = std::fs::read_to_string(corpus_path).expect("fixture corpus");
    let records: Vec<IngestRecord> =
        corpus.lines().map(|line| serde_json::from_str(line).unwrap()).collect();
    let added = store.ingest(&records, &embedder).unwrap();
    println!("ingested {added} entries; per-type histogram:");
    for (problem_type, count) in store.type_histogram() {
        println!("  {problem_type:<16} {count}");
    }

    let query = "move grain between depots so every depot meets demand at lowest cost";
    let query_embedding = embedder.embed(&[query.to_string()]).unwrap().remove(0);

    // Unrelated hash embeddings sit near zero cosine, so this demo admits
    // the whole pool.
    let cfg = RetrievalConfig {
        pool_size: 6,
        select_k: 3,
        lambda: 0.5,
        similarity_threshold: -1.0,
    };
    let pool = store.retrieve_pool(&query_embedding, &cfg).unwrap();
    println!("\ncandidate pool (descending similarity):");
    for (entry, similarity) in &pool {
        println!("  {similarity:+.4}  {} ({})", entry.id, entry.problem_type);
    }

    let query_sim: BTreeMap<String, f64> =
        pool.iter().map(|(e, s)| (e.id.clone(), *s)).collect();
    let entries: Vec<_> = pool.iter().map(|(e, _)| e.clone()).collect();

    for lambda in [0.0, 0.5] {
        let cfg = RetrievalConfig { lambda, ..cfg };
        let picked = MemoryStore::diversity_select(&query_sim, &entries, &cfg).unwrap();
        let ids: Vec<&str> = picked.iter().map(|e| e.id.as_str()).collect();
        println!("\nlambda = {lambda}: selected {ids:?}");
    }
}
