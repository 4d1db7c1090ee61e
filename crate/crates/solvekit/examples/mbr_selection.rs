//! Component-wise MBR over extraction candidates, plus judge re-ranking
//! with a scripted verdict.
//!
//! ```bash
//! cargo run -p solvekit --example mbr_selection
//! ```

use std::path::Path;

use solvekit::mbr::{
    consistency_metrics, judge_rerank, select_top_q, utilities, ExtractionCandidate, MbrConfig,
};
use solvekit::model::parse_decision_process;
use solvekit::providers::{HashEmbedder, RequestKind, ScriptEntry, ScriptedLlm};

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    std::fs::read_to_string(path).expect("fixture present")
}

fn main() {
    let embedder = HashEmbedder::new(42, 32);

    // Five sampled extractions of the same problem: 2, 3, and 5 agree on
    // the inequality formulation; 1 forces an infeasible equality and 4
    // pads the model with self-shipments.
    let sources = [
        fixture("food_extraction_equality.json"),
        fixture("food_extraction.json"),
        fixture("food_extraction.json"),
        fixture("food_extraction_selfship.json"),
        fixture("food_extraction.json"),
    ];
    let candidates: Vec<ExtractionCandidate> = sources
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let process = parse_decision_process(text).unwrap();
            ExtractionCandidate::from_process(i as u32 + 1, process, &embedder).unwrap()
        })
        .collect();

    let cfg = MbrConfig::default();
    println!("candidate utilities (weighted component agreement):");
    let mut scored = utilities(&candidates, &cfg).unwrap();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (id, utility) in &scored {
        println!("  candidate {id}: U = {utility:.3}");
    }

    let (consistency, stability) = consistency_metrics(&candidates).unwrap();
    println!("\nsample diagnostics: consistency {consistency:.3}, stability {stability:.3}");

    let top = select_top_q(&candidates, &cfg).unwrap();
    let ids: Vec<u32> = top.iter().map(|c| c.id).collect();
    println!("top-{} forwarded to the judge: {ids:?}", cfg.top_q);

    let judge = ScriptedLlm::builder()
        .entry(ScriptEntry::new(
            RequestKind::Judge,
            serde_json::json!({
                "disagreement_analysis": "two candidates force exact balance and go infeasible; one allows surplus",
                "best_candidate_id": 5,
                "confidence": "high",
                "reasoning": "the at-least inequality matches the problem statement"
            })
            .to_string(),
        ))
        .build();
    let problem = fixture("food_problem.txt");
    let (chosen, selection) = judge_rerank(&top, &problem, &judge, &cfg).unwrap();
    println!("\njudge selected candidate {} ({:?})", chosen.id, selection.mode);
}
