//! Component-wise minimum-Bayes-risk selection over extraction candidates,
//! with an LLM-judge re-ranking hook.
//!
//! Each candidate is split into four components (constraints, decision
//! variables, objective, inputs); a component's utility is its mean cosine
//! similarity to the same component of every other candidate, and a
//! candidate's utility is the weighted sum of its component utilities. The
//! top-q candidates go to a judge restricted to the original problem
//! description; a malformed or out-of-contract verdict falls back to the
//! highest-utility candidate after one retry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{cosine_similarity, MemoryError};
use crate::model::DecisionProcess;
use crate::providers::{
    EmbeddingProvider, LlmProvider, ProviderError, ProviderRequest, RequestKind,
};

#[derive(Debug, Error)]
pub enum MbrError {
    #[error("candidate {candidate} is missing the `{component}` embedding")]
    MissingEmbedding { candidate: u32, component: ComponentKind },
    #[error("weights do not cover the component set: {0}")]
    WeightMismatch(String),
    #[error("invalid MBR config: {0}")]
    InvalidConfig(String),
    #[error("unknown candidate id {0}")]
    UnknownCandidate(u32),
    #[error("need at least {need} candidates, have {have}")]
    TooFewCandidates { need: usize, have: usize },
    #[error(transparent)]
    Similarity(#[from] MemoryError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// The fixed component types that carry MBR weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Constraints,
    DecisionVariables,
    Objective,
    Inputs,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 4] = [
        ComponentKind::Constraints,
        ComponentKind::DecisionVariables,
        ComponentKind::Objective,
        ComponentKind::Inputs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Constraints => "constraints",
            ComponentKind::DecisionVariables => "decision_variables",
            ComponentKind::Objective => "objective",
            ComponentKind::Inputs => "inputs",
        }
    }
}

impl std::fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One parsed extraction plus the embeddings of its canonical component
/// texts and of the full extraction (used for consistency diagnostics).
#[derive(Debug, Clone)]
pub struct ExtractionCandidate {
    pub id: u32,
    pub process: DecisionProcess,
    pub component_texts: BTreeMap<ComponentKind, String>,
    pub component_embeddings: BTreeMap<ComponentKind, Vec<f64>>,
    pub full_embedding: Vec<f64>,
}

impl ExtractionCandidate {
    /// Canonical JSON fragment for each component; one string per
    /// component, embedded as a whole.
    pub fn component_text(process: &DecisionProcess, kind: ComponentKind) -> String {
        match kind {
            ComponentKind::Constraints => {
                serde_json::to_string(&process.constraints).expect("serializes")
            }
            ComponentKind::DecisionVariables => {
                serde_json::to_string(&process.decision_variables).expect("serializes")
            }
            ComponentKind::Objective => {
                serde_json::to_string(&process.objective_function).expect("serializes")
            }
            ComponentKind::Inputs => serde_json::to_string(&process.inputs).expect("serializes"),
        }
    }

    /// Embed all four components plus the full extraction in one batch.
    pub fn from_process(
        id: u32,
        process: DecisionProcess,
        embedder: &dyn EmbeddingProvider,
    ) -> Result<Self, MbrError> {
        let mut texts: Vec<String> = ComponentKind::ALL
            .iter()
            .map(|kind| Self::component_text(&process, *kind))
            .collect();
        texts.push(crate::model::serialize_decision_process(&process));
        let mut vectors = embedder.embed(&texts)?;
        let full_embedding = vectors.pop().expect("full-extraction vector present");
        let component_embeddings =
            ComponentKind::ALL.iter().copied().zip(vectors).collect::<BTreeMap<_, _>>();
        let component_texts = ComponentKind::ALL
            .iter()
            .map(|kind| (*kind, Self::component_text(&process, *kind)))
            .collect();
        Ok(ExtractionCandidate { id, process, component_texts, component_embeddings, full_embedding })
    }
}

/// Candidate count, top-q size, and component weights (non-negative,
/// summing to 1 within 1e-12).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbrConfig {
    pub num_candidates: usize,
    pub top_q: usize,
    pub weights: BTreeMap<ComponentKind, f64>,
}

pub fn default_component_weights() -> BTreeMap<ComponentKind, f64> {
    let mut weights = BTreeMap::new();
    weights.insert(ComponentKind::Constraints, 0.6);
    weights.insert(ComponentKind::DecisionVariables, 0.2);
    weights.insert(ComponentKind::Objective, 0.1);
    weights.insert(ComponentKind::Inputs, 0.1);
    weights
}

impl Default for MbrConfig {
    fn default() -> Self {
        MbrConfig { num_candidates: 5, top_q: 3, weights: default_component_weights() }
    }
}

impl MbrConfig {
    pub fn validate(&self) -> Result<(), MbrError> {
        if self.num_candidates < 2 {
            return Err(MbrError::InvalidConfig("num_candidates must be at least 2".into()));
        }
        if self.top_q == 0 || self.top_q > self.num_candidates {
            return Err(MbrError::InvalidConfig(format!(
                "top_q must be in 1..={}, got {}",
                self.num_candidates, self.top_q
            )));
        }
        for kind in ComponentKind::ALL {
            match self.weights.get(&kind) {
                Some(w) if *w >= 0.0 => {}
                Some(_) => {
                    return Err(MbrError::WeightMismatch(format!("weight for {kind} is negative")))
                }
                None => {
                    return Err(MbrError::WeightMismatch(format!("missing weight for {kind}")))
                }
            }
        }
        if self.weights.len() != ComponentKind::ALL.len() {
            return Err(MbrError::WeightMismatch("extra component weights supplied".into()));
        }
        let total: f64 = self.weights.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MbrError::WeightMismatch(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

fn candidate_by_id(candidates: &[ExtractionCandidate], id: u32) -> Result<&ExtractionCandidate, MbrError> {
    candidates.iter().find(|c| c.id == id).ok_or(MbrError::UnknownCandidate(id))
}

/// Mean cosine similarity between candidate `id`'s component and the same
/// component of every other candidate.
pub fn component_utility(
    candidates: &[ExtractionCandidate],
    id: u32,
    kind: ComponentKind,
) -> Result<f64, MbrError> {
    if candidates.len() < 2 {
        return Err(MbrError::TooFewCandidates { need: 2, have: candidates.len() });
    }
    let target = candidate_by_id(candidates, id)?;
    let target_embedding = target
        .component_embeddings
        .get(&kind)
        .ok_or(MbrError::MissingEmbedding { candidate: id, component: kind })?;
    let mut total = 0.0;
    for other in candidates.iter().filter(|c| c.id != id) {
        let other_embedding = other
            .component_embeddings
            .get(&kind)
            .ok_or(MbrError::MissingEmbedding { candidate: other.id, component: kind })?;
        total += cosine_similarity(other_embedding, target_embedding)?;
    }
    Ok(total / (candidates.len() - 1) as f64)
}

/// Weighted sum of the candidate's component utilities.
pub fn candidate_utility(
    candidates: &[ExtractionCandidate],
    id: u32,
    cfg: &MbrConfig,
) -> Result<f64, MbrError> {
    cfg.validate()?;
    let mut utility = 0.0;
    for kind in ComponentKind::ALL {
        utility += cfg.weights[&kind] * component_utility(candidates, id, kind)?;
    }
    Ok(utility)
}

/// Utilities for every candidate, in input order.
pub fn utilities(
    candidates: &[ExtractionCandidate],
    cfg: &MbrConfig,
) -> Result<Vec<(u32, f64)>, MbrError> {
    candidates
        .iter()
        .map(|c| candidate_utility(candidates, c.id, cfg).map(|u| (c.id, u)))
        .collect()
}

/// The q candidates with the highest utility, sorted descending (ties by
/// ascending id).
pub fn select_top_q(
    candidates: &[ExtractionCandidate],
    cfg: &MbrConfig,
) -> Result<Vec<ExtractionCandidate>, MbrError> {
    cfg.validate()?;
    if candidates.len() < cfg.top_q {
        return Err(MbrError::TooFewCandidates { need: cfg.top_q, have: candidates.len() });
    }
    let mut scored = utilities(candidates, cfg)?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(cfg.top_q)
        .map(|(id, _)| candidate_by_id(candidates, id).cloned())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

/// The judge's verdict, parsed from its JSON response contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeVerdict {
    pub disagreement_analysis: String,
    pub best_candidate_id: u32,
    pub confidence: Confidence,
    pub reasoning: String,
}

/// How the final candidate was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum JudgeMode {
    /// The judge returned a valid verdict.
    Verdict { verdict: JudgeVerdict },
    /// Only one candidate survived; the judge was not called.
    SingleCandidate,
    /// The judge was unavailable or out of contract; fell back to the
    /// highest-utility candidate.
    Fallback { reason: String },
}

/// Result of judge re-ranking: the selected candidate id and how it was
/// selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSelection {
    pub selected_id: u32,
    #[serde(flatten)]
    pub mode: JudgeMode,
}

/// Build the judge prompt: the original problem description plus the
/// candidate extractions and the response contract. Memory context is
/// deliberately excluded.
pub fn build_judge_prompt(problem: &str, top: &[ExtractionCandidate]) -> String {
    let candidates_json: Vec<serde_json::Value> = top
        .iter()
        .map(|c| {
            serde_json::json!({
                "id": c.id,
                "extraction": serde_json::from_str::<serde_json::Value>(
                    &crate::model::serialize_decision_process(&c.process)
                )
                .expect("canonical process parses"),
            })
        })
        .collect();
    format!(
        "Select the single best optimization formulation among the candidates below.\n\
         Compare their constraints, variable types, objectives, and data against the\n\
         problem statement; penalize missing, extra, or infeasible constraints.\n\n\
         Problem description:\n{problem}\n\n\
         Candidates (JSON):\n{}\n\n\
         Return ONLY a JSON object of the form:\n\
         {{\n  \"disagreement_analysis\": \"...\",\n  \"best_candidate_id\": <id>,\n  \
         \"confidence\": \"high|medium|low\",\n  \"reasoning\": \"...\"\n}}\n\
         best_candidate_id must match a provided candidate ID. No text outside the JSON object.",
        serde_json::to_string_pretty(&candidates_json).expect("candidates serialize"),
    )
}

fn parse_verdict(text: &str, top: &[ExtractionCandidate]) -> Result<JudgeVerdict, String> {
    let verdict: JudgeVerdict =
        serde_json::from_str(text.trim()).map_err(|e| format!("verdict does not parse: {e}"))?;
    if !top.iter().any(|c| c.id == verdict.best_candidate_id) {
        return Err(format!(
            "best_candidate_id {} is not among the supplied candidates",
            verdict.best_candidate_id
        ));
    }
    Ok(verdict)
}

/// Ask the judge to pick among the top candidates. The judge sees only the
/// problem description and the candidates. On provider failure or a
/// contract-violating verdict (after one retry) the highest-utility
/// candidate wins and the fallback is recorded.
pub fn judge_rerank(
    top: &[ExtractionCandidate],
    problem: &str,
    judge: &dyn LlmProvider,
    cfg: &MbrConfig,
) -> Result<(ExtractionCandidate, JudgeSelection), MbrError> {
    if top.is_empty() {
        return Err(MbrError::TooFewCandidates { need: 1, have: 0 });
    }
    if top.len() == 1 {
        return Ok((
            top[0].clone(),
            JudgeSelection { selected_id: top[0].id, mode: JudgeMode::SingleCandidate },
        ));
    }

    let request = ProviderRequest::new(RequestKind::Judge, build_judge_prompt(problem, top));
    let mut failure = String::new();
    for _attempt in 0..2 {
        match judge.complete(&request) {
            Ok(text) => match parse_verdict(&text, top) {
                Ok(verdict) => {
                    let chosen = candidate_by_id(top, verdict.best_candidate_id)?.clone();
                    let selection = JudgeSelection {
                        selected_id: chosen.id,
                        mode: JudgeMode::Verdict { verdict },
                    };
                    return Ok((chosen, selection));
                }
                Err(reason) => failure = reason,
            },
            Err(e) => failure = e.to_string(),
        }
    }

    log::warn!("judge fallback: {failure}");
    // Fallback: highest-utility member of the top set, recomputed so any
    // slice works (not only the sorted output of `select_top_q`).
    let scored = utilities(top, &MbrConfig {
        num_candidates: top.len().max(2),
        top_q: 1,
        weights: cfg.weights.clone(),
    })?;
    let best_id = scored
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(id, _)| *id)
        .expect("top set is non-empty");
    let chosen = candidate_by_id(top, best_id)?.clone();
    Ok((
        chosen,
        JudgeSelection { selected_id: best_id, mode: JudgeMode::Fallback { reason: failure } },
    ))
}

/// Mean and population standard deviation of a pairwise-similarity
/// multiset.
pub fn consistency_from_pairs(pairs: &[f64]) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = pairs.iter().sum::<f64>() / pairs.len() as f64;
    let variance =
        pairs.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / pairs.len() as f64;
    (mean, variance.sqrt())
}

/// Consistency (mean pairwise full-extraction similarity) and stability
/// (population standard deviation of those similarities) for a candidate
/// sample.
pub fn consistency_metrics(candidates: &[ExtractionCandidate]) -> Result<(f64, f64), MbrError> {
    if candidates.len() < 2 {
        return Err(MbrError::TooFewCandidates { need: 2, have: candidates.len() });
    }
    let mut pairs = Vec::new();
    for i in 0..candidates.len() {
        for j in (i + 1)..candidates.len() {
            pairs.push(cosine_similarity(
                &candidates[i].full_embedding,
                &candidates[j].full_embedding,
            )?);
        }
    }
    Ok(consistency_from_pairs(&pairs))
}
