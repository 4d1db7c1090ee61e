//! Ranked solver recommendations produced by a language-model provider and
//! normalized against the locally available backends.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::DecisionProcess;
use crate::providers::{LlmProvider, ProviderError, ProviderRequest, RequestKind};

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("no solvers available")]
    NoSolversAvailable,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// One ranked recommendation. Ranks within a set are 1..m with no gaps or
/// duplicates; 1 is best. Rationale text is preserved verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecommendation {
    pub solver: String,
    pub rank: u32,
    pub rationale: String,
    pub setup_notes: String,
}

#[derive(Debug, Deserialize)]
struct RawRecommendation {
    solver: String,
    #[serde(default)]
    rank: Option<u32>,
    #[serde(default)]
    rationale: Option<String>,
    #[serde(default)]
    setup_notes: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RecommendationResponse {
    recommendations: Vec<RawRecommendation>,
}

fn build_prompt(process: &DecisionProcess, available: &[String]) -> String {
    format!(
        "Recommend a ranked list of solvers for the optimization problem below.\n\
         Rank primarily by simplicity of use and suitability for the problem size.\n\n\
         Problem description:\n{}\n\n\
         Structure: {} decision variable families, {} inputs, {} constraints, direction {:?}.\n\
         Available solvers: {}\n\n\
         Return ONLY a JSON object of the form:\n\
         {{\"recommendations\": [{{\"solver\": \"name\", \"rank\": 1, \"rationale\": \"...\", \"setup_notes\": \"...\"}}]}}\n\
         Every recommended solver must come from the available list; rank 1 is best.",
        process.problem_description,
        process.decision_variables.len(),
        process.inputs.len(),
        process.constraints.len(),
        process.objective_function.direction,
        available.join(", "),
    )
}

fn fallback_recommendations(available: &[String]) -> Vec<SolverRecommendation> {
    available
        .iter()
        .enumerate()
        .map(|(i, solver)| SolverRecommendation {
            solver: solver.clone(),
            rank: i as u32 + 1,
            rationale: "defaulted to available-solver order".into(),
            setup_notes: String::new(),
        })
        .collect()
}

/// Ask the provider for a ranked solver list, then enforce the contract:
/// unknown solvers are dropped with a warning, duplicates keep their first
/// mention, and ranks are re-normalized to 1..m. If nothing usable
/// survives, fall back to the available-solver order.
pub fn recommend(
    process: &DecisionProcess,
    available: &[String],
    llm: &dyn LlmProvider,
) -> Result<Vec<SolverRecommendation>, RecommendError> {
    if available.is_empty() {
        return Err(RecommendError::NoSolversAvailable);
    }
    let request = ProviderRequest::new(RequestKind::Recommend, build_prompt(process, available));
    let response = llm.complete(&request)?;

    let parsed: Option<RecommendationResponse> = serde_json::from_str(response.trim()).ok();
    let raw = match parsed {
        Some(r) => r.recommendations,
        None => {
            log::warn!("recommendation response is not in the JSON contract; using available order");
            return Ok(fallback_recommendations(available));
        }
    };

    let mut ordered: Vec<(u32, usize, RawRecommendation)> = raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| (r.rank.unwrap_or(u32::MAX), i, r))
        .collect();
    ordered.sort_by_key(|(rank, original, _)| (*rank, *original));

    let mut seen = std::collections::BTreeSet::new();
    let mut result = Vec::new();
    for (_, _, raw) in ordered {
        if !available.contains(&raw.solver) {
            log::warn!("dropping recommended solver `{}`: not available", raw.solver);
            continue;
        }
        if !seen.insert(raw.solver.clone()) {
            continue;
        }
        result.push(SolverRecommendation {
            solver: raw.solver,
            rank: result.len() as u32 + 1,
            rationale: raw.rationale.unwrap_or_default(),
            setup_notes: raw.setup_notes.unwrap_or_default(),
        });
    }
    if result.is_empty() {
        log::warn!("every recommended solver was dropped; using available order");
        return Ok(fallback_recommendations(available));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{ScriptEntry, ScriptedLlm};

    fn process() -> DecisionProcess {
        crate::model::parse_decision_process(
            &serde_json::json!({
                "problem_description": "ship food between regions at minimum cost",
                "decision_variables": [],
                "inputs": [],
                "exogenous_variables": [],
                "exogenous_uncertainties": [],
                "state_variables": [],
                "transition_function": "",
                "objective_function": {"direction": "minimize", "expression": "0", "description": ""},
                "constraints": []
            })
            .to_string(),
        )
        .unwrap()
    }

    fn six_solver_response() -> String {
        serde_json::json!({
            "recommendations": [
                {"solver": "gurobipy", "rank": 1,
                 "rationale": "native LP engine; solves a six-node transportation model in milliseconds",
                 "setup_notes": "pip install gurobipy"},
                {"solver": "cvxpy", "rank": 2, "rationale": "concise modeling, picks an installed LP backend"},
                {"solver": "ortools", "rank": 3, "rationale": "dedicated min-cost flow interface"},
                {"solver": "pyomo", "rank": 4, "rationale": "verbose for this size"},
                {"solver": "scipy", "rank": 5, "rationale": "linprog fallback"},
                {"solver": "pyscipopt", "rank": 6, "rationale": "heavier than needed"}
            ]
        })
        .to_string()
    }

    #[test]
    fn replayed_ranking_keeps_six_entries_with_gurobipy_first() {
        let available: Vec<String> =
            ["gurobipy", "cvxpy", "ortools", "pyomo", "scipy", "pyscipopt"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        let llm = ScriptedLlm::builder()
            .entry(ScriptEntry::new(RequestKind::Recommend, six_solver_response()))
            .build();
        let recs = recommend(&process(), &available, &llm).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(recs[0].solver, "gurobipy");
        assert_eq!(recs[0].rank, 1);
        let ranks: Vec<u32> = recs.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, vec![1, 2, 3, 4, 5, 6]);
        assert!(recs[0].rationale.contains("milliseconds"), "rationale preserved verbatim");
    }

    #[test]
    fn single_available_solver_always_wins() {
        let available = vec!["toy-bruteforce".to_string()];
        let llm = ScriptedLlm::builder()
            .entry(ScriptEntry::new(RequestKind::Recommend, "free-form text, no JSON"))
            .build();
        let recs = recommend(&process(), &available, &llm).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].solver, "toy-bruteforce");
        assert_eq!(recs[0].rank, 1);
    }

    #[test]
    fn unknown_solvers_are_dropped_and_ranks_renormalized() {
        let available = vec!["toy-bruteforce".to_string()];
        let response = serde_json::json!({
            "recommendations": [
                {"solver": "foo", "rank": 1, "rationale": "imaginary"},
                {"solver": "toy-bruteforce", "rank": 2, "rationale": "actually present"}
            ]
        })
        .to_string();
        let llm = ScriptedLlm::builder()
            .entry(ScriptEntry::new(RequestKind::Recommend, response))
            .build();
        let recs = recommend(&process(), &available, &llm).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].solver, "toy-bruteforce");
        assert_eq!(recs[0].rank, 1);
    }

    #[test]
    fn empty_available_list_is_an_error() {
        let llm = ScriptedLlm::builder().build();
        assert!(matches!(
            recommend(&process(), &[], &llm),
            Err(RecommendError::NoSolversAvailable)
        ));
    }
}
