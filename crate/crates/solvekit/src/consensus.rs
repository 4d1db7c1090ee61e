//! Self-consistency aggregation over parallel optimizer runs: majority
//! status voting with a lexicographic tie-break, tolerance-based objective
//! clustering, lower-median selection, and a runtime tie-break for the
//! winning decision vector.
//!
//! The result is a pure function of the run multiset: permuting the input
//! never changes the output, and the returned (variables, objective) pair
//! is always taken verbatim from one contributing run — values are never
//! averaged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Direction, SolverRun, SolverStatus};

/// Tolerances, declared ensemble size, and the objective direction used
/// for cluster tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub num_variants: usize,
    pub rtol: f64,
    pub atol: f64,
    pub direction: Direction,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig { num_variants: 3, rtol: 1e-6, atol: 1e-9, direction: Direction::Minimize }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.num_variants == 0 {
            return Err("num_variants must be at least 1".into());
        }
        if self.rtol < 0.0 || self.atol < 0.0 {
            return Err("rtol and atol must be non-negative".into());
        }
        Ok(())
    }
}

/// The written similarity relation: `|a - b| <= atol + rtol * |b|`, with
/// `b` in the reference position. Asymmetric as written; clustering uses
/// [`objective_similar_symmetric`].
pub fn objective_similar(a: f64, b: f64, cfg: &ConsensusConfig) -> bool {
    (a - b).abs() <= cfg.atol + cfg.rtol * b.abs()
}

/// Symmetrized similarity: the relation holds with either operand as the
/// reference.
pub fn objective_similar_symmetric(a: f64, b: f64, cfg: &ConsensusConfig) -> bool {
    objective_similar(a, b, cfg) || objective_similar(b, a, cfg)
}

/// Most frequent status; ties resolved by the preference order
/// `Optimal ≻ TimeLimit ≻ Infeasible ≻ Unbounded ≻ Error`.
pub fn status_consensus(runs: &[SolverRun]) -> SolverStatus {
    let mut counts: BTreeMap<SolverStatus, usize> = BTreeMap::new();
    for run in runs {
        *counts.entry(run.status).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|(status_a, count_a), (status_b, count_b)| {
            count_a
                .cmp(count_b)
                .then_with(|| status_b.preference_rank().cmp(&status_a.preference_rank()))
        })
        .map(|(status, _)| status)
        .unwrap_or(SolverStatus::Error)
}

/// Sort ascending by objective (ties by variant name) and sweep once: a
/// value joins the current cluster iff it is symmetric-similar to the
/// cluster's current maximum, else it opens a new cluster. The clusters
/// partition the input.
pub fn cluster_objectives(
    values: &[(String, f64)],
    cfg: &ConsensusConfig,
) -> Vec<Vec<(String, f64)>> {
    let mut sorted: Vec<(String, f64)> = values.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut clusters: Vec<Vec<(String, f64)>> = Vec::new();
    for item in sorted {
        match clusters.last_mut() {
            Some(cluster) => {
                let cluster_max = cluster.last().expect("clusters are non-empty").1;
                if objective_similar_symmetric(item.1, cluster_max, cfg) {
                    cluster.push(item);
                } else {
                    clusters.push(vec![item]);
                }
            }
            None => clusters.push(vec![item]),
        }
    }
    clusters
}

/// Summary row for one variant, as emitted in the ensemble report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant_name: String,
    pub solver: String,
    pub status: SolverStatus,
    pub objective_value: Option<f64>,
    pub solve_time: f64,
}

/// Aggregated ensemble outcome plus agreement diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub variables: BTreeMap<String, f64>,
    pub objective_value: Option<f64>,
    pub status: SolverStatus,
    pub num_variants: usize,
    pub num_successful: usize,
    pub num_failed: usize,
    pub status_distribution: BTreeMap<SolverStatus, usize>,
    pub objective_agreement: usize,
    pub objective_agreement_ratio: f64,
    pub num_unique_objectives: usize,
    pub failed_variants: Vec<String>,
    pub variant_results: Vec<VariantSummary>,
    /// Variants whose solvers contributed to the winning cluster.
    pub consensus_solvers: Vec<String>,
    /// The variant the final decision vector was taken from, when any.
    pub source_variant: Option<String>,
}

/// Hierarchical consensus over the run multiset.
///
/// Runs claiming `optimal` without an objective are demoted to `error`
/// before voting; if fewer than the declared `num_variants` runs arrive,
/// the gap is padded with synthetic `missing_k` error runs. When the
/// consensus status is `optimal` or `time_limit`, runs sharing that status
/// are clustered by objective; the largest cluster wins (size ties prefer
/// the better median under the configured direction), the consensus
/// objective is the cluster's lower median, and the variables come from
/// the run achieving that median with the lowest solve time.
pub fn consensus(runs: &[SolverRun], cfg: &ConsensusConfig) -> ConsensusResult {
    let mut normalized: Vec<SolverRun> = runs.to_vec();
    for run in normalized.iter_mut() {
        if matches!(run.objective_value, Some(v) if !v.is_finite()) {
            log::warn!(
                "variant `{}` reported a non-finite objective; demoting to error",
                run.variant_name
            );
            run.status = SolverStatus::Error;
            run.objective_value = None;
        }
        if run.status == SolverStatus::Optimal && run.objective_value.is_none() {
            log::warn!(
                "variant `{}` reported optimal without an objective; demoting to error",
                run.variant_name
            );
            run.status = SolverStatus::Error;
        }
    }
    for k in normalized.len()..cfg.num_variants {
        normalized.push(SolverRun {
            variant_name: format!("missing_{}", k + 1),
            variables: BTreeMap::new(),
            objective_value: None,
            status: SolverStatus::Error,
            solver_name: "none".into(),
            solve_time: 0.0,
            iterations: 0,
            gap: None,
        });
    }

    let num_variants = normalized.len();
    let status = status_consensus(&normalized);

    let mut status_distribution: BTreeMap<SolverStatus, usize> = BTreeMap::new();
    for run in &normalized {
        *status_distribution.entry(run.status).or_insert(0) += 1;
    }
    let mut failed_variants: Vec<String> = normalized
        .iter()
        .filter(|r| r.status == SolverStatus::Error)
        .map(|r| r.variant_name.clone())
        .collect();
    failed_variants.sort();
    let num_failed = failed_variants.len();
    let num_successful = num_variants - num_failed;

    let mut variant_results: Vec<VariantSummary> = normalized
        .iter()
        .map(|r| VariantSummary {
            variant_name: r.variant_name.clone(),
            solver: r.solver_name.clone(),
            status: r.status,
            objective_value: r.objective_value,
            solve_time: r.solve_time,
        })
        .collect();
    variant_results.sort_by(|a, b| a.variant_name.cmp(&b.variant_name));

    let sharing_status = normalized.iter().filter(|r| r.status == status).count();

    let mut result = ConsensusResult {
        variables: BTreeMap::new(),
        objective_value: None,
        status,
        num_variants,
        num_successful,
        num_failed,
        status_distribution,
        objective_agreement: 0,
        objective_agreement_ratio: 0.0,
        num_unique_objectives: 0,
        failed_variants,
        variant_results,
        consensus_solvers: Vec::new(),
        source_variant: None,
    };

    if !matches!(status, SolverStatus::Optimal | SolverStatus::TimeLimit) {
        return result;
    }

    let candidates: Vec<&SolverRun> = normalized
        .iter()
        .filter(|r| r.status == status && r.objective_value.is_some())
        .collect();
    if candidates.is_empty() {
        // Possible for a time_limit consensus where no run reported an
        // incumbent objective.
        return result;
    }

    let values: Vec<(String, f64)> = candidates
        .iter()
        .map(|r| (r.variant_name.clone(), r.objective_value.expect("filtered")))
        .collect();
    let clusters = cluster_objectives(&values, cfg);
    result.num_unique_objectives = clusters.len();

    let lower_median = |cluster: &[(String, f64)]| cluster[(cluster.len() - 1) / 2].1;
    let winner = clusters
        .iter()
        .max_by(|a, b| {
            a.len().cmp(&b.len()).then_with(|| {
                // Size tie: prefer the better median for the direction.
                let (ma, mb) = (lower_median(a), lower_median(b));
                let better = match cfg.direction {
                    Direction::Minimize => mb.total_cmp(&ma),
                    Direction::Maximize => ma.total_cmp(&mb),
                };
                // Residual exact-median tie: smallest leading variant name.
                better.then_with(|| b[0].0.cmp(&a[0].0))
            })
        })
        .expect("at least one cluster");

    let consensus_objective = lower_median(winner);
    result.objective_agreement = winner.len();
    result.objective_agreement_ratio = winner.len() as f64 / sharing_status as f64;

    let achiever = candidates
        .iter()
        .filter(|r| {
            winner.iter().any(|(name, _)| name == &r.variant_name)
                && r.objective_value == Some(consensus_objective)
        })
        .min_by(|a, b| {
            a.solve_time.total_cmp(&b.solve_time).then_with(|| a.variant_name.cmp(&b.variant_name))
        })
        .expect("the median value is achieved by a cluster member");

    result.objective_value = Some(consensus_objective);
    result.variables = achiever.variables.clone();
    result.source_variant = Some(achiever.variant_name.clone());
    let mut consensus_solvers: Vec<String> = Vec::new();
    for (name, _) in winner {
        if let Some(r) = normalized.iter().find(|r| &r.variant_name == name) {
            if !consensus_solvers.contains(&r.solver_name) {
                consensus_solvers.push(r.solver_name.clone());
            }
        }
    }
    result.consensus_solvers = consensus_solvers;
    result
}

// The exact ensemble-report JSON layout, field order included.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub ensemble_size: usize,
    pub solvers_used: Vec<String>,
    pub consensus_solvers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusInfo {
    pub num_variants: usize,
    pub num_successful: usize,
    pub num_failed: usize,
    pub status_distribution: BTreeMap<SolverStatus, usize>,
    pub solver_agreement: usize,
    pub objective_agreement: usize,
    pub objective_agreement_ratio: f64,
    pub num_unique_objectives: usize,
    pub failed_variants: Vec<String>,
}

/// The ensemble output document: consensus solution, solver info,
/// agreement diagnostics, and per-variant rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub optimal_variables: BTreeMap<String, f64>,
    pub optimal_objective_value: Option<f64>,
    pub status: SolverStatus,
    pub solver_info: SolverInfo,
    pub consensus_info: ConsensusInfo,
    pub variant_results: Vec<VariantSummary>,
}

impl ConsensusResult {
    /// Render as the ensemble report document.
    pub fn to_ensemble_report(&self) -> EnsembleReport {
        let mut solvers_used: Vec<String> = Vec::new();
        for summary in &self.variant_results {
            if !solvers_used.contains(&summary.solver) {
                solvers_used.push(summary.solver.clone());
            }
        }
        let solver_agreement =
            self.status_distribution.get(&self.status).copied().unwrap_or(0);
        EnsembleReport {
            optimal_variables: self.variables.clone(),
            optimal_objective_value: self.objective_value,
            status: self.status,
            solver_info: SolverInfo {
                ensemble_size: self.num_variants,
                solvers_used,
                consensus_solvers: self.consensus_solvers.clone(),
            },
            consensus_info: ConsensusInfo {
                num_variants: self.num_variants,
                num_successful: self.num_successful,
                num_failed: self.num_failed,
                status_distribution: self.status_distribution.clone(),
                solver_agreement,
                objective_agreement: self.objective_agreement,
                objective_agreement_ratio: self.objective_agreement_ratio,
                num_unique_objectives: self.num_unique_objectives,
                failed_variants: self.failed_variants.clone(),
            },
            variant_results: self.variant_results.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn run(
        name: &str,
        status: SolverStatus,
        objective: Option<f64>,
        solve_time: f64,
    ) -> SolverRun {
        let mut variables = BTreeMap::new();
        if let Some(value) = objective {
            variables.insert("x".to_string(), value / 2.0);
        }
        SolverRun {
            variant_name: name.into(),
            variables,
            objective_value: objective,
            status,
            solver_name: format!("solver-of-{name}"),
            solve_time,
            iterations: 1,
            gap: None,
        }
    }

    #[test]
    fn objective_similarity_examples() {
        let cfg = ConsensusConfig::default();
        assert!(objective_similar(8090.0, 8090.00000015, &cfg));
        assert!(objective_similar(1.25, 1.25, &cfg));
        assert!(!objective_similar(1.0, 1.01, &cfg));
    }

    #[test]
    fn status_majority_and_tie_breaks() {
        let runs = vec![
            run("a", SolverStatus::Optimal, Some(1.0), 0.1),
            run("b", SolverStatus::Optimal, Some(1.0), 0.1),
            run("c", SolverStatus::Optimal, Some(1.0), 0.1),
        ];
        assert_eq!(status_consensus(&runs), SolverStatus::Optimal);

        let runs = vec![
            run("a", SolverStatus::Optimal, Some(1.0), 0.1),
            run("b", SolverStatus::Infeasible, None, 0.1),
        ];
        assert_eq!(status_consensus(&runs), SolverStatus::Optimal);

        let runs = vec![
            run("a", SolverStatus::Error, None, 0.1),
            run("b", SolverStatus::Error, None, 0.1),
            run("c", SolverStatus::Optimal, Some(1.0), 0.1),
        ];
        assert_eq!(status_consensus(&runs), SolverStatus::Error);
    }

    #[test]
    fn clustering_groups_by_tolerance() {
        let cfg = ConsensusConfig::default();
        let one_cluster = cluster_objectives(
            &[
                ("a".into(), 8090.0),
                ("b".into(), 8090.00000015),
                ("c".into(), 8090.0),
            ],
            &cfg,
        );
        assert_eq!(one_cluster.len(), 1);
        assert_eq!(one_cluster[0].len(), 3);

        let singletons =
            cluster_objectives(&[("a".into(), 1.0), ("b".into(), 2.0), ("c".into(), 3.0)], &cfg);
        assert_eq!(singletons.len(), 3);

        // 100.00005 joins 100.0 (inside tolerance ~1.0e-4) but 100.0002 is
        // too far from the cluster maximum and opens a new cluster.
        let mixed = cluster_objectives(
            &[("a".into(), 100.0), ("b".into(), 100.00005), ("c".into(), 100.0002)],
            &cfg,
        );
        assert_eq!(mixed.len(), 2);
        assert_eq!(mixed[0].len(), 2);
        assert_eq!(mixed[1][0].1, 100.0002);
    }

    #[test]
    fn consensus_takes_median_and_fastest_achiever() {
        // Objectives {10, 10, 10, 42, 42}: the 10-cluster wins, and among
        // its members the fastest run supplies the variables.
        let runs = vec![
            run("v1", SolverStatus::Optimal, Some(10.0), 0.5),
            run("v2", SolverStatus::Optimal, Some(42.0), 0.1),
            run("v3", SolverStatus::Optimal, Some(10.0), 0.3),
            run("v4", SolverStatus::Optimal, Some(42.0), 0.2),
            run("v5", SolverStatus::Optimal, Some(10.0), 0.4),
        ];
        let cfg = ConsensusConfig { num_variants: 5, ..Default::default() };
        let result = consensus(&runs, &cfg);
        assert_eq!(result.status, SolverStatus::Optimal);
        assert_eq!(result.objective_value, Some(10.0));
        assert_eq!(result.source_variant.as_deref(), Some("v3"));
        assert_eq!(result.objective_agreement, 3);
        assert_eq!(result.num_unique_objectives, 2);
        assert!((result.objective_agreement_ratio - 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_run_passes_through_verbatim() {
        let the_run = run("only", SolverStatus::Optimal, Some(7.5), 0.2);
        let cfg = ConsensusConfig { num_variants: 1, ..Default::default() };
        let result = consensus(std::slice::from_ref(&the_run), &cfg);
        assert_eq!(result.objective_value, the_run.objective_value);
        assert_eq!(result.variables, the_run.variables);
        assert_eq!(result.num_unique_objectives, 1);
    }

    #[test]
    fn optimal_without_objective_is_demoted() {
        let mut bad = run("bad", SolverStatus::Optimal, None, 0.1);
        bad.objective_value = None;
        let good = run("good", SolverStatus::Optimal, Some(3.0), 0.1);
        let cfg = ConsensusConfig { num_variants: 2, ..Default::default() };
        let result = consensus(&[bad, good], &cfg);
        assert_eq!(result.status_distribution[&SolverStatus::Error], 1);
        assert_eq!(result.objective_value, Some(3.0));
        assert_eq!(result.failed_variants, vec!["bad".to_string()]);
    }

    #[test]
    fn missing_runs_pad_as_errors() {
        let only = run("v1", SolverStatus::Optimal, Some(1.0), 0.1);
        let cfg = ConsensusConfig { num_variants: 3, ..Default::default() };
        let result = consensus(&[only], &cfg);
        assert_eq!(result.num_variants, 3);
        assert_eq!(result.num_failed, 2);
        assert_eq!(result.failed_variants, vec!["missing_2".to_string(), "missing_3".to_string()]);
        // Two errors beat one optimal on count.
        assert_eq!(result.status, SolverStatus::Error);
    }

    #[test]
    fn permutation_invariance() {
        let runs = vec![
            run("v1", SolverStatus::Optimal, Some(5.0), 0.3),
            run("v2", SolverStatus::Optimal, Some(5.0 + 1e-9), 0.1),
            run("v3", SolverStatus::Infeasible, None, 0.2),
        ];
        let cfg = ConsensusConfig { num_variants: 3, ..Default::default() };
        let baseline = consensus(&runs, &cfg);
        let mut permuted = runs.clone();
        permuted.rotate_left(1);
        assert_eq!(consensus(&permuted, &cfg), baseline);
        permuted.reverse();
        assert_eq!(consensus(&permuted, &cfg), baseline);
    }

    #[test]
    fn size_ties_prefer_better_median_per_direction() {
        let runs = vec![
            run("v1", SolverStatus::Optimal, Some(10.0), 0.1),
            run("v2", SolverStatus::Optimal, Some(10.0), 0.2),
            run("v3", SolverStatus::Optimal, Some(42.0), 0.3),
            run("v4", SolverStatus::Optimal, Some(42.0), 0.4),
        ];
        let min_cfg = ConsensusConfig { num_variants: 4, ..Default::default() };
        assert_eq!(consensus(&runs, &min_cfg).objective_value, Some(10.0));
        let max_cfg = ConsensusConfig { direction: Direction::Maximize, ..min_cfg };
        assert_eq!(consensus(&runs, &max_cfg).objective_value, Some(42.0));
    }
}
