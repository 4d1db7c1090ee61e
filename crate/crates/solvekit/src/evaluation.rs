//! Scores pipeline outputs against ground truth with the strict
//! relative-error criterion and produces benchmark reports.
//!
//! A prediction is correct when `|F_pred - F_gt| / (|F_gt| + eps) < 1e-6`.
//! The one auto-granted exception is verified infeasibility: ground truth
//! says infeasible and the pipeline independently proved it. Relaxation
//! and unit-equivalence mismatches are only ever flagged for manual
//! review; auto-accepting them would silently inflate accuracy.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SolverStatus;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const RELATIVE_ERROR_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("the suite is empty")]
    EmptySuite,
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
}

/// Ground truth: an optimal objective value or the infeasibility marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Objective(f64),
    Marker(InfeasibleMarker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibleMarker {
    Infeasible,
}

/// One benchmark instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub id: String,
    pub description: String,
    pub ground_truth_objective: GroundTruth,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// What the scored pipeline reported for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predicted {
    Objective(f64),
    Status(SolverStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionRule {
    None,
    VerifiedInfeasibility,
}

/// Scoring outcome for one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub instance_id: String,
    pub predicted: Option<Predicted>,
    pub correct: bool,
    pub relative_error: Option<f64>,
    pub exception_rule: ExceptionRule,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub review_flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The strict relative-error criterion. Both values must be finite.
pub fn score(predicted: f64, ground_truth: f64, epsilon: f64) -> (bool, f64) {
    let relative_error = (predicted - ground_truth).abs() / (ground_truth.abs() + epsilon);
    (relative_error < RELATIVE_ERROR_THRESHOLD, relative_error)
}

/// Pipeline output distilled to what scoring needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub consensus_status: SolverStatus,
    pub objective: Option<f64>,
    pub validation_passed: Option<bool>,
    pub gate_passed: bool,
    /// Every variant independently reported infeasible over an
    /// exhaustively enumerated domain.
    pub exhaustive_infeasible: bool,
    pub has_discrete_variables: bool,
}

impl PipelineOutcome {
    /// The evidence bar for the verified-infeasibility exception.
    pub fn proves_infeasibility(&self) -> bool {
        self.gate_passed
            && self.consensus_status == SolverStatus::Infeasible
            && self.exhaustive_infeasible
    }
}

fn review_flags(outcome: &PipelineOutcome, ground_truth: f64, predicted: f64, rel_err: f64) -> Vec<String> {
    let mut flags = Vec::new();
    // Ratio near a nonzero power of ten suggests a unit/scaling mismatch.
    if ground_truth != 0.0 && predicted != 0.0 {
        let log_ratio = (predicted / ground_truth).abs().log10();
        if log_ratio.is_finite() {
            let nearest = log_ratio.round();
            if nearest != 0.0 && (log_ratio - nearest).abs() < 1e-6 {
                flags.push("units-mismatch-candidate".to_string());
            }
        }
    }
    // A near-miss on a discrete model may be an LP-relaxation mismatch.
    if outcome.has_discrete_variables && rel_err < 0.5 {
        flags.push("relaxation-mismatch-candidate".to_string());
    }
    flags
}

/// Score one instance, applying the verified-infeasibility exception and
/// attaching manual-review flags. Flagged cases are never auto-granted.
pub fn score_with_exceptions(
    outcome: &PipelineOutcome,
    instance: &BenchmarkInstance,
) -> ScoreRecord {
    match instance.ground_truth_objective {
        GroundTruth::Marker(InfeasibleMarker::Infeasible) => {
            let proves = outcome.proves_infeasibility();
            ScoreRecord {
                instance_id: instance.id.clone(),
                predicted: match outcome.objective {
                    Some(v) => Some(Predicted::Objective(v)),
                    None => Some(Predicted::Status(outcome.consensus_status)),
                },
                correct: proves,
                relative_error: None,
                exception_rule: if proves {
                    ExceptionRule::VerifiedInfeasibility
                } else {
                    ExceptionRule::None
                },
                review_flags: Vec::new(),
                note: None,
            }
        }
        GroundTruth::Objective(ground_truth) => match outcome.objective {
            Some(predicted) if predicted.is_finite() => {
                let (correct, rel_err) = score(predicted, ground_truth, DEFAULT_EPSILON);
                let review_flags = if correct {
                    Vec::new()
                } else {
                    review_flags(outcome, ground_truth, predicted, rel_err)
                };
                ScoreRecord {
                    instance_id: instance.id.clone(),
                    predicted: Some(Predicted::Objective(predicted)),
                    correct,
                    relative_error: Some(rel_err),
                    exception_rule: ExceptionRule::None,
                    review_flags,
                    note: None,
                }
            }
            _ => ScoreRecord {
                instance_id: instance.id.clone(),
                predicted: Some(Predicted::Status(outcome.consensus_status)),
                correct: false,
                relative_error: None,
                exception_rule: ExceptionRule::None,
                review_flags: Vec::new(),
                note: Some("no objective produced".into()),
            },
        },
    }
}

/// Aggregate suite report: per-instance records ordered by instance id,
/// plus exact and decimal accuracy. Byte-stable for identical inputs and
/// pipeline outputs (wall-time goes to the log, not the report).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub num_instances: usize,
    pub num_correct: usize,
    pub accuracy_exact: String,
    pub accuracy: f64,
    pub records: Vec<ScoreRecord>,
}

impl SuiteReport {
    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>14} {:>8} {:>12}  {}\n",
            "instance", "predicted", "correct", "rel_error", "flags/notes"
        ));
        for r in &self.records {
            let predicted = match &r.predicted {
                Some(Predicted::Objective(v)) => format!("{v}"),
                Some(Predicted::Status(s)) => s.to_string(),
                None => "-".to_string(),
            };
            let rel = r
                .relative_error
                .map(|e| format!("{e:.3e}"))
                .unwrap_or_else(|| "-".to_string());
            let mut extra = r.review_flags.join(",");
            if let Some(note) = &r.note {
                if !extra.is_empty() {
                    extra.push_str("; ");
                }
                extra.push_str(note);
            }
            if r.exception_rule == ExceptionRule::VerifiedInfeasibility {
                if !extra.is_empty() {
                    extra.push_str("; ");
                }
                extra.push_str("verified_infeasibility");
            }
            out.push_str(&format!(
                "{:<24} {:>14} {:>8} {:>12}  {}\n",
                r.instance_id, predicted, r.correct, rel, extra
            ));
        }
        out.push_str(&format!(
            "accuracy: {} = {}  ({} of {})\n",
            self.accuracy_exact, self.accuracy, self.num_correct, self.num_instances
        ));
        out
    }
}

/// Run a pipeline over every instance and assemble the report. Instance
/// failures are recorded as incorrect with a note; the suite never aborts.
/// Instances are fanned out across up to `parallelism` threads and the
/// report is reassembled in instance-id order, so the output is
/// independent of completion order.
pub fn run_suite<F>(
    instances: &[BenchmarkInstance],
    pipeline: F,
    parallelism: usize,
) -> Result<SuiteReport, EvalError>
where
    F: Fn(&BenchmarkInstance) -> Result<PipelineOutcome, String> + Sync,
{
    if instances.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let mut seen = BTreeSet::new();
    for instance in instances {
        if !seen.insert(instance.id.clone()) {
            return Err(EvalError::DuplicateId(instance.id.clone()));
        }
    }

    let started = Instant::now();
    let score_one = |instance: &BenchmarkInstance| match pipeline(instance) {
        Ok(outcome) => score_with_exceptions(&outcome, instance),
        Err(message) => ScoreRecord {
            instance_id: instance.id.clone(),
            predicted: None,
            correct: false,
            relative_error: None,
            exception_rule: ExceptionRule::None,
            review_flags: Vec::new(),
            note: Some(format!("pipeline failure: {message}")),
        },
    };

    let mut records: Vec<ScoreRecord> = if parallelism <= 1 || instances.len() <= 1 {
        instances.iter().map(score_one).collect()
    } else {
        let chunk_size = instances.len().div_ceil(parallelism);
        std::thread::scope(|scope| {
            let handles: Vec<_> = instances
                .chunks(chunk_size)
                .map(|chunk| scope.spawn(|| chunk.iter().map(score_one).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));

    let num_correct = records.iter().filter(|r| r.correct).count();
    log::info!(
        "suite of {} instances scored in {:.3}s",
        instances.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(SuiteReport {
        num_instances: instances.len(),
        num_correct,
        accuracy_exact: format!("{num_correct}/{}", instances.len()),
        accuracy: num_correct as f64 / instances.len() as f64,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(id: &str, gt: GroundTruth) -> BenchmarkInstance {
        BenchmarkInstance {
            id: id.into(),
            description: String::new(),
            ground_truth_objective: gt,
            tags: Vec::new(),
        }
    }

    fn optimal_outcome(objective: f64) -> PipelineOutcome {
        PipelineOutcome {
            consensus_status: SolverStatus::Optimal,
            objective: Some(objective),
            validation_passed: Some(true),
            gate_passed: true,
            exhaustive_infeasible: false,
            has_discrete_variables: true,
        }
    }

    #[test]
    fn exact_match_is_correct_with_zero_error() {
        let (correct, rel) = score(8090.0, 8090.0, DEFAULT_EPSILON);
        assert!(correct);
        assert_eq!(rel, 0.0);
    }

    #[test]
    fn zero_against_zero_is_correct() {
        let (correct, rel) = score(0.0, 0.0, DEFAULT_EPSILON);
        assert!(correct);
        assert_eq!(rel, 0.0);
    }

    #[test]
    fn boundary_is_strict() {
        // Exactly at the threshold: 1e-14 / (0 + 1e-8) computes to 1e-6
        // bitwise, and the strict inequality rejects it.
        let (correct, rel) = score(1e-14, 0.0, DEFAULT_EPSILON);
        assert_eq!(rel, RELATIVE_ERROR_THRESHOLD);
        assert!(!correct);
        // A hair inside: 100.0001 rounds down in binary, so the relative
        // error lands at 9.999999999331966e-7.
        let (correct, rel) = score(100.0001, 100.0, DEFAULT_EPSILON);
        assert_eq!(rel, 9.999999999331966e-7);
        assert!(correct);
        // A hair outside.
        let (correct, rel) = score(100.00011, 100.0, DEFAULT_EPSILON);
        assert!(rel > RELATIVE_ERROR_THRESHOLD, "rel_err {rel}");
        assert!(!correct);
    }

    #[test]
    fn score_is_monotone_in_distance() {
        let mut last = 0.0;
        for delta in [0.0, 1e-7, 1e-5, 1e-3, 0.1, 10.0] {
            let (_, rel) = score(100.0 + delta, 100.0, DEFAULT_EPSILON);
            assert!(rel >= last);
            last = rel;
        }
    }

    #[test]
    fn verified_infeasibility_exception() {
        let gt = GroundTruth::Marker(InfeasibleMarker::Infeasible);
        let outcome = PipelineOutcome {
            consensus_status: SolverStatus::Infeasible,
            objective: None,
            validation_passed: None,
            gate_passed: true,
            exhaustive_infeasible: true,
            has_discrete_variables: true,
        };
        let record = score_with_exceptions(&outcome, &instance("i", gt));
        assert!(record.correct);
        assert_eq!(record.exception_rule, ExceptionRule::VerifiedInfeasibility);

        // Without the simulator-backed evidence the exception is withheld.
        let weak = PipelineOutcome { gate_passed: false, ..outcome };
        let record = score_with_exceptions(&weak, &instance("i", gt));
        assert!(!record.correct);
        assert_eq!(record.exception_rule, ExceptionRule::None);
    }

    #[test]
    fn optimal_against_infeasible_ground_truth_is_incorrect() {
        let gt = GroundTruth::Marker(InfeasibleMarker::Infeasible);
        let record = score_with_exceptions(&optimal_outcome(5.0), &instance("i", gt));
        assert!(!record.correct);
    }

    #[test]
    fn unit_mismatch_is_flagged_not_granted() {
        let record = score_with_exceptions(
            &optimal_outcome(0.1),
            &instance("i", GroundTruth::Objective(100.0)),
        );
        assert!(!record.correct);
        assert!(record.review_flags.iter().any(|f| f == "units-mismatch-candidate"));
    }

    #[test]
    fn relaxation_candidates_are_flagged() {
        let record = score_with_exceptions(
            &optimal_outcome(101.0),
            &instance("i", GroundTruth::Objective(100.0)),
        );
        assert!(!record.correct);
        assert!(record.review_flags.iter().any(|f| f == "relaxation-mismatch-candidate"));
    }

    #[test]
    fn all_correct_toy_suite_scores_perfect_accuracy() {
        let instances = vec![
            instance("a", GroundTruth::Objective(1.5)),
            instance("b", GroundTruth::Objective(-2.0)),
            instance("c", GroundTruth::Objective(0.0)),
        ];
        let report = run_suite(
            &instances,
            |i| {
                Ok(optimal_outcome(match i.ground_truth_objective {
                    GroundTruth::Objective(v) => v,
                    _ => unreachable!(),
                }))
            },
            1,
        )
        .unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.accuracy_exact, "3/3");
    }

    #[test]
    fn suite_handles_failures_without_aborting() {
        let instances = vec![
            instance("a", GroundTruth::Objective(1.0)),
            instance("b", GroundTruth::Objective(2.0)),
            instance("c", GroundTruth::Objective(3.0)),
        ];
        let report = run_suite(
            &instances,
            |i| {
                if i.id == "b" {
                    Err("boom".into())
                } else {
                    Ok(optimal_outcome(match i.ground_truth_objective {
                        GroundTruth::Objective(v) => v,
                        _ => unreachable!(),
                    }))
                }
            },
            1,
        )
        .unwrap();
        assert_eq!(report.num_instances, 3);
        assert_eq!(report.num_correct, 2);
        assert_eq!(report.accuracy_exact, "2/3");
        let failed = report.records.iter().find(|r| r.instance_id == "b").unwrap();
        assert!(failed.note.as_deref().unwrap().contains("boom"));
    }

    #[test]
    fn empty_suite_and_duplicate_ids_are_errors() {
        let empty: Vec<BenchmarkInstance> = Vec::new();
        assert!(matches!(
            run_suite(&empty, |_| Err("unused".into()), 1),
            Err(EvalError::EmptySuite)
        ));
        let dupes = vec![
            instance("a", GroundTruth::Objective(1.0)),
            instance("a", GroundTruth::Objective(2.0)),
        ];
        assert!(matches!(
            run_suite(&dupes, |_| Err("unused".into()), 1),
            Err(EvalError::DuplicateId(_))
        ));
    }

    #[test]
    fn parallel_and_serial_reports_agree() {
        let instances: Vec<BenchmarkInstance> = (0..10)
            .map(|i| instance(&format!("i{i:02}"), GroundTruth::Objective(i as f64)))
            .collect();
        let pipeline = |i: &BenchmarkInstance| {
            Ok(optimal_outcome(match i.ground_truth_objective {
                GroundTruth::Objective(v) if v < 5.0 => v,
                GroundTruth::Objective(v) => v + 1.0,
                _ => unreachable!(),
            }))
        };
        let serial = run_suite(&instances, pipeline, 1).unwrap();
        let parallel = run_suite(&instances, pipeline, 4).unwrap();
        assert_eq!(
            serde_json::to_string(&serial).unwrap(),
            serde_json::to_string(&parallel).unwrap()
        );
        assert_eq!(serial.accuracy_exact, "5/10");
        assert_eq!(serial.accuracy, 0.5);
    }
}
