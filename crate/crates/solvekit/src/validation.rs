//! Simulator-side cross-checking of optimizer output and the bounded
//! refinement loop.
//!
//! Verifying a candidate solution (evaluate constraints, recompute the
//! objective) is far cheaper than producing one, so an independent
//! simulator makes an effective referee: a consensus solution passes only
//! if it is feasible under the simulator and both sides agree on the
//! objective within `atol + rtol * |F_opt|`. On failure, a structured
//! discrepancy report is handed back to the optimizer driver for the next
//! attempt, up to a fixed iteration budget.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{consensus, ConsensusConfig, ConsensusResult};
use crate::expr::{eval_arith, eval_constraint, EvalError, Expr};
use crate::ground::{build_environment, instantiate_variables, GroundError};
use crate::model::DecisionProcess;
use crate::providers::OptimizerDriver;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("assignment is missing variable `{0}`")]
    MissingVariable(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error("simulator gate failed:\n{0}")]
    GateFailed(String),
}

/// Tolerances and the refinement budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_iterations: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { rtol: 1e-6, atol: 1e-9, max_iterations: 3 }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if self.rtol < 0.0 || self.atol < 0.0 {
            return Err("rtol and atol must be non-negative".into());
        }
        Ok(())
    }

    /// The acceptance band for a given optimizer objective.
    pub fn delta(&self, f_opt: f64) -> f64 {
        self.atol + self.rtol * f_opt.abs()
    }
}

/// One violated constraint instantiation with its context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationDetail {
    pub constraint_index: usize,
    pub description: String,
    pub expression: String,
    pub bindings: BTreeMap<String, i64>,
    pub lhs: f64,
    pub rhs: f64,
    pub op: String,
}

/// Simulator output for one candidate assignment. Feasible iff the
/// violation list is empty iff the objective is present (the objective is
/// taken as infinite when infeasible).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorVerdict {
    pub feasible: bool,
    pub objective: Option<f64>,
    pub violations: Vec<ViolationDetail>,
}

impl SimulatorVerdict {
    /// F_sim as a number, infinite when infeasible.
    pub fn objective_or_infinity(&self) -> f64 {
        self.objective.unwrap_or(f64::INFINITY)
    }
}

/// Executable reference model: evaluates a candidate assignment against
/// the declared constraints and objective.
pub trait Simulator {
    fn variables(&self) -> &BTreeSet<String>;
    fn evaluate(&self, assignment: &BTreeMap<String, f64>) -> Result<SimulatorVerdict, ValidationError>;
}

/// Simulator derived mechanically from a decision process via the
/// expression evaluator. An externally supplied simulator can replace it
/// behind the [`Simulator`] trait.
pub struct ExprSimulator {
    process: DecisionProcess,
    objective: Expr,
    constraints: Vec<Expr>,
    variables: BTreeSet<String>,
    index_sets: BTreeMap<String, Vec<i64>>,
}

impl ExprSimulator {
    pub fn new(process: &DecisionProcess) -> Result<Self, ValidationError> {
        Self::with_index_sets(process, None)
    }

    pub fn with_index_sets(
        process: &DecisionProcess,
        index_sets: Option<&BTreeMap<String, Vec<i64>>>,
    ) -> Result<Self, ValidationError> {
        let env = build_environment(process, BTreeMap::new(), index_sets)?;
        let variables = instantiate_variables(process, &env)?;
        let objective = process.objective_expr().map_err(GroundError::Model)?;
        let constraints = process.constraint_exprs().map_err(GroundError::Model)?;
        Ok(ExprSimulator {
            process: process.clone(),
            objective,
            constraints,
            variables,
            index_sets: env.index_sets,
        })
    }
}

impl Simulator for ExprSimulator {
    fn variables(&self) -> &BTreeSet<String> {
        &self.variables
    }

    /// Check every constraint, then evaluate the objective only when
    /// feasible. The assignment must cover every instantiated variable;
    /// extra entries are tolerated.
    fn evaluate(
        &self,
        assignment: &BTreeMap<String, f64>,
    ) -> Result<SimulatorVerdict, ValidationError> {
        for name in &self.variables {
            if !assignment.contains_key(name) {
                return Err(ValidationError::MissingVariable(name.clone()));
            }
        }
        let env = crate::expr::Environment {
            inputs: self.process.input_tensors().map_err(GroundError::Model)?,
            assignment: assignment.clone(),
            index_sets: self.index_sets.clone(),
        };
        let mut violations = Vec::new();
        for (index, constraint) in self.constraints.iter().enumerate() {
            for v in eval_constraint(constraint, &env)? {
                violations.push(ViolationDetail {
                    constraint_index: index,
                    description: self.process.constraints[index].description.clone(),
                    expression: self.process.constraints[index].expression.clone(),
                    bindings: v.bindings,
                    lhs: v.lhs,
                    rhs: v.rhs,
                    op: v.op,
                });
            }
        }
        let feasible = violations.is_empty();
        let objective =
            if feasible { Some(eval_arith(&self.objective, &env)?) } else { None };
        Ok(SimulatorVerdict { feasible, objective, violations })
    }
}

/// The validation predicate: feasible and objective agreement within
/// `delta = atol + rtol * |f_opt|`. Returns the verdict bit and delta.
pub fn validate(f_opt: f64, verdict: &SimulatorVerdict, cfg: &ValidationConfig) -> (bool, f64) {
    let delta = cfg.delta(f_opt);
    let passes = verdict.feasible
        && match verdict.objective {
            Some(f_sim) => (f_sim - f_opt).abs() <= delta,
            None => false,
        };
    (passes, delta)
}

/// The objective half of a discrepancy report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveMismatch {
    pub optimizer_value: f64,
    pub simulator_value: Option<f64>,
    pub difference: Option<f64>,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

/// Structured error report for a failed validation: every violated
/// constraint (constraint order, then binding order) plus the objective
/// comparison. Rendering is deterministic and byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub constraint_violations: Vec<ViolationDetail>,
    pub objective: ObjectiveMismatch,
}

impl DiscrepancyReport {
    pub fn issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        for v in &self.constraint_violations {
            let bindings = if v.bindings.is_empty() {
                String::new()
            } else {
                let pairs: Vec<String> =
                    v.bindings.iter().map(|(k, val)| format!("{k}={val}")).collect();
                format!(" at {}", pairs.join(", "))
            };
            issues.push(format!(
                "constraint {} ({}) violated{}: {} {} {} fails",
                v.constraint_index, v.description, bindings, v.lhs, v.op, v.rhs
            ));
        }
        if !self.objective.within_tolerance {
            match (self.objective.simulator_value, self.objective.difference) {
                (Some(sim), Some(diff)) => issues.push(format!(
                    "objective mismatch: optimizer {} vs simulator {} (difference {}, tolerance {})",
                    self.objective.optimizer_value, sim, diff, self.objective.tolerance
                )),
                _ => issues.push(format!(
                    "objective unverifiable: optimizer {} but the solution is infeasible under simulation",
                    self.objective.optimizer_value
                )),
            }
        }
        issues
    }

    /// Text form injected into the optimizer driver as refinement feedback.
    pub fn to_text(&self) -> String {
        let mut out = String::from("validation failed\n");
        if !self.constraint_violations.is_empty() {
            out.push_str("violated constraints:\n");
            for issue in self.issues() {
                if issue.starts_with("constraint") {
                    out.push_str("  - ");
                    out.push_str(&issue);
                    out.push('\n');
                }
            }
        }
        if !self.objective.within_tolerance {
            out.push_str("objective check:\n");
            for issue in self.issues() {
                if issue.starts_with("objective") {
                    out.push_str("  - ");
                    out.push_str(&issue);
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Build the discrepancy report for a failed validation.
pub fn discrepancy_report(
    verdict: &SimulatorVerdict,
    f_opt: f64,
    cfg: &ValidationConfig,
) -> DiscrepancyReport {
    let delta = cfg.delta(f_opt);
    let difference = verdict.objective.map(|sim| (sim - f_opt).abs());
    let within_tolerance = matches!(difference, Some(d) if d <= delta);
    DiscrepancyReport {
        constraint_violations: verdict.violations.clone(),
        objective: ObjectiveMismatch {
            optimizer_value: f_opt,
            simulator_value: verdict.objective,
            difference,
            tolerance: delta,
            within_tolerance,
        },
    }
}

/// One gate check: an assignment (optionally padded with a default value
/// for unlisted variables) and what the simulator is expected to say.
/// Checks with no expectations only assert that simulation succeeds and
/// the verdict is internally consistent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimulatorCheck {
    #[serde(default)]
    pub assignment: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment_default: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_feasible: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_objective: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateCheckResult {
    pub index: usize,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of the simulator self-check gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateReport {
    pub passed: bool,
    pub results: Vec<GateCheckResult>,
}

fn padded_assignment(check: &SimulatorCheck, variables: &BTreeSet<String>) -> BTreeMap<String, f64> {
    let mut assignment = check.assignment.clone();
    if let Some(default) = check.assignment_default {
        for name in variables {
            assignment.entry(name.clone()).or_insert(default);
        }
    }
    assignment
}

/// Run the consistency checks that qualify a simulator as a validation
/// reference. With no checks supplied, a default all-zero probe is used
/// (expectation-free: it must simulate without error and produce an
/// internally consistent verdict). Gate failure blocks the refinement
/// loop.
pub fn simulator_gate(
    simulator: &dyn Simulator,
    checks: &[SimulatorCheck],
    cfg: &ValidationConfig,
) -> GateReport {
    let default_checks;
    let checks = if checks.is_empty() {
        default_checks = vec![SimulatorCheck {
            assignment_default: Some(0.0),
            ..SimulatorCheck::default()
        }];
        &default_checks
    } else {
        checks
    };

    let mut results = Vec::new();
    for (index, check) in checks.iter().enumerate() {
        let assignment = padded_assignment(check, simulator.variables());
        let (passed, detail) = match simulator.evaluate(&assignment) {
            Err(e) => (false, format!("simulation error: {e}")),
            Ok(verdict) => {
                let consistent = verdict.feasible == verdict.violations.is_empty()
                    && verdict.feasible == verdict.objective.is_some();
                if !consistent {
                    (false, "verdict violates its own invariant".to_string())
                } else if let Some(expected) = check.expect_feasible {
                    if verdict.feasible != expected {
                        (
                            false,
                            format!(
                                "expected feasible={expected}, simulator says {}",
                                verdict.feasible
                            ),
                        )
                    } else {
                        match (check.expected_objective, verdict.objective) {
                            (Some(want), Some(got))
                                if (got - want).abs() > cfg.delta(want) =>
                            {
                                (false, format!("expected objective {want}, got {got}"))
                            }
                            (Some(want), None) => {
                                (false, format!("expected objective {want}, got none"))
                            }
                            _ => (true, "ok".to_string()),
                        }
                    }
                } else {
                    (true, "ok".to_string())
                }
            }
        };
        results.push(GateCheckResult { index, passed, detail });
    }
    GateReport { passed: results.iter().all(|r| r.passed), results }
}

/// The objective comparison block of the validation report. `match` in the
/// emitted JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVerification {
    pub optimizer_value: Option<f64>,
    pub simulator_value: Option<f64>,
    pub difference: Option<f64>,
    #[serde(rename = "match")]
    pub is_match: bool,
}

/// One refinement iteration's ledger entry (0-based indices in the
/// emitted JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub passed: bool,
    pub issues_found: Vec<String>,
    pub fixes_applied: Vec<String>,
}

/// The validation output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub num_validation_iterations: usize,
    pub objective_verification: ObjectiveVerification,
    pub constraint_violations: Vec<ViolationDetail>,
    pub validation_history: Vec<IterationRecord>,
}

/// Per-iteration artifacts the orchestrator persists.
#[derive(Debug, Clone)]
pub struct IterationArtifacts {
    pub iteration: usize,
    pub runs: Vec<crate::model::SolverRun>,
    pub consensus: ConsensusResult,
    pub discrepancy: Option<DiscrepancyReport>,
}

/// Run optimizer → consensus → simulate → validate, feeding the
/// discrepancy report back into the optimizer on failure, until validation
/// passes or the iteration budget is exhausted. Optimizer errors are
/// recorded as failed iterations, never surfaced as crashes.
pub fn refinement_loop(
    process: &DecisionProcess,
    driver: &mut dyn OptimizerDriver,
    simulator: &dyn Simulator,
    validation_cfg: &ValidationConfig,
    consensus_cfg: &ConsensusConfig,
) -> (Option<ConsensusResult>, ValidationReport, Vec<IterationArtifacts>) {
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut artifacts: Vec<IterationArtifacts> = Vec::new();
    let mut feedback: Option<String> = None;
    let mut last_consensus: Option<ConsensusResult> = None;
    let mut last_verification = ObjectiveVerification {
        optimizer_value: None,
        simulator_value: None,
        difference: None,
        is_match: false,
    };
    let mut last_violations: Vec<ViolationDetail> = Vec::new();

    for iteration in 0..validation_cfg.max_iterations {
        let fixes_applied = if iteration > 0 {
            vec![format!(
                "optimizer rerun with the discrepancy report from iteration {}",
                iteration - 1
            )]
        } else {
            Vec::new()
        };

        let runs = match driver.optimize(process, feedback.as_deref()) {
            Ok(runs) => runs,
            Err(e) => {
                history.push(IterationRecord {
                    iteration,
                    passed: false,
                    issues_found: vec![format!("optimizer error: {e}")],
                    fixes_applied,
                });
                feedback = None;
                continue;
            }
        };

        let agg = consensus(&runs, consensus_cfg);
        let mut record = IterationRecord {
            iteration,
            passed: false,
            issues_found: Vec::new(),
            fixes_applied,
        };

        let outcome = match (agg.objective_value, agg.variables.is_empty()) {
            (Some(f_opt), false) => Some((f_opt, agg.variables.clone())),
            _ => None,
        };
        match outcome {
            None => {
                record.issues_found.push(format!(
                    "no candidate solution to validate (consensus status {})",
                    agg.status
                ));
                artifacts.push(IterationArtifacts {
                    iteration,
                    runs,
                    consensus: agg.clone(),
                    discrepancy: None,
                });
                last_consensus = Some(agg);
                feedback = None;
                history.push(record);
            }
            Some((f_opt, variables)) => match simulator.evaluate(&variables) {
                Err(e) => {
                    record.issues_found.push(format!("simulation error: {e}"));
                    artifacts.push(IterationArtifacts {
                        iteration,
                        runs,
                        consensus: agg.clone(),
                        discrepancy: None,
                    });
                    last_consensus = Some(agg);
                    feedback = None;
                    history.push(record);
                }
                Ok(verdict) => {
                    let (passed, _delta) = validate(f_opt, &verdict, validation_cfg);
                    last_verification = ObjectiveVerification {
                        optimizer_value: Some(f_opt),
                        simulator_value: verdict.objective,
                        difference: verdict.objective.map(|sim| (sim - f_opt).abs()),
                        is_match: passed,
                    };
                    last_violations = verdict.violations.clone();
                    if passed {
                        record.passed = true;
                        history.push(record);
                        artifacts.push(IterationArtifacts {
                            iteration,
                            runs,
                            consensus: agg.clone(),
                            discrepancy: None,
                        });
                        last_consensus = Some(agg);
                        let report = ValidationReport {
                            passed: true,
                            num_validation_iterations: history.len(),
                            objective_verification: last_verification,
                            constraint_violations: last_violations,
                            validation_history: history,
                        };
                        return (last_consensus, report, artifacts);
                    }
                    let report = discrepancy_report(&verdict, f_opt, validation_cfg);
                    record.issues_found = report.issues();
                    feedback = Some(report.to_text());
                    artifacts.push(IterationArtifacts {
                        iteration,
                        runs,
                        consensus: agg.clone(),
                        discrepancy: Some(report),
                    });
                    last_consensus = Some(agg);
                    history.push(record);
                }
            },
        }
    }

    let report = ValidationReport {
        passed: false,
        num_validation_iterations: history.len(),
        objective_verification: last_verification,
        constraint_violations: last_violations,
        validation_history: history,
    };
    (last_consensus, report, artifacts)
}
