//! Scripted optimizer drivers built on the toy solver, with injectable
//! faults and scripted healing. These stand in for independently generated
//! optimizer implementations in consensus and refinement-loop tests: a
//! variant can drop a constraint, flip or perturb the objective, or lie
//! about its status, and optionally heal after receiving a given number of
//! discrepancy reports.

use crate::model::{DecisionProcess, SolverRun, SolverStatus};
use crate::providers::{toy_optimize, OptimizerDriver, ProviderError, ToyConfig, VariableDomain};

/// A deliberate defect in one optimizer variant.
#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    /// Solve without constraint `i` (0-based).
    DropConstraint(usize),
    /// Solve with the objective negated.
    FlipObjectiveSign,
    /// Solve honestly, then report the objective shifted by this amount.
    PerturbObjective(f64),
    /// Solve honestly, then report this status instead.
    ReportStatus(SolverStatus),
}

/// One variant of the scripted ensemble.
#[derive(Debug, Clone)]
pub struct ScriptedVariant {
    pub variant_name: String,
    pub solver_name: String,
    pub fault: Option<Fault>,
    /// Heal (stop applying the fault) once this many discrepancy reports
    /// have been received; `None` means the fault never heals.
    pub heal_after_reports: Option<u32>,
}

impl ScriptedVariant {
    pub fn clean(index: usize) -> Self {
        ScriptedVariant {
            variant_name: format!("variant_{}", index + 1),
            solver_name: "toy-bruteforce".into(),
            fault: None,
            heal_after_reports: None,
        }
    }

    pub fn faulty(index: usize, fault: Fault, heal_after_reports: Option<u32>) -> Self {
        ScriptedVariant { fault: Some(fault), heal_after_reports, ..ScriptedVariant::clean(index) }
    }
}

/// Optimizer driver that runs every variant against the toy solver,
/// applying each variant's fault until it heals.
pub struct ScriptedEnsembleDriver {
    variants: Vec<ScriptedVariant>,
    domain: VariableDomain,
    cfg: ToyConfig,
    reports_seen: u32,
}

impl ScriptedEnsembleDriver {
    pub fn new(variants: Vec<ScriptedVariant>, domain: VariableDomain, cfg: ToyConfig) -> Self {
        ScriptedEnsembleDriver { variants, domain, cfg, reports_seen: 0 }
    }

    /// A clean ensemble of `t` identical toy variants.
    pub fn clean(t: usize, domain: VariableDomain, cfg: ToyConfig) -> Self {
        let variants = (0..t).map(ScriptedVariant::clean).collect();
        ScriptedEnsembleDriver::new(variants, domain, cfg)
    }

    pub fn reports_seen(&self) -> u32 {
        self.reports_seen
    }

    fn run_variant(&self, variant: &ScriptedVariant, process: &DecisionProcess) -> SolverRun {
        let healed = variant
            .heal_after_reports
            .map(|h| self.reports_seen >= h)
            .unwrap_or(false);
        let active_fault = if healed { None } else { variant.fault.clone() };

        let mut solved_process = process.clone();
        match &active_fault {
            Some(Fault::DropConstraint(i)) if *i < solved_process.constraints.len() => {
                solved_process.constraints.remove(*i);
            }
            Some(Fault::FlipObjectiveSign) => {
                solved_process.objective_function.expression =
                    format!("-({})", solved_process.objective_function.expression);
            }
            _ => {}
        }

        let mut run = toy_optimize(&solved_process, &self.domain, &self.cfg);
        match &active_fault {
            Some(Fault::PerturbObjective(eps)) => {
                if let Some(v) = run.objective_value.as_mut() {
                    *v += eps;
                }
            }
            Some(Fault::ReportStatus(status)) => {
                run.status = *status;
                if !matches!(status, SolverStatus::Optimal | SolverStatus::TimeLimit) {
                    run.objective_value = None;
                    run.variables.clear();
                }
            }
            _ => {}
        }
        run.variant_name = variant.variant_name.clone();
        run.solver_name = variant.solver_name.clone();
        run
    }
}

impl OptimizerDriver for ScriptedEnsembleDriver {
    fn optimize(
        &mut self,
        process: &DecisionProcess,
        feedback: Option<&str>,
    ) -> Result<Vec<SolverRun>, ProviderError> {
        if feedback.is_some() {
            self.reports_seen += 1;
        }
        Ok(self
            .variants
            .iter()
            .map(|variant| self.run_variant(variant, process))
            .collect())
    }
}

/// Build one single-variant driver per fault, sharing the same domain and
/// caps. Handy for exercising each fault kind in isolation.
pub fn faulty_optimize_variants(
    domain: &VariableDomain,
    cfg: &ToyConfig,
    faults: &[(Option<Fault>, Option<u32>)],
) -> Vec<ScriptedEnsembleDriver> {
    faults
        .iter()
        .enumerate()
        .map(|(i, (fault, heal))| {
            let variant = match fault {
                Some(f) => ScriptedVariant::faulty(i, f.clone(), *heal),
                None => ScriptedVariant::clean(i),
            };
            ScriptedEnsembleDriver::new(vec![variant], domain.clone(), *cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_decision_process;

    fn knapsack() -> DecisionProcess {
        parse_decision_process(
            &serde_json::json!({
                "problem_description": "small knapsack",
                "decision_variables": [
                    {"name": "a", "type": "INTEGER", "description": ""},
                    {"name": "b", "type": "INTEGER", "description": ""}
                ],
                "inputs": [],
                "exogenous_variables": [],
                "exogenous_uncertainties": [],
                "state_variables": [],
                "transition_function": "",
                "objective_function": {"direction": "maximize", "expression": "3*a + 4*b", "description": ""},
                "constraints": [
                    {"expression": "2*a + 3*b <= 6", "description": "capacity"},
                    {"expression": "a >= 0", "description": ""},
                    {"expression": "b >= 0", "description": ""}
                ]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn domain() -> VariableDomain {
        VariableDomain { default_bounds: Some((0, 3)), ..Default::default() }
    }

    #[test]
    fn dropped_constraint_overshoots_until_healed() {
        let variant = ScriptedVariant::faulty(0, Fault::DropConstraint(0), Some(1));
        let mut driver =
            ScriptedEnsembleDriver::new(vec![variant], domain(), ToyConfig::default());
        let process = knapsack();

        let first = driver.optimize(&process, None).unwrap();
        // Without the capacity constraint the grid maximum is (3, 3).
        assert_eq!(first[0].objective_value, Some(21.0));

        let second = driver.optimize(&process, Some("capacity violated")).unwrap();
        assert_eq!(second[0].objective_value, Some(9.0));
    }

    #[test]
    fn perturbed_objective_reports_shifted_value_with_honest_variables() {
        let variant = ScriptedVariant::faulty(0, Fault::PerturbObjective(0.5), None);
        let mut driver =
            ScriptedEnsembleDriver::new(vec![variant], domain(), ToyConfig::default());
        let runs = driver.optimize(&knapsack(), None).unwrap();
        assert_eq!(runs[0].objective_value, Some(9.5));
        assert_eq!(runs[0].variables["a"], 3.0);
    }

    #[test]
    fn flipped_objective_finds_the_wrong_corner() {
        let variant = ScriptedVariant::faulty(0, Fault::FlipObjectiveSign, None);
        let mut driver =
            ScriptedEnsembleDriver::new(vec![variant], domain(), ToyConfig::default());
        let runs = driver.optimize(&knapsack(), None).unwrap();
        // Maximizing the negated objective lands on (0, 0).
        assert_eq!(runs[0].objective_value, Some(0.0));
        assert_eq!(runs[0].variables["a"], 0.0);
    }

    #[test]
    fn status_fault_overrides_and_clears_solution() {
        let variant =
            ScriptedVariant::faulty(0, Fault::ReportStatus(SolverStatus::Infeasible), None);
        let mut driver =
            ScriptedEnsembleDriver::new(vec![variant], domain(), ToyConfig::default());
        let runs = driver.optimize(&knapsack(), None).unwrap();
        assert_eq!(runs[0].status, SolverStatus::Infeasible);
        assert!(runs[0].objective_value.is_none());
    }

    #[test]
    fn clean_ensemble_produces_identical_variants() {
        let mut driver = ScriptedEnsembleDriver::clean(3, domain(), ToyConfig::default());
        let runs = driver.optimize(&knapsack(), None).unwrap();
        assert_eq!(runs.len(), 3);
        assert_eq!(runs[0].variant_name, "variant_1");
        assert_eq!(runs[2].variant_name, "variant_3");
        assert!(runs.iter().all(|r| r.objective_value == Some(9.0)));
    }
}
