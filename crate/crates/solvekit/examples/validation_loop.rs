//! The asymmetric validation loop: a simulator referees a faulty optimizer
//! until the discrepancy report heals it.
//!
//! ```bash
//! cargo run -p solvekit --example validation_loop
//! ```

use solvekit::consensus::ConsensusConfig;
use solvekit::model::{parse_decision_process, Direction};
use solvekit::providers::{Fault, ScriptedEnsembleDriver, ScriptedVariant, ToyConfig, VariableDomain};
use solvekit::validation::{refinement_loop, simulator_gate, ExprSimulator, ValidationConfig};

fn main() {
    let process = parse_decision_process(
        &serde_json::json!({
            "problem_description": "load two item types under a weight cap",
            "decision_variables": [
                {"name": "a", "type": "INTEGER", "description": "count of item a"},
                {"name": "b", "type": "INTEGER", "description": "count of item b"}
            ],
            "inputs": [],
            "exogenous_variables": [],
            "exogenous_uncertainties": [],
            "state_variables": [],
            "transition_function": "",
            "objective_function": {"direction": "maximize", "expression": "3*a + 4*b", "description": "value"},
            "constraints": [
                {"expression": "2*a + 3*b <= 6", "description": "weight capacity"},
                {"expression": "a >= 0", "description": ""},
                {"expression": "b >= 0", "description": ""}
            ]
        })
        .to_string(),
    )
    .unwrap();
    let domain = VariableDomain { default_bounds: Some((0, 3)), ..Default::default() };

    let simulator = ExprSimulator::new(&process).unwrap();
    let gate = simulator_gate(&simulator, &[], &ValidationConfig::default());
    println!("simulator gate passed: {}", gate.passed);

    // The optimizer drops the capacity constraint until it receives one
    // discrepancy report.
    let variant = ScriptedVariant::faulty(0, Fault::DropConstraint(0), Some(1));
    let mut driver = ScriptedEnsembleDriver::new(vec![variant], domain, ToyConfig::default());

    let (agg, report, iterations) = refinement_loop(
        &process,
        &mut driver,
        &simulator,
        &ValidationConfig::default(),
        &ConsensusConfig { num_variants: 1, direction: Direction::Maximize, ..Default::default() },
    );

    for record in &report.validation_history {
        println!(
            "iteration {}: passed={} issues={:?}",
            record.iteration, record.passed, record.issues_found
        );
    }
    for artifact in &iterations {
        if let Some(discrepancy) = &artifact.discrepancy {
            println!("\ndiscrepancy report fed back to the optimizer:");
            print!("{}", discrepancy.to_text());
        }
    }
    println!(
        "\nfinal: passed={} after {} iterations, objective {:?}",
        report.passed,
        report.num_validation_iterations,
        agg.and_then(|c| c.objective_value)
    );
}
