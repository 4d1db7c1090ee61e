//! Aggregate three optimizer variant runs into a consensus solution and
//! emit the ensemble report document.
//!
//! ```bash
//! cargo run -p solvekit --example ensemble_consensus
//! ```

use std::collections::BTreeMap;

use solvekit::consensus::{consensus, ConsensusConfig};
use solvekit::model::{SolverRun, SolverStatus};

fn main() {
    let variables: BTreeMap<String, f64> = [
        ("x[3,6]", 361.0),
        ("x[4,1]", 32.0),
        ("x[6,2]", 444.0),
        ("x[6,4]", 43.0),
        ("x[6,5]", 11.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let run = |name: &str, solver: &str, objective: f64, time: f64| SolverRun {
        variant_name: name.into(),
        variables: variables.clone(),
        objective_value: Some(objective),
        status: SolverStatus::Optimal,
        solver_name: solver.into(),
        solve_time: time,
        iterations: 12,
        gap: Some(0.0),
    };

    // Three independent implementations of the same model; the middle one
    // carries solver round-off in its objective.
    let runs = vec![
        run("variant_1", "Gurobi", 8090.0, 0.0019),
        run("variant_2", "CVXPY (ECOS)", 8090.00000015, 0.0359),
        run("variant_3", "OR-Tools (GLOP)", 8090.0, 0.0016),
    ];

    let cfg = ConsensusConfig { num_variants: 3, ..Default::default() };
    let result = consensus(&runs, &cfg);
    println!(
        "consensus: status {}, objective {:?}, variables from {:?}",
        result.status, result.objective_value, result.source_variant
    );
    println!(
        "agreement: {}/{} runs in the winning cluster ({} unique objective groups)",
        result.objective_agreement, result.num_variants, result.num_unique_objectives
    );

    println!("\nensemble report document:");
    let report = result.to_ensemble_report();
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
