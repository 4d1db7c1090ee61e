//! The full offline pipeline on the six-region food redistribution
//! problem: scripted extraction candidates, MBR + judge selection, solver
//! recommendation, simulator gate, brute-force ensemble, consensus, and
//! validation — then a byte-identical replay from the provider log.
//!
//! ```bash
//! cargo run -p solvekit --example solve_end_to_end
//! ```

use std::path::Path;

use solvekit::pipeline::{replay_run, Pipeline, RunConfig};

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let cfg = RunConfig::load(&fixtures.join("config_food.toml")).unwrap();
    let problem = std::fs::read_to_string(fixtures.join("food_problem.txt")).unwrap();

    let workspace = tempfile::tempdir().unwrap();
    let run_dir = workspace.path().join("run");
    let mut pipeline = Pipeline::create(cfg, &run_dir, false).unwrap();
    let bundle = pipeline.solve(&problem).unwrap();
    drop(pipeline);

    println!("stages:");
    for stage in &bundle.stages {
        println!("  {:<18} {}", stage.name, stage.status);
    }
    println!("\nselected extraction candidate: {:?}", bundle.selected_candidate_id);
    println!(
        "recommended backend: {}",
        bundle.recommendations.first().map(|r| r.solver.as_str()).unwrap_or("-")
    );

    let consensus = bundle.consensus.as_ref().expect("consensus present");
    println!(
        "consensus: status {}, objective {:?} (agreement {}/{})",
        consensus.status,
        consensus.objective_value,
        consensus.objective_agreement,
        consensus.num_variants
    );
    let nonzero: Vec<String> = consensus
        .variables
        .iter()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    println!("active shipments: {}", nonzero.join(", "));

    let validation = bundle.validation.as_ref().expect("validation present");
    println!(
        "validation: passed={} in {} iteration(s), optimizer/simulator difference {:?}",
        validation.passed,
        validation.num_validation_iterations,
        validation.objective_verification.difference
    );

    let replay_dir = workspace.path().join("replayed");
    let outcome = replay_run(&run_dir, &replay_dir).unwrap();
    println!("\nreplay from the provider log is byte-identical: {}", outcome.identical);
}
