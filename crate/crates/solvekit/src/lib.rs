//! Execution-aware pipeline that turns natural-language decision problems
//! into validated optimization solutions.
//!
//! The pipeline coordinates pluggable language-model, embedding, and
//! optimizer providers through a fixed stage graph: structured extraction
//! with component-wise MBR selection and judge re-ranking, diversity-aware
//! retrieval of solved examples, solver recommendation, a self-consistency
//! ensemble over parallel optimizer runs, and an asymmetric validation loop
//! in which an independent simulator referees the optimizer's solution.
//! Fully deterministic offline providers (scripted responses, seeded hash
//! embeddings, a brute-force integer optimizer) make every stage testable
//! and every run replayable byte-for-byte from its provider log.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run -p solvekit --example expression_eval     # parse + evaluate constraints
//! cargo run -p solvekit --example memory_retrieval    # diversity-aware retrieval
//! cargo run -p solvekit --example mbr_selection       # MBR utilities + judge
//! cargo run -p solvekit --example ensemble_consensus  # self-consistency voting
//! cargo run -p solvekit --example validation_loop     # simulator-driven refinement
//! cargo run -p solvekit --example benchmark_eval      # suite scoring
//! cargo run -p solvekit --example solve_end_to_end    # the full pipeline, offline
//! ```
//!
//! The thin `solvekit` binary exposes the same flows as subcommands
//! (`solve`, `evaluate`, `ingest`, `retrieve`, `replay`).

pub mod consensus;
pub mod evaluation;
pub mod expr;
pub mod ground;
pub mod mbr;
pub mod memory;
pub mod model;
pub mod pipeline;
pub mod providers;
pub mod recommend;
pub mod validation;

pub use consensus::{consensus, ConsensusConfig, ConsensusResult, EnsembleReport};
pub use evaluation::{score, score_with_exceptions, run_suite, BenchmarkInstance, SuiteReport};
pub use model::{
    parse_decision_process, serialize_decision_process, DecisionProcess, Direction, SolverRun,
    SolverStatus,
};
pub use pipeline::{replay_run, Pipeline, RunConfig, SolveBundle};
pub use validation::{
    discrepancy_report, refinement_loop, simulator_gate, validate, ExprSimulator, Simulator,
    ValidationConfig, ValidationReport,
};
