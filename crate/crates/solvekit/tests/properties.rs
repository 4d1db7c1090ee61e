//! Property tests for the invariants that hold over whole input
//! families rather than single fixtures.

use std::collections::BTreeMap;

use proptest::prelude::*;

use solvekit::consensus::{cluster_objectives, consensus, ConsensusConfig};
use solvekit::evaluation::score;
use solvekit::expr::{parse_expr, Expr, Generator, SetRef};
use solvekit::memory::{cosine_similarity, MemoryEntry, MemoryStore, ProblemType, RetrievalConfig};
use solvekit::model::{SolverRun, SolverStatus};

// ---------------------------------------------------------------------------
// Expression round trips
// ---------------------------------------------------------------------------

fn ident_strategy() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "x".to_string(),
        "cost".into(),
        "need".into(),
        "supply".into(),
        "y2".into(),
    ])
}

fn index_var_strategy() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["i".to_string(), "j".into(), "k".into()])
}

fn set_strategy() -> impl Strategy<Value = SetRef> {
    prop_oneof![
        prop::sample::select(vec!["rows".to_string(), "cols".into()]).prop_map(SetRef::Named),
        (0i64..4, 4i64..8).prop_map(|(a, b)| SetRef::Range {
            start: Box::new(Expr::Number(a as f64)),
            end: Box::new(Expr::Number(b as f64)),
        }),
    ]
}

/// Trees restricted to what the parser itself can produce (no negative
/// number literals; quantifiers only at top level).
fn arith_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|n| Expr::Number(n as f64)),
        (0u32..100).prop_map(|n| Expr::Number(n as f64 / 8.0)),
        ident_strategy().prop_map(Expr::Ident),
        (ident_strategy(), prop::collection::vec(index_var_strategy(), 1..3)).prop_map(
            |(base, subs)| Expr::Index {
                base,
                subscripts: subs.into_iter().map(Expr::Ident).collect(),
            }
        ),
    ];
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), 0usize..4).prop_map(|(lhs, rhs, op)| {
                use solvekit::expr::BinOp::*;
                let op = [Add, Sub, Mul, Div][op];
                Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
            }),
            inner.clone().prop_map(|operand| Expr::Unary {
                op: solvekit::expr::UnaryOp::Neg,
                operand: Box::new(operand),
            }),
            (inner, prop::collection::vec((index_var_strategy(), set_strategy()), 1..3))
                .prop_map(|(body, gens)| {
                    let generators =
                        gens.into_iter().map(|(var, set)| Generator { var, set }).collect();
                    Expr::Sum { body: Box::new(body), generators, filter: None }
                }),
        ]
    })
}

fn toplevel_strategy() -> impl Strategy<Value = Expr> {
    prop_oneof![
        arith_strategy(),
        (arith_strategy(), arith_strategy(), 0usize..6).prop_map(|(lhs, rhs, op)| {
            use solvekit::expr::CmpOp::*;
            let op = [Le, Ge, Eq, Ne, Lt, Gt][op];
            Expr::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
        }),
        (
            arith_strategy(),
            arith_strategy(),
            prop::collection::vec((index_var_strategy(), set_strategy()), 1..3)
        )
            .prop_map(|(lhs, rhs, gens)| {
                let body = Expr::Compare {
                    op: solvekit::expr::CmpOp::Le,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                };
                let generators =
                    gens.into_iter().map(|(var, set)| Generator { var, set }).collect();
                Expr::ForAll { body: Box::new(body), generators, filter: None }
            }),
    ]
}

proptest! {
    #[test]
    fn printed_expressions_reparse_to_the_same_tree(expr in toplevel_strategy()) {
        let printed = expr.to_string();
        let reparsed = parse_expr(&printed)
            .unwrap_or_else(|e| panic!("printed form failed to parse: {printed:?}: {e}"));
        prop_assert_eq!(&reparsed, &expr);
        prop_assert_eq!(reparsed.to_string(), printed);
    }
}

// ---------------------------------------------------------------------------
// Retrieval invariants
// ---------------------------------------------------------------------------

fn entry_pool(vectors: &[Vec<f64>]) -> Vec<MemoryEntry> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| MemoryEntry {
            id: format!("e{i:02}"),
            description: String::new(),
            formulation: String::new(),
            code: String::new(),
            problem_type: ProblemType::Miscellaneous,
            embedding: v.clone(),
        })
        .collect()
}

fn nonzero_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 3)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn diversity_selection_size_and_uniqueness(
        vectors in prop::collection::vec(nonzero_vector(), 1..8),
        query in nonzero_vector(),
        k in 1usize..6,
        lambda in 0.0f64..=1.0,
    ) {
        let pool = entry_pool(&vectors);
        let query_sim: BTreeMap<String, f64> = pool
            .iter()
            .map(|e| (e.id.clone(), cosine_similarity(&query, &e.embedding).unwrap()))
            .collect();
        let cfg = RetrievalConfig {
            pool_size: 10,
            select_k: k,
            lambda,
            similarity_threshold: -1.0,
        };
        let picked = MemoryStore::diversity_select(&query_sim, &pool, &cfg).unwrap();
        prop_assert_eq!(picked.len(), k.min(pool.len()));
        let mut ids: Vec<&str> = picked.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), picked.len(), "selection contains duplicates");
    }

    #[test]
    fn greedy_steps_are_locally_optimal(
        vectors in prop::collection::vec(nonzero_vector(), 2..8),
        query in nonzero_vector(),
        lambda in 0.0f64..=1.0,
    ) {
        let pool = entry_pool(&vectors);
        let query_sim: BTreeMap<String, f64> = pool
            .iter()
            .map(|e| (e.id.clone(), cosine_similarity(&query, &e.embedding).unwrap()))
            .collect();
        let cfg = RetrievalConfig {
            pool_size: 10,
            select_k: pool.len(),
            lambda,
            similarity_threshold: -1.0,
        };
        let picked = MemoryStore::diversity_select(&query_sim, &pool, &cfg).unwrap();
        // At every step t >= 2 the chosen entry's score is >= every
        // unchosen entry's score at that step.
        for t in 1..picked.len() {
            let selected = &picked[..t];
            let score_of = |entry: &MemoryEntry| {
                let mean: f64 = selected
                    .iter()
                    .map(|m| cosine_similarity(&entry.embedding, &m.embedding).unwrap())
                    .sum::<f64>()
                    / selected.len() as f64;
                query_sim[&entry.id] - lambda * mean
            };
            let chosen_score = score_of(&picked[t]);
            for unchosen in pool.iter().filter(|e| !picked[..=t].iter().any(|p| p.id == e.id)) {
                prop_assert!(
                    chosen_score >= score_of(unchosen) - 1e-12,
                    "step {}: unchosen {} outranks chosen {}",
                    t,
                    unchosen.id,
                    picked[t].id
                );
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Consensus invariants
// ---------------------------------------------------------------------------

fn run_strategy() -> impl Strategy<Value = SolverRun> {
    (
        0usize..5,
        prop::option::of(-100.0f64..100.0),
        0.0f64..1.0,
        0u8..100,
    )
        .prop_map(|(status_idx, objective, solve_time, salt)| SolverRun {
            variant_name: format!("v{salt:03}"),
            variables: BTreeMap::from([("x".to_string(), salt as f64)]),
            objective_value: objective,
            status: SolverStatus::ALL[status_idx],
            solver_name: "s".into(),
            solve_time,
            iterations: 0,
            gap: None,
        })
}

proptest! {
    #[test]
    fn consensus_is_permutation_invariant(
        mut runs in prop::collection::vec(run_strategy(), 1..6),
        rotation in 0usize..6,
    ) {
        // Unique names keep the multiset well-defined.
        for (i, run) in runs.iter_mut().enumerate() {
            run.variant_name = format!("v{i}");
        }
        let cfg = ConsensusConfig { num_variants: runs.len(), ..Default::default() };
        let baseline = consensus(&runs, &cfg);
        let mut permuted = runs.clone();
        let shift = rotation % permuted.len().max(1);
        permuted.rotate_left(shift);
        prop_assert_eq!(consensus(&permuted, &cfg), baseline.clone());
        permuted.reverse();
        prop_assert_eq!(consensus(&permuted, &cfg), baseline);
    }

    #[test]
    fn consensus_solution_comes_from_an_input_run(
        mut runs in prop::collection::vec(run_strategy(), 1..6),
    ) {
        for (i, run) in runs.iter_mut().enumerate() {
            run.variant_name = format!("v{i}");
        }
        let cfg = ConsensusConfig { num_variants: runs.len(), ..Default::default() };
        let result = consensus(&runs, &cfg);
        if matches!(result.status, SolverStatus::Optimal | SolverStatus::TimeLimit) {
            if let Some(objective) = result.objective_value {
                // Never averaged: the (variables, objective) pair is taken
                // verbatim from a contributing run.
                let verbatim = runs.iter().any(|r| {
                    r.objective_value == Some(objective) && r.variables == result.variables
                });
                prop_assert!(verbatim);
            }
        }
        prop_assert!(result.objective_agreement_ratio >= 0.0);
        prop_assert!(result.objective_agreement_ratio <= 1.0);
    }

    #[test]
    fn clusters_partition_the_input(
        values in prop::collection::vec(-10.0f64..10.0, 0..8),
    ) {
        let cfg = ConsensusConfig::default();
        let labeled: Vec<(String, f64)> = values
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("v{i}"), *v))
            .collect();
        let clusters = cluster_objectives(&labeled, &cfg);
        let total: usize = clusters.iter().map(|c| c.len()).sum();
        prop_assert_eq!(total, values.len());
        let mut flattened: Vec<f64> = clusters.iter().flatten().map(|(_, v)| *v).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        // Sweep order is ascending, so flattening preserves the sort.
        prop_assert_eq!(flattened.clone(), {
            flattened.sort_by(f64::total_cmp);
            flattened
        });
        prop_assert_eq!(
            clusters.iter().flatten().map(|(_, v)| *v).collect::<Vec<_>>().len(),
            sorted.len()
        );
    }
}

// ---------------------------------------------------------------------------
// Scoring monotonicity
// ---------------------------------------------------------------------------

proptest! {
    #[test]
    fn relative_error_is_monotone_in_distance(
        ground_truth in -1e6f64..1e6,
        d1 in 0.0f64..100.0,
        d2 in 0.0f64..100.0,
    ) {
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let (_, rel_near) = score(ground_truth + near, ground_truth, 1e-8);
        let (correct_far, rel_far) = score(ground_truth + far, ground_truth, 1e-8);
        prop_assert!(rel_near <= rel_far);
        if correct_far {
            let (correct_near, _) = score(ground_truth + near, ground_truth, 1e-8);
            prop_assert!(correct_near, "moving closer must never flip correct to incorrect");
        }
    }
}
