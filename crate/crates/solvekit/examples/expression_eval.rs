//! Parse, print, and evaluate objective and constraint expressions.
//!
//! ```bash
//! cargo run -p solvekit --example expression_eval
//! ```

use std::collections::BTreeMap;

use solvekit::expr::{eval_arith, eval_constraint, parse_expr, Environment, InputTensor};

fn main() {
    let objective = parse_expr(
        "sum(transportation_costs[i][j] * x[i,j] for i in regions for j in regions if i != j)",
    )
    .unwrap();
    println!("parsed objective (canonical form):\n  {objective}\n");

    // A 3-region toy instance: region 1 ships to 2 and 3.
    let mut env = Environment::default();
    env.inputs.insert(
        "transportation_costs".into(),
        InputTensor::from_json(&serde_json::json!([[0, 4, 7], [5, 0, 2], [9, 3, 0]])).unwrap(),
    );
    env.inputs.insert(
        "need".into(),
        InputTensor::from_json(&serde_json::json!([0, 5, 2])).unwrap(),
    );
    env.index_sets.insert("regions".into(), vec![1, 2, 3]);
    let mut assignment = BTreeMap::new();
    for i in 1..=3 {
        for j in 1..=3 {
            if i != j {
                assignment.insert(format!("x[{i},{j}]"), 0.0);
            }
        }
    }
    assignment.insert("x[1,2]".into(), 5.0);
    assignment.insert("x[1,3]".into(), 2.0);
    env.assignment = assignment;

    let cost = eval_arith(&objective, &env).unwrap();
    println!("total cost of the shipment plan: {cost}");

    let requirement =
        parse_expr("sum(x[j,i] for j in regions if j != i) >= need[i] for all i in regions")
            .unwrap();
    let violations = eval_constraint(&requirement, &env).unwrap();
    println!("requirement violations: {}", violations.len());

    // Drop a shipment and watch the violation appear with its bindings.
    env.assignment.insert("x[1,3]".into(), 0.0);
    for v in eval_constraint(&requirement, &env).unwrap() {
        println!(
            "  violated at {:?}: {} {} {}",
            v.bindings, v.lhs, v.op, v.rhs
        );
    }
}
