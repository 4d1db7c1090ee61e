use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{BinOp, CmpOp, Expr, Generator, SetRef, UnaryOp};

/// Slack applied to `<=`, `>=`, `==`, and `!=` comparisons so solver
/// round-off does not produce spurious violations. Strict `<` and `>` are
/// compared exactly.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Evaluation failure. Lookup of an unbound identifier is always an error,
/// never silently zero.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    UnboundIdentifier(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("index {index} out of range for `{name}` (length {len}, 1-based)")]
    IndexOutOfRange { name: String, index: i64, len: usize },
    #[error("`{0}` cannot be indexed")]
    NotIndexable(String),
    #[error("`{0}` does not evaluate to a scalar (missing subscripts?)")]
    NotAScalar(String),
    #[error("index value {0} is not an integer")]
    NonIntegerIndex(f64),
    #[error("unknown index set `{0}`")]
    UnknownIndexSet(String),
    #[error("expected a comparison, found an arithmetic expression")]
    NotAConstraint,
    #[error("comparison nested inside an arithmetic expression")]
    ComparisonInArithmetic,
}

/// Scalar-or-nested-list input value. Rectangularity is validated when
/// constructed from JSON.
#[derive(Debug, Clone, PartialEq)]
pub enum InputTensor {
    Scalar(f64),
    List(Vec<InputTensor>),
}

impl InputTensor {
    /// Convert a JSON value, requiring numbers or rectangular nested lists
    /// of numbers (all rows of equal length at every depth).
    pub fn from_json(value: &serde_json::Value) -> Result<Self, String> {
        match value {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(InputTensor::Scalar)
                .ok_or_else(|| format!("number {n} is not representable as f64")),
            serde_json::Value::Array(items) => {
                let converted: Result<Vec<_>, _> =
                    items.iter().map(InputTensor::from_json).collect();
                let converted = converted?;
                if let Some(first) = converted.first() {
                    let shape = first.shape();
                    for item in &converted[1..] {
                        if item.shape() != shape {
                            return Err("nested list is not rectangular".into());
                        }
                    }
                }
                Ok(InputTensor::List(converted))
            }
            other => Err(format!("expected a number or nested list, found {other}")),
        }
    }

    /// Dimension extents: `[]` for a scalar, `[rows, cols, ...]` for lists.
    pub fn shape(&self) -> Vec<usize> {
        match self {
            InputTensor::Scalar(_) => Vec::new(),
            InputTensor::List(items) => {
                let mut dims = vec![items.len()];
                if let Some(first) = items.first() {
                    dims.extend(first.shape());
                }
                dims
            }
        }
    }
}

/// Everything an expression can reference: input data, a candidate
/// assignment to the decision variables, and named index sets. Values are
/// immutable during evaluation.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    pub inputs: BTreeMap<String, InputTensor>,
    pub assignment: BTreeMap<String, f64>,
    pub index_sets: BTreeMap<String, Vec<i64>>,
}

/// One failed constraint instantiation: the quantified index bindings plus
/// the evaluated values of both sides.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Violation {
    pub bindings: BTreeMap<String, i64>,
    pub lhs: f64,
    pub rhs: f64,
    pub op: String,
}

/// Canonical name of an instantiated variable, e.g. `x[3,6]`.
pub fn canonical_var_name(base: &str, indices: &[i64]) -> String {
    if indices.is_empty() {
        return base.to_string();
    }
    let subs: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
    format!("{base}[{}]", subs.join(","))
}

/// Comparison semantics shared by the simulator, the gate, and the toy
/// optimizer: inequality and equality comparisons absorb round-off up to
/// [`FEASIBILITY_SLACK`]; strict comparisons are exact.
pub fn comparison_holds(op: CmpOp, lhs: f64, rhs: f64) -> bool {
    match op {
        CmpOp::Le => lhs <= rhs + FEASIBILITY_SLACK,
        CmpOp::Ge => lhs + FEASIBILITY_SLACK >= rhs,
        CmpOp::Eq => (lhs - rhs).abs() <= FEASIBILITY_SLACK,
        CmpOp::Ne => (lhs - rhs).abs() > FEASIBILITY_SLACK,
        CmpOp::Lt => lhs < rhs,
        CmpOp::Gt => lhs > rhs,
    }
}

type Scope = Vec<(String, i64)>;

fn as_index(value: f64) -> Result<i64, EvalError> {
    let rounded = value.round();
    if (value - rounded).abs() > FEASIBILITY_SLACK || rounded.abs() >= 9.0e15 {
        return Err(EvalError::NonIntegerIndex(value));
    }
    Ok(rounded as i64)
}

fn lookup_scope(scope: &Scope, name: &str) -> Option<i64> {
    scope.iter().rev().find(|(n, _)| n == name).map(|(_, v)| *v)
}

fn eval_scoped(e: &Expr, env: &Environment, scope: &mut Scope) -> Result<f64, EvalError> {
    match e {
        Expr::Number(n) => Ok(*n),
        Expr::Ident(name) => {
            if let Some(v) = lookup_scope(scope, name) {
                return Ok(v as f64);
            }
            if let Some(tensor) = env.inputs.get(name) {
                return match tensor {
                    InputTensor::Scalar(v) => Ok(*v),
                    InputTensor::List(_) => Err(EvalError::NotAScalar(name.clone())),
                };
            }
            if let Some(v) = env.assignment.get(name) {
                return Ok(*v);
            }
            Err(EvalError::UnboundIdentifier(name.clone()))
        }
        Expr::Index { base, subscripts } => {
            if lookup_scope(scope, base).is_some() {
                return Err(EvalError::NotIndexable(base.clone()));
            }
            let mut indices = Vec::with_capacity(subscripts.len());
            for sub in subscripts {
                indices.push(as_index(eval_scoped(sub, env, scope)?)?);
            }
            if let Some(tensor) = env.inputs.get(base) {
                let mut cursor = tensor;
                for &idx in &indices {
                    match cursor {
                        InputTensor::List(items) => {
                            if idx < 1 || idx as usize > items.len() {
                                return Err(EvalError::IndexOutOfRange {
                                    name: base.clone(),
                                    index: idx,
                                    len: items.len(),
                                });
                            }
                            cursor = &items[idx as usize - 1];
                        }
                        InputTensor::Scalar(_) => {
                            return Err(EvalError::NotIndexable(base.clone()))
                        }
                    }
                }
                return match cursor {
                    InputTensor::Scalar(v) => Ok(*v),
                    InputTensor::List(_) => Err(EvalError::NotAScalar(base.clone())),
                };
            }
            let name = canonical_var_name(base, &indices);
            env.assignment
                .get(&name)
                .copied()
                .ok_or(EvalError::UnboundIdentifier(name))
        }
        Expr::Unary { op: UnaryOp::Neg, operand } => Ok(-eval_scoped(operand, env, scope)?),
        Expr::Binary { op, lhs, rhs } => {
            let a = eval_scoped(lhs, env, scope)?;
            let b = eval_scoped(rhs, env, scope)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Ok(a / b)
                    }
                }
            }
        }
        Expr::Sum { body, generators, filter } => {
            let mut total = 0.0;
            expand_generators(generators, filter.as_deref(), env, scope, &mut |env, scope| {
                total += eval_scoped(body, env, scope)?;
                Ok(())
            })?;
            Ok(total)
        }
        Expr::Compare { .. } | Expr::ForAll { .. } => Err(EvalError::ComparisonInArithmetic),
    }
}

fn resolve_set(set: &SetRef, env: &Environment, scope: &mut Scope) -> Result<Vec<i64>, EvalError> {
    match set {
        SetRef::Named(name) => env
            .index_sets
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnknownIndexSet(name.clone())),
        SetRef::Range { start, end } => {
            let a = as_index(eval_scoped(start, env, scope)?)?;
            let b = as_index(eval_scoped(end, env, scope)?)?;
            Ok((a..b).collect())
        }
    }
}

fn eval_filter(filter: &Expr, env: &Environment, scope: &mut Scope) -> Result<bool, EvalError> {
    match filter {
        Expr::Compare { op, lhs, rhs } => {
            let a = eval_scoped(lhs, env, scope)?;
            let b = eval_scoped(rhs, env, scope)?;
            Ok(comparison_holds(*op, a, b))
        }
        _ => Err(EvalError::NotAConstraint),
    }
}

/// Depth-first generator expansion, left-to-right, applying the filter at
/// the innermost level. Iteration order is deterministic.
pub(crate) fn expand_generators(
    generators: &[Generator],
    filter: Option<&Expr>,
    env: &Environment,
    scope: &mut Scope,
    visit: &mut dyn FnMut(&Environment, &mut Scope) -> Result<(), EvalError>,
) -> Result<(), EvalError> {
    match generators.split_first() {
        None => {
            if let Some(flt) = filter {
                if !eval_filter(flt, env, scope)? {
                    return Ok(());
                }
            }
            visit(env, scope)
        }
        Some((gen, rest)) => {
            let values = resolve_set(&gen.set, env, scope)?;
            for v in values {
                scope.push((gen.var.clone(), v));
                let result = expand_generators(rest, filter, env, scope, visit);
                scope.pop();
                result?;
            }
            Ok(())
        }
    }
}

/// Evaluate a comparison-free expression to a number.
pub fn eval_arith(e: &Expr, env: &Environment) -> Result<f64, EvalError> {
    eval_scoped(e, env, &mut Vec::new())
}

/// Evaluate a constraint (a comparison, optionally universally quantified),
/// returning every violated instantiation with its index bindings and both
/// side values. Empty result means the constraint is satisfied.
pub fn eval_constraint(c: &Expr, env: &Environment) -> Result<Vec<Violation>, EvalError> {
    let mut violations = Vec::new();
    check_constraint(c, env, &mut |scope, op, lhs, rhs| {
        if !comparison_holds(op, lhs, rhs) {
            violations.push(Violation {
                bindings: scope.iter().cloned().collect(),
                lhs,
                rhs,
                op: op.symbol().to_string(),
            });
        }
        true
    })?;
    Ok(violations)
}

/// Fast feasibility test: stops at the first violated instantiation.
pub fn constraint_satisfied(c: &Expr, env: &Environment) -> Result<bool, EvalError> {
    let mut satisfied = true;
    check_constraint(c, env, &mut |_, op, lhs, rhs| {
        if !comparison_holds(op, lhs, rhs) {
            satisfied = false;
            return false;
        }
        true
    })?;
    Ok(satisfied)
}

fn check_constraint(
    c: &Expr,
    env: &Environment,
    on_instance: &mut dyn FnMut(&Scope, CmpOp, f64, f64) -> bool,
) -> Result<(), EvalError> {
    match c {
        Expr::Compare { op, lhs, rhs } => {
            let mut scope = Vec::new();
            let a = eval_scoped(lhs, env, &mut scope)?;
            let b = eval_scoped(rhs, env, &mut scope)?;
            on_instance(&scope, *op, a, b);
            Ok(())
        }
        Expr::ForAll { body, generators, filter } => {
            let (op, lhs, rhs) = match body.as_ref() {
                Expr::Compare { op, lhs, rhs } => (*op, lhs, rhs),
                _ => return Err(EvalError::NotAConstraint),
            };
            let mut scope = Vec::new();
            let mut stop = false;
            expand_generators(generators, filter.as_deref(), env, &mut scope, &mut |env,
                scope| {
                if stop {
                    return Ok(());
                }
                let a = eval_scoped(lhs, env, scope)?;
                let b = eval_scoped(rhs, env, scope)?;
                if !on_instance(scope, op, a, b) {
                    stop = true;
                }
                Ok(())
            })
        }
        _ => Err(EvalError::NotAConstraint),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn env_with_list(name: &str, values: &[f64], set: (&str, &[i64])) -> Environment {
        let mut env = Environment::default();
        env.inputs.insert(
            name.into(),
            InputTensor::List(values.iter().map(|v| InputTensor::Scalar(*v)).collect()),
        );
        env.index_sets.insert(set.0.into(), set.1.to_vec());
        env
    }

    #[test]
    fn constant_evaluates_in_empty_environment() {
        let e = parse_expr("0").unwrap();
        assert_eq!(eval_arith(&e, &Environment::default()).unwrap(), 0.0);
    }

    #[test]
    fn sum_over_one_based_list() {
        let env = env_with_list("a", &[1.0, 2.0, 3.0], ("S", &[1, 2, 3]));
        let e = parse_expr("sum(a[i] for i in S)").unwrap();
        assert_eq!(eval_arith(&e, &env).unwrap(), 6.0);
    }

    #[test]
    fn unbound_identifier_is_an_error_not_zero() {
        let e = parse_expr("y + 1").unwrap();
        assert_eq!(
            eval_arith(&e, &Environment::default()),
            Err(EvalError::UnboundIdentifier("y".into()))
        );
    }

    #[test]
    fn division_by_zero_is_reported() {
        let e = parse_expr("1 / 0").unwrap();
        assert_eq!(eval_arith(&e, &Environment::default()), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn index_out_of_range_is_reported() {
        let env = env_with_list("a", &[1.0], ("S", &[1]));
        let e = parse_expr("a[2]").unwrap();
        assert!(matches!(
            eval_arith(&e, &env),
            Err(EvalError::IndexOutOfRange { index: 2, len: 1, .. })
        ));
    }

    #[test]
    fn scalar_violation_records_both_sides() {
        let e = parse_expr("x >= 0").unwrap();
        let mut env = Environment::default();
        env.assignment.insert("x".into(), -1.0);
        let violations = eval_constraint(&e, &env).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].lhs, -1.0);
        assert_eq!(violations[0].rhs, 0.0);
        assert!(violations[0].bindings.is_empty());
    }

    #[test]
    fn quantified_constraint_reports_bindings() {
        let env = env_with_list("need", &[1.0, 5.0], ("S", &[1, 2]));
        let mut env = env;
        env.assignment.insert("x[1]".into(), 2.0);
        env.assignment.insert("x[2]".into(), 2.0);
        let e = parse_expr("x[i] >= need[i] for all i in S").unwrap();
        let violations = eval_constraint(&e, &env).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].bindings.get("i"), Some(&2));
        assert_eq!(violations[0].lhs, 2.0);
        assert_eq!(violations[0].rhs, 5.0);
    }

    #[test]
    fn inequality_slack_absorbs_round_off() {
        let e = parse_expr("x <= 1").unwrap();
        let mut env = Environment::default();
        env.assignment.insert("x".into(), 1.0 + 0.5e-9);
        assert!(eval_constraint(&e, &env).unwrap().is_empty());
        env.assignment.insert("x".into(), 1.0 + 1.0e-8);
        assert_eq!(eval_constraint(&e, &env).unwrap().len(), 1);
    }

    #[test]
    fn range_generator_uses_python_semantics() {
        let mut env = Environment::default();
        env.inputs.insert("n".into(), InputTensor::Scalar(4.0));
        let e = parse_expr("sum(i for i in range(1, n))").unwrap();
        // 1 + 2 + 3
        assert_eq!(eval_arith(&e, &env).unwrap(), 6.0);
    }

    #[test]
    fn deterministic_repeated_evaluation() {
        let env = env_with_list("a", &[0.1, 0.2, 0.7], ("S", &[1, 2, 3]));
        let e = parse_expr("sum(a[i] * a[j] for i in S for j in S if i != j)").unwrap();
        let first = eval_arith(&e, &env).unwrap();
        for _ in 0..10 {
            assert_eq!(eval_arith(&e, &env).unwrap().to_bits(), first.to_bits());
        }
    }
}
