//! Bridges the declared decision process and the expression evaluator:
//! infers named index sets from input extents, instantiates variable
//! families into concrete indexed variables, and assembles evaluation
//! environments.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{
    canonical_var_name, Environment, EvalError, Expr, Generator, InputTensor, SetRef,
};
use crate::model::{DecisionProcess, ModelError};

type BindingVisitor<'a> = dyn FnMut(&mut Vec<(String, i64)>) -> Result<(), GroundError> + 'a;

#[derive(Debug, Error)]
pub enum GroundError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot infer index set `{0}`: it never indexes a declared input")]
    UnknownIndexSet(String),
    #[error("index set `{name}` has conflicting extents {a} and {b}")]
    AmbiguousIndexSet { name: String, a: usize, b: usize },
}

/// Infer each named index set referenced by the objective or constraints.
/// A set bound to index variable `i` takes its extent from any input
/// indexed by `i` (the dimension at `i`'s subscript position); all usages
/// must agree. Named sets are 1-based: extent `n` yields `[1..=n]`.
pub fn infer_index_sets(
    process: &DecisionProcess,
) -> Result<BTreeMap<String, Vec<i64>>, GroundError> {
    infer_with_overrides(process, None)
}

fn infer_with_overrides(
    process: &DecisionProcess,
    overrides: Option<&BTreeMap<String, Vec<i64>>>,
) -> Result<BTreeMap<String, Vec<i64>>, GroundError> {
    let inputs = process.input_tensors()?;
    let mut extents: BTreeMap<String, usize> = BTreeMap::new();
    let mut named_sets: BTreeSet<String> = BTreeSet::new();

    let mut exprs = vec![process.objective_expr()?];
    exprs.extend(process.constraint_exprs()?);
    for e in &exprs {
        collect_set_usage(e, &inputs, &mut Vec::new(), &mut named_sets, &mut extents)?;
    }

    let mut sets = BTreeMap::new();
    for name in named_sets {
        if let Some(values) = overrides.and_then(|m| m.get(&name)) {
            sets.insert(name, values.clone());
            continue;
        }
        match extents.get(&name) {
            Some(&n) => {
                sets.insert(name, (1..=n as i64).collect());
            }
            None => return Err(GroundError::UnknownIndexSet(name)),
        }
    }
    Ok(sets)
}

fn collect_set_usage(
    e: &Expr,
    inputs: &BTreeMap<String, InputTensor>,
    bound: &mut Vec<(String, String)>, // (index var, set name) for named sets only
    named_sets: &mut BTreeSet<String>,
    extents: &mut BTreeMap<String, usize>,
) -> Result<(), GroundError> {
    match e {
        Expr::Number(_) | Expr::Ident(_) => Ok(()),
        Expr::Index { base, subscripts } => {
            if let Some(tensor) = inputs.get(base) {
                let shape = tensor.shape();
                for (pos, sub) in subscripts.iter().enumerate() {
                    if let Expr::Ident(var) = sub {
                        let set = bound.iter().rev().find(|(v, _)| v == var).map(|(_, s)| s);
                        if let (Some(set_name), Some(&extent)) = (set, shape.get(pos)) {
                            match extents.get(set_name) {
                                Some(&prev) if prev != extent => {
                                    return Err(GroundError::AmbiguousIndexSet {
                                        name: set_name.clone(),
                                        a: prev,
                                        b: extent,
                                    })
                                }
                                None => {
                                    extents.insert(set_name.clone(), extent);
                                }
                                _ => {}
                            }
                        }
                    }
                }
            }
            for sub in subscripts {
                collect_set_usage(sub, inputs, bound, named_sets, extents)?;
            }
            Ok(())
        }
        Expr::Unary { operand, .. } => {
            collect_set_usage(operand, inputs, bound, named_sets, extents)
        }
        Expr::Binary { lhs, rhs, .. } | Expr::Compare { lhs, rhs, .. } => {
            collect_set_usage(lhs, inputs, bound, named_sets, extents)?;
            collect_set_usage(rhs, inputs, bound, named_sets, extents)
        }
        Expr::Sum { body, generators, filter } | Expr::ForAll { body, generators, filter } => {
            let depth = bound.len();
            for gen in generators {
                if let SetRef::Named(name) = &gen.set {
                    named_sets.insert(name.clone());
                    bound.push((gen.var.clone(), name.clone()));
                }
            }
            if let Some(flt) = filter {
                collect_set_usage(flt, inputs, bound, named_sets, extents)?;
            }
            let result = collect_set_usage(body, inputs, bound, named_sets, extents);
            bound.truncate(depth);
            result
        }
    }
}

/// Build an evaluation environment for a process and candidate assignment.
/// Index sets are inferred from input extents; explicit overrides win and
/// may supply sets inference cannot derive.
pub fn build_environment(
    process: &DecisionProcess,
    assignment: BTreeMap<String, f64>,
    index_set_overrides: Option<&BTreeMap<String, Vec<i64>>>,
) -> Result<Environment, GroundError> {
    let index_sets = infer_with_overrides(process, index_set_overrides)?;
    Ok(Environment { inputs: process.input_tensors()?, assignment, index_sets })
}

/// Enumerate the concrete decision variables the process actually uses:
/// every index tuple at which a variable family is referenced while
/// expanding the objective and constraints over their generator spaces
/// (generator filters applied), plus any scalar variables.
pub fn instantiate_variables(
    process: &DecisionProcess,
    env: &Environment,
) -> Result<BTreeSet<String>, GroundError> {
    let families = process.variable_families()?;
    let mut names = BTreeSet::new();

    let mut exprs = vec![process.objective_expr()?];
    exprs.extend(process.constraint_exprs()?);
    for e in &exprs {
        collect_variable_refs(e, env, &families, &mut Vec::new(), &mut names)?;
    }
    Ok(names)
}

fn collect_variable_refs(
    e: &Expr,
    env: &Environment,
    families: &BTreeMap<String, crate::model::VariableFamily>,
    scope: &mut Vec<(String, i64)>,
    out: &mut BTreeSet<String>,
) -> Result<(), GroundError> {
    match e {
        Expr::Number(_) => Ok(()),
        Expr::Ident(name) => {
            if let Some(family) = families.get(name) {
                if family.index_names.is_empty() {
                    out.insert(name.clone());
                }
            }
            Ok(())
        }
        Expr::Index { base, subscripts } => {
            if families.contains_key(base) {
                // Subscripts are index arithmetic over bound variables and
                // inputs; evaluate them in the current scope.
                let mut indices = Vec::with_capacity(subscripts.len());
                for sub in subscripts {
                    indices.push(eval_index(sub, env, scope)?);
                }
                out.insert(canonical_var_name(base, &indices));
            }
            for sub in subscripts {
                collect_variable_refs(sub, env, families, scope, out)?;
            }
            Ok(())
        }
        Expr::Unary { operand, .. } => collect_variable_refs(operand, env, families, scope, out),
        Expr::Binary { lhs, rhs, .. } | Expr::Compare { lhs, rhs, .. } => {
            collect_variable_refs(lhs, env, families, scope, out)?;
            collect_variable_refs(rhs, env, families, scope, out)
        }
        Expr::Sum { body, generators, filter } | Expr::ForAll { body, generators, filter } => {
            expand_for_refs(generators, filter.as_deref(), env, scope, &mut |scope| {
                collect_variable_refs(body, env, families, scope, out)
            })
        }
    }
}

fn eval_index(
    e: &Expr,
    env: &Environment,
    scope: &[(String, i64)],
) -> Result<i64, GroundError> {
    // Reuse the evaluator by exposing scope bindings as assignment entries.
    let mut scoped = env.clone();
    for (name, value) in scope.iter() {
        scoped.assignment.insert(name.clone(), *value as f64);
    }
    let v = crate::expr::eval_arith(e, &scoped)?;
    let rounded = v.round();
    if (v - rounded).abs() > 1e-9 {
        return Err(GroundError::Eval(EvalError::NonIntegerIndex(v)));
    }
    Ok(rounded as i64)
}

fn expand_for_refs(
    generators: &[Generator],
    filter: Option<&Expr>,
    env: &Environment,
    scope: &mut Vec<(String, i64)>,
    visit: &mut BindingVisitor<'_>,
) -> Result<(), GroundError> {
    match generators.split_first() {
        None => {
            if let Some(flt) = filter {
                if !filter_holds(flt, env, scope)? {
                    return Ok(());
                }
            }
            visit(scope)
        }
        Some((gen, rest)) => {
            let values = match &gen.set {
                SetRef::Named(name) => env
                    .index_sets
                    .get(name)
                    .cloned()
                    .ok_or_else(|| GroundError::Eval(EvalError::UnknownIndexSet(name.clone())))?,
                SetRef::Range { start, end } => {
                    let a = eval_index(start, env, scope)?;
                    let b = eval_index(end, env, scope)?;
                    (a..b).collect()
                }
            };
            for v in values {
                scope.push((gen.var.clone(), v));
                let result = expand_for_refs(rest, filter, env, scope, visit);
                scope.pop();
                result?;
            }
            Ok(())
        }
    }
}

fn filter_holds(
    filter: &Expr,
    env: &Environment,
    scope: &[(String, i64)],
) -> Result<bool, GroundError> {
    match filter {
        Expr::Compare { op, lhs, rhs } => {
            let a = eval_index_f(lhs, env, scope)?;
            let b = eval_index_f(rhs, env, scope)?;
            Ok(crate::expr::comparison_holds(*op, a, b))
        }
        _ => Err(GroundError::Eval(EvalError::NotAConstraint)),
    }
}

fn eval_index_f(
    e: &Expr,
    env: &Environment,
    scope: &[(String, i64)],
) -> Result<f64, GroundError> {
    let mut scoped = env.clone();
    for (name, value) in scope.iter() {
        scoped.assignment.insert(name.clone(), *value as f64);
    }
    Ok(crate::expr::eval_arith(e, &scoped)?)
}
