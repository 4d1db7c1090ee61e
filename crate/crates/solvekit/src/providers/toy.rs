//! Exhaustive-enumeration optimizer for desk-scale integer problems.
//!
//! Bounds come from a sidecar domain file rather than the decision process
//! itself. Constraints and the objective are grounded once into slot-based
//! expression trees (inputs folded to constants, variables mapped to point
//! slots), then every point of the integer grid is checked. Arithmetic is
//! value-identical to the interpreted evaluator, so a returned optimum
//! reproduces bit-for-bit under simulation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{
    canonical_var_name, comparison_holds, eval_arith, BinOp, CmpOp, Environment, Expr, SetRef,
    UnaryOp,
};
use crate::ground::{build_environment, instantiate_variables, GroundError};
use crate::model::{DecisionProcess, Direction, SolverRun, SolverStatus, VarType};

/// Integer bounds for the instantiated decision variables, plus optional
/// index-set declarations and enumeration-cap overrides. Loaded from a JSON
/// sidecar file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDomain {
    #[serde(default)]
    pub bounds: BTreeMap<String, (i64, i64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_bounds: Option<(i64, i64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_sets: Option<BTreeMap<String, Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_variables: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grid_points: Option<u64>,
}

impl VariableDomain {
    pub fn load(path: &Path) -> Result<Self, ToyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ToyError::Domain(format!("cannot read {}: {e}", path.display())))?;
        let domain: VariableDomain = serde_json::from_str(&text)
            .map_err(|e| ToyError::Domain(format!("bad domain file {}: {e}", path.display())))?;
        domain.validate()?;
        Ok(domain)
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        for (name, (lower, upper)) in &self.bounds {
            if lower > upper {
                return Err(ToyError::Domain(format!(
                    "bounds for `{name}` are inverted: {lower} > {upper}"
                )));
            }
        }
        if let Some((lower, upper)) = self.default_bounds {
            if lower > upper {
                return Err(ToyError::Domain(format!(
                    "default bounds are inverted: {lower} > {upper}"
                )));
            }
        }
        Ok(())
    }
}

/// Enumeration caps. The domain file may raise or lower them per instance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ToyConfig {
    pub max_variables: usize,
    pub max_grid_points: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig { max_variables: 12, max_grid_points: 10_000_000 }
    }
}

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error("variable `{0}` is continuous; grid enumeration requires integer or binary variables")]
    ContinuousVariable(String),
    #[error("no bounds declared for variable `{0}`")]
    MissingBounds(String),
    #[error("variable count {count} exceeds the enumeration cap {cap}")]
    CapExceeded { count: usize, cap: usize },
    #[error("grid of {points} points exceeds the cap {cap}")]
    GridTooLarge { points: u128, cap: u64 },
    #[error("unsupported expression for enumeration: {0}")]
    UnsupportedExpression(String),
}

/// Result of a successful enumeration.
#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub status: SolverStatus,
    pub objective: Option<f64>,
    pub variables: BTreeMap<String, f64>,
    pub points_checked: u64,
}

// Slot-based expression tree: inputs and bound indices folded to constants,
// decision variables mapped to positions in the candidate point.
#[derive(Debug, Clone)]
enum GExpr {
    Const(f64),
    Slot(usize),
    Neg(Box<GExpr>),
    Add(Box<GExpr>, Box<GExpr>),
    Sub(Box<GExpr>, Box<GExpr>),
    Mul(Box<GExpr>, Box<GExpr>),
    Div(Box<GExpr>, Box<GExpr>),
}

#[derive(Debug, Clone)]
struct GCmp {
    op: CmpOp,
    lhs: GExpr,
    rhs: GExpr,
}

fn geval(g: &GExpr, point: &[f64]) -> f64 {
    match g {
        GExpr::Const(c) => *c,
        GExpr::Slot(i) => point[*i],
        GExpr::Neg(a) => -geval(a, point),
        GExpr::Add(a, b) => geval(a, point) + geval(b, point),
        GExpr::Sub(a, b) => geval(a, point) - geval(b, point),
        GExpr::Mul(a, b) => geval(a, point) * geval(b, point),
        GExpr::Div(a, b) => geval(a, point) / geval(b, point),
    }
}

struct Grounder<'a> {
    env: &'a Environment,
    slots: &'a BTreeMap<String, usize>,
}

type Scope = Vec<(String, i64)>;

impl Grounder<'_> {
    fn ground(&self, e: &Expr, scope: &mut Scope) -> Result<GExpr, ToyError> {
        match e {
            Expr::Number(n) => Ok(GExpr::Const(*n)),
            Expr::Ident(name) => {
                if let Some(v) = scope.iter().rev().find(|(n, _)| n == name) {
                    return Ok(GExpr::Const(v.1 as f64));
                }
                if self.env.inputs.contains_key(name) {
                    return Ok(GExpr::Const(self.eval_const(e, scope)?));
                }
                match self.slots.get(name) {
                    Some(&slot) => Ok(GExpr::Slot(slot)),
                    None => Err(ToyError::UnsupportedExpression(format!(
                        "unbound identifier `{name}`"
                    ))),
                }
            }
            Expr::Index { base, subscripts } => {
                if self.env.inputs.contains_key(base) {
                    return Ok(GExpr::Const(self.eval_const(e, scope)?));
                }
                let mut indices = Vec::with_capacity(subscripts.len());
                for sub in subscripts {
                    let v = self.eval_const(sub, scope)?;
                    let rounded = v.round();
                    if (v - rounded).abs() > 1e-9 {
                        return Err(ToyError::UnsupportedExpression(format!(
                            "non-integer subscript {v}"
                        )));
                    }
                    indices.push(rounded as i64);
                }
                let name = canonical_var_name(base, &indices);
                match self.slots.get(&name) {
                    Some(&slot) => Ok(GExpr::Slot(slot)),
                    None => Err(ToyError::UnsupportedExpression(format!(
                        "reference to uninstantiated variable `{name}`"
                    ))),
                }
            }
            Expr::Unary { op: UnaryOp::Neg, operand } => {
                match self.ground(operand, scope)? {
                    GExpr::Const(c) => Ok(GExpr::Const(-c)),
                    g => Ok(GExpr::Neg(Box::new(g))),
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let a = self.ground(lhs, scope)?;
                let b = self.ground(rhs, scope)?;
                if let (GExpr::Const(x), GExpr::Const(y)) = (&a, &b) {
                    return match op {
                        BinOp::Add => Ok(GExpr::Const(x + y)),
                        BinOp::Sub => Ok(GExpr::Const(x - y)),
                        BinOp::Mul => Ok(GExpr::Const(x * y)),
                        BinOp::Div if *y != 0.0 => Ok(GExpr::Const(x / y)),
                        BinOp::Div => {
                            Err(ToyError::UnsupportedExpression("division by zero".into()))
                        }
                    };
                }
                match op {
                    BinOp::Add => Ok(GExpr::Add(Box::new(a), Box::new(b))),
                    BinOp::Sub => Ok(GExpr::Sub(Box::new(a), Box::new(b))),
                    BinOp::Mul => Ok(GExpr::Mul(Box::new(a), Box::new(b))),
                    BinOp::Div => match b {
                        GExpr::Const(c) if c != 0.0 => {
                            Ok(GExpr::Div(Box::new(a), Box::new(GExpr::Const(c))))
                        }
                        GExpr::Const(_) => {
                            Err(ToyError::UnsupportedExpression("division by zero".into()))
                        }
                        _ => Err(ToyError::UnsupportedExpression(
                            "division by a decision variable".into(),
                        )),
                    },
                }
            }
            Expr::Sum { body, generators, filter } => {
                let mut acc: Option<GExpr> = None;
                self.expand(generators, filter.as_deref(), scope, &mut |this, scope| {
                    let term = this.ground(body, scope)?;
                    acc = Some(match acc.take() {
                        None => term,
                        Some(prev) => match (&prev, &term) {
                            (GExpr::Const(x), GExpr::Const(y)) => GExpr::Const(x + y),
                            _ => GExpr::Add(Box::new(prev), Box::new(term)),
                        },
                    });
                    Ok(())
                })?;
                Ok(acc.unwrap_or(GExpr::Const(0.0)))
            }
            Expr::Compare { .. } | Expr::ForAll { .. } => Err(ToyError::UnsupportedExpression(
                "comparison inside arithmetic".into(),
            )),
        }
    }

    fn ground_constraint(&self, e: &Expr, out: &mut Vec<GCmp>) -> Result<(), ToyError> {
        match e {
            Expr::Compare { op, lhs, rhs } => {
                let mut scope = Vec::new();
                out.push(GCmp {
                    op: *op,
                    lhs: self.ground(lhs, &mut scope)?,
                    rhs: self.ground(rhs, &mut scope)?,
                });
                Ok(())
            }
            Expr::ForAll { body, generators, filter } => {
                let (op, lhs, rhs) = match body.as_ref() {
                    Expr::Compare { op, lhs, rhs } => (*op, lhs, rhs),
                    _ => {
                        return Err(ToyError::UnsupportedExpression(
                            "quantifier must wrap a comparison".into(),
                        ))
                    }
                };
                let mut scope = Vec::new();
                self.expand(generators, filter.as_deref(), &mut scope, &mut |this, scope| {
                    out.push(GCmp {
                        op,
                        lhs: this.ground(lhs, scope)?,
                        rhs: this.ground(rhs, scope)?,
                    });
                    Ok(())
                })
            }
            _ => Err(ToyError::UnsupportedExpression("constraint is not a comparison".into())),
        }
    }

    fn expand(
        &self,
        generators: &[crate::expr::Generator],
        filter: Option<&Expr>,
        scope: &mut Scope,
        visit: &mut dyn FnMut(&Self, &mut Scope) -> Result<(), ToyError>,
    ) -> Result<(), ToyError> {
        match generators.split_first() {
            None => {
                if let Some(flt) = filter {
                    if !self.filter_holds(flt, scope)? {
                        return Ok(());
                    }
                }
                visit(self, scope)
            }
            Some((gen, rest)) => {
                let values = match &gen.set {
                    SetRef::Named(name) => {
                        self.env.index_sets.get(name).cloned().ok_or_else(|| {
                            ToyError::UnsupportedExpression(format!("unknown index set `{name}`"))
                        })?
                    }
                    SetRef::Range { start, end } => {
                        let a = self.eval_const(start, scope)?.round() as i64;
                        let b = self.eval_const(end, scope)?.round() as i64;
                        (a..b).collect()
                    }
                };
                for v in values {
                    scope.push((gen.var.clone(), v));
                    let result = self.expand(rest, filter, scope, visit);
                    scope.pop();
                    result?;
                }
                Ok(())
            }
        }
    }

    fn filter_holds(&self, filter: &Expr, scope: &mut Scope) -> Result<bool, ToyError> {
        match filter {
            Expr::Compare { op, lhs, rhs } => {
                let a = self.eval_const(lhs, scope)?;
                let b = self.eval_const(rhs, scope)?;
                Ok(comparison_holds(*op, a, b))
            }
            _ => Err(ToyError::UnsupportedExpression("filter must be a comparison".into())),
        }
    }

    // Evaluate an index-level expression (bound vars and inputs only).
    fn eval_const(&self, e: &Expr, scope: &Scope) -> Result<f64, ToyError> {
        let mut scoped = self.env.clone();
        for (name, value) in scope {
            scoped.assignment.insert(name.clone(), *value as f64);
        }
        eval_arith(e, &scoped)
            .map_err(|err| ToyError::UnsupportedExpression(err.to_string()))
    }
}

/// Enumerate the full integer grid and return the best feasible point, with
/// a deterministic lexicographic tie-break (the smallest variable vector
/// among optima wins).
pub fn toy_solve(
    process: &DecisionProcess,
    domain: &VariableDomain,
    cfg: &ToyConfig,
) -> Result<ToyOutcome, ToyError> {
    domain.validate()?;
    let env = build_environment(process, BTreeMap::new(), domain.index_sets.as_ref())?;
    let names: Vec<String> =
        instantiate_variables(process, &env)?.into_iter().collect();

    let max_variables = domain.max_variables.unwrap_or(cfg.max_variables);
    if names.len() > max_variables {
        return Err(ToyError::CapExceeded { count: names.len(), cap: max_variables });
    }

    let families = process.variable_families().map_err(GroundError::Model)?;
    let mut bounds = Vec::with_capacity(names.len());
    for name in &names {
        let base = name.split('[').next().unwrap_or(name);
        let var_type =
            families.get(base).map(|f| f.var_type).unwrap_or(VarType::Integer);
        if var_type == VarType::Continuous {
            return Err(ToyError::ContinuousVariable(name.clone()));
        }
        let declared = domain.bounds.get(name).copied().or(domain.default_bounds);
        let (lower, upper) = match (declared, var_type) {
            (Some(b), _) => b,
            (None, VarType::Binary) => (0, 1),
            (None, _) => return Err(ToyError::MissingBounds(name.clone())),
        };
        bounds.push((lower, upper));
    }

    let max_grid = domain.max_grid_points.unwrap_or(cfg.max_grid_points);
    let mut grid: u128 = 1;
    for (lower, upper) in &bounds {
        grid = grid.saturating_mul((upper - lower + 1) as u128);
        if grid > max_grid as u128 {
            return Err(ToyError::GridTooLarge { points: grid, cap: max_grid });
        }
    }

    let slots: BTreeMap<String, usize> =
        names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let grounder = Grounder { env: &env, slots: &slots };
    let mut constraints = Vec::new();
    for parsed in process.constraint_exprs().map_err(GroundError::Model)? {
        grounder.ground_constraint(&parsed, &mut constraints)?;
    }
    let objective =
        grounder.ground(&process.objective_expr().map_err(GroundError::Model)?, &mut Vec::new())?;
    let direction = process.objective_function.direction;

    let lowers: Vec<i64> = bounds.iter().map(|(l, _)| *l).collect();
    let mut counters = lowers.clone();
    let mut point: Vec<f64> = lowers.iter().map(|&v| v as f64).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut points_checked: u64 = 0;

    'grid: loop {
        points_checked += 1;
        let feasible = constraints
            .iter()
            .all(|c| comparison_holds(c.op, geval(&c.lhs, &point), geval(&c.rhs, &point)));
        if feasible {
            let objective_value = geval(&objective, &point);
            let improves = match &best {
                None => true,
                Some((incumbent, _)) => match direction {
                    Direction::Minimize => objective_value < *incumbent,
                    Direction::Maximize => objective_value > *incumbent,
                },
            };
            if improves {
                best = Some((objective_value, point.clone()));
            }
        }
        // Odometer bump, last variable fastest: points arrive in ascending
        // lexicographic order, so the first optimum seen is the smallest.
        let mut pos = counters.len();
        loop {
            if pos == 0 {
                break 'grid;
            }
            pos -= 1;
            counters[pos] += 1;
            if counters[pos] <= bounds[pos].1 {
                point[pos] = counters[pos] as f64;
                break;
            }
            counters[pos] = bounds[pos].0;
            point[pos] = counters[pos] as f64;
        }
    }

    Ok(match best {
        Some((objective_value, winning_point)) => ToyOutcome {
            status: SolverStatus::Optimal,
            objective: Some(objective_value),
            variables: names.iter().cloned().zip(winning_point).collect(),
            points_checked,
        },
        None => ToyOutcome {
            status: SolverStatus::Infeasible,
            objective: None,
            variables: BTreeMap::new(),
            points_checked,
        },
    })
}

/// [`toy_solve`] wrapped into the solver-run contract: cap breaches and
/// unsupported inputs become an `error`-status run rather than a crash.
/// `solve_time` is a deterministic pseudo-time derived from the number of
/// points checked, keeping run artifacts byte-stable across replays.
pub fn toy_optimize(
    process: &DecisionProcess,
    domain: &VariableDomain,
    cfg: &ToyConfig,
) -> SolverRun {
    match toy_solve(process, domain, cfg) {
        Ok(outcome) => SolverRun {
            variant_name: "toy".into(),
            variables: outcome.variables,
            objective_value: outcome.objective,
            status: outcome.status,
            solver_name: "toy-bruteforce".into(),
            solve_time: outcome.points_checked as f64 * 1e-7,
            iterations: outcome.points_checked,
            gap: match outcome.status {
                SolverStatus::Optimal => Some(0.0),
                _ => None,
            },
        },
        Err(e) => {
            log::warn!("toy optimizer failed: {e}");
            SolverRun {
                variant_name: "toy".into(),
                variables: BTreeMap::new(),
                objective_value: None,
                status: SolverStatus::Error,
                solver_name: "toy-bruteforce".into(),
                solve_time: 0.0,
                iterations: 0,
                gap: None,
            }
        }
    }
}
