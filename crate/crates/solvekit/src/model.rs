//! Structured decision-process representation and the solver status/result
//! vocabulary shared by the rest of the crate, with strict (de)serialization
//! of the JSON contracts used on the wire.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr, InputTensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("undeclared symbol `{0}` referenced in an expression")]
    UndeclaredSymbol(String),
}

/// Variable kind, spelled exactly as in the extraction JSON contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VarType {
    Integer,
    Continuous,
    Binary,
}

/// Optimization sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

/// A decision variable or variable family. Families carry their index
/// signature in the name, e.g. `x[i,j]`; instantiation into concrete
/// indexed variables happens at expression level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionVariable {
    pub name: String,
    #[serde(rename = "type")]
    pub var_type: VarType,
    pub description: String,
}

/// A named input parameter whose value is a number or a rectangular nested
/// list of numbers (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputParameter {
    pub name: String,
    pub value: serde_json::Value,
    pub units: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub direction: Direction,
    pub expression: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub expression: String,
    pub description: String,
}

/// The structured extraction of a decision problem: variables, inputs,
/// objective, and constraints, plus the (possibly empty) dynamic fields
/// carried verbatim as opaque data. Field order here is the canonical JSON
/// key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionProcess {
    pub problem_description: String,
    pub decision_variables: Vec<DecisionVariable>,
    pub inputs: Vec<InputParameter>,
    pub exogenous_variables: Vec<serde_json::Value>,
    pub exogenous_uncertainties: Vec<serde_json::Value>,
    pub state_variables: Vec<serde_json::Value>,
    pub transition_function: String,
    pub objective_function: ObjectiveSpec,
    pub constraints: Vec<ConstraintSpec>,
}

/// Solver termination status. Declaration order is the tie-breaking
/// preference order: `Optimal` beats `TimeLimit` beats `Infeasible` beats
/// `Unbounded` beats `Error`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    TimeLimit,
    Infeasible,
    Unbounded,
    Error,
}

impl SolverStatus {
    /// Rank in the strict preference order; 0 is strongest.
    pub fn preference_rank(self) -> u8 {
        match self {
            SolverStatus::Optimal => 0,
            SolverStatus::TimeLimit => 1,
            SolverStatus::Infeasible => 2,
            SolverStatus::Unbounded => 3,
            SolverStatus::Error => 4,
        }
    }

    /// True if `self` wins a tie against `other`.
    pub fn beats(self, other: SolverStatus) -> bool {
        self.preference_rank() < other.preference_rank()
    }

    pub const ALL: [SolverStatus; 5] = [
        SolverStatus::Optimal,
        SolverStatus::TimeLimit,
        SolverStatus::Infeasible,
        SolverStatus::Unbounded,
        SolverStatus::Error,
    ];
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::TimeLimit => "time_limit",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::Unbounded => "unbounded",
            SolverStatus::Error => "error",
        };
        f.write_str(s)
    }
}

/// One optimizer variant's result: candidate assignment, objective, status,
/// and solver metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRun {
    pub variant_name: String,
    pub variables: BTreeMap<String, f64>,
    pub objective_value: Option<f64>,
    pub status: SolverStatus,
    pub solver_name: String,
    pub solve_time: f64,
    pub iterations: u64,
    pub gap: Option<f64>,
}

impl SolverRun {
    pub fn validate(&self) -> Result<(), String> {
        if self.status == SolverStatus::Optimal && self.objective_value.is_none() {
            return Err(format!(
                "run `{}` reports optimal without an objective value",
                self.variant_name
            ));
        }
        if self.solve_time < 0.0 {
            return Err(format!("run `{}` has negative solve_time", self.variant_name));
        }
        if let Some(gap) = self.gap {
            if gap < 0.0 {
                return Err(format!("run `{}` has negative gap", self.variant_name));
            }
        }
        Ok(())
    }
}

/// A declared variable family: base name plus index signature arity.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableFamily {
    pub base: String,
    pub index_names: Vec<String>,
    pub var_type: VarType,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Split a declared variable name into base and index signature:
/// `x[i,j]` has base `x` and arity 2; a plain name is a scalar (arity 0).
pub fn parse_variable_family(decl: &DecisionVariable) -> Result<VariableFamily, ModelError> {
    let name = decl.name.trim();
    if name.is_empty() {
        return Err(ModelError::SchemaViolation("decision variable name is empty".into()));
    }
    if let Some(open) = name.find('[') {
        let base = &name[..open];
        let rest = &name[open..];
        if !rest.ends_with(']') {
            return Err(ModelError::SchemaViolation(format!(
                "variable name `{name}` has an unterminated index signature"
            )));
        }
        let sig = &rest[1..rest.len() - 1];
        let index_names: Vec<String> =
            sig.split(',').map(|s| s.trim().to_string()).collect();
        if !is_identifier(base) || index_names.iter().any(|n| !is_identifier(n)) {
            return Err(ModelError::SchemaViolation(format!(
                "variable name `{name}` is not a valid identifier or index signature"
            )));
        }
        Ok(VariableFamily { base: base.to_string(), index_names, var_type: decl.var_type })
    } else {
        if !is_identifier(name) {
            return Err(ModelError::SchemaViolation(format!(
                "variable name `{name}` is not a valid identifier"
            )));
        }
        Ok(VariableFamily {
            base: name.to_string(),
            index_names: Vec::new(),
            var_type: decl.var_type,
        })
    }
}

impl DecisionProcess {
    /// Declared variable families keyed by base name.
    pub fn variable_families(&self) -> Result<BTreeMap<String, VariableFamily>, ModelError> {
        let mut families = BTreeMap::new();
        for decl in &self.decision_variables {
            let family = parse_variable_family(decl)?;
            if families.insert(family.base.clone(), family).is_some() {
                return Err(ModelError::SchemaViolation(format!(
                    "duplicate decision variable `{}`",
                    decl.name
                )));
            }
        }
        Ok(families)
    }

    /// Parsed objective expression.
    pub fn objective_expr(&self) -> Result<Expr, ModelError> {
        expr::parse_expr(&self.objective_function.expression).map_err(|e| {
            ModelError::SchemaViolation(format!("objective expression does not parse: {e}"))
        })
    }

    /// Parsed constraint expressions, in declaration order.
    pub fn constraint_exprs(&self) -> Result<Vec<Expr>, ModelError> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                expr::parse_expr(&c.expression).map_err(|e| {
                    ModelError::SchemaViolation(format!(
                        "constraint {i} expression does not parse: {e}"
                    ))
                })
            })
            .collect()
    }

    /// Input tensors keyed by name, with rectangularity validated.
    pub fn input_tensors(&self) -> Result<BTreeMap<String, InputTensor>, ModelError> {
        let mut tensors = BTreeMap::new();
        for input in &self.inputs {
            let tensor = InputTensor::from_json(&input.value).map_err(|e| {
                ModelError::SchemaViolation(format!("input `{}`: {e}", input.name))
            })?;
            if tensors.insert(input.name.clone(), tensor).is_some() {
                return Err(ModelError::SchemaViolation(format!(
                    "duplicate input `{}`",
                    input.name
                )));
            }
        }
        Ok(tensors)
    }

    fn opaque_names(values: &[serde_json::Value]) -> BTreeSet<String> {
        values
            .iter()
            .filter_map(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string))
            .collect()
    }

    /// Every name an expression may legally reference outside of bound
    /// index variables: variable family bases, inputs, and any named
    /// exogenous/state entries.
    pub fn declared_symbols(&self) -> Result<BTreeSet<String>, ModelError> {
        let mut symbols: BTreeSet<String> =
            self.variable_families()?.keys().cloned().collect();
        symbols.extend(self.inputs.iter().map(|i| i.name.clone()));
        symbols.extend(Self::opaque_names(&self.exogenous_variables));
        symbols.extend(Self::opaque_names(&self.exogenous_uncertainties));
        symbols.extend(Self::opaque_names(&self.state_variables));
        Ok(symbols)
    }

    /// Check every structural invariant: valid and unique variable names,
    /// rectangular inputs, parseable expressions, comparison placement, and
    /// no references to undeclared symbols.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for decl in &self.decision_variables {
            if !seen.insert(decl.name.clone()) {
                return Err(ModelError::SchemaViolation(format!(
                    "duplicate decision variable `{}`",
                    decl.name
                )));
            }
        }
        let families = self.variable_families()?;
        self.input_tensors()?;
        let symbols = self.declared_symbols()?;

        let objective = self.objective_expr()?;
        if objective.contains_comparison() {
            return Err(ModelError::SchemaViolation(
                "objective expression must be comparison-free".into(),
            ));
        }
        check_symbols(&objective, &symbols, &families, &mut Vec::new())?;

        for (i, parsed) in self.constraint_exprs()?.into_iter().enumerate() {
            match &parsed {
                Expr::Compare { lhs, rhs, .. } => {
                    if lhs.contains_comparison() || rhs.contains_comparison() {
                        return Err(ModelError::SchemaViolation(format!(
                            "constraint {i}: comparison nested inside an expression"
                        )));
                    }
                }
                Expr::ForAll { body, .. } => {
                    if !matches!(body.as_ref(), Expr::Compare { .. }) {
                        return Err(ModelError::SchemaViolation(format!(
                            "constraint {i}: quantifier must wrap a comparison"
                        )));
                    }
                }
                _ => {
                    return Err(ModelError::SchemaViolation(format!(
                        "constraint {i}: expected a comparison or quantified comparison"
                    )))
                }
            }
            check_symbols(&parsed, &symbols, &families, &mut Vec::new())?;
        }
        Ok(())
    }
}

fn check_symbols(
    e: &Expr,
    declared: &BTreeSet<String>,
    families: &BTreeMap<String, VariableFamily>,
    bound: &mut Vec<String>,
) -> Result<(), ModelError> {
    match e {
        Expr::Number(_) => Ok(()),
        Expr::Ident(name) => {
            if bound.contains(name) || declared.contains(name) {
                Ok(())
            } else {
                Err(ModelError::UndeclaredSymbol(name.clone()))
            }
        }
        Expr::Index { base, subscripts } => {
            if !declared.contains(base) {
                return Err(ModelError::UndeclaredSymbol(base.clone()));
            }
            if let Some(family) = families.get(base) {
                if !family.index_names.is_empty()
                    && family.index_names.len() != subscripts.len()
                {
                    return Err(ModelError::SchemaViolation(format!(
                        "`{base}` is declared with {} indices but referenced with {}",
                        family.index_names.len(),
                        subscripts.len()
                    )));
                }
            }
            for sub in subscripts {
                check_symbols(sub, declared, families, bound)?;
            }
            Ok(())
        }
        Expr::Unary { operand, .. } => check_symbols(operand, declared, families, bound),
        Expr::Binary { lhs, rhs, .. } | Expr::Compare { lhs, rhs, .. } => {
            check_symbols(lhs, declared, families, bound)?;
            check_symbols(rhs, declared, families, bound)
        }
        Expr::Sum { body, generators, filter } | Expr::ForAll { body, generators, filter } => {
            let depth = bound.len();
            for gen in generators {
                if let crate::expr::SetRef::Range { start, end } = &gen.set {
                    check_symbols(start, declared, families, bound)?;
                    check_symbols(end, declared, families, bound)?;
                }
                bound.push(gen.var.clone());
            }
            if let Some(flt) = filter {
                check_symbols(flt, declared, families, bound)?;
            }
            let result = check_symbols(body, declared, families, bound);
            bound.truncate(depth);
            result
        }
    }
}

/// Parse a JSON document into a validated [`DecisionProcess`]. Unknown
/// fields are rejected with a diagnostic naming the field.
pub fn parse_decision_process(document: &str) -> Result<DecisionProcess, ModelError> {
    let value: serde_json::Value = serde_json::from_str(document)
        .map_err(|e| ModelError::MalformedDocument(e.to_string()))?;
    let process: DecisionProcess = serde_json::from_value(value)
        .map_err(|e| ModelError::SchemaViolation(e.to_string()))?;
    process.validate()?;
    Ok(process)
}

/// Serialize with canonical (schema-order) keys; `parse ∘ serialize` is the
/// structural identity and a second round trip is byte-identical.
pub fn serialize_decision_process(process: &DecisionProcess) -> String {
    serde_json::to_string_pretty(process).expect("decision process serializes")
}
