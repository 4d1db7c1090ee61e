use std::fmt;

/// Binary arithmetic operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Unary operator (negation is the only one in the grammar).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
}

/// Comparison operator. `!=` is accepted so generator filters like
/// `if i != j` can be expressed; constraints normally use the other five.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Ge,
    Eq,
    Ne,
    Lt,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// The set a generator iterates over: a named index set or an explicit
/// `range(start, end)` literal (half-open, like Python).
#[derive(Debug, Clone, PartialEq)]
pub enum SetRef {
    Named(String),
    Range { start: Box<Expr>, end: Box<Expr> },
}

/// One generator binding, e.g. the `i in regions` part of a comprehension.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub var: String,
    pub set: SetRef,
}

/// Expression tree. `Compare` and `ForAll` nodes are only meaningful at
/// constraint top level; objectives must be comparison-free.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Ident(String),
    /// Indexed reference, normalized to tuple form: `x[i,j]`.
    Index { base: String, subscripts: Vec<Expr> },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Compare {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Sum {
        body: Box<Expr>,
        generators: Vec<Generator>,
        filter: Option<Box<Expr>>,
    },
    ForAll {
        body: Box<Expr>,
        generators: Vec<Generator>,
        filter: Option<Box<Expr>>,
    },
}

impl Expr {
    /// True if the tree contains a `Compare` or `ForAll` node anywhere.
    pub fn contains_comparison(&self) -> bool {
        match self {
            Expr::Number(_) | Expr::Ident(_) => false,
            Expr::Index { subscripts, .. } => subscripts.iter().any(Expr::contains_comparison),
            Expr::Unary { operand, .. } => operand.contains_comparison(),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.contains_comparison() || rhs.contains_comparison()
            }
            Expr::Compare { .. } | Expr::ForAll { .. } => true,
            Expr::Sum { body, filter, .. } => {
                // A filter is a comparison by construction; only the body counts.
                body.contains_comparison()
                    || filter
                        .as_ref()
                        .map(|f| match f.as_ref() {
                            Expr::Compare { lhs, rhs, .. } => {
                                lhs.contains_comparison() || rhs.contains_comparison()
                            }
                            other => other.contains_comparison(),
                        })
                        .unwrap_or(false)
            }
        }
    }
}

// Printing precedence levels, loosest to tightest.
const PREC_CMP: u8 = 0;
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Compare { .. } | Expr::ForAll { .. } => PREC_CMP,
        Expr::Binary { op: BinOp::Add | BinOp::Sub, .. } => PREC_ADD,
        Expr::Binary { op: BinOp::Mul | BinOp::Div, .. } => PREC_MUL,
        Expr::Unary { .. } => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, min_prec: u8) -> fmt::Result {
    if precedence(child) < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

fn write_generators(f: &mut fmt::Formatter<'_>, generators: &[Generator]) -> fmt::Result {
    for g in generators {
        write!(f, " for {} in {}", g.var, DisplaySet(&g.set))?;
    }
    Ok(())
}

struct DisplaySet<'a>(&'a SetRef);

impl fmt::Display for DisplaySet<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            SetRef::Named(name) => f.write_str(name),
            SetRef::Range { start, end } => write!(f, "range({start}, {end})"),
        }
    }
}

impl fmt::Display for Expr {
    /// Canonical form: tuple indices, single spaces around binary and
    /// comparison operators, quantifier binders over the same set merged
    /// (`for all i, j in regions`), `with` introducing quantifier filters
    /// and `if` introducing sum filters. Reparsing the output yields an
    /// identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(n) => write!(f, "{n}"),
            Expr::Ident(name) => f.write_str(name),
            Expr::Index { base, subscripts } => {
                write!(f, "{base}[")?;
                for (i, s) in subscripts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{s}")?;
                }
                f.write_str("]")
            }
            Expr::Unary { op: UnaryOp::Neg, operand } => {
                f.write_str("-")?;
                write_child(f, operand, PREC_UNARY)
            }
            Expr::Binary { op, lhs, rhs } => {
                let (prec, sym) = match op {
                    BinOp::Add => (PREC_ADD, "+"),
                    BinOp::Sub => (PREC_ADD, "-"),
                    BinOp::Mul => (PREC_MUL, "*"),
                    BinOp::Div => (PREC_MUL, "/"),
                };
                write_child(f, lhs, prec)?;
                write!(f, " {sym} ")?;
                write_child(f, rhs, prec + 1)
            }
            Expr::Compare { op, lhs, rhs } => {
                write_child(f, lhs, PREC_ADD)?;
                write!(f, " {op} ")?;
                write_child(f, rhs, PREC_ADD)
            }
            Expr::Sum { body, generators, filter } => {
                write!(f, "sum(")?;
                write_child(f, body, PREC_ADD)?;
                write_generators(f, generators)?;
                if let Some(flt) = filter {
                    write!(f, " if {flt}")?;
                }
                f.write_str(")")
            }
            Expr::ForAll { body, generators, filter } => {
                write!(f, "{body} for all ")?;
                // Merge consecutive binders over the same set.
                let mut i = 0;
                let mut first_group = true;
                while i < generators.len() {
                    let mut j = i + 1;
                    while j < generators.len() && generators[j].set == generators[i].set {
                        j += 1;
                    }
                    if !first_group {
                        f.write_str(", ")?;
                    }
                    first_group = false;
                    let vars: Vec<&str> =
                        generators[i..j].iter().map(|g| g.var.as_str()).collect();
                    write!(f, "{} in {}", vars.join(", "), DisplaySet(&generators[i].set))?;
                    i = j;
                }
                if let Some(flt) = filter {
                    write!(f, " with {flt}")?;
                }
                Ok(())
            }
        }
    }
}
