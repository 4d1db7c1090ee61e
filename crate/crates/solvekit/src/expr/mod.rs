//! Parser and evaluator for the Python-style symbolic expressions used in
//! objectives and constraints.
//!
//! The grammar (EBNF, whitespace-insensitive):
//!
//! ```text
//! toplevel := expr [ "for" "all" quant-groups [("with"|"if") comparison] ]
//! expr     := arith [cmp-op arith]
//! arith    := term (("+" | "-") term)*
//! term     := factor (("*" | "/") factor)*
//! factor   := "-" factor | number | sum-call | index | ident | "(" expr ")"
//! sum-call := "sum" "(" arith gen+ ["if" comparison] ")"
//! gen      := "for" ident "in" set
//! index    := ident ("[" arith ("," arith)* "]")+
//! set      := ident | "range" "(" arith ["," arith] ")"
//! quant-groups := group ("," group)*
//! group    := ident ("," ident)* "in" set
//! cmp-op   := "<=" | ">=" | "==" | "!=" | "<" | ">"
//! ```
//!
//! Both `c[i][j]` (chained) and `x[i,j]` (tuple) index syntax are accepted and
//! normalized to tuple form. List indexing is 1-based; `range(a, b)` is a
//! half-open integer range with Python semantics. Universal quantifiers
//! (`... for all i, j in regions with i != j`) may only wrap a comparison.

mod ast;
mod eval;
mod parser;

pub use ast::{BinOp, CmpOp, Expr, Generator, SetRef, UnaryOp};
pub use eval::{
    canonical_var_name, comparison_holds, constraint_satisfied, eval_arith, eval_constraint,
    Environment, EvalError, InputTensor, Violation, FEASIBILITY_SLACK,
};
pub use parser::{parse_expr, ParseError};
