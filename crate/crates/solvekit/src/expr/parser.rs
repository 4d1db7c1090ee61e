use thiserror::Error;

use super::ast::{BinOp, CmpOp, Expr, Generator, SetRef, UnaryOp};

/// Expression parse failure, reported with the byte offset of the offending
/// token and what the parser would have accepted there.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("syntax error at byte {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Cmp(CmpOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Cmp(op) => format!("`{op}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const RESERVED: &[&str] = &["for", "all", "in", "if", "with", "sum", "range"];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => {
                toks.push((Tok::Plus, i));
                i += 1;
            }
            b'-' => {
                toks.push((Tok::Minus, i));
                i += 1;
            }
            b'*' => {
                toks.push((Tok::Star, i));
                i += 1;
            }
            b'/' => {
                toks.push((Tok::Slash, i));
                i += 1;
            }
            b'(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            b'[' => {
                toks.push((Tok::LBracket, i));
                i += 1;
            }
            b']' => {
                toks.push((Tok::RBracket, i));
                i += 1;
            }
            b',' => {
                toks.push((Tok::Comma, i));
                i += 1;
            }
            b'<' | b'>' | b'=' | b'!' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, two) {
                    (b'<', true) => CmpOp::Le,
                    (b'>', true) => CmpOp::Ge,
                    (b'=', true) => CmpOp::Eq,
                    (b'!', true) => CmpOp::Ne,
                    (b'<', false) => CmpOp::Lt,
                    (b'>', false) => CmpOp::Gt,
                    _ => {
                        return Err(ParseError {
                            offset: i,
                            expected: "a comparison operator".into(),
                            found: format!("`{}`", c as char),
                        })
                    }
                };
                toks.push((Tok::Cmp(op), i));
                i += if two { 2 } else { 1 };
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    expected: "a number".into(),
                    found: format!("`{text}`"),
                })?;
                toks.push((Tok::Number(value), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(src[start..i].to_string()), start));
            }
            _ => {
                return Err(ParseError {
                    offset: i,
                    expected: "a token".into(),
                    found: format!("`{}`", c as char),
                })
            }
        }
    }
    toks.push((Tok::Eof, src.len()));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.peek_offset(),
            expected: expected.into(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.peek_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let name = s.clone();
                self.bump();
                Ok(name)
            }
            _ => Err(self.error(what)),
        }
    }

    fn toplevel(&mut self) -> Result<Expr, ParseError> {
        let inner = self.expr()?;
        let expr = if self.peek_keyword("for") {
            self.bump();
            self.expect_keyword("all")?;
            let generators = self.quant_groups()?;
            let filter = if self.peek_keyword("with") || self.peek_keyword("if") {
                self.bump();
                Some(Box::new(self.comparison()?))
            } else {
                None
            };
            Expr::ForAll { body: Box::new(inner), generators, filter }
        } else {
            inner
        };
        if *self.peek() != Tok::Eof {
            return Err(self.error("end of input"));
        }
        Ok(expr)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.arith()?;
        if let Tok::Cmp(op) = *self.peek() {
            self.bump();
            let rhs = self.arith()?;
            Ok(Expr::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
        } else {
            Ok(lhs)
        }
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.arith()?;
        let op = match *self.peek() {
            Tok::Cmp(op) => op,
            _ => return Err(self.error("a comparison operator")),
        };
        self.bump();
        let rhs = self.arith()?;
        Ok(Expr::Compare { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
    }

    fn arith(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                let operand = self.factor()?;
                Ok(Expr::Unary { op: UnaryOp::Neg, operand: Box::new(operand) })
            }
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::Number(n))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if name == "sum" {
                    self.bump();
                    return self.sum_call();
                }
                if RESERVED.contains(&name.as_str()) {
                    return Err(self.error("an expression"));
                }
                self.bump();
                if *self.peek() == Tok::LParen {
                    return Err(self.error("`[` or an operator (function calls other than `sum` are unsupported)"));
                }
                if *self.peek() == Tok::LBracket {
                    let mut subscripts = Vec::new();
                    // Chained `c[i][j]` and tuple `x[i,j]` both flatten here.
                    while *self.peek() == Tok::LBracket {
                        self.bump();
                        subscripts.push(self.arith()?);
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            subscripts.push(self.arith()?);
                        }
                        self.expect(Tok::RBracket, "`]`")?;
                    }
                    return Ok(Expr::Index { base: name, subscripts });
                }
                Ok(Expr::Ident(name))
            }
            _ => Err(self.error("a number, identifier, `-`, or `(`")),
        }
    }

    fn sum_call(&mut self) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "`(` after `sum`")?;
        let body = self.arith()?;
        let mut generators = Vec::new();
        if !self.peek_keyword("for") {
            return Err(self.error("`for` (sum requires at least one generator)"));
        }
        while self.peek_keyword("for") {
            self.bump();
            let var = self.ident("an index variable")?;
            self.expect_keyword("in")?;
            let set = self.set_ref()?;
            generators.push(Generator { var, set });
        }
        let filter = if self.peek_keyword("if") {
            self.bump();
            Some(Box::new(self.comparison()?))
        } else {
            None
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(Expr::Sum { body: Box::new(body), generators, filter })
    }

    fn set_ref(&mut self) -> Result<SetRef, ParseError> {
        if self.peek_keyword("range") {
            self.bump();
            self.expect(Tok::LParen, "`(` after `range`")?;
            let first = self.arith()?;
            let set = if *self.peek() == Tok::Comma {
                self.bump();
                let end = self.arith()?;
                SetRef::Range { start: Box::new(first), end: Box::new(end) }
            } else {
                SetRef::Range { start: Box::new(Expr::Number(0.0)), end: Box::new(first) }
            };
            self.expect(Tok::RParen, "`)`")?;
            Ok(set)
        } else {
            let name = self.ident("an index set name")?;
            Ok(SetRef::Named(name))
        }
    }

    fn quant_groups(&mut self) -> Result<Vec<Generator>, ParseError> {
        let mut generators = Vec::new();
        loop {
            let mut vars = vec![self.ident("an index variable")?];
            while *self.peek() == Tok::Comma {
                self.bump();
                vars.push(self.ident("an index variable")?);
            }
            self.expect_keyword("in")?;
            let set = self.set_ref()?;
            for var in vars {
                generators.push(Generator { var, set: set.clone() });
            }
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok(generators)
    }
}

/// Parse one expression (optionally wrapped in a `for all` quantifier).
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    parser.toplevel()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sum_with_two_generators_and_filter() {
        let e = parse_expr(
            "sum(transportation_costs[i][j] * x[i,j] for i in regions for j in regions if i != j)",
        )
        .unwrap();
        match &e {
            Expr::Sum { generators, filter, .. } => {
                assert_eq!(generators.len(), 2);
                assert!(filter.is_some());
            }
            other => panic!("expected sum, got {other:?}"),
        }
    }

    #[test]
    fn parses_forall_wrapped_comparison() {
        let e = parse_expr("x[i,j] >= 0  for all i, j in regions with i != j").unwrap();
        match &e {
            Expr::ForAll { body, generators, filter } => {
                assert!(matches!(body.as_ref(), Expr::Compare { op: CmpOp::Ge, .. }));
                assert_eq!(generators.len(), 2);
                assert!(filter.is_some());
            }
            other => panic!("expected forall, got {other:?}"),
        }
    }

    #[test]
    fn chained_and_tuple_indices_normalize_identically() {
        let chained = parse_expr("c[i][j]").unwrap();
        let tuple = parse_expr("c[i,j]").unwrap();
        assert_eq!(chained, tuple);
    }

    #[test]
    fn incomplete_input_reports_offset() {
        let err = parse_expr("1 + ").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(parse_expr("").is_err());
    }

    #[test]
    fn rejects_unknown_function_calls() {
        assert!(parse_expr("abs(x)").is_err());
        assert!(parse_expr("min(a, b)").is_err());
    }

    #[test]
    fn range_sets_parse_with_one_or_two_arguments() {
        let one = parse_expr("sum(a[i] for i in range(4))").unwrap();
        let two = parse_expr("sum(a[i] for i in range(1, 5))").unwrap();
        assert!(matches!(one, Expr::Sum { .. }));
        assert!(matches!(two, Expr::Sum { .. }));
    }

    #[test]
    fn multiple_quantifier_groups() {
        let e = parse_expr("y[i,k] <= 5 for all i in rows, k in cols").unwrap();
        match e {
            Expr::ForAll { generators, .. } => {
                assert_eq!(generators[0].var, "i");
                assert_eq!(generators[0].set, SetRef::Named("rows".into()));
                assert_eq!(generators[1].var, "k");
                assert_eq!(generators[1].set, SetRef::Named("cols".into()));
            }
            other => panic!("expected forall, got {other:?}"),
        }
    }
}
