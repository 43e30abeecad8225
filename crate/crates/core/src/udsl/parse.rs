use std::fmt;

use thiserror::Error;

use super::{Operator, TimeRef, Unit, UtilityExpr};
use crate::cellsys::CellState;
use crate::structures::{Space, Structure};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: &'static str, found: String },
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("`{op}` takes {expected} argument(s)")]
    Arity { op: &'static str, expected: usize },
    #[error("constant {0} is outside [0, 1]")]
    ConstantOutOfRange(String),
    #[error("discount factor {0} must lie strictly inside (0, 1)")]
    InvalidGamma(String),
    #[error("`{0}` is not a valid number")]
    InvalidNumber(String),
    #[error("step variable `t` used outside timemean/discount")]
    UnboundStep,
    #[error("cell {0} listed twice")]
    DuplicateCell(usize),
    #[error("empty cell set")]
    EmptySet,
    #[error("`{0}` is not a cell:state pair")]
    InvalidPair(String),
    #[error("trailing input after expression")]
    TrailingInput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Open,
    Close,
    OpenSet,
    CloseSet,
    Atom(String),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Open => f.write_str("`(`"),
            Tok::Close => f.write_str("`)`"),
            Tok::OpenSet => f.write_str("`{`"),
            Tok::CloseSet => f.write_str("`}`"),
            Tok::Atom(a) => write!(f, "`{a}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<Spanned> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut atom: Option<(String, usize, usize)> = None;

    let flush = |atom: &mut Option<(String, usize, usize)>, out: &mut Vec<Spanned>| {
        if let Some((text, line, column)) = atom.take() {
            out.push(Spanned {
                tok: Tok::Atom(text),
                line,
                column,
            });
        }
    };

    for c in text.chars() {
        let punct = match c {
            '(' => Some(Tok::Open),
            ')' => Some(Tok::Close),
            '{' => Some(Tok::OpenSet),
            '}' => Some(Tok::CloseSet),
            _ => None,
        };
        if let Some(tok) = punct {
            flush(&mut atom, &mut out);
            out.push(Spanned { tok, line, column });
        } else if c.is_whitespace() {
            flush(&mut atom, &mut out);
        } else {
            atom.get_or_insert_with(|| (String::new(), line, column)).0.push(c);
        }
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    flush(&mut atom, &mut out);
    out
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
    binders: usize,
}

/// Parses one utility expression.
pub fn parse(text: &str) -> Result<UtilityExpr, ParseError> {
    let (mut line, mut column) = (1, 1);
    for c in text.chars() {
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    let mut p = Parser {
        toks: tokenize(text),
        pos: 0,
        end: (line, column),
        binders: 0,
    };
    let expr = p.expr()?;
    if let Some(extra) = p.toks.get(p.pos) {
        return Err(ParseError {
            line: extra.line,
            column: extra.column,
            kind: ParseErrorKind::TrailingInput,
        });
    }
    Ok(expr)
}

impl Parser {
    fn err_here(&self, kind: ParseErrorKind) -> ParseError {
        let (line, column) = self.toks.get(self.pos).map(|t| (t.line, t.column)).unwrap_or(self.end);
        ParseError { line, column, kind }
    }

    fn err_at(&self, at: usize, kind: ParseErrorKind) -> ParseError {
        let t = &self.toks[at];
        ParseError {
            line: t.line,
            column: t.column,
            kind,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn bump(&mut self) -> Result<Tok, ParseError> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| self.err_here(ParseErrorKind::UnexpectedEnd))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: Tok, expected: &'static str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let found = t.to_string();
                Err(self.err_here(ParseErrorKind::Unexpected { expected, found }))
            }
            None => Err(self.err_here(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn atom(&mut self, expected: &'static str) -> Result<(String, usize), ParseError> {
        let at = self.pos;
        match self.bump()? {
            Tok::Atom(a) => Ok((a, at)),
            other => {
                self.pos = at;
                Err(self.err_here(ParseErrorKind::Unexpected {
                    expected,
                    found: other.to_string(),
                }))
            }
        }
    }

    /// An argument slot: reports arity when the list closes early.
    fn arg_expr(&mut self, op: Operator, expected: usize) -> Result<UtilityExpr, ParseError> {
        if self.peek() == Some(&Tok::Close) {
            return Err(self.err_here(ParseErrorKind::Arity {
                op: op.name(),
                expected,
            }));
        }
        self.expr()
    }

    fn close(&mut self, op: Operator, expected: usize) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Close) => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(self.err_here(ParseErrorKind::Arity {
                op: op.name(),
                expected,
            })),
            None => Err(self.err_here(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn expr(&mut self) -> Result<UtilityExpr, ParseError> {
        self.expect(Tok::Open, "`(`")?;
        let (name, at) = self.atom("an operator")?;
        let op = Operator::from_name(&name).ok_or_else(|| self.err_at(at, ParseErrorKind::UnknownOperator(name)))?;

        let arity = op.arity();
        let expr = match op {
            Operator::Const => {
                let value = self.unit(arity, op, ParseErrorKind::ConstantOutOfRange)?;
                UtilityExpr::Const(value)
            }
            Operator::Alive => {
                let cell = self.index(op, arity)?;
                let t = self.time(op, arity)?;
                UtilityExpr::Alive { cell, t }
            }
            Operator::FracLive => {
                let space = self.cell_set(op, arity)?;
                let t = self.time(op, arity)?;
                UtilityExpr::FracLive { space, t }
            }
            Operator::Match => {
                let structure = self.pair_set(op, arity)?;
                let t = self.time(op, arity)?;
                UtilityExpr::Match { structure, t }
            }
            Operator::TimeMean => {
                self.binders += 1;
                let body = self.arg_expr(op, arity);
                self.binders -= 1;
                UtilityExpr::TimeMean(Box::new(body?))
            }
            Operator::Discount => {
                let gamma = self.unit(arity, op, ParseErrorKind::InvalidGamma)?;
                if !gamma.is_interior() {
                    return Err(self.err_at(self.pos - 1, ParseErrorKind::InvalidGamma(gamma.to_string())));
                }
                self.binders += 1;
                let body = self.arg_expr(op, arity);
                self.binders -= 1;
                UtilityExpr::Discount {
                    gamma,
                    body: Box::new(body?),
                }
            }
            Operator::Clamp => UtilityExpr::Clamp(Box::new(self.arg_expr(op, arity)?)),
            Operator::Add | Operator::Sub | Operator::Mul | Operator::Min | Operator::Max => {
                let a = Box::new(self.arg_expr(op, arity)?);
                let b = Box::new(self.arg_expr(op, arity)?);
                match op {
                    Operator::Add => UtilityExpr::Add(a, b),
                    Operator::Sub => UtilityExpr::Sub(a, b),
                    Operator::Mul => UtilityExpr::Mul(a, b),
                    Operator::Min => UtilityExpr::Min(a, b),
                    _ => UtilityExpr::Max(a, b),
                }
            }
        };
        self.close(op, arity)?;
        Ok(expr)
    }

    fn scalar_atom(
        &mut self,
        op: Operator,
        arity: usize,
        expected: &'static str,
    ) -> Result<(String, usize), ParseError> {
        if self.peek() == Some(&Tok::Close) {
            return Err(self.err_here(ParseErrorKind::Arity {
                op: op.name(),
                expected: arity,
            }));
        }
        self.atom(expected)
    }

    fn unit(
        &mut self,
        arity: usize,
        op: Operator,
        out_of_range: fn(String) -> ParseErrorKind,
    ) -> Result<Unit, ParseError> {
        let (text, at) = self.scalar_atom(op, arity, "a decimal")?;
        let value = parse_decimal(&text).ok_or_else(|| self.err_at(at, ParseErrorKind::InvalidNumber(text.clone())))?;
        Unit::new(value).ok_or_else(|| self.err_at(at, out_of_range(text)))
    }

    fn index(&mut self, op: Operator, arity: usize) -> Result<usize, ParseError> {
        let (text, at) = self.scalar_atom(op, arity, "a cell index")?;
        parse_index(&text).ok_or_else(|| self.err_at(at, ParseErrorKind::InvalidNumber(text)))
    }

    fn time(&mut self, op: Operator, arity: usize) -> Result<TimeRef, ParseError> {
        let (text, at) = self.scalar_atom(op, arity, "a time index")?;
        if text == "t" {
            if self.binders == 0 {
                return Err(self.err_at(at, ParseErrorKind::UnboundStep));
            }
            return Ok(TimeRef::Step);
        }
        parse_index(&text)
            .map(TimeRef::At)
            .ok_or_else(|| self.err_at(at, ParseErrorKind::InvalidNumber(text)))
    }

    fn set_items(&mut self, op: Operator, arity: usize) -> Result<(Vec<(String, usize)>, usize), ParseError> {
        if self.peek() == Some(&Tok::Close) {
            return Err(self.err_here(ParseErrorKind::Arity {
                op: op.name(),
                expected: arity,
            }));
        }
        let open = self.pos;
        self.expect(Tok::OpenSet, "`{`")?;
        let mut items = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::CloseSet) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Atom(_)) => items.push(self.atom("a set element")?),
                Some(other) => {
                    let found = other.to_string();
                    return Err(self.err_here(ParseErrorKind::Unexpected {
                        expected: "a set element or `}`",
                        found,
                    }));
                }
                None => return Err(self.err_here(ParseErrorKind::UnexpectedEnd)),
            }
        }
        if items.is_empty() {
            return Err(self.err_at(open, ParseErrorKind::EmptySet));
        }
        Ok((items, open))
    }

    fn cell_set(&mut self, op: Operator, arity: usize) -> Result<Space, ParseError> {
        let (items, _) = self.set_items(op, arity)?;
        let mut cells = Vec::with_capacity(items.len());
        for (text, at) in items {
            let cell = parse_index(&text).ok_or_else(|| self.err_at(at, ParseErrorKind::InvalidNumber(text)))?;
            if cells.contains(&cell) {
                return Err(self.err_at(at, ParseErrorKind::DuplicateCell(cell)));
            }
            cells.push(cell);
        }
        Ok(Space::new(cells).expect("non-empty"))
    }

    fn pair_set(&mut self, op: Operator, arity: usize) -> Result<Structure, ParseError> {
        let (items, _) = self.set_items(op, arity)?;
        let mut pairs: Vec<(usize, CellState)> = Vec::with_capacity(items.len());
        for (text, at) in items {
            let parsed = text
                .split_once(':')
                .and_then(|(c, s)| Some((parse_index(c)?, parse_index(s)?)))
                .and_then(|(c, s)| Some((c, CellState::try_from(s).ok()?)));
            let (cell, state) = parsed.ok_or_else(|| self.err_at(at, ParseErrorKind::InvalidPair(text)))?;
            if pairs.iter().any(|p| p.0 == cell) {
                return Err(self.err_at(at, ParseErrorKind::DuplicateCell(cell)));
            }
            pairs.push((cell, state));
        }
        Ok(Structure::from_pairs(&pairs).expect("distinct non-empty cells"))
    }
}

fn parse_index(text: &str) -> Option<usize> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

/// Plain decimals only: digits with an optional fractional part.
fn parse_decimal(text: &str) -> Option<f64> {
    let (int, frac) = match text.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (text, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    text.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(text: &str) -> ParseErrorKind {
        parse(text).unwrap_err().kind
    }

    #[test]
    fn leaves() {
        assert_eq!(parse("(const 0.5)").unwrap(), UtilityExpr::constant(0.5).unwrap());
        assert_eq!(parse("(alive 0 2)").unwrap(), UtilityExpr::alive(0, 2));
        assert_eq!(
            parse("(fraclive {2 0} 1)").unwrap(),
            UtilityExpr::FracLive {
                space: Space::new(vec![0, 2]).unwrap(),
                t: TimeRef::At(1)
            }
        );
        assert_eq!(print_of("  ( match {2:0 0:1}\n 3 ) "), "(match {0:1 2:0} 3)");
    }

    fn print_of(text: &str) -> String {
        parse(text).unwrap().to_string()
    }

    #[test]
    fn canonicalizes_numbers() {
        assert_eq!(print_of("(const 0.50)"), "(const 0.5)");
        assert_eq!(print_of("(const 1.0)"), "(const 1)");
        assert_eq!(print_of("(const 00)"), "(const 0)");
    }

    #[test]
    fn const_range() {
        assert_eq!(kind("(const 1.5)"), ParseErrorKind::ConstantOutOfRange("1.5".into()));
        assert_eq!(kind("(const -0.5)"), ParseErrorKind::InvalidNumber("-0.5".into()));
        assert_eq!(kind("(const 1e-3)"), ParseErrorKind::InvalidNumber("1e-3".into()));
        assert_eq!(kind("(const .5)"), ParseErrorKind::InvalidNumber(".5".into()));
    }

    #[test]
    fn gamma_must_be_interior() {
        assert_eq!(
            kind("(discount 1 (alive 0 t))"),
            ParseErrorKind::InvalidGamma("1".into())
        );
        assert_eq!(
            kind("(discount 0 (alive 0 t))"),
            ParseErrorKind::InvalidGamma("0".into())
        );
        assert_eq!(
            kind("(discount 2 (alive 0 t))"),
            ParseErrorKind::InvalidGamma("2".into())
        );
        assert!(parse("(discount 0.9 (alive 0 t))").is_ok());
    }

    #[test]
    fn arity_and_operator_errors() {
        assert_eq!(
            kind("(add (const 0))"),
            ParseErrorKind::Arity { op: "add", expected: 2 }
        );
        assert_eq!(
            kind("(const 0.5 0.2)"),
            ParseErrorKind::Arity {
                op: "const",
                expected: 1
            }
        );
        assert_eq!(
            kind("(clamp (const 0) (const 1))"),
            ParseErrorKind::Arity {
                op: "clamp",
                expected: 1
            }
        );
        assert_eq!(
            kind("(alive 0)"),
            ParseErrorKind::Arity {
                op: "alive",
                expected: 2
            }
        );
        assert_eq!(kind("(frob 1)"), ParseErrorKind::UnknownOperator("frob".into()));
        assert_eq!(
            kind("(ADD (const 0) (const 1))"),
            ParseErrorKind::UnknownOperator("ADD".into())
        );
    }

    #[test]
    fn step_variable_scoping() {
        assert_eq!(kind("(alive 0 t)"), ParseErrorKind::UnboundStep);
        assert!(parse("(timemean (add (alive 0 t) (alive 1 0)))").is_ok());
        assert_eq!(
            kind("(add (timemean (alive 0 t)) (alive 0 t))"),
            ParseErrorKind::UnboundStep
        );
    }

    #[test]
    fn set_errors() {
        assert_eq!(kind("(fraclive {} 0)"), ParseErrorKind::EmptySet);
        assert_eq!(kind("(fraclive {1 1} 0)"), ParseErrorKind::DuplicateCell(1));
        assert_eq!(kind("(match {0:1 0:0} 0)"), ParseErrorKind::DuplicateCell(0));
        assert_eq!(kind("(match {0-1} 0)"), ParseErrorKind::InvalidPair("0-1".into()));
    }

    #[test]
    fn positions() {
        let err = parse("(add\n  (const 0)\n  (bogus 1))").unwrap_err();
        assert_eq!((err.line, err.column), (3, 4));
        let err = parse("(const 0.5").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!((err.line, err.column), (1, 11));
        let err = parse("(const 0.5) x").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::TrailingInput);
        assert_eq!((err.line, err.column), (1, 13));
        assert_eq!(parse("").unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
    }
}
