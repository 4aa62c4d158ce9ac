//! Rate expression language.
//!
//! Model coefficients (fertility, mortality, growth, kernels) are entered as
//! plain arithmetic over named variables:
//!
//! ```text
//! expression := term (('+' | '-') term)*
//! term       := unary (('*' | '/') unary)*
//! unary      := '-' unary | power
//! power      := primary ('^' unary)?            # right associative
//! primary    := number | name | name '(' args ')' | '(' expression ')'
//! ```
//!
//! Functions: `exp(x)`, `log(x)`, `min(a, b)`, `max(a, b)` and
//! `indicator(lo, hi, x)`, which is 1 when `lo <= x <= hi` (closed at both
//! endpoints) and 0 otherwise. Numbers are ordinary decimal literals with an
//! optional exponent. Which variable names are in scope depends on the model
//! field being defined; evaluation with a missing name reports
//! [`Error::UnboundVariable`]. Division by zero, logarithms of nonpositive
//! values and non-finite intermediate results are reported as domain errors
//! rather than silently producing infinities.

use crate::error::{Error, ParseError, Result};
use std::collections::BTreeSet;
use std::fmt;

/// Binary operators in precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Built-in functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Min,
    Max,
    Indicator,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Min => "min",
            Func::Max => "max",
            Func::Indicator => "indicator",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Log => 1,
            Func::Min | Func::Max => 2,
            Func::Indicator => 3,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "indicator" => Some(Func::Indicator),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Number(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parsed rate expression.
#[derive(Debug, Clone, PartialEq)]
pub struct RateExpression {
    root: Expr,
}

impl RateExpression {
    /// Parses source text; the whole input must be consumed.
    pub fn parse(text: &str) -> std::result::Result<Self, ParseError> {
        let tokens = lex(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expression()?;
        if p.pos < p.tokens.len() {
            return Err(ParseError {
                position: p.tokens[p.pos].position,
                expected: "end of input".into(),
            });
        }
        Ok(RateExpression { root })
    }

    /// Evaluates with named bindings.
    pub fn eval(&self, bindings: &[(&str, f64)]) -> Result<f64> {
        eval_expr(&self.root, &|name| {
            bindings
                .iter()
                .find(|(n, _)| *n == name)
                .map(|&(_, v)| v)
        })
    }

    /// Canonical text form. Parsing the result yields an expression with the
    /// same canonical form, so `unparse . parse` is idempotent on its image.
    pub fn unparse(&self) -> String {
        let mut out = String::new();
        write_expr(&self.root, 0, &mut out);
        out
    }

    /// The set of variable names the expression references.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut set = BTreeSet::new();
        collect_vars(&self.root, &mut set);
        set
    }

    /// Resolves variable names to slot indices for allocation-free repeated
    /// evaluation. Unknown names are rejected here rather than at call time.
    pub fn compile(&self, slots: &[&str]) -> Result<CompiledRate> {
        let root = compile_expr(&self.root, slots)?;
        Ok(CompiledRate {
            root,
            n_slots: slots.len(),
        })
    }
}

impl fmt::Display for RateExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.unparse())
    }
}

/// Expression with variables resolved to positional slots.
#[derive(Debug, Clone)]
pub struct CompiledRate {
    root: CExpr,
    n_slots: usize,
}

#[derive(Debug, Clone)]
enum CExpr {
    Number(f64),
    Slot(usize),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Call(Func, Vec<CExpr>),
}

impl CompiledRate {
    /// Evaluates against a slot vector laid out as at compile time.
    pub fn eval(&self, slots: &[f64]) -> Result<f64> {
        debug_assert_eq!(slots.len(), self.n_slots);
        eval_compiled(&self.root, slots)
    }

    /// Constant expression (used for programmatically built models).
    pub fn constant(value: f64) -> Self {
        CompiledRate {
            root: CExpr::Number(value),
            n_slots: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// lexer

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    position: usize,
}

fn lex(text: &str) -> std::result::Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let position = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                let kind = match c {
                    '+' => TokenKind::Plus,
                    '-' => TokenKind::Minus,
                    '*' => TokenKind::Star,
                    '/' => TokenKind::Slash,
                    '^' => TokenKind::Caret,
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    _ => TokenKind::Comma,
                };
                tokens.push(Token { kind, position });
                i += 1;
            }
            '0'..='9' => {
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
                let slice = &text[start..i];
                let value: f64 = slice.parse().map_err(|_| ParseError {
                    position: start,
                    expected: "numeric literal".into(),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    position: start,
                });
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    position: start,
                });
            }
            _ => {
                return Err(ParseError {
                    position,
                    expected: "number, name or operator".into(),
                });
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// parser

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.position)
            .unwrap_or_else(|| {
                self.tokens
                    .last()
                    .map(|t| t.position + 1)
                    .unwrap_or(0)
            })
    }

    fn bump(&mut self) -> Option<TokenKind> {
        let t = self.tokens.get(self.pos).map(|t| t.kind.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> std::result::Result<(), ParseError> {
        if self.peek() == Some(kind) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError {
                position: self.here(),
                expected: what.into(),
            })
        }
    }

    fn expression(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Plus) => BinOp::Add,
                Some(TokenKind::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Star) => BinOp::Mul,
                Some(TokenKind::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> std::result::Result<Expr, ParseError> {
        if self.peek() == Some(&TokenKind::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> std::result::Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(&TokenKind::Caret) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> std::result::Result<Expr, ParseError> {
        let position = self.here();
        match self.bump() {
            Some(TokenKind::Number(v)) => Ok(Expr::Number(v)),
            Some(TokenKind::Ident(name)) => {
                if self.peek() == Some(&TokenKind::LParen) {
                    let func = Func::from_name(&name).ok_or_else(|| ParseError {
                        position,
                        expected: "one of exp, log, min, max, indicator".into(),
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.expression()?];
                    while self.peek() == Some(&TokenKind::Comma) {
                        self.pos += 1;
                        args.push(self.expression()?);
                    }
                    self.expect(&TokenKind::RParen, "closing parenthesis")?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            position,
                            expected: format!(
                                "{} arguments to {}",
                                func.arity(),
                                func.name()
                            ),
                        });
                    }
                    Ok(Expr::Call(func, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(TokenKind::LParen) => {
                let inner = self.expression()?;
                self.expect(&TokenKind::RParen, "closing parenthesis")?;
                Ok(inner)
            }
            _ => Err(ParseError {
                position,
                expected: "number, name or parenthesized expression".into(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// evaluation

fn apply_bin(op: BinOp, a: f64, b: f64, context: &str) -> Result<f64> {
    let value = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(Error::Domain {
                    context: format!("division in {context}"),
                    at: b,
                });
            }
            a / b
        }
        BinOp::Pow => a.powf(b),
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            context: format!("{op:?} in {context}"),
            at: a,
        })
    }
}

fn apply_call(func: Func, args: &[f64]) -> Result<f64> {
    let value = match func {
        Func::Exp => args[0].exp(),
        Func::Log => {
            if args[0] <= 0.0 {
                return Err(Error::Domain {
                    context: "log".into(),
                    at: args[0],
                });
            }
            args[0].ln()
        }
        Func::Min => args[0].min(args[1]),
        Func::Max => args[0].max(args[1]),
        Func::Indicator => {
            if args[0] <= args[2] && args[2] <= args[1] {
                1.0
            } else {
                0.0
            }
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            context: func.name().into(),
            at: args[0],
        })
    }
}

fn eval_expr(expr: &Expr, lookup: &impl Fn(&str) -> Option<f64>) -> Result<f64> {
    match expr {
        Expr::Number(v) => Ok(*v),
        Expr::Var(name) => lookup(name).ok_or_else(|| Error::UnboundVariable {
            name: name.clone(),
        }),
        Expr::Neg(inner) => Ok(-eval_expr(inner, lookup)?),
        Expr::Bin(op, a, b) => {
            let a = eval_expr(a, lookup)?;
            let b = eval_expr(b, lookup)?;
            apply_bin(*op, a, b, "expression")
        }
        Expr::Call(func, args) => {
            let mut vals = [0.0; 3];
            for (slot, arg) in vals.iter_mut().zip(args) {
                *slot = eval_expr(arg, lookup)?;
            }
            apply_call(*func, &vals[..args.len()])
        }
    }
}

fn eval_compiled(expr: &CExpr, slots: &[f64]) -> Result<f64> {
    match expr {
        CExpr::Number(v) => Ok(*v),
        CExpr::Slot(i) => Ok(slots[*i]),
        CExpr::Neg(inner) => Ok(-eval_compiled(inner, slots)?),
        CExpr::Bin(op, a, b) => {
            let a = eval_compiled(a, slots)?;
            let b = eval_compiled(b, slots)?;
            apply_bin(*op, a, b, "rate")
        }
        CExpr::Call(func, args) => {
            let mut vals = [0.0; 3];
            for (slot, arg) in vals.iter_mut().zip(args) {
                *slot = eval_compiled(arg, slots)?;
            }
            apply_call(*func, &vals[..args.len()])
        }
    }
}

fn compile_expr(expr: &Expr, slots: &[&str]) -> Result<CExpr> {
    Ok(match expr {
        Expr::Number(v) => CExpr::Number(*v),
        Expr::Var(name) => {
            let idx = slots
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::UnboundVariable { name: name.clone() })?;
            CExpr::Slot(idx)
        }
        Expr::Neg(inner) => CExpr::Neg(Box::new(compile_expr(inner, slots)?)),
        Expr::Bin(op, a, b) => CExpr::Bin(
            *op,
            Box::new(compile_expr(a, slots)?),
            Box::new(compile_expr(b, slots)?),
        ),
        Expr::Call(func, args) => CExpr::Call(
            *func,
            args.iter()
                .map(|a| compile_expr(a, slots))
                .collect::<Result<_>>()?,
        ),
    })
}

fn collect_vars<'a>(expr: &'a Expr, set: &mut BTreeSet<&'a str>) {
    match expr {
        Expr::Number(_) => {}
        Expr::Var(name) => {
            set.insert(name);
        }
        Expr::Neg(inner) => collect_vars(inner, set),
        Expr::Bin(_, a, b) => {
            collect_vars(a, set);
            collect_vars(b, set);
        }
        Expr::Call(_, args) => {
            for a in args {
                collect_vars(a, set);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// printing

// Precedence levels: 1 add/sub, 2 mul/div, 3 unary minus, 4 power, 5 atoms.
fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Bin(BinOp::Add | BinOp::Sub, _, _) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, _, _) => 2,
        Expr::Neg(_) => 3,
        Expr::Bin(BinOp::Pow, _, _) => 4,
        Expr::Number(_) | Expr::Var(_) | Expr::Call(_, _) => 5,
    }
}

fn write_wrapped(expr: &Expr, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
    }
    write_expr(expr, 0, out);
    if wrap {
        out.push(')');
    }
}

fn write_expr(expr: &Expr, _level: u8, out: &mut String) {
    match expr {
        Expr::Number(v) => {
            out.push_str(&format!("{v}"));
        }
        Expr::Var(name) => out.push_str(name),
        Expr::Neg(inner) => {
            out.push('-');
            write_wrapped(inner, precedence(inner) < 2, out);
        }
        Expr::Bin(op, a, b) => {
            let (symbol, prec) = match op {
                BinOp::Add => (" + ", 1),
                BinOp::Sub => (" - ", 1),
                BinOp::Mul => (" * ", 2),
                BinOp::Div => (" / ", 2),
                BinOp::Pow => (" ^ ", 4),
            };
            if *op == BinOp::Pow {
                // right associative; unary minus binds looser than the caret
                write_wrapped(a, precedence(a) <= 4, out);
                out.push_str(symbol);
                write_wrapped(b, precedence(b) < 3, out);
            } else {
                write_wrapped(a, precedence(a) < prec, out);
                out.push_str(symbol);
                let right_needs = match op {
                    BinOp::Sub | BinOp::Div => precedence(b) <= prec,
                    _ => precedence(b) < prec,
                };
                write_wrapped(b, right_needs, out);
            }
        }
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(arg, 0, out);
            }
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_ja(text: &str, s: f64, e1: f64, e2: f64) -> Result<f64> {
        RateExpression::parse(text)
            .unwrap()
            .eval(&[("s", s), ("E1", e1), ("E2", e2)])
    }

    #[test]
    fn fertility_expression() {
        let v = eval_ja("3*indicator(1,2,s)/(1+E1+E2)", 1.5, 1.0, 1.0).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(eval_ja("3*indicator(1,2,s)/(1+E1+E2)", 0.5, 1.0, 1.0).unwrap(), 0.0);
        // closed at both endpoints
        assert_eq!(eval_ja("indicator(1,2,s)", 1.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(eval_ja("indicator(1,2,s)", 2.0, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = RateExpression::parse("1+2*3").unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 7.0);
        let e = RateExpression::parse("2^3^2").unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 512.0);
        let e = RateExpression::parse("-2^2").unwrap();
        assert_eq!(e.eval(&[]).unwrap(), -4.0);
        let e = RateExpression::parse("10-3-2").unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 5.0);
        let e = RateExpression::parse("2^-1").unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 0.5);
    }

    #[test]
    fn functions() {
        let e = RateExpression::parse("exp(log(2))").unwrap();
        assert!((e.eval(&[]).unwrap() - 2.0).abs() <= 1e-15);
        let e = RateExpression::parse("min(2, 3) + max(2, 3)").unwrap();
        assert_eq!(e.eval(&[]).unwrap(), 5.0);
    }

    #[test]
    fn domain_errors() {
        let e = RateExpression::parse("1/(Q-1)").unwrap();
        assert!(matches!(e.eval(&[("Q", 1.0)]), Err(Error::Domain { .. })));
        let e = RateExpression::parse("log(0)").unwrap();
        assert!(matches!(e.eval(&[]), Err(Error::Domain { .. })));
    }

    #[test]
    fn unbound_variable() {
        let e = RateExpression::parse("1+z").unwrap();
        match e.eval(&[("s", 1.0)]) {
            Err(Error::UnboundVariable { name }) => assert_eq!(name, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = RateExpression::parse("1+").unwrap_err();
        assert_eq!(err.position, 2);
        let err = RateExpression::parse("indicator(1,2)").unwrap_err();
        assert_eq!(err.position, 0);
        assert!(err.expected.contains("3 arguments"));
        let err = RateExpression::parse("foo(1)").unwrap_err();
        assert!(err.expected.contains("indicator"));
        let err = RateExpression::parse("(1+2").unwrap_err();
        assert!(err.expected.contains("closing"));
    }

    #[test]
    fn unparse_is_canonical() {
        let e = RateExpression::parse("3*indicator(1,2,s)/(1+E1+E2)").unwrap();
        assert_eq!(e.unparse(), "3 * indicator(1, 2, s) / (1 + E1 + E2)");
        let again = RateExpression::parse(&e.unparse()).unwrap();
        assert_eq!(again.unparse(), e.unparse());
    }

    #[test]
    fn unparse_respects_structure() {
        for text in [
            "a - (b - c)",
            "a / (b / c)",
            "(a + b) * c",
            "(a ^ b) ^ c",
            "a ^ (b * c)",
            "(-a) ^ b",
            "-(a + b)",
            "a ^ -b",
        ] {
            let e = RateExpression::parse(text).unwrap();
            let printed = e.unparse();
            let reparsed = RateExpression::parse(&printed).unwrap();
            assert_eq!(reparsed, e, "round trip changed {text} -> {printed}");
        }
    }

    #[test]
    fn compiled_matches_interpreted() {
        let e = RateExpression::parse("3*indicator(1,2,s)/(1+E1+E2)").unwrap();
        let c = e.compile(&["s", "E1", "E2"]).unwrap();
        for s in [0.0, 1.0, 1.5, 2.0] {
            let a = e.eval(&[("s", s), ("E1", 0.5), ("E2", 2.0)]).unwrap();
            let b = c.eval(&[s, 0.5, 2.0]).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn compile_rejects_unknown_names() {
        let e = RateExpression::parse("s + w").unwrap();
        assert!(matches!(
            e.compile(&["s", "E1", "E2"]),
            Err(Error::UnboundVariable { .. })
        ));
    }

    #[test]
    fn variables_are_collected() {
        let e = RateExpression::parse("3*indicator(1,2,s)/(1+E1+E2)").unwrap();
        let vars: Vec<&str> = e.variables().into_iter().collect();
        assert_eq!(vars, vec!["E1", "E2", "s"]);
    }
}
