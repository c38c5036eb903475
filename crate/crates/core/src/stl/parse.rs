//! Recursive-descent parser for the specification language.
//!
//! ```text
//! formula   := or
//! or        := and ( '|' and )*
//! and       := until ( '&' until )*
//! until     := unary ( 'U' interval unary )?
//! unary     := '!' unary | 'G' interval unary | 'F' interval unary
//!            | '(' formula ')' | predicate
//! interval  := '[' number ',' number ']'
//! predicate := linexpr ( '>=' | '>' | '<=' | '<' ) linexpr
//!            | vector 'in' REGION
//!            | 'dist_inf' '(' vector ',' vector ')' ( '>=' | '>' ) number
//! linexpr   := ['-'] term ( ( '+' | '-' ) term )*
//! term      := number [ '*' scalar ] | scalar [ '*' number ]
//! ```
//!
//! `&`/`&&` and `|`/`||` are accepted. Strict and non-strict comparisons
//! share the same robustness. Scalars are names such as `uav1.p.x`; vectors
//! are `uavK.p`, `uavK.v`, `uavK.a`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::ast::{Formula, Interval, Region};
use super::signal::SignalLayout;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Syntax(String),
    UndeclaredSignal(String),
    UndeclaredRegion(String),
    MalformedInterval { a: f64, b: f64 },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            ParseErrorKind::UndeclaredSignal(s) => write!(f, "undeclared signal `{s}`"),
            ParseErrorKind::UndeclaredRegion(s) => write!(f, "undeclared region `{s}`"),
            ParseErrorKind::MalformedInterval { a, b } => {
                write!(f, "malformed interval [{a}, {b}]: need 0 <= a <= b < inf")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LBrack,
    RBrack,
    LParen,
    RParen,
    Comma,
    And,
    Or,
    Bang,
    Ge,
    Gt,
    Le,
    Lt,
    Plus,
    Minus,
    Star,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Eof => write!(f, "end of input"),
            other => {
                let s = match other {
                    Tok::LBrack => "[",
                    Tok::RBrack => "]",
                    Tok::LParen => "(",
                    Tok::RParen => ")",
                    Tok::Comma => ",",
                    Tok::And => "&",
                    Tok::Or => "|",
                    Tok::Bang => "!",
                    Tok::Ge => ">=",
                    Tok::Gt => ">",
                    Tok::Le => "<=",
                    Tok::Lt => "<",
                    Tok::Plus => "+",
                    Tok::Minus => "-",
                    Tok::Star => "*",
                    _ => unreachable!(),
                };
                write!(f, "`{s}`")
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError {
        line,
        col,
        kind: ParseErrorKind::Syntax(msg),
    };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let two = |n: char| i + 1 < chars.len() && chars[i + 1] == n;
        let (tok, width) = match c {
            '[' => (Tok::LBrack, 1),
            ']' => (Tok::RBrack, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            ',' => (Tok::Comma, 1),
            '+' => (Tok::Plus, 1),
            '-' => (Tok::Minus, 1),
            '*' => (Tok::Star, 1),
            '!' => (Tok::Bang, 1),
            '&' => (Tok::And, if two('&') { 2 } else { 1 }),
            '|' => (Tok::Or, if two('|') { 2 } else { 1 }),
            '>' if two('=') => (Tok::Ge, 2),
            '>' => (Tok::Gt, 1),
            '<' if two('=') => (Tok::Le, 2),
            '<' => (Tok::Lt, 1),
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s: String = chars[i..j].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| err(l0, c0, format!("invalid number `{s}`")))?;
                (Tok::Num(v), j - i)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_ascii_alphanumeric() || chars[j] == '_' || chars[j] == '.')
                {
                    j += 1;
                }
                (Tok::Ident(chars[i..j].iter().collect()), j - i)
            }
            other => return Err(err(l0, c0, format!("unexpected character `{other}`"))),
        };
        out.push(Spanned {
            tok,
            line: l0,
            col: c0,
        });
        i += width;
        col += width;
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const KEYWORDS: [&str; 5] = ["G", "F", "U", "in", "dist_inf"];

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    layout: &'a SignalLayout,
    regions: &'a BTreeMap<String, Region>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn here(&self, kind: ParseErrorKind) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError {
            line: t.line,
            col: t.col,
            kind,
        }
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(self.here(ParseErrorKind::Syntax(msg.into())))
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected {want}, found {}", self.peek()))
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let first = self.conjunction()?;
        if *self.peek() != Tok::Or {
            return Ok(first);
        }
        let mut parts = vec![first];
        while *self.peek() == Tok::Or {
            self.bump();
            parts.push(self.conjunction()?);
        }
        Ok(Formula::Or(parts))
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let first = self.until()?;
        if *self.peek() != Tok::And {
            return Ok(first);
        }
        let mut parts = vec![first];
        while *self.peek() == Tok::And {
            self.bump();
            parts.push(self.until()?);
        }
        Ok(Formula::And(parts))
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let left = self.unary()?;
        if self.is_keyword("U") {
            self.bump();
            let iv = self.interval()?;
            let right = self.unary()?;
            return Ok(Formula::until(iv, left, right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Ident(s) if s == "G" || s == "F" => {
                self.bump();
                let iv = self.interval()?;
                let body = self.unary()?;
                Ok(if s == "G" {
                    Formula::always(iv, body)
                } else {
                    Formula::eventually(iv, body)
                })
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Tok::Ident(s) if s == "dist_inf" => self.separation(),
            Tok::Ident(s) if s == "U" || s == "in" => {
                self.syntax(format!("unexpected keyword `{s}`"))
            }
            Tok::Ident(_) | Tok::Num(_) | Tok::Minus => self.predicate(),
            other => self.syntax(format!("expected a formula, found {other}")),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            other => self.syntax(format!("expected a number, found {other}")),
        }
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        let (line, col) = (self.toks[self.pos].line, self.toks[self.pos].col);
        self.expect(Tok::LBrack)?;
        let a = self.number()?;
        self.expect(Tok::Comma)?;
        let b = self.number()?;
        self.expect(Tok::RBrack)?;
        Interval::new(a, b).map_err(|_| ParseError {
            line,
            col,
            kind: ParseErrorKind::MalformedInterval { a, b },
        })
    }

    fn vector(&mut self) -> Result<[usize; 3], ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => match self.layout.vector(&name) {
                Some(v) => {
                    self.bump();
                    Ok(v)
                }
                None => Err(self.here(ParseErrorKind::UndeclaredSignal(name))),
            },
            other => self.syntax(format!("expected a vector signal, found {other}")),
        }
    }

    fn scalar(&mut self, name: String) -> Result<usize, ParseError> {
        match self.layout.scalar(&name) {
            Some(i) => {
                self.bump();
                Ok(i)
            }
            None => Err(self.here(ParseErrorKind::UndeclaredSignal(name))),
        }
    }

    fn separation(&mut self) -> Result<Formula, ParseError> {
        self.bump();
        self.expect(Tok::LParen)?;
        let p = self.vector()?;
        self.expect(Tok::Comma)?;
        let q = self.vector()?;
        self.expect(Tok::RParen)?;
        match self.peek() {
            Tok::Ge | Tok::Gt => {}
            other => return self.syntax(format!("expected `>=` after dist_inf(..), found {other}")),
        }
        self.bump();
        let c = self.number()?;
        Ok(Formula::separation(p, q, c))
    }

    fn term(&mut self, sign: f64, terms: &mut Vec<(usize, f64)>, offset: &mut f64) -> Result<(), ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                if *self.peek() == Tok::Star {
                    self.bump();
                    match self.peek().clone() {
                        Tok::Ident(name) => {
                            let i = self.scalar(name)?;
                            terms.push((i, sign * v));
                        }
                        other => return self.syntax(format!("expected a signal after `*`, found {other}")),
                    }
                } else {
                    *offset += sign * v;
                }
                Ok(())
            }
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                let i = self.scalar(name)?;
                let mut coef = sign;
                if *self.peek() == Tok::Star {
                    self.bump();
                    coef *= self.number()?;
                }
                terms.push((i, coef));
                Ok(())
            }
            other => self.syntax(format!("expected a term, found {other}")),
        }
    }

    fn linexpr(&mut self) -> Result<(Vec<(usize, f64)>, f64), ParseError> {
        let mut terms = Vec::new();
        let mut offset = 0.0;
        let mut sign = 1.0;
        if *self.peek() == Tok::Minus {
            self.bump();
            sign = -1.0;
        }
        self.term(sign, &mut terms, &mut offset)?;
        loop {
            sign = match self.peek() {
                Tok::Plus => 1.0,
                Tok::Minus => -1.0,
                _ => break,
            };
            self.bump();
            self.term(sign, &mut terms, &mut offset)?;
        }
        Ok((terms, offset))
    }

    fn predicate(&mut self) -> Result<Formula, ParseError> {
        // `vector in REGION`
        if let (Tok::Ident(name), Some(Tok::Ident(next))) =
            (self.peek().clone(), self.toks.get(self.pos + 1).map(|t| t.tok.clone()))
        {
            if next == "in" {
                let v = match self.layout.vector(&name) {
                    Some(v) => v,
                    None => return Err(self.here(ParseErrorKind::UndeclaredSignal(name))),
                };
                self.bump();
                self.bump();
                return match self.peek().clone() {
                    Tok::Ident(region) => match self.regions.get(&region) {
                        Some(r) => {
                            self.bump();
                            Ok(Formula::in_region(v, r))
                        }
                        None => Err(self.here(ParseErrorKind::UndeclaredRegion(region))),
                    },
                    other => self.syntax(format!("expected a region name, found {other}")),
                };
            }
        }
        let (lhs, lo) = self.linexpr()?;
        let flip = match self.peek() {
            Tok::Ge | Tok::Gt => false,
            Tok::Le | Tok::Lt => true,
            other => return self.syntax(format!("expected a comparison, found {other}")),
        };
        self.bump();
        let (rhs, ro) = self.linexpr()?;
        let s = if flip { -1.0 } else { 1.0 };
        let terms = lhs
            .into_iter()
            .map(|(i, c)| (i, s * c))
            .chain(rhs.into_iter().map(|(i, c)| (i, -s * c)))
            .collect();
        Ok(Formula::predicate(terms, s * (lo - ro)))
    }
}

/// Parses a specification over the signals of `layout`, resolving region
/// names against `regions`.
pub fn parse_spec(
    text: &str,
    layout: &SignalLayout,
    regions: &BTreeMap<String, Region>,
) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        layout,
        regions,
    };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return p.syntax(format!("unexpected {} after formula", p.peek()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{robustness, MultiTrace};

    fn regions() -> BTreeMap<String, Region> {
        let mut r = BTreeMap::new();
        r.insert("Goal".to_string(), Region::new([1.0; 3], [3.0; 3]).unwrap());
        r.insert("Unsafe".to_string(), Region::new([-1.0; 3], [0.0; 3]).unwrap());
        r
    }

    #[test]
    fn reach_parses_to_eventually_box() {
        let layout = SignalLayout::uavs(1);
        let f = parse_spec("F[0,8] (uav1.p in Goal)", &layout, &regions()).unwrap();
        let goal = regions()["Goal"];
        assert_eq!(
            f,
            Formula::eventually(Interval::new(0.0, 8.0).unwrap(), Formula::in_region([0, 1, 2], &goal))
        );
    }

    #[test]
    fn avoid_parses_to_always_not_box() {
        let layout = SignalLayout::uavs(1);
        let f = parse_spec("G[0,8] !(uav1.p in Unsafe)", &layout, &regions()).unwrap();
        match f {
            Formula::Always(iv, body) => {
                assert_eq!(iv.end(), 8.0);
                assert!(matches!(*body, Formula::Not(ref inner) if matches!(**inner, Formula::And(ref v) if v.len() == 6)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bare_scalar_predicate() {
        let layout = SignalLayout::scalars(&["x"]);
        let f = parse_spec("(x >= 0)", &layout, &BTreeMap::new()).unwrap();
        assert_eq!(f, Formula::predicate(vec![(0, 1.0)], 0.0));
        assert_eq!(f.horizon(), 0.0);
    }

    #[test]
    fn linear_expression_normalizes_to_affine() {
        let layout = SignalLayout::scalars(&["x", "y"]);
        let f = parse_spec("2*x - y + 1 <= 3*y - 4", &layout, &BTreeMap::new()).unwrap();
        // 3y - 4 - 2x + y - 1 >= 0
        assert_eq!(f, Formula::predicate(vec![(0, -2.0), (1, 4.0)], -5.0));
        let tr = MultiTrace::new(1.0, 2, vec![0.5, 2.0]).unwrap();
        assert_eq!(robustness(&f, &tr, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn conjunction_chain_is_flat_and_binds_tighter_than_or() {
        let layout = SignalLayout::scalars(&["x"]);
        let f = parse_spec("x >= 0 & x >= 1 & x >= 2 | x >= 3", &layout, &BTreeMap::new()).unwrap();
        match f {
            Formula::Or(parts) => {
                assert_eq!(parts.len(), 2);
                assert!(matches!(&parts[0], Formula::And(v) if v.len() == 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn until_and_separation() {
        let layout = SignalLayout::uavs(2);
        let f = parse_spec(
            "(uav1.p.z >= 1) U[0, 2.5] (uav1.p in Goal) && G[0,1] dist_inf(uav1.p, uav2.p) >= 0.2",
            &layout,
            &regions(),
        )
        .unwrap();
        assert!((f.horizon() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn undeclared_signal_reports_position() {
        let layout = SignalLayout::uavs(1);
        let err = parse_spec("F[0,1]\n  (uav2.p in Goal)", &layout, &regions()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndeclaredSignal("uav2.p".into()));
        assert_eq!((err.line, err.col), (2, 4));
    }

    #[test]
    fn undeclared_region() {
        let layout = SignalLayout::uavs(1);
        let err = parse_spec("uav1.p in Nowhere", &layout, &regions()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndeclaredRegion("Nowhere".into()));
    }

    #[test]
    fn reversed_interval() {
        let layout = SignalLayout::scalars(&["x"]);
        let err = parse_spec("G[5,1] x >= 0", &layout, &BTreeMap::new()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::MalformedInterval { a: 5.0, b: 1.0 });
        assert_eq!((err.line, err.col), (1, 2));
    }

    #[test]
    fn syntax_errors_carry_location() {
        let layout = SignalLayout::scalars(&["x"]);
        for bad in ["x >=", "G[0,1]", "(x >= 0", "x >= 0 )", "x ? 1", "G[0 1] x >= 0"] {
            let err = parse_spec(bad, &layout, &BTreeMap::new()).unwrap_err();
            assert!(matches!(err.kind, ParseErrorKind::Syntax(_)), "{bad}: {err}");
            assert!(err.line >= 1 && err.col >= 1);
        }
    }
}
