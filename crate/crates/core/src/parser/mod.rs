//! Text format for piecewise-linear functions (`.plf` files).
//!
//! ```text
//! max(2*x + 1, -x)
//! min(abs(x1 - 1) + abs(x2), 0.5*max(x1, x2) + 1) on box(-2,2; -2,2)
//! ```
//!
//! `x` and `x1` name the first coordinate, `x2`/`y` the second, `x3`/`z` the third.
//! Products need a constant factor, and negation or negative scaling applies only
//! to affine subexpressions, so every accepted expression is a min of max-affines.

mod lexer;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_model::{AffinePiece, BoxRegion, MaxAffine, PLFunction, Point, MAX_DIM};
use lexer::{tokenize, Tok, Token};

/// Upper bound on the total number of affine pieces produced by [`normalize`].
pub const PIECE_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Sum(Vec<Expr>),
    Scale(f64, Box<Expr>),
    Max(Vec<Expr>),
    Min(Vec<Expr>),
    Abs(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ast {
    pub expr: Expr,
    pub domain: Option<Vec<(f64, f64)>>,
    pub dim: usize,
}

impl Expr {
    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    pub fn is_affine(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Const(_) => true,
            Expr::Sum(xs) => xs.iter().all(Expr::is_affine),
            Expr::Scale(_, e) => e.is_affine(),
            Expr::Max(xs) | Expr::Min(xs) => {
                (xs.len() == 1 && xs[0].is_affine()) || self.is_constant()
            }
            Expr::Abs(e) => e.is_constant(),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) => None,
            Expr::Scale(_, e) | Expr::Abs(e) => e.max_var(),
            Expr::Sum(xs) | Expr::Max(xs) | Expr::Min(xs) => xs.iter().filter_map(Expr::max_var).max(),
        }
    }

    /// Direct recursive evaluation, independent of [`normalize`].
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => x[*i],
            Expr::Const(c) => *c,
            Expr::Sum(xs) => xs.iter().map(|e| e.eval(x)).sum(),
            Expr::Scale(c, e) => c * e.eval(x),
            Expr::Max(xs) => xs.iter().map(|e| e.eval(x)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Min(xs) => xs.iter().map(|e| e.eval(x)).fold(f64::INFINITY, f64::min),
            Expr::Abs(e) => e.eval(x).abs(),
        }
    }
}

impl Ast {
    /// Direct evaluation including the domain clause (`+inf` outside).
    pub fn eval(&self, x: &[f64]) -> f64 {
        if let Some(bounds) = &self.domain {
            if bounds.iter().zip(x).any(|(&(lo, hi), &v)| v < lo || v > hi) {
                return f64::INFINITY;
            }
        }
        self.expr.eval(x)
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

fn syntax(t: &Token, message: impl Into<String>) -> Error {
    Error::Syntax {
        line: t.line,
        column: t.column,
        message: message.into(),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::Semi => "';'".into(),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::End => "end of input".into(),
    }
}

fn variable(name: &str) -> Option<usize> {
    match name {
        "x" | "x1" => Some(0),
        "x2" | "y" => Some(1),
        "x3" | "z" => Some(2),
        _ => None,
    }
}

fn negate(e: Expr, at: &Token) -> Result<Expr> {
    scale(-1.0, e, at)
}

fn scale(c: f64, e: Expr, at: &Token) -> Result<Expr> {
    if let Expr::Const(v) = e {
        return Ok(Expr::Const(c * v));
    }
    if c < 0.0 && !e.is_affine() {
        return Err(Error::NegativeScale {
            line: at.line,
            column: at.column,
        });
    }
    Ok(Expr::Scale(c, Box::new(e)))
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Token> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(&t, format!("expected {}, found {}", describe(&want), describe(&t.tok))))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.next();
                    terms.push(self.term()?);
                }
                Tok::Minus => {
                    let op = self.next();
                    let t = self.term()?;
                    terms.push(negate(t, &op)?);
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Sum(terms) })
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.factor()?;
        while self.peek().tok == Tok::Star {
            let op = self.next();
            let rhs = self.factor()?;
            acc = match (acc.is_constant(), rhs.is_constant()) {
                (true, _) => scale(acc.eval(&[0.0; MAX_DIM]), rhs, &op)?,
                (false, true) => scale(rhs.eval(&[0.0; MAX_DIM]), acc, &op)?,
                (false, false) => {
                    return Err(Error::Nonlinear {
                        line: op.line,
                        column: op.column,
                    })
                }
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr> {
        let t = self.next();
        match &t.tok {
            Tok::Minus => {
                let inner = self.factor()?;
                negate(inner, &t)
            }
            Tok::Plus => self.factor(),
            Tok::Num(v) => Ok(Expr::Const(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "max" | "min" => {
                    self.expect(Tok::LParen)?;
                    let mut items = vec![self.expr()?];
                    while self.peek().tok == Tok::Comma {
                        self.next();
                        items.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    Ok(if name == "max" { Expr::Max(items) } else { Expr::Min(items) })
                }
                "abs" => {
                    self.expect(Tok::LParen)?;
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    if !e.is_affine() {
                        return Err(Error::AbsOfNonAffine {
                            line: t.line,
                            column: t.column,
                        });
                    }
                    Ok(Expr::Abs(Box::new(e)))
                }
                other => variable(other)
                    .map(Expr::Var)
                    .ok_or_else(|| syntax(&t, format!("unknown identifier '{other}'"))),
            },
            other => Err(syntax(&t, format!("unexpected {}", describe(other)))),
        }
    }

    fn signed_number(&mut self) -> Result<f64> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v) => Ok(*v),
            Tok::Minus => match self.next() {
                Token { tok: Tok::Num(v), .. } => Ok(-v),
                u => Err(syntax(&u, format!("expected a number, found {}", describe(&u.tok)))),
            },
            Tok::Plus => self.signed_number(),
            other => Err(syntax(&t, format!("expected a number, found {}", describe(other)))),
        }
    }

    /// `box(l1,u1; l2,u2; ...)`
    fn box_bounds(&mut self) -> Result<Vec<(f64, f64)>> {
        let kw = self.next();
        if kw.tok != Tok::Ident("box".into()) {
            return Err(syntax(&kw, format!("expected 'box', found {}", describe(&kw.tok))));
        }
        self.expect(Tok::LParen)?;
        let mut bounds = Vec::new();
        loop {
            let at = self.peek().clone();
            let lo = self.signed_number()?;
            self.expect(Tok::Comma)?;
            let hi = self.signed_number()?;
            if !(lo <= hi) {
                return Err(syntax(&at, format!("empty interval [{lo}, {hi}]")));
            }
            bounds.push((lo, hi));
            if self.peek().tok == Tok::Semi {
                self.next();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        if bounds.len() > MAX_DIM {
            return Err(Error::UnsupportedDimension(bounds.len()));
        }
        Ok(bounds)
    }

    fn finish(&mut self) -> Result<()> {
        let t = self.peek().clone();
        if t.tok == Tok::End {
            Ok(())
        } else {
            Err(syntax(&t, format!("unexpected {} after expression", describe(&t.tok))))
        }
    }
}

pub fn parse(text: &str) -> Result<Ast> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let expr = p.expr()?;
    let domain = if p.peek().tok == Tok::Ident("on".into()) {
        p.next();
        Some(p.box_bounds()?)
    } else {
        None
    };
    p.finish()?;
    let used = expr.max_var().map_or(1, |i| i + 1);
    let dim = match &domain {
        Some(b) if b.len() < used => {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                got: used,
            })
        }
        Some(b) => b.len(),
        None => used,
    };
    Ok(Ast { expr, domain, dim })
}

/// Parses a bare `box(l1,u1; ...)` region.
pub fn parse_box(text: &str) -> Result<BoxRegion> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let b = p.box_bounds()?;
    p.finish()?;
    BoxRegion::from_bounds(&b)
}

/// `parse` followed by `normalize`.
pub fn parse_function(text: &str) -> Result<PLFunction> {
    normalize(&parse(text)?)
}

type Piece = ([f64; MAX_DIM], f64);
/// Min over components of max over pieces.
type Normal = Vec<Vec<Piece>>;

fn count(nf: &Normal) -> usize {
    nf.iter().map(Vec::len).sum()
}

fn capped(nf: Normal) -> Result<Normal> {
    let n = count(&nf);
    if n > PIECE_CAP {
        Err(Error::PieceCap(n, PIECE_CAP))
    } else {
        Ok(nf)
    }
}

fn dedup(mut comp: Vec<Piece>) -> Vec<Piece> {
    let mut seen = HashSet::with_capacity(comp.len());
    comp.retain(|(g, b)| seen.insert([g[0].to_bits(), g[1].to_bits(), g[2].to_bits(), b.to_bits()]));
    comp
}

/// Pairwise combination of the components of `a` and `b`.
fn product(a: &Normal, b: &Normal, join: impl Fn(&[Piece], &[Piece]) -> Vec<Piece>) -> Result<Normal> {
    let comps = a.len() * b.len();
    let est = comps.saturating_mul(a.iter().map(Vec::len).max().unwrap_or(0) + b.iter().map(Vec::len).max().unwrap_or(0));
    if comps > PIECE_CAP || (est > 64 * PIECE_CAP) {
        return Err(Error::PieceCap(est, PIECE_CAP));
    }
    let mut out = Vec::with_capacity(comps);
    for p in a {
        for q in b {
            out.push(dedup(join(p, q)));
            if count(&out) > PIECE_CAP {
                return Err(Error::PieceCap(count(&out), PIECE_CAP));
            }
        }
    }
    Ok(out)
}

fn to_normal(e: &Expr) -> Result<Normal> {
    match e {
        Expr::Var(i) => {
            let mut g = [0.0; MAX_DIM];
            g[*i] = 1.0;
            Ok(vec![vec![(g, 0.0)]])
        }
        Expr::Const(c) => Ok(vec![vec![([0.0; MAX_DIM], *c)]]),
        Expr::Scale(c, inner) => {
            let nf = to_normal(inner)?;
            if *c < 0.0 && (nf.len() != 1 || nf[0].len() != 1) {
                return Err(Error::InvalidArgument(
                    "negative scale of a non-affine expression".into(),
                ));
            }
            Ok(nf
                .into_iter()
                .map(|comp| {
                    comp.into_iter()
                        .map(|(g, b)| (g.map(|v| c * v), c * b))
                        .collect()
                })
                .collect())
        }
        Expr::Sum(xs) => {
            let mut acc = to_normal(&xs[0])?;
            for x in &xs[1..] {
                let rhs = to_normal(x)?;
                acc = capped(product(&acc, &rhs, |p, q| {
                    let mut out = Vec::with_capacity(p.len() * q.len());
                    for (g, b) in p {
                        for (h, c) in q {
                            out.push((std::array::from_fn(|k| g[k] + h[k]), b + c));
                        }
                    }
                    out
                })?)?;
            }
            Ok(acc)
        }
        Expr::Max(xs) => {
            let mut acc = to_normal(&xs[0])?;
            for x in &xs[1..] {
                let rhs = to_normal(x)?;
                acc = capped(product(&acc, &rhs, |p, q| p.iter().chain(q).copied().collect())?)?;
            }
            Ok(acc)
        }
        Expr::Min(xs) => {
            let mut acc = Vec::new();
            for x in xs {
                acc.extend(to_normal(x)?);
                acc = capped(acc)?;
            }
            Ok(acc)
        }
        Expr::Abs(inner) => {
            let nf = to_normal(inner)?;
            if nf.len() != 1 || nf[0].len() != 1 {
                return Err(Error::InvalidArgument("abs of a non-affine expression".into()));
            }
            let (g, b) = nf[0][0];
            Ok(vec![dedup(vec![(g, b), (g.map(|v| -v), -b)])])
        }
    }
}

/// Rewrites the expression as a min of max-affine components by distributing
/// sums and positive scalings over `min`/`max`; `abs(e)` becomes `max(e, -e)`.
pub fn normalize(ast: &Ast) -> Result<PLFunction> {
    if ast.dim == 0 || ast.dim > MAX_DIM {
        return Err(Error::UnsupportedDimension(ast.dim));
    }
    let nf = to_normal(&ast.expr)?;
    let comps = nf
        .into_iter()
        .map(|comp| {
            let pieces = comp
                .into_iter()
                .map(|(g, b)| Ok(AffinePiece::new(Point::new(&g[..ast.dim])?, b)))
                .collect::<Result<Vec<_>>>()?;
            MaxAffine::new(pieces)
        })
        .collect::<Result<Vec<_>>>()?;
    let domain = ast.domain.as_deref().map(BoxRegion::from_bounds).transpose()?;
    PLFunction::new(comps, domain)
}

fn push_signed(out: &mut String, v: f64, first: bool) {
    if first {
        out.push_str(&format!("{}", if v == 0.0 { 0.0 } else { v }));
    } else if v < 0.0 {
        out.push_str(&format!(" - {}", -v));
    } else {
        out.push_str(&format!(" + {}", if v == 0.0 { 0.0 } else { v }));
    }
}

fn format_piece(p: &AffinePiece, dim: usize) -> String {
    let mut s = String::new();
    for j in 0..dim {
        push_signed(&mut s, p.gradient.get(j), j == 0);
        if dim == 1 {
            s.push_str("*x");
        } else {
            s.push_str(&format!("*x{}", j + 1));
        }
    }
    push_signed(&mut s, p.offset, false);
    s
}

/// Canonical text: `max(...)` for one component, `min(max(...), ...)` otherwise,
/// followed by `on box(...)` when a domain is present.
pub fn format(f: &PLFunction) -> String {
    let comps: Vec<String> = f
        .components()
        .iter()
        .map(|c| {
            let pieces: Vec<String> = c.pieces().iter().map(|p| format_piece(p, f.dim())).collect();
            format!("max({})", pieces.join(", "))
        })
        .collect();
    let mut s = if comps.len() == 1 {
        comps.into_iter().next().unwrap()
    } else {
        format!("min({})", comps.join(", "))
    };
    if let Some(b) = f.domain() {
        s.push_str(&format!(" on {}", format_box(b)));
    }
    s
}

/// `box(l1,u1; l2,u2; ...)`.
pub fn format_box(b: &BoxRegion) -> String {
    let parts: Vec<String> = (0..b.dim())
        .map(|j| format!("{},{}", b.lower.get(j), b.upper.get(j)))
        .collect();
    format!("box({})", parts.join("; "))
}
