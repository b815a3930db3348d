//! Concrete syntax: `\x. body` for abstraction, juxtaposition for
//! application (left-associative), infix `;` for composition (lowest
//! precedence, right-associative), `A -> B` for arrow types. Binder types are
//! inferred by unification.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hrs::Hrs;
use crate::rewrite::Rewrite;
use crate::term::{Name, Signature, Term, Type, TypingContext};

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Ident(String),
    Lambda,
    Dot,
    LParen,
    RParen,
    Arrow,
    Semi,
    FatArrow,
    Colon,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '#' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '\\' => {
                chars.next();
                out.push(Token::Lambda);
            }
            '.' => {
                chars.next();
                out.push(Token::Dot);
            }
            '(' => {
                chars.next();
                out.push(Token::LParen);
            }
            ')' => {
                chars.next();
                out.push(Token::RParen);
            }
            ';' => {
                chars.next();
                out.push(Token::Semi);
            }
            ':' => {
                chars.next();
                out.push(Token::Colon);
            }
            '-' => {
                chars.next();
                if chars.peek() == Some(&'>') {
                    chars.next();
                    out.push(Token::Arrow);
                } else {
                    return Err(Error::Parse("expected `->`".into()));
                }
            }
            '=' => {
                chars.next();
                if chars.peek() == Some(&'>') {
                    chars.next();
                    out.push(Token::FatArrow);
                } else {
                    return Err(Error::Parse("expected `=>`".into()));
                }
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '\'' {
                        ident.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token::Ident(ident));
            }
            other => return Err(Error::Parse(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

/// Surface expressions, shared by terms and rewrites.
#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Ident(String),
    /// Binders with an optional shared type annotation `\x : T. body`.
    Lam(Vec<String>, Option<Type>, Box<SExpr>),
    App(Box<SExpr>, Box<SExpr>),
    Seq(Box<SExpr>, Box<SExpr>),
}

pub struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    pub fn new(toks: &'a [Token]) -> Self {
        Parser { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    pub fn next(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn expect(&mut self, tok: &Token) -> Result<()> {
        match self.next() {
            Some(t) if t == tok => Ok(()),
            Some(t) => Err(Error::Parse(format!("expected {tok:?}, found {t:?}"))),
            None => Err(Error::Parse(format!("expected {tok:?}, found end of input"))),
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn parse_type(&mut self) -> Result<Type> {
        let lhs = self.parse_type_atom()?;
        if self.peek() == Some(&Token::Arrow) {
            self.next();
            let rhs = self.parse_type()?;
            Ok(Type::arrow(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn parse_type_atom(&mut self) -> Result<Type> {
        match self.next().cloned() {
            Some(Token::Ident(n)) => Ok(Type::base(n)),
            Some(Token::LParen) => {
                let t = self.parse_type()?;
                self.expect(&Token::RParen)?;
                Ok(t)
            }
            other => Err(Error::Parse(format!("expected a type, found {other:?}"))),
        }
    }

    /// Full expression: compositions at lowest precedence, right-associative.
    pub fn parse_expr(&mut self) -> Result<SExpr> {
        let first = self.parse_app()?;
        if self.peek() == Some(&Token::Semi) {
            self.next();
            let rest = self.parse_expr()?;
            Ok(SExpr::Seq(Box::new(first), Box::new(rest)))
        } else {
            Ok(first)
        }
    }

    fn parse_app(&mut self) -> Result<SExpr> {
        let mut cur = self.parse_atom()?;
        loop {
            match self.peek() {
                Some(Token::Ident(_)) | Some(Token::LParen) | Some(Token::Lambda) => {
                    let arg = self.parse_atom()?;
                    cur = SExpr::App(Box::new(cur), Box::new(arg));
                }
                _ => return Ok(cur),
            }
        }
    }

    fn parse_atom(&mut self) -> Result<SExpr> {
        match self.peek().cloned() {
            Some(Token::Ident(n)) => {
                self.next();
                Ok(SExpr::Ident(n))
            }
            Some(Token::LParen) => {
                self.next();
                let e = self.parse_expr()?;
                self.expect(&Token::RParen)?;
                Ok(e)
            }
            Some(Token::Lambda) => {
                self.next();
                let mut binders = Vec::new();
                while let Some(Token::Ident(n)) = self.peek().cloned() {
                    self.next();
                    binders.push(n);
                }
                if binders.is_empty() {
                    return Err(Error::Parse("expected binder after `\\`".into()));
                }
                let annot = if self.peek() == Some(&Token::Colon) {
                    self.next();
                    Some(self.parse_type()?)
                } else {
                    None
                };
                self.expect(&Token::Dot)?;
                let body = self.parse_expr()?;
                Ok(SExpr::Lam(binders, annot, Box::new(body)))
            }
            other => Err(Error::Parse(format!(
                "expected an expression, found {other:?}"
            ))),
        }
    }
}

pub fn parse_type(text: &str) -> Result<Type> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks);
    let t = p.parse_type()?;
    if !p.at_end() {
        return Err(Error::Parse("trailing input after type".into()));
    }
    Ok(t)
}

pub fn parse_expr(text: &str) -> Result<SExpr> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks);
    let e = p.parse_expr()?;
    if !p.at_end() {
        return Err(Error::Parse("trailing input after expression".into()));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Type inference
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum TyI {
    Base(Name),
    Arrow(Box<TyI>, Box<TyI>),
    Var(u32),
}

impl TyI {
    fn from_type(t: &Type) -> TyI {
        match t {
            Type::Base(n) => TyI::Base(n.clone()),
            Type::Arrow(a, b) => TyI::Arrow(Box::new(TyI::from_type(a)), Box::new(TyI::from_type(b))),
        }
    }
}

#[derive(Default)]
struct Unifier {
    next_var: u32,
    solution: BTreeMap<u32, TyI>,
}

impl Unifier {
    fn fresh(&mut self) -> TyI {
        let v = self.next_var;
        self.next_var += 1;
        TyI::Var(v)
    }

    fn resolve_shallow(&self, t: &TyI) -> TyI {
        let mut cur = t.clone();
        while let TyI::Var(v) = cur {
            match self.solution.get(&v) {
                Some(t2) => cur = t2.clone(),
                None => return TyI::Var(v),
            }
        }
        cur
    }

    fn occurs(&self, v: u32, t: &TyI) -> bool {
        match self.resolve_shallow(t) {
            TyI::Var(w) => v == w,
            TyI::Base(_) => false,
            TyI::Arrow(a, b) => self.occurs(v, &a) || self.occurs(v, &b),
        }
    }

    fn unify(&mut self, a: &TyI, b: &TyI) -> Result<()> {
        let a = self.resolve_shallow(a);
        let b = self.resolve_shallow(b);
        match (a, b) {
            (TyI::Var(v), t) | (t, TyI::Var(v)) => {
                if t == TyI::Var(v) {
                    return Ok(());
                }
                if self.occurs(v, &t) {
                    return Err(Error::NotTypable("occurs check failed".into()));
                }
                self.solution.insert(v, t);
                Ok(())
            }
            (TyI::Base(x), TyI::Base(y)) => {
                if x == y {
                    Ok(())
                } else {
                    Err(Error::TypeMismatch {
                        expected: Type::base(x),
                        found: Type::base(y),
                        context: "unification".into(),
                    })
                }
            }
            (TyI::Arrow(a1, b1), TyI::Arrow(a2, b2)) => {
                self.unify(&a1, &a2)?;
                self.unify(&b1, &b2)
            }
            (x, y) => Err(Error::NotTypable(format!(
                "cannot unify {x:?} with {y:?}"
            ))),
        }
    }

    fn zonk(&self, t: &TyI) -> Result<Type> {
        match self.resolve_shallow(t) {
            TyI::Base(n) => Ok(Type::base(n)),
            TyI::Arrow(a, b) => Ok(Type::arrow(self.zonk(&a)?, self.zonk(&b)?)),
            TyI::Var(_) => Err(Error::NotTypable(
                "ambiguous type: binder type cannot be inferred".into(),
            )),
        }
    }
}

/// Pre-elaboration tree with inference types at binders.
enum RwI {
    Bound(usize),
    Free(Name),
    Con(Name),
    Rule(Name),
    Meta(Name),
    Abs(Name, TyI, Box<RwI>),
    App(Box<RwI>, Box<RwI>),
    Seq(Box<RwI>, Box<RwI>),
}

/// How identifiers resolve during elaboration.
pub struct Scope<'a> {
    pub sig: &'a Signature,
    pub vars: &'a TypingContext,
    pub rule_types: &'a BTreeMap<Name, Type>,
    /// When true, uppercase-initial identifiers denote metavariables.
    pub metavar_mode: bool,
}

pub struct Elaborated {
    pub rewrite: Rewrite,
    pub ty: Type,
    /// Metavariables encountered (as free variables of the result), with
    /// their inferred types — only populated in metavar mode.
    pub metavars: Vec<(Name, Type)>,
}

struct Elab<'a> {
    scope: &'a Scope<'a>,
    uni: Unifier,
    metavar_types: BTreeMap<Name, TyI>,
    metavar_order: Vec<Name>,
}

impl<'a> Elab<'a> {
    fn build(&mut self, e: &SExpr, binders: &mut Vec<(String, TyI)>) -> Result<RwI> {
        match e {
            SExpr::Ident(n) => {
                if let Some(idx) = binders.iter().rev().position(|(b, _)| b == n) {
                    return Ok(RwI::Bound(idx));
                }
                if self.scope.metavar_mode
                    && n.chars().next().is_some_and(|c| c.is_uppercase())
                {
                    if !self.metavar_types.contains_key(n) {
                        let v = self.uni.fresh();
                        self.metavar_types.insert(n.clone(), v);
                        self.metavar_order.push(n.clone());
                    }
                    return Ok(RwI::Meta(n.clone()));
                }
                if self.scope.sig.contains_key(n) {
                    return Ok(RwI::Con(n.clone()));
                }
                if self.scope.rule_types.contains_key(n) {
                    return Ok(RwI::Rule(n.clone()));
                }
                if self.scope.vars.contains_key(n) {
                    return Ok(RwI::Free(n.clone()));
                }
                Err(Error::UnboundVariable(n.clone()))
            }
            SExpr::Lam(names, annot, body) => {
                for n in names {
                    let v = match annot {
                        Some(ty) => TyI::from_type(ty),
                        None => self.uni.fresh(),
                    };
                    binders.push((n.clone(), v));
                }
                let mut cur = self.build(body, binders)?;
                for n in names.iter().rev() {
                    let (name, ty) = binders.pop().expect("binder stack");
                    debug_assert_eq!(&name, n);
                    cur = RwI::Abs(name, ty, Box::new(cur));
                }
                Ok(cur)
            }
            SExpr::App(f, a) => Ok(RwI::App(
                Box::new(self.build(f, binders)?),
                Box::new(self.build(a, binders)?),
            )),
            SExpr::Seq(f, a) => Ok(RwI::Seq(
                Box::new(self.build(f, binders)?),
                Box::new(self.build(a, binders)?),
            )),
        }
    }

    fn infer(&mut self, rw: &RwI, stack: &mut Vec<TyI>) -> Result<TyI> {
        match rw {
            RwI::Bound(i) => stack
                .get(stack.len().wrapping_sub(1 + i))
                .cloned()
                .ok_or_else(|| Error::Parse("dangling binder index".into())),
            RwI::Free(x) => Ok(TyI::from_type(&self.scope.vars[x])),
            RwI::Con(c) => Ok(TyI::from_type(&self.scope.sig[c])),
            RwI::Rule(r) => Ok(TyI::from_type(&self.scope.rule_types[r])),
            RwI::Meta(m) => Ok(self.metavar_types[m].clone()),
            RwI::Abs(_, ty, b) => {
                stack.push(ty.clone());
                let body_ty = self.infer(b, stack)?;
                stack.pop();
                Ok(TyI::Arrow(Box::new(ty.clone()), Box::new(body_ty)))
            }
            RwI::App(f, a) => {
                let tf = self.infer(f, stack)?;
                let ta = self.infer(a, stack)?;
                let out = self.uni.fresh();
                self.uni
                    .unify(&tf, &TyI::Arrow(Box::new(ta), Box::new(out.clone())))?;
                Ok(out)
            }
            RwI::Seq(f, a) => {
                let tf = self.infer(f, stack)?;
                let ta = self.infer(a, stack)?;
                self.uni.unify(&tf, &ta)?;
                Ok(tf)
            }
        }
    }

    fn finalize(&self, rw: &RwI) -> Result<Rewrite> {
        Ok(match rw {
            RwI::Bound(i) => Rewrite::Bound(*i),
            RwI::Free(x) => Rewrite::Free(x.clone()),
            RwI::Con(c) => Rewrite::Con(c.clone()),
            RwI::Rule(r) => Rewrite::Rule(r.clone()),
            RwI::Meta(m) => Rewrite::Free(m.clone()),
            RwI::Abs(h, ty, b) => {
                Rewrite::abs(h.clone(), self.uni.zonk(ty)?, self.finalize(b)?)
            }
            RwI::App(f, a) => Rewrite::app(self.finalize(f)?, self.finalize(a)?),
            RwI::Seq(f, a) => Rewrite::seq(self.finalize(f)?, self.finalize(a)?),
        })
    }
}

/// Elaborates a surface expression in the given scope, inferring binder types.
pub fn elaborate(e: &SExpr, scope: &Scope) -> Result<Elaborated> {
    let mut elab = Elab {
        scope,
        uni: Unifier::default(),
        metavar_types: BTreeMap::new(),
        metavar_order: Vec::new(),
    };
    let rwi = elab.build(e, &mut Vec::new())?;
    let ty = elab.infer(&rwi, &mut Vec::new())?;
    let ty = elab.uni.zonk(&ty)?;
    let rewrite = elab.finalize(&rwi)?;
    let mut metavars = Vec::new();
    for name in &elab.metavar_order {
        metavars.push((name.clone(), elab.uni.zonk(&elab.metavar_types[name])?));
    }
    Ok(Elaborated {
        rewrite,
        ty,
        metavars,
    })
}

/// Elaborates the two sides of a rule together, sharing metavariable types.
pub fn elaborate_rule_sides(
    lhs: &SExpr,
    rhs: &SExpr,
    scope: &Scope,
) -> Result<(Rewrite, Rewrite, Type, Vec<(Name, Type)>)> {
    let mut elab = Elab {
        scope,
        uni: Unifier::default(),
        metavar_types: BTreeMap::new(),
        metavar_order: Vec::new(),
    };
    let li = elab.build(lhs, &mut Vec::new())?;
    let ri = elab.build(rhs, &mut Vec::new())?;
    let lt = elab.infer(&li, &mut Vec::new())?;
    let rt = elab.infer(&ri, &mut Vec::new())?;
    elab.uni.unify(&lt, &rt)?;
    let ty = elab.uni.zonk(&lt)?;
    let l = elab.finalize(&li)?;
    let r = elab.finalize(&ri)?;
    let mut metavars = Vec::new();
    for name in &elab.metavar_order {
        metavars.push((name.clone(), elab.uni.zonk(&elab.metavar_types[name])?));
    }
    Ok((l, r, ty, metavars))
}

/// Parses a rewrite expression against a loaded HRS (empty local context;
/// free variables come from `var` declarations in the HRS).
pub fn parse_rewrite(text: &str, hrs: &Hrs) -> Result<Rewrite> {
    let e = parse_expr(text)?;
    let rule_types = hrs.rule_types();
    let scope = Scope {
        sig: &hrs.signature,
        vars: &hrs.vars,
        rule_types: &rule_types,
        metavar_mode: false,
    };
    Ok(elaborate(&e, &scope)?.rewrite)
}

/// Parses a term (a rewrite without rule symbols or compositions).
pub fn parse_term(text: &str, hrs: &Hrs) -> Result<Term> {
    let rw = parse_rewrite(text, hrs)?;
    rw.to_term()
        .ok_or_else(|| Error::Parse("expected a term, found rewrite constructs".into()))
}

/// Statements of a `.hrs` file.
#[derive(Debug, Clone)]
pub enum Statement {
    Sig(Name, Type),
    Var(Name, Type),
    Rule(Name, SExpr, SExpr),
}

/// Parses a `.hrs` file: `sig c : T.`, `var x : T.`, `rule name : l => r.`
/// with `#` line comments.
pub fn parse_statements(text: &str) -> Result<Vec<Statement>> {
    let toks = tokenize(text)?;
    let mut p = Parser::new(&toks);
    let mut out = Vec::new();
    while !p.at_end() {
        let kw = match p.next() {
            Some(Token::Ident(k)) => k.clone(),
            other => return Err(Error::Parse(format!("expected a statement, found {other:?}"))),
        };
        match kw.as_str() {
            "sig" | "var" => {
                let name = match p.next() {
                    Some(Token::Ident(n)) => n.clone(),
                    other => return Err(Error::Parse(format!("expected a name, found {other:?}"))),
                };
                p.expect(&Token::Colon)?;
                let ty = p.parse_type()?;
                p.expect(&Token::Dot)?;
                if kw == "sig" {
                    out.push(Statement::Sig(name, ty));
                } else {
                    out.push(Statement::Var(name, ty));
                }
            }
            "rule" => {
                let name = match p.next() {
                    Some(Token::Ident(n)) => n.clone(),
                    other => return Err(Error::Parse(format!("expected a name, found {other:?}"))),
                };
                p.expect(&Token::Colon)?;
                let lhs = p.parse_expr()?;
                p.expect(&Token::FatArrow)?;
                let rhs = p.parse_expr()?;
                p.expect(&Token::Dot)?;
                out.push(Statement::Rule(name, lhs, rhs));
            }
            other => {
                return Err(Error::Parse(format!(
                    "unknown statement keyword `{other}`"
                )))
            }
        }
    }
    Ok(out)
}
