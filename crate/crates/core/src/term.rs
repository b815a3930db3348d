//! Simple types and simply typed lambda-terms over a signature of constants.
//!
//! Terms use a locally nameless representation: bound variables are de Bruijn
//! indices, free variables are named. Binders carry their type together with a
//! printing hint that is ignored by equality, so structural equality is
//! alpha-equality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

pub type Name = String;

/// Signature of an HRS: a finite map from constant names to their types.
pub type Signature = BTreeMap<Name, Type>;

/// Typing context for free variables.
pub type TypingContext = BTreeMap<Name, Type>;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Base(Name),
    Arrow(Box<Type>, Box<Type>),
}

impl Type {
    pub fn base(name: impl Into<Name>) -> Type {
        Type::Base(name.into())
    }

    pub fn arrow(dom: Type, cod: Type) -> Type {
        Type::Arrow(Box::new(dom), Box::new(cod))
    }

    /// Builds `A1 -> ... -> An -> base` from argument types and a result type.
    pub fn arrows(args: Vec<Type>, result: Type) -> Type {
        args.into_iter()
            .rev()
            .fold(result, |acc, a| Type::arrow(a, acc))
    }

    pub fn is_base(&self) -> bool {
        matches!(self, Type::Base(_))
    }

    /// Splits `A1 -> ... -> An -> base` into (`[A1..An]`, `base`).
    pub fn strip(&self) -> (Vec<&Type>, &Type) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Type::Arrow(a, b) = cur {
            args.push(a.as_ref());
            cur = b;
        }
        (args, cur)
    }

    /// Number of arguments before reaching a base type.
    pub fn arity(&self) -> usize {
        self.strip().0.len()
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Base(n) => write!(f, "{n}"),
            Type::Arrow(a, b) => {
                if a.is_base() {
                    write!(f, "{a} -> {b}")
                } else {
                    write!(f, "({a}) -> {b}")
                }
            }
        }
    }
}

impl fmt::Debug for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone)]
pub enum Term {
    /// Bound variable (de Bruijn index).
    Bound(usize),
    /// Free variable.
    Free(Name),
    /// Constant from the signature.
    Con(Name),
    /// Abstraction; the name is a printing hint only.
    Abs(Name, Type, Box<Term>),
    App(Box<Term>, Box<Term>),
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Term::Bound(i), Term::Bound(j)) => i == j,
            (Term::Free(x), Term::Free(y)) => x == y,
            (Term::Con(x), Term::Con(y)) => x == y,
            (Term::Abs(_, t1, b1), Term::Abs(_, t2, b2)) => t1 == t2 && b1 == b2,
            (Term::App(f1, a1), Term::App(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Term::Bound(i) => {
                0u8.hash(state);
                i.hash(state);
            }
            Term::Free(x) => {
                1u8.hash(state);
                x.hash(state);
            }
            Term::Con(x) => {
                2u8.hash(state);
                x.hash(state);
            }
            Term::Abs(_, t, b) => {
                3u8.hash(state);
                t.hash(state);
                b.hash(state);
            }
            Term::App(f, a) => {
                4u8.hash(state);
                f.hash(state);
                a.hash(state);
            }
        }
    }
}

impl Term {
    pub fn free(name: impl Into<Name>) -> Term {
        Term::Free(name.into())
    }

    pub fn con(name: impl Into<Name>) -> Term {
        Term::Con(name.into())
    }

    pub fn abs(hint: impl Into<Name>, ty: Type, body: Term) -> Term {
        Term::Abs(hint.into(), ty, Box::new(body))
    }

    pub fn app(fun: Term, arg: Term) -> Term {
        Term::App(Box::new(fun), Box::new(arg))
    }

    pub fn apps(head: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(head, Term::app)
    }

    /// Decomposes into application head and argument list.
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Term::App(f, a) = cur {
            args.push(a.as_ref());
            cur = f;
        }
        args.reverse();
        (cur, args)
    }

    /// Peels leading abstractions, returning binder (hint, type) pairs and the body.
    pub fn peel_abs(&self) -> (Vec<(&Name, &Type)>, &Term) {
        let mut binders = Vec::new();
        let mut cur = self;
        while let Term::Abs(h, t, b) = cur {
            binders.push((h, t));
            cur = b;
        }
        (binders, cur)
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Name>) {
        match self {
            Term::Bound(_) | Term::Con(_) => {}
            Term::Free(x) => {
                out.insert(x.clone());
            }
            Term::Abs(_, _, b) => b.collect_free(out),
            Term::App(f, a) => {
                f.collect_free(out);
                a.collect_free(out);
            }
        }
    }

    /// True if the index `i` occurs as a dangling bound variable.
    pub fn mentions_bound(&self, i: usize) -> bool {
        match self {
            Term::Bound(j) => *j == i,
            Term::Free(_) | Term::Con(_) => false,
            Term::Abs(_, _, b) => b.mentions_bound(i + 1),
            Term::App(f, a) => f.mentions_bound(i) || a.mentions_bound(i),
        }
    }

    /// Shifts dangling indices `>= cutoff` by `amount`.
    pub fn shift(&self, amount: usize, cutoff: usize) -> Term {
        match self {
            Term::Bound(i) => {
                if *i >= cutoff {
                    Term::Bound(i + amount)
                } else {
                    Term::Bound(*i)
                }
            }
            Term::Free(_) | Term::Con(_) => self.clone(),
            Term::Abs(h, t, b) => Term::abs(h.clone(), t.clone(), b.shift(amount, cutoff + 1)),
            Term::App(f, a) => Term::app(f.shift(amount, cutoff), a.shift(amount, cutoff)),
        }
    }

    /// Substitutes `arg` for the dangling index `depth`, lowering higher indices.
    pub fn open_at(&self, depth: usize, arg: &Term) -> Term {
        match self {
            Term::Bound(i) => {
                if *i == depth {
                    arg.shift(depth, 0)
                } else if *i > depth {
                    Term::Bound(i - 1)
                } else {
                    Term::Bound(*i)
                }
            }
            Term::Free(_) | Term::Con(_) => self.clone(),
            Term::Abs(h, t, b) => Term::abs(h.clone(), t.clone(), b.open_at(depth + 1, arg)),
            Term::App(f, a) => Term::app(f.open_at(depth, arg), a.open_at(depth, arg)),
        }
    }

    /// Instantiates the outermost binder of an abstraction body.
    pub fn open(&self, arg: &Term) -> Term {
        self.open_at(0, arg)
    }

    /// Abstracts the free variable `name`, producing a body ready for `Abs`.
    pub fn close(&self, name: &Name) -> Term {
        self.close_at(0, name)
    }

    fn close_at(&self, depth: usize, name: &Name) -> Term {
        match self {
            Term::Bound(i) => {
                if *i >= depth {
                    Term::Bound(i + 1)
                } else {
                    Term::Bound(*i)
                }
            }
            Term::Free(x) => {
                if x == name {
                    Term::Bound(depth)
                } else {
                    self.clone()
                }
            }
            Term::Con(_) => self.clone(),
            Term::Abs(h, t, b) => Term::abs(h.clone(), t.clone(), b.close_at(depth + 1, name)),
            Term::App(f, a) => Term::app(f.close_at(depth, name), a.close_at(depth, name)),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty() && self.locally_closed(0)
    }

    fn locally_closed(&self, depth: usize) -> bool {
        match self {
            Term::Bound(i) => *i < depth,
            Term::Free(_) | Term::Con(_) => true,
            Term::Abs(_, _, b) => b.locally_closed(depth + 1),
            Term::App(f, a) => f.locally_closed(depth) && a.locally_closed(depth),
        }
    }
}

/// Capture-avoiding substitution of the free variable `x` by `s`.
pub fn subst_term(t: &Term, x: &Name, s: &Term) -> Term {
    match t {
        Term::Free(y) if y == x => s.clone(),
        Term::Bound(_) | Term::Free(_) | Term::Con(_) => t.clone(),
        // `s` carries no dangling indices, so crossing a binder needs no shift
        // and capture is impossible.
        Term::Abs(h, ty, b) => Term::abs(h.clone(), ty.clone(), subst_term(b, x, s)),
        Term::App(f, a) => Term::app(subst_term(f, x, s), subst_term(a, x, s)),
    }
}

/// Infers the unique simple type of `t`, or fails.
pub fn type_of(ctx: &TypingContext, t: &Term, sig: &Signature) -> Result<Type> {
    type_of_in(ctx, &mut Vec::new(), t, sig)
}

pub(crate) fn type_of_in(
    ctx: &TypingContext,
    bounds: &mut Vec<Type>,
    t: &Term,
    sig: &Signature,
) -> Result<Type> {
    match t {
        Term::Bound(i) => bounds
            .get(bounds.len().wrapping_sub(1 + i))
            .cloned()
            .ok_or_else(|| Error::NotTypable(format!("dangling de Bruijn index {i}"))),
        Term::Free(x) => ctx
            .get(x)
            .cloned()
            .ok_or_else(|| Error::UnboundVariable(x.clone())),
        Term::Con(c) => sig
            .get(c)
            .cloned()
            .ok_or_else(|| Error::UnknownConstant(c.clone())),
        Term::Abs(_, ty, b) => {
            bounds.push(ty.clone());
            let body_ty = type_of_in(ctx, bounds, b, sig)?;
            bounds.pop();
            Ok(Type::arrow(ty.clone(), body_ty))
        }
        Term::App(f, a) => {
            let fun_ty = type_of_in(ctx, bounds, f, sig)?;
            let arg_ty = type_of_in(ctx, bounds, a, sig)?;
            match fun_ty {
                Type::Arrow(dom, cod) if *dom == arg_ty => Ok(*cod),
                Type::Arrow(dom, _) => Err(Error::TypeMismatch {
                    expected: *dom,
                    found: arg_ty,
                    context: "application argument".into(),
                }),
                other => Err(Error::TypeMismatch {
                    expected: Type::arrow(arg_ty, Type::base("_")),
                    found: other,
                    context: "application head".into(),
                }),
            }
        }
    }
}

/// Beta-normal form by normal-order reduction. Terminates on typable input.
pub fn beta_nf(t: &Term) -> Term {
    match t {
        Term::Bound(_) | Term::Free(_) | Term::Con(_) => t.clone(),
        Term::Abs(h, ty, b) => Term::abs(h.clone(), ty.clone(), beta_nf(b)),
        Term::App(f, a) => {
            let f = beta_nf(f);
            if let Term::Abs(_, _, b) = f {
                beta_nf(&b.open(a))
            } else {
                Term::app(f, beta_nf(a))
            }
        }
    }
}

/// One-pass eta-contraction of a beta-normal term (`\x. t x -> t`).
pub fn eta_contract(t: &Term) -> Term {
    match t {
        Term::Bound(_) | Term::Free(_) | Term::Con(_) => t.clone(),
        Term::App(f, a) => Term::app(eta_contract(f), eta_contract(a)),
        Term::Abs(h, ty, b) => {
            let b = eta_contract(b);
            if let Term::App(f, a) = &b {
                if matches!(a.as_ref(), Term::Bound(0)) && !f.mentions_bound(0) {
                    return f.unshift_once();
                }
            }
            Term::abs(h.clone(), ty.clone(), b)
        }
    }
}

impl Term {
    /// Lowers every dangling index by one. Precondition: index 0 does not occur.
    fn unshift_once(&self) -> Term {
        self.unshift_once_at(0)
    }

    fn unshift_once_at(&self, cutoff: usize) -> Term {
        match self {
            Term::Bound(i) => {
                if *i >= cutoff {
                    Term::Bound(i - 1)
                } else {
                    Term::Bound(*i)
                }
            }
            Term::Free(_) | Term::Con(_) => self.clone(),
            Term::Abs(h, t, b) => Term::abs(h.clone(), t.clone(), b.unshift_once_at(cutoff + 1)),
            Term::App(f, a) => Term::app(f.unshift_once_at(cutoff), a.unshift_once_at(cutoff)),
        }
    }
}

/// Beta-eta-normal form (eta-short): beta-normalize, then eta-contract.
pub fn beta_eta_short_nf(t: &Term) -> Term {
    let mut cur = eta_contract(&beta_nf(t));
    // Contraction can cascade; iterate to a fixpoint.
    loop {
        let next = eta_contract(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Fully eta-expands a term at the given type without performing beta steps.
/// This is the normal form of restricted eta-expansion.
fn eta_expand_in(
    ctx: &TypingContext,
    bounds: &mut Vec<Type>,
    t: &Term,
    ty: &Type,
    sig: &Signature,
) -> Result<Term> {
    if let Term::Abs(h, aty, b) = t {
        let Type::Arrow(dom, cod) = ty else {
            return Err(Error::NotTypable(format!(
                "abstraction at non-arrow type {ty}"
            )));
        };
        if aty != dom.as_ref() {
            return Err(Error::TypeMismatch {
                expected: (**dom).clone(),
                found: aty.clone(),
                context: "binder annotation".into(),
            });
        }
        bounds.push(aty.clone());
        let body = eta_expand_in(ctx, bounds, b, cod, sig)?;
        bounds.pop();
        return Ok(Term::abs(h.clone(), aty.clone(), body));
    }
    // Spine case: expand arguments in place, then add missing binders.
    let (head, args) = t.spine();
    let head_ty = type_of_in(ctx, bounds, head, sig)?;
    let (head_arg_tys, _) = head_ty.strip();
    let head_arg_tys: Vec<Type> = head_arg_tys.into_iter().cloned().collect();
    if head_arg_tys.len() < args.len() {
        return Err(Error::NotTypable("over-applied head".into()));
    }
    let mut expanded = head.clone();
    for (arg, aty) in args.iter().zip(head_arg_tys.iter()) {
        let arg = eta_expand_in(ctx, bounds, arg, aty, sig)?;
        expanded = Term::app(expanded, arg);
    }
    let (want_tys, _) = ty.strip();
    let want_tys: Vec<Type> = want_tys.into_iter().cloned().collect();
    let k = want_tys.len();
    if k == 0 {
        return Ok(expanded);
    }
    // Missing binders: t == \y1..yk. (shift t k) y1 .. yk with each yi eta-long.
    let mut body = expanded.shift(k, 0);
    let mut inner_bounds = bounds.clone();
    inner_bounds.extend(want_tys.iter().cloned());
    for (i, aty) in want_tys.iter().enumerate() {
        let var = eta_expand_in(ctx, &mut inner_bounds, &Term::Bound(k - 1 - i), aty, sig)?;
        body = Term::app(body, var);
    }
    let mut out = body;
    for (i, aty) in want_tys.iter().enumerate().rev() {
        out = Term::abs(format!("y{}", i), aty.clone(), out);
    }
    Ok(out)
}

/// Normal form of restricted eta-expansion (no beta steps performed).
pub fn etalong_nf(ctx: &TypingContext, t: &Term, sig: &Signature) -> Result<Term> {
    let ty = type_of(ctx, t, sig)?;
    eta_expand_in(ctx, &mut Vec::new(), t, &ty, sig)
}

/// Beta-normal eta-long canonical form. Two typable terms are beta-eta
/// convertible iff their results are alpha-equal.
pub fn beta_eta_nf(ctx: &TypingContext, t: &Term, sig: &Signature) -> Result<Term> {
    let ty = type_of(ctx, t, sig)?;
    eta_expand_in(ctx, &mut Vec::new(), &beta_nf(t), &ty, sig)
}

/// Decides beta-eta convertibility of two typable terms.
pub fn beta_eta_eq(ctx: &TypingContext, s: &Term, t: &Term, sig: &Signature) -> Result<bool> {
    Ok(beta_eta_nf(ctx, s, sig)? == beta_eta_nf(ctx, t, sig)?)
}

/// Checks the Miller pattern condition: every free occurrence of a
/// metavariable heads an application to arguments eta-equivalent to distinct
/// bound variables. `t` must be beta-normal.
pub fn is_pattern(t: &Term, metavars: &BTreeSet<Name>) -> Result<bool> {
    if beta_nf(t) != *t {
        return Err(Error::NotBetaNormal);
    }
    Ok(pattern_check(t, metavars, 0))
}

fn pattern_check(t: &Term, metavars: &BTreeSet<Name>, depth: usize) -> bool {
    match t {
        // A bare metavariable occurrence is an application to zero arguments.
        Term::Bound(_) | Term::Con(_) | Term::Free(_) => true,
        Term::Abs(_, _, b) => pattern_check(b, metavars, depth + 1),
        Term::App(_, _) => {
            let (head, args) = t.spine();
            if let Term::Free(x) = head {
                if metavars.contains(x) {
                    let mut seen = BTreeSet::new();
                    for a in &args {
                        match as_eta_bound_var(a) {
                            Some(i) => {
                                if !seen.insert(i) {
                                    return false;
                                }
                            }
                            None => return false,
                        }
                    }
                    return true;
                }
            }
            pattern_check(head, metavars, depth) && args.iter().all(|a| pattern_check(a, metavars, depth))
        }
    }
}

/// Recognizes a term that is eta-equivalent to a bound variable, returning its
/// index relative to the position of the term itself.
pub(crate) fn as_eta_bound_var(t: &Term) -> Option<usize> {
    match eta_contract_all(t) {
        Term::Bound(i) => Some(i),
        _ => None,
    }
}

pub(crate) fn eta_contract_all(t: &Term) -> Term {
    let mut cur = t.clone();
    loop {
        let next = eta_contract(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Tree positions: a path of steps from the root.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Hash)]
pub enum PathStep {
    Body,
    Fun,
    Arg,
}

pub type Path = Vec<PathStep>;

impl Term {
    pub fn at_path(&self, path: &[PathStep]) -> Option<&Term> {
        let mut cur = self;
        for step in path {
            cur = match (step, cur) {
                (PathStep::Body, Term::Abs(_, _, b)) => b,
                (PathStep::Fun, Term::App(f, _)) => f,
                (PathStep::Arg, Term::App(_, a)) => a,
                _ => return None,
            };
        }
        Some(cur)
    }
}

/// Deterministic printer. Bound variables print as their hint, freshened
/// against enclosing binders and the free variables of the whole term.
pub fn print_term(t: &Term) -> String {
    let mut taken: BTreeSet<Name> = t.free_vars();
    let mut out = String::new();
    print_rec(t, &mut Vec::new(), &mut taken, false, false, &mut out);
    out
}

/// Printer with a type annotation on every binder, so that the output
/// re-parses to an alpha-equal term regardless of inference.
pub fn print_term_annotated(t: &Term) -> String {
    let mut taken: BTreeSet<Name> = t.free_vars();
    let mut out = String::new();
    print_rec(t, &mut Vec::new(), &mut taken, false, true, &mut out);
    out
}

fn fresh_name(hint: &str, taken: &BTreeSet<Name>) -> Name {
    let base = if hint.is_empty() { "x" } else { hint };
    let mut cand = base.to_string();
    while taken.contains(&cand) {
        cand.push('\'');
    }
    cand
}

fn print_rec(
    t: &Term,
    env: &mut Vec<Name>,
    taken: &mut BTreeSet<Name>,
    atomic: bool,
    annotate: bool,
    out: &mut String,
) {
    match t {
        Term::Bound(i) => {
            let idx = env.len().wrapping_sub(1 + i);
            match env.get(idx) {
                Some(n) => out.push_str(n),
                None => out.push_str(&format!("#{i}")),
            }
        }
        Term::Free(x) | Term::Con(x) => out.push_str(x),
        Term::Abs(h, ty, b) => {
            if atomic {
                out.push('(');
            }
            let name = fresh_name(h, taken);
            out.push('\\');
            out.push_str(&name);
            if annotate {
                out.push_str(&format!(" : {ty}"));
            }
            out.push_str(". ");
            taken.insert(name.clone());
            env.push(name.clone());
            print_rec(b, env, taken, false, annotate, out);
            env.pop();
            taken.remove(&name);
            if atomic {
                out.push(')');
            }
        }
        Term::App(_, _) => {
            if atomic {
                out.push('(');
            }
            let (head, args) = t.spine();
            print_rec(head, env, taken, true, annotate, out);
            for a in args {
                out.push(' ');
                print_rec(a, env, taken, true, annotate, out);
            }
            if atomic {
                out.push(')');
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_term(self))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_term(self))
    }
}
