//! Proof terms ("rewrites") witnessing higher-order rewriting logic
//! derivations: variables, constants, rule symbols, congruences, and
//! sequential composition. A composition-free rewrite is a multistep.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::hrs::Hrs;
use crate::term::{self, Name, Path, PathStep, Term, Type, TypingContext};

#[derive(Clone)]
pub enum Rewrite {
    Bound(usize),
    Free(Name),
    Con(Name),
    /// Rule symbol standing for a rewrite between its closed source and target.
    Rule(Name),
    Abs(Name, Type, Box<Rewrite>),
    App(Box<Rewrite>, Box<Rewrite>),
    /// Sequential composition `first ; second`.
    Seq(Box<Rewrite>, Box<Rewrite>),
}

impl PartialEq for Rewrite {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Rewrite::Bound(i), Rewrite::Bound(j)) => i == j,
            (Rewrite::Free(x), Rewrite::Free(y)) => x == y,
            (Rewrite::Con(x), Rewrite::Con(y)) => x == y,
            (Rewrite::Rule(x), Rewrite::Rule(y)) => x == y,
            (Rewrite::Abs(_, t1, b1), Rewrite::Abs(_, t2, b2)) => t1 == t2 && b1 == b2,
            (Rewrite::App(f1, a1), Rewrite::App(f2, a2)) => f1 == f2 && a1 == a2,
            (Rewrite::Seq(f1, a1), Rewrite::Seq(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

impl Eq for Rewrite {}

impl Hash for Rewrite {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Rewrite::Bound(i) => {
                0u8.hash(state);
                i.hash(state);
            }
            Rewrite::Free(x) => {
                1u8.hash(state);
                x.hash(state);
            }
            Rewrite::Con(x) => {
                2u8.hash(state);
                x.hash(state);
            }
            Rewrite::Rule(x) => {
                3u8.hash(state);
                x.hash(state);
            }
            Rewrite::Abs(_, t, b) => {
                4u8.hash(state);
                t.hash(state);
                b.hash(state);
            }
            Rewrite::App(f, a) => {
                5u8.hash(state);
                f.hash(state);
                a.hash(state);
            }
            Rewrite::Seq(f, a) => {
                6u8.hash(state);
                f.hash(state);
                a.hash(state);
            }
        }
    }
}

impl Rewrite {
    pub fn free(name: impl Into<Name>) -> Rewrite {
        Rewrite::Free(name.into())
    }

    pub fn con(name: impl Into<Name>) -> Rewrite {
        Rewrite::Con(name.into())
    }

    pub fn rule(name: impl Into<Name>) -> Rewrite {
        Rewrite::Rule(name.into())
    }

    pub fn abs(hint: impl Into<Name>, ty: Type, body: Rewrite) -> Rewrite {
        Rewrite::Abs(hint.into(), ty, Box::new(body))
    }

    pub fn app(fun: Rewrite, arg: Rewrite) -> Rewrite {
        Rewrite::App(Box::new(fun), Box::new(arg))
    }

    pub fn apps(head: Rewrite, args: impl IntoIterator<Item = Rewrite>) -> Rewrite {
        args.into_iter().fold(head, Rewrite::app)
    }

    pub fn seq(first: Rewrite, second: Rewrite) -> Rewrite {
        Rewrite::Seq(Box::new(first), Box::new(second))
    }

    /// Sequential composition of a non-empty list.
    pub fn seq_all(parts: Vec<Rewrite>) -> Rewrite {
        let mut it = parts.into_iter().rev();
        let last = it.next().expect("seq_all of empty list");
        it.fold(last, |acc, r| Rewrite::seq(r, acc))
    }

    pub fn has_seq(&self) -> bool {
        match self {
            Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => false,
            Rewrite::Abs(_, _, b) => b.has_seq(),
            Rewrite::App(f, a) => f.has_seq() || a.has_seq(),
            Rewrite::Seq(_, _) => true,
        }
    }

    pub fn has_rule_symbol(&self) -> bool {
        match self {
            Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) => false,
            Rewrite::Rule(_) => true,
            Rewrite::Abs(_, _, b) => b.has_rule_symbol(),
            Rewrite::App(f, a) | Rewrite::Seq(f, a) => {
                f.has_rule_symbol() || a.has_rule_symbol()
            }
        }
    }

    pub fn spine(&self) -> (&Rewrite, Vec<&Rewrite>) {
        let mut args = Vec::new();
        let mut cur = self;
        while let Rewrite::App(f, a) = cur {
            args.push(a.as_ref());
            cur = f;
        }
        args.reverse();
        (cur, args)
    }

    pub fn peel_abs(&self) -> (Vec<(&Name, &Type)>, &Rewrite) {
        let mut binders = Vec::new();
        let mut cur = self;
        while let Rewrite::Abs(h, t, b) = cur {
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
            Rewrite::Bound(_) | Rewrite::Con(_) | Rewrite::Rule(_) => {}
            Rewrite::Free(x) => {
                out.insert(x.clone());
            }
            Rewrite::Abs(_, _, b) => b.collect_free(out),
            Rewrite::App(f, a) | Rewrite::Seq(f, a) => {
                f.collect_free(out);
                a.collect_free(out);
            }
        }
    }

    pub fn mentions_bound(&self, i: usize) -> bool {
        match self {
            Rewrite::Bound(j) => *j == i,
            Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => false,
            Rewrite::Abs(_, _, b) => b.mentions_bound(i + 1),
            Rewrite::App(f, a) | Rewrite::Seq(f, a) => {
                f.mentions_bound(i) || a.mentions_bound(i)
            }
        }
    }

    pub fn shift(&self, amount: usize, cutoff: usize) -> Rewrite {
        match self {
            Rewrite::Bound(i) => {
                if *i >= cutoff {
                    Rewrite::Bound(i + amount)
                } else {
                    Rewrite::Bound(*i)
                }
            }
            Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => self.clone(),
            Rewrite::Abs(h, t, b) => {
                Rewrite::abs(h.clone(), t.clone(), b.shift(amount, cutoff + 1))
            }
            Rewrite::App(f, a) => Rewrite::app(f.shift(amount, cutoff), a.shift(amount, cutoff)),
            Rewrite::Seq(f, a) => Rewrite::seq(f.shift(amount, cutoff), a.shift(amount, cutoff)),
        }
    }

    pub fn open_at(&self, depth: usize, arg: &Rewrite) -> Rewrite {
        match self {
            Rewrite::Bound(i) => {
                if *i == depth {
                    arg.shift(depth, 0)
                } else if *i > depth {
                    Rewrite::Bound(i - 1)
                } else {
                    Rewrite::Bound(*i)
                }
            }
            Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => self.clone(),
            Rewrite::Abs(h, t, b) => {
                Rewrite::abs(h.clone(), t.clone(), b.open_at(depth + 1, arg))
            }
            Rewrite::App(f, a) => {
                Rewrite::app(f.open_at(depth, arg), a.open_at(depth, arg))
            }
            Rewrite::Seq(f, a) => {
                Rewrite::seq(f.open_at(depth, arg), a.open_at(depth, arg))
            }
        }
    }

    pub fn open(&self, arg: &Rewrite) -> Rewrite {
        self.open_at(0, arg)
    }

    pub fn close(&self, name: &Name) -> Rewrite {
        self.close_at(0, name)
    }

    fn close_at(&self, depth: usize, name: &Name) -> Rewrite {
        match self {
            Rewrite::Bound(i) => {
                if *i >= depth {
                    Rewrite::Bound(i + 1)
                } else {
                    Rewrite::Bound(*i)
                }
            }
            Rewrite::Free(x) => {
                if x == name {
                    Rewrite::Bound(depth)
                } else {
                    self.clone()
                }
            }
            Rewrite::Con(_) | Rewrite::Rule(_) => self.clone(),
            Rewrite::Abs(h, t, b) => {
                Rewrite::abs(h.clone(), t.clone(), b.close_at(depth + 1, name))
            }
            Rewrite::App(f, a) => {
                Rewrite::app(f.close_at(depth, name), a.close_at(depth, name))
            }
            Rewrite::Seq(f, a) => {
                Rewrite::seq(f.close_at(depth, name), a.close_at(depth, name))
            }
        }
    }

    /// Embeds a term as the identity rewrite on itself.
    pub fn from_term(t: &Term) -> Rewrite {
        match t {
            Term::Bound(i) => Rewrite::Bound(*i),
            Term::Free(x) => Rewrite::Free(x.clone()),
            Term::Con(c) => Rewrite::Con(c.clone()),
            Term::Abs(h, ty, b) => Rewrite::abs(h.clone(), ty.clone(), Rewrite::from_term(b)),
            Term::App(f, a) => Rewrite::app(Rewrite::from_term(f), Rewrite::from_term(a)),
        }
    }

    /// Projects back to a term when the rewrite contains no rule symbols and no
    /// compositions.
    pub fn to_term(&self) -> Option<Term> {
        match self {
            Rewrite::Bound(i) => Some(Term::Bound(*i)),
            Rewrite::Free(x) => Some(Term::Free(x.clone())),
            Rewrite::Con(c) => Some(Term::Con(c.clone())),
            Rewrite::Rule(_) | Rewrite::Seq(_, _) => None,
            Rewrite::Abs(h, ty, b) => {
                Some(Term::abs(h.clone(), ty.clone(), b.to_term()?))
            }
            Rewrite::App(f, a) => Some(Term::app(f.to_term()?, a.to_term()?)),
        }
    }

    pub fn at_path(&self, path: &[PathStep]) -> Option<&Rewrite> {
        let mut cur = self;
        for step in path {
            cur = match (step, cur) {
                (PathStep::Body, Rewrite::Abs(_, _, b)) => b,
                (PathStep::Fun, Rewrite::App(f, _)) => f,
                (PathStep::Arg, Rewrite::App(_, a)) => a,
                _ => return None,
            };
        }
        Some(cur)
    }

    /// Preorder paths of all rule-symbol occurrences (compositions excluded by
    /// construction in multisteps but handled for completeness).
    pub fn rule_occurrences(&self) -> Vec<Path> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_rules(&mut path, &mut out);
        out
    }

    fn collect_rules(&self, path: &mut Path, out: &mut Vec<Path>) {
        match self {
            Rewrite::Rule(_) => out.push(path.clone()),
            Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) => {}
            Rewrite::Abs(_, _, b) => {
                path.push(PathStep::Body);
                b.collect_rules(path, out);
                path.pop();
            }
            Rewrite::App(f, a) => {
                path.push(PathStep::Fun);
                f.collect_rules(path, out);
                path.pop();
                path.push(PathStep::Arg);
                a.collect_rules(path, out);
                path.pop();
            }
            Rewrite::Seq(_, _) => {
                // rule occurrences are only tracked inside multisteps
            }
        }
    }
}

/// The unit rewrite on `t` (no rule symbols; source = target = `t`).
pub fn refl(t: &Term) -> Rewrite {
    Rewrite::from_term(t)
}

/// Syntactic source of a rewrite.
pub fn rsrc(rw: &Rewrite, hrs: &Hrs) -> Result<Term> {
    match rw {
        Rewrite::Bound(i) => Ok(Term::Bound(*i)),
        Rewrite::Free(x) => Ok(Term::Free(x.clone())),
        Rewrite::Con(c) => Ok(Term::Con(c.clone())),
        Rewrite::Rule(r) => Ok(hrs.rule(r)?.closed_src.clone()),
        Rewrite::Abs(h, ty, b) => Ok(Term::abs(h.clone(), ty.clone(), rsrc(b, hrs)?)),
        Rewrite::App(f, a) => Ok(Term::app(rsrc(f, hrs)?, rsrc(a, hrs)?)),
        Rewrite::Seq(f, _) => rsrc(f, hrs),
    }
}

/// Syntactic target of a rewrite.
pub fn rtgt(rw: &Rewrite, hrs: &Hrs) -> Result<Term> {
    match rw {
        Rewrite::Bound(i) => Ok(Term::Bound(*i)),
        Rewrite::Free(x) => Ok(Term::Free(x.clone())),
        Rewrite::Con(c) => Ok(Term::Con(c.clone())),
        Rewrite::Rule(r) => Ok(hrs.rule(r)?.closed_tgt.clone()),
        Rewrite::Abs(h, ty, b) => Ok(Term::abs(h.clone(), ty.clone(), rtgt(b, hrs)?)),
        Rewrite::App(f, a) => Ok(Term::app(rtgt(f, hrs)?, rtgt(a, hrs)?)),
        Rewrite::Seq(_, s) => rtgt(s, hrs),
    }
}

/// Rewrite/term substitution: replaces the free variable `x` in `rw` by the
/// term `s` (capture-avoiding).
pub fn subt(rw: &Rewrite, x: &Name, s: &Term) -> Rewrite {
    match rw {
        Rewrite::Free(y) if y == x => Rewrite::from_term(s),
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => rw.clone(),
        Rewrite::Abs(h, ty, b) => Rewrite::abs(h.clone(), ty.clone(), subt(b, x, s)),
        Rewrite::App(f, a) => Rewrite::app(subt(f, x, s), subt(a, x, s)),
        Rewrite::Seq(f, a) => Rewrite::seq(subt(f, x, s), subt(a, x, s)),
    }
}

/// Term/rewrite (lifting) substitution: replaces the free variable `x` in the
/// term `s` by the rewrite `rw`, producing a rewrite.
pub fn subtr(s: &Term, x: &Name, rw: &Rewrite) -> Rewrite {
    match s {
        Term::Free(y) if y == x => rw.clone(),
        Term::Bound(i) => Rewrite::Bound(*i),
        Term::Free(y) => Rewrite::Free(y.clone()),
        Term::Con(c) => Rewrite::Con(c.clone()),
        Term::Abs(h, ty, b) => Rewrite::abs(h.clone(), ty.clone(), subtr(b, x, rw)),
        Term::App(f, a) => Rewrite::app(subtr(f, x, rw), subtr(a, x, rw)),
    }
}

/// Rewrite/rewrite substitution: the diagonal of the permutation square,
/// `rw{x:=src(sub)} ; tgt(rw)<x:=sub>`.
pub fn subrr(rw: &Rewrite, x: &Name, sub: &Rewrite, hrs: &Hrs) -> Result<Rewrite> {
    let sub_src = rsrc(sub, hrs)?;
    let rw_tgt = rtgt(rw, hrs)?;
    Ok(Rewrite::seq(subt(rw, x, &sub_src), subtr(&rw_tgt, x, sub)))
}

/// Substitution of a free variable by a rewrite inside a multistep (used by
/// the BetaM flattening rule); also total on general rewrites.
pub fn subst_rewrite(rw: &Rewrite, x: &Name, s: &Rewrite) -> Rewrite {
    match rw {
        Rewrite::Free(y) if y == x => s.clone(),
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => rw.clone(),
        Rewrite::Abs(h, ty, b) => Rewrite::abs(h.clone(), ty.clone(), subst_rewrite(b, x, s)),
        Rewrite::App(f, a) => Rewrite::app(subst_rewrite(f, x, s), subst_rewrite(a, x, s)),
        Rewrite::Seq(f, a) => Rewrite::seq(subst_rewrite(f, x, s), subst_rewrite(a, x, s)),
    }
}

/// A judgment produced by `check_rewrite`: the rewrite, its syntactic
/// endpoints, and its type under the given context.
#[derive(Clone, Debug)]
pub struct RewriteJudgment {
    pub ctx: TypingContext,
    pub rewrite: Rewrite,
    pub src: Term,
    pub tgt: Term,
    pub ty: Type,
}

impl RewriteJudgment {
    /// Beta-eta-canonical source.
    pub fn canonical_src(&self, hrs: &Hrs) -> Result<Term> {
        term::beta_eta_nf(&hrs.extended_ctx(&self.ctx), &self.src, &hrs.signature)
    }

    /// Beta-eta-canonical target.
    pub fn canonical_tgt(&self, hrs: &Hrs) -> Result<Term> {
        term::beta_eta_nf(&hrs.extended_ctx(&self.ctx), &self.tgt, &hrs.signature)
    }
}

/// Type-checks a rewrite under the HORL rules; composition endpoints are
/// compared modulo beta-eta, so conversions never appear explicitly.
pub fn check_rewrite(ctx: &TypingContext, rw: &Rewrite, hrs: &Hrs) -> Result<RewriteJudgment> {
    let full_ctx = hrs.extended_ctx(ctx);
    let ty = check_in(&full_ctx, &mut Vec::new(), rw, hrs)?;
    Ok(RewriteJudgment {
        ctx: ctx.clone(),
        rewrite: rw.clone(),
        src: rsrc(rw, hrs)?,
        tgt: rtgt(rw, hrs)?,
        ty,
    })
}

pub(crate) fn check_in(
    ctx: &TypingContext,
    bounds: &mut Vec<Type>,
    rw: &Rewrite,
    hrs: &Hrs,
) -> Result<Type> {
    match rw {
        Rewrite::Bound(i) => bounds
            .get(bounds.len().wrapping_sub(1 + i))
            .cloned()
            .ok_or_else(|| Error::IllTyped(format!("dangling de Bruijn index {i}"))),
        Rewrite::Free(x) => ctx
            .get(x)
            .cloned()
            .ok_or_else(|| Error::UnboundVariable(x.clone())),
        Rewrite::Con(c) => hrs
            .signature
            .get(c)
            .cloned()
            .ok_or_else(|| Error::UnknownConstant(c.clone())),
        Rewrite::Rule(r) => Ok(hrs.rule(r)?.rule_type.clone()),
        Rewrite::Abs(_, ty, b) => {
            bounds.push(ty.clone());
            let body_ty = check_in(ctx, bounds, b, hrs)?;
            bounds.pop();
            Ok(Type::arrow(ty.clone(), body_ty))
        }
        Rewrite::App(f, a) => {
            let fun_ty = check_in(ctx, bounds, f, hrs)?;
            let arg_ty = check_in(ctx, bounds, a, hrs)?;
            match fun_ty {
                Type::Arrow(dom, cod) if *dom == arg_ty => Ok(*cod),
                other => Err(Error::TypeMismatch {
                    expected: Type::arrow(arg_ty, Type::base("_")),
                    found: other,
                    context: "rewrite application".into(),
                }),
            }
        }
        Rewrite::Seq(f, s) => {
            let t1 = check_in(ctx, bounds, f, hrs)?;
            let t2 = check_in(ctx, bounds, s, hrs)?;
            if t1 != t2 {
                return Err(Error::TypeMismatch {
                    expected: t1,
                    found: t2,
                    context: "composition".into(),
                });
            }
            let tgt1 = rtgt(f, hrs)?;
            let src2 = rsrc(s, hrs)?;
            let n1 = beta_eta_nf_under(ctx, bounds, &tgt1, hrs)?;
            let n2 = beta_eta_nf_under(ctx, bounds, &src2, hrs)?;
            if n1 != n2 {
                return Err(Error::NonComposable(
                    crate::term::print_term(&n1),
                    crate::term::print_term(&n2),
                ));
            }
            Ok(t1)
        }
    }
}

/// Normalizes a term that may mention the enclosing binder stack, by
/// temporarily instantiating dangling indices with fresh free variables.
pub(crate) fn beta_eta_nf_under(
    ctx: &TypingContext,
    bounds: &[Type],
    t: &Term,
    hrs: &Hrs,
) -> Result<Term> {
    let n = bounds.len();
    let mut ctx2 = ctx.clone();
    let mut t2 = t.clone();
    for i in 0..n {
        let name = format!("#b{i}");
        ctx2.insert(name.clone(), bounds[n - 1 - i].clone());
        t2 = t2.open_at(0, &Term::Free(name));
    }
    let nf = term::beta_eta_nf(&ctx2, &t2, &hrs.signature)?;
    let mut out = nf;
    for i in 0..n {
        out = bind_free_as_index(&out, &format!("#b{i}"), i);
    }
    Ok(out)
}

/// Replaces a free variable by a dangling de Bruijn index.
fn bind_free_as_index(t: &Term, name: &Name, index: usize) -> Term {
    fn go(t: &Term, name: &Name, index: usize, depth: usize) -> Term {
        match t {
            Term::Free(x) if x == name => Term::Bound(index + depth),
            Term::Bound(_) | Term::Free(_) | Term::Con(_) => t.clone(),
            Term::Abs(h, ty, b) => {
                Term::abs(h.clone(), ty.clone(), go(b, name, index, depth + 1))
            }
            Term::App(f, a) => Term::app(go(f, name, index, depth), go(a, name, index, depth)),
        }
    }
    go(t, name, index, 0)
}

/// A composition-free rewrite.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Multistep(Rewrite);

impl Multistep {
    pub fn new(rw: Rewrite) -> Result<Multistep> {
        if rw.has_seq() {
            return Err(Error::IllTyped(
                "multistep must not contain compositions".into(),
            ));
        }
        Ok(Multistep(rw))
    }

    pub fn from_term(t: &Term) -> Multistep {
        Multistep(Rewrite::from_term(t))
    }

    pub fn as_rewrite(&self) -> &Rewrite {
        &self.0
    }

    pub fn into_rewrite(self) -> Rewrite {
        self.0
    }

    /// True iff the multistep contains no rule symbols (an identity).
    pub fn is_empty(&self) -> bool {
        !self.0.has_rule_symbol()
    }

    pub fn rule_occurrences(&self) -> Vec<Path> {
        self.0.rule_occurrences()
    }
}

impl fmt::Display for Multistep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_rewrite(&self.0))
    }
}

impl fmt::Debug for Multistep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_rewrite(&self.0))
    }
}

/// Beta-normal form of a multistep body (rule symbols as opaque heads).
pub(crate) fn ms_beta_nf(rw: &Rewrite) -> Rewrite {
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => rw.clone(),
        Rewrite::Abs(h, ty, b) => Rewrite::abs(h.clone(), ty.clone(), ms_beta_nf(b)),
        Rewrite::App(f, a) => {
            let f = ms_beta_nf(f);
            if let Rewrite::Abs(_, _, b) = f {
                ms_beta_nf(&b.open(a))
            } else {
                Rewrite::app(f, ms_beta_nf(a))
            }
        }
        Rewrite::Seq(f, a) => Rewrite::seq(ms_beta_nf(f), ms_beta_nf(a)),
    }
}

fn ms_eta_contract(rw: &Rewrite) -> Rewrite {
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => rw.clone(),
        Rewrite::App(f, a) => Rewrite::app(ms_eta_contract(f), ms_eta_contract(a)),
        Rewrite::Seq(f, a) => Rewrite::seq(ms_eta_contract(f), ms_eta_contract(a)),
        Rewrite::Abs(h, ty, b) => {
            let b = ms_eta_contract(b);
            if let Rewrite::App(f, a) = &b {
                if matches!(a.as_ref(), Rewrite::Bound(0))
                    && !f.has_seq()
                    && !f.mentions_bound(0)
                {
                    return f.unshift_once();
                }
            }
            Rewrite::abs(h.clone(), ty.clone(), b)
        }
    }
}

impl Rewrite {
    fn unshift_once(&self) -> Rewrite {
        self.unshift_once_at(0)
    }

    fn unshift_once_at(&self, cutoff: usize) -> Rewrite {
        match self {
            Rewrite::Bound(i) => {
                if *i >= cutoff {
                    Rewrite::Bound(i - 1)
                } else {
                    Rewrite::Bound(*i)
                }
            }
            Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => self.clone(),
            Rewrite::Abs(h, t, b) => {
                Rewrite::abs(h.clone(), t.clone(), b.unshift_once_at(cutoff + 1))
            }
            Rewrite::App(f, a) => {
                Rewrite::app(f.unshift_once_at(cutoff), a.unshift_once_at(cutoff))
            }
            Rewrite::Seq(f, a) => {
                Rewrite::seq(f.unshift_once_at(cutoff), a.unshift_once_at(cutoff))
            }
        }
    }
}

/// Flat normal form of a multistep: BetaM/EtaM normal (beta-normal and
/// eta-contracted, viewing rule symbols as opaque constants).
pub fn ms_flat_nf(ms: &Multistep) -> Multistep {
    let mut cur = ms_eta_contract(&ms_beta_nf(&ms.0));
    loop {
        let next = ms_eta_contract(&cur);
        if next == cur {
            return Multistep(cur);
        }
        cur = next;
    }
}

/// Beta-normal form only (the EtaM-free fragment of multistep normalization).
pub fn ms_beta_only_nf(ms: &Multistep) -> Multistep {
    Multistep(ms_beta_nf(&ms.0))
}

pub fn print_rewrite(rw: &Rewrite) -> String {
    let mut taken: BTreeSet<Name> = rw.free_vars();
    let mut out = String::new();
    print_rw(rw, &mut Vec::new(), &mut taken, Prec::Seq, false, &mut out);
    out
}

/// Printer with a type annotation on every binder; the output re-parses to
/// an alpha-equal rewrite regardless of inference.
pub fn print_rewrite_annotated(rw: &Rewrite) -> String {
    let mut taken: BTreeSet<Name> = rw.free_vars();
    let mut out = String::new();
    print_rw(rw, &mut Vec::new(), &mut taken, Prec::Seq, true, &mut out);
    out
}

#[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
enum Prec {
    Seq,
    App,
    Atom,
}

fn print_rw(
    rw: &Rewrite,
    env: &mut Vec<Name>,
    taken: &mut BTreeSet<Name>,
    prec: Prec,
    annotate: bool,
    out: &mut String,
) {
    match rw {
        Rewrite::Bound(i) => {
            let idx = env.len().wrapping_sub(1 + i);
            match env.get(idx) {
                Some(n) => out.push_str(n),
                None => out.push_str(&format!("#{i}")),
            }
        }
        Rewrite::Free(x) | Rewrite::Con(x) | Rewrite::Rule(x) => out.push_str(x),
        Rewrite::Abs(h, ty, b) => {
            if prec > Prec::Seq {
                out.push('(');
            }
            let name = fresh(h, taken);
            out.push('\\');
            out.push_str(&name);
            if annotate {
                out.push_str(&format!(" : {ty}"));
            }
            out.push_str(". ");
            taken.insert(name.clone());
            env.push(name.clone());
            print_rw(b, env, taken, Prec::Seq, annotate, out);
            env.pop();
            taken.remove(&name);
            if prec > Prec::Seq {
                out.push(')');
            }
        }
        Rewrite::App(_, _) => {
            if prec > Prec::App {
                out.push('(');
            }
            let (head, args) = rw.spine();
            print_rw(head, env, taken, Prec::Atom, annotate, out);
            for a in args {
                out.push(' ');
                print_rw(a, env, taken, Prec::Atom, annotate, out);
            }
            if prec > Prec::App {
                out.push(')');
            }
        }
        Rewrite::Seq(f, s) => {
            if prec > Prec::Seq {
                out.push('(');
            }
            print_rw(f, env, taken, Prec::App, annotate, out);
            out.push_str(" ; ");
            print_rw(s, env, taken, Prec::Seq, annotate, out);
            if prec > Prec::Seq {
                out.push(')');
            }
        }
    }
}

fn fresh(hint: &str, taken: &BTreeSet<Name>) -> Name {
    let base = if hint.is_empty() { "x" } else { hint };
    let mut cand = base.to_string();
    while taken.contains(&cand) {
        cand.push('\'');
    }
    cand
}

impl fmt::Display for Rewrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_rewrite(self))
    }
}

impl fmt::Debug for Rewrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", print_rewrite(self))
    }
}


/// Fully eta-expands a multistep at its type without beta steps, mirroring
/// the restricted eta-expansion of terms (rule symbols typed by their rule).
pub fn ms_etalong(ctx: &TypingContext, ms: &Multistep, hrs: &Hrs) -> Result<Multistep> {
    let full = hrs.extended_ctx(ctx);
    let ty = check_in(&full, &mut Vec::new(), ms.as_rewrite(), hrs)?;
    let rw = ms_eta_expand_in(&full, &mut Vec::new(), ms.as_rewrite(), &ty, hrs)?;
    Multistep::new(rw)
}

fn ms_eta_expand_in(
    ctx: &TypingContext,
    bounds: &mut Vec<Type>,
    rw: &Rewrite,
    ty: &Type,
    hrs: &Hrs,
) -> Result<Rewrite> {
    if let Rewrite::Abs(h, aty, b) = rw {
        let Type::Arrow(dom, cod) = ty else {
            return Err(Error::IllTyped(format!(
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
        let body = ms_eta_expand_in(ctx, bounds, b, cod, hrs)?;
        bounds.pop();
        return Ok(Rewrite::abs(h.clone(), aty.clone(), body));
    }
    let (head, args) = rw.spine();
    let head_ty = check_in(ctx, bounds, head, hrs)?;
    let (head_arg_tys, _) = head_ty.strip();
    let head_arg_tys: Vec<Type> = head_arg_tys.into_iter().cloned().collect();
    if head_arg_tys.len() < args.len() {
        return Err(Error::IllTyped("over-applied head".into()));
    }
    let mut expanded = head.clone();
    for (arg, aty) in args.iter().zip(head_arg_tys.iter()) {
        let arg = ms_eta_expand_in(ctx, bounds, arg, aty, hrs)?;
        expanded = Rewrite::app(expanded, arg);
    }
    let (want_tys, _) = ty.strip();
    let want_tys: Vec<Type> = want_tys.into_iter().cloned().collect();
    let k = want_tys.len();
    if k == 0 {
        return Ok(expanded);
    }
    let mut body = expanded.shift(k, 0);
    let mut inner_bounds = bounds.clone();
    inner_bounds.extend(want_tys.iter().cloned());
    for (i, aty) in want_tys.iter().enumerate() {
        let var = ms_eta_expand_in(ctx, &mut inner_bounds, &Rewrite::Bound(k - 1 - i), aty, hrs)?;
        body = Rewrite::app(body, var);
    }
    let mut out = body;
    for (i, aty) in want_tys.iter().enumerate().rev() {
        out = Rewrite::abs(format!("y{}", i), aty.clone(), out);
    }
    Ok(out)
}
