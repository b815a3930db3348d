//! Residual computation: compatibility, weak projection, compatibilization of
//! coinitial multisteps, the projection operators for multisteps, flat
//! rewrites and arbitrary rewrites, and the permutation-equivalence decision.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::flatten::{flatten, fsrc, FlatRewrite};
use crate::hrs::{remap_rewrite, Hrs};
use crate::rewrite::{
    check_rewrite, ms_beta_only_nf, ms_etalong, ms_flat_nf, refl, Multistep, Rewrite,
};
use crate::term::{beta_eta_short_nf, Name, Term, Type, TypingContext};

/// Canonical form used by compatibilization: beta-normal, then fully
/// eta-expanded.
pub(crate) fn ms_canonical(ms: &Multistep, hrs: &Hrs) -> Result<Multistep> {
    ms_etalong(&TypingContext::new(), &ms_beta_only_nf(ms), hrs)
}

/// True iff the two multisteps are compatible: structurally parallel with
/// heads that are equal, or a rule symbol facing its own closed source.
pub fn compatible(a: &Multistep, b: &Multistep, hrs: &Hrs) -> bool {
    weak_project(a, b, hrs).is_ok()
}

/// Weak projection `a / b` of compatible multisteps. Unique when defined.
pub fn weak_project(a: &Multistep, b: &Multistep, hrs: &Hrs) -> Result<Multistep> {
    Multistep::new(wp(a.as_rewrite(), b.as_rewrite(), hrs)?)
}

/// Recognizes a unit (term) rewrite equal to the closed source of `rule_name`
/// modulo beta-eta.
fn is_rule_source(u: &Rewrite, rule_name: &str, hrs: &Hrs) -> bool {
    if u.has_rule_symbol() || u.has_seq() {
        return false;
    }
    let Some(t) = u.to_term() else { return false };
    let Ok(rule) = hrs.rule(rule_name) else {
        return false;
    };
    beta_eta_short_nf(&t) == beta_eta_short_nf(&rule.closed_src)
}

fn wp(a: &Rewrite, b: &Rewrite, hrs: &Hrs) -> Result<Rewrite> {
    if let (Rewrite::Abs(h, ta, ba), Rewrite::Abs(_, tb, bb)) = (a, b) {
        if ta != tb {
            return Err(Error::NotCompatible);
        }
        return Ok(Rewrite::abs(h.clone(), ta.clone(), wp(ba, bb, hrs)?));
    }
    let (ha, args_a) = a.spine();
    let (hb, args_b) = b.spine();
    if args_a.len() != args_b.len() {
        return Err(Error::NotCompatible);
    }
    let head = match (ha, hb) {
        (Rewrite::Bound(i), Rewrite::Bound(j)) if i == j => Rewrite::Bound(*i),
        (Rewrite::Free(x), Rewrite::Free(y)) if x == y => Rewrite::Free(x.clone()),
        (Rewrite::Con(x), Rewrite::Con(y)) if x == y => Rewrite::Con(x.clone()),
        (Rewrite::Rule(r), Rewrite::Rule(s)) if r == s => {
            // ProjRule: the residual starts from the rule target
            refl(&hrs.rule(r)?.closed_tgt)
        }
        (Rewrite::Rule(r), u) if is_rule_source(u, r, hrs) => {
            // ProjRuleL: the step remains to be performed
            Rewrite::rule(r.clone())
        }
        (u, Rewrite::Rule(r)) if is_rule_source(u, r, hrs) => {
            // ProjRuleR: the step was performed by `b`
            refl(&hrs.rule(r)?.closed_tgt)
        }
        _ => return Err(Error::NotCompatible),
    };
    let mut out = head;
    for (x, y) in args_a.iter().zip(args_b.iter()) {
        out = Rewrite::app(out, wp(x, y, hrs)?);
    }
    Ok(out)
}

/// Matches a rule pattern (a term with metavariables) against the body of a
/// multistep, capturing rewrites for the metavariables. Mirrors first-order
/// positions of the eta-long forms; rule symbols inside pattern positions
/// mean a non-orthogonal overlap and fail the match.
fn ms_match(
    pat: &Term,
    metavars: &BTreeMap<Name, Type>,
    cand: &Rewrite,
    depth: usize,
    out: &mut BTreeMap<Name, Rewrite>,
) -> bool {
    let (head, args) = pat.spine();
    if let Term::Free(x) = head {
        if let Some(x_ty) = metavars.get(x) {
            let mut indices = Vec::new();
            for arg in &args {
                match crate::term::as_eta_bound_var(arg) {
                    Some(i) => indices.push(i),
                    None => return false,
                }
            }
            let (arg_tys, _) = x_ty.strip();
            let arg_tys: Vec<Type> = arg_tys.into_iter().cloned().collect();
            if arg_tys.len() != indices.len() {
                return false;
            }
            // `depth` binders lie between the pattern root and this position;
            // deeper dangling indices point outside the pattern entirely.
            let k = indices.len();
            let Some(remapped) = remap_rewrite(cand, &indices, 0, k, depth) else {
                return false;
            };
            let mut captured = remapped;
            for (j, ty) in arg_tys.iter().enumerate().rev() {
                captured = Rewrite::abs(format!("z{j}"), ty.clone(), captured);
            }
            return out.insert(x.clone(), captured).is_none();
        }
    }
    match (pat, cand) {
        (Term::Bound(i), Rewrite::Bound(j)) => i == j,
        (Term::Free(x), Rewrite::Free(y)) => x == y,
        (Term::Con(x), Rewrite::Con(y)) => x == y,
        (Term::Abs(_, t1, b1), Rewrite::Abs(_, t2, b2)) => {
            t1 == t2 && ms_match(b1, metavars, b2, depth + 1, out)
        }
        (Term::App(f1, a1), Rewrite::App(f2, a2)) => {
            ms_match(f1, metavars, f2, depth, out)
                && ms_match(a1, metavars, a2, depth, out)
        }
        _ => false,
    }
}

/// Compatibilization of coinitial multisteps: returns `(a', b')` compatible
/// with the same flat forms as `a` and `b`.
pub fn compatibilize(a: &Multistep, b: &Multistep, hrs: &Hrs) -> Result<(Multistep, Multistep)> {
    let sa = fsrc(a.as_rewrite(), hrs)?;
    let sb = fsrc(b.as_rewrite(), hrs)?;
    if sa != sb {
        return Err(Error::NotCoinitial);
    }
    let ca = ms_canonical(a, hrs)?;
    let cb = ms_canonical(b, hrs)?;
    let (ra, rb) = compat_rec(ca.as_rewrite(), cb.as_rewrite(), hrs)?;
    Ok((Multistep::new(ra)?, Multistep::new(rb)?))
}

fn compat_rec(a: &Rewrite, b: &Rewrite, hrs: &Hrs) -> Result<(Rewrite, Rewrite)> {
    if let (Rewrite::Abs(h, ta, ba), Rewrite::Abs(_, tb, bb)) = (a, b) {
        if ta != tb {
            return Err(Error::MatchFailure);
        }
        let (ra, rb) = compat_rec(ba, bb, hrs)?;
        return Ok((
            Rewrite::abs(h.clone(), ta.clone(), ra),
            Rewrite::abs(h.clone(), ta.clone(), rb),
        ));
    }
    let (ha, args_a) = a.spine();
    let (hb, args_b) = b.spine();
    match (ha, hb) {
        (Rewrite::Bound(i), Rewrite::Bound(j)) if i == j => {
            zip_compat(a, b, hrs, Rewrite::Bound(*i))
        }
        (Rewrite::Free(x), Rewrite::Free(y)) if x == y => {
            zip_compat(a, b, hrs, Rewrite::Free(x.clone()))
        }
        (Rewrite::Con(x), Rewrite::Con(y)) if x == y => {
            zip_compat(a, b, hrs, Rewrite::Con(x.clone()))
        }
        (Rewrite::Rule(r), Rewrite::Rule(s)) => {
            // orthogonality: coinitial multisteps with rule heads use the
            // same rule
            if r != s || args_a.len() != args_b.len() {
                return Err(Error::MatchFailure);
            }
            zip_compat(a, b, hrs, Rewrite::rule(r.clone()))
        }
        (_, Rewrite::Rule(r)) if !matches!(ha, Rewrite::Rule(_)) => {
            // constructor/rule matching: rewrite `a` as the rule source
            // applied to captured arguments, then align those argument-wise.
            let rule = hrs.rule(r)?;
            let mv_types: BTreeMap<Name, Type> = rule.metavars.iter().cloned().collect();
            let mut captures = BTreeMap::new();
            if !ms_match(&rule.lhs, &mv_types, a, 0, &mut captures) {
                return Err(Error::MatchFailure);
            }
            if args_b.len() != rule.metavars.len() {
                return Err(Error::MatchFailure);
            }
            let l = crate::term::etalong_nf(
                &TypingContext::new(),
                &rule.closed_src,
                &hrs.signature,
            )?;
            let mut new_a = refl(&l);
            let mut new_b = Rewrite::rule(r.clone());
            for ((mv, _), arg_b) in rule.metavars.iter().zip(args_b.iter()) {
                let xi = normalize_for_compat(&captures[mv], hrs)?;
                let arg_b = normalize_for_compat(arg_b, hrs)?;
                let (ra, rb) = compat_rec(&xi, &arg_b, hrs)?;
                new_a = Rewrite::app(new_a, ra);
                new_b = Rewrite::app(new_b, rb);
            }
            Ok((new_a, new_b))
        }
        (Rewrite::Rule(_), _) => {
            let (rb, ra) = compat_rec(b, a, hrs)?;
            Ok((ra, rb))
        }
        _ => Err(Error::MatchFailure),
    }
}

/// Brings a captured sub-rewrite into shape for the compatibilization
/// recursion. Captures are eta-long subterms of eta-long multisteps, so
/// beta-normalization suffices.
fn normalize_for_compat(rw: &Rewrite, _hrs: &Hrs) -> Result<Rewrite> {
    Ok(crate::rewrite::ms_beta_nf(rw))
}

fn zip_compat(a: &Rewrite, b: &Rewrite, hrs: &Hrs, head: Rewrite) -> Result<(Rewrite, Rewrite)> {
    let (_, args_a) = a.spine();
    let (_, args_b) = b.spine();
    if args_a.len() != args_b.len() {
        return Err(Error::MatchFailure);
    }
    let mut new_a = head.clone();
    let mut new_b = head;
    for (x, y) in args_a.iter().zip(args_b.iter()) {
        let (ra, rb) = compat_rec(x, y, hrs)?;
        new_a = Rewrite::app(new_a, ra);
        new_b = Rewrite::app(new_b, rb);
    }
    Ok((new_a, new_b))
}

/// Projection of a multistep over a coinitial multistep: the flat residual.
pub fn project_ms(a: &Multistep, b: &Multistep, hrs: &Hrs) -> Result<Multistep> {
    let (ca, cb) = compatibilize(a, b, hrs)?;
    let xi = weak_project(&ca, &cb, hrs)?;
    Ok(ms_flat_nf(&xi))
}

/// Projection of a flat rewrite over a coinitial flat rewrite, by induction
/// on the second argument. Satisfies the composition equations and preserves
/// the length of the first argument.
pub fn project_flat(rho: &FlatRewrite, sigma: &FlatRewrite, hrs: &Hrs) -> Result<FlatRewrite> {
    let s1 = fsrc(rho.first().as_rewrite(), hrs)?;
    let s2 = fsrc(sigma.first().as_rewrite(), hrs)?;
    if s1 != s2 {
        return Err(Error::NotCoinitial);
    }
    let mut cur: Vec<Multistep> = rho.steps().to_vec();
    for nu in sigma.steps() {
        cur = project_steps_over_ms(&cur, nu, hrs)?;
    }
    Ok(FlatRewrite::new(cur))
}

/// `rho /2 mu`: projects each component over the evolving residual of `mu`.
fn project_steps_over_ms(steps: &[Multistep], mu: &Multistep, hrs: &Hrs) -> Result<Vec<Multistep>> {
    let mut m = mu.clone();
    let mut out = Vec::with_capacity(steps.len());
    for s in steps {
        out.push(project_ms(s, &m, hrs)?);
        m = project_ms(&m, s, hrs)?;
    }
    Ok(out)
}

/// Projection of arbitrary coinitial rewrites: flatten both, then project.
pub fn project(rho: &Rewrite, sigma: &Rewrite, hrs: &Hrs) -> Result<FlatRewrite> {
    let fr = flatten(rho, hrs)?;
    let fs = flatten(sigma, hrs)?;
    project_flat(&fr, &fs, hrs)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Direction {
    LeftOverRight,
    RightOverLeft,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::LeftOverRight => write!(f, "left//right"),
            Direction::RightOverLeft => write!(f, "right//left"),
        }
    }
}

/// A non-empty residual multistep witnessing inequivalence.
#[derive(Clone, Debug)]
pub struct Witness {
    pub direction: Direction,
    pub index: usize,
    pub residual: Multistep,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Equivalent,
    Inequivalent(Vec<Witness>),
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent)
    }
}

/// Decides permutation equivalence of two coinitial rewrites: equivalent iff
/// both residuals are entirely rule-symbol-free.
pub fn decide_permeq(rho: &Rewrite, sigma: &Rewrite, hrs: &Hrs) -> Result<Verdict> {
    check_rewrite(&TypingContext::new(), rho, hrs)?;
    check_rewrite(&TypingContext::new(), sigma, hrs)?;
    let fr = flatten(rho, hrs)?;
    let fs = flatten(sigma, hrs)?;
    decide_permeq_flat(&fr, &fs, hrs)
}

pub fn decide_permeq_flat(fr: &FlatRewrite, fs: &FlatRewrite, hrs: &Hrs) -> Result<Verdict> {
    let rs = project_flat(fr, fs, hrs)?;
    let sr = project_flat(fs, fr, hrs)?;
    let mut witnesses = Vec::new();
    for (i, m) in rs.steps().iter().enumerate() {
        if !m.is_empty() {
            witnesses.push(Witness {
                direction: Direction::LeftOverRight,
                index: i,
                residual: m.clone(),
            });
        }
    }
    for (i, m) in sr.steps().iter().enumerate() {
        if !m.is_empty() {
            witnesses.push(Witness {
                direction: Direction::RightOverLeft,
                index: i,
                residual: m.clone(),
            });
        }
    }
    if witnesses.is_empty() {
        Ok(Verdict::Equivalent)
    } else {
        Ok(Verdict::Inequivalent(witnesses))
    }
}

/// Flat permutation equivalence of two single multisteps.
pub fn ms_equivalent(a: &Multistep, b: &Multistep, hrs: &Hrs) -> Result<bool> {
    Ok(project_ms(a, b, hrs)?.is_empty() && project_ms(b, a, hrs)?.is_empty())
}

/// The cube law: `(a/b)/(c/b) == (a/c)/(b/c)`, as exact alpha-equality of
/// flat forms. Holds for all coinitial triples.
pub fn cube_check(a: &Multistep, b: &Multistep, c: &Multistep, hrs: &Hrs) -> Result<bool> {
    let ab = project_ms(a, b, hrs)?;
    let cb = project_ms(c, b, hrs)?;
    let ac = project_ms(a, c, hrs)?;
    let bc = project_ms(b, c, hrs)?;
    let lhs = project_ms(&ab, &cb, hrs)?;
    let rhs = project_ms(&ac, &bc, hrs)?;
    Ok(lhs == rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flatten::ftgt;
    use crate::hrs::load_hrs;
    use crate::syntax::parse_rewrite;

    const MU_HRS: &str = "\
sig mu : (o -> o) -> o.
sig f : o -> o.
sig g : o -> o.
sig c : o.
rule rho : mu (\\y. X y) => X (mu (\\y. X y)).
rule theta : f X => g X.
";

    fn mu() -> Hrs {
        load_hrs(MU_HRS).unwrap()
    }

    fn ms(text: &str, hrs: &Hrs) -> Multistep {
        Multistep::new(parse_rewrite(text, hrs).unwrap()).unwrap()
    }

    #[test]
    fn projects_step_over_coinitial_step() {
        // (mu theta) / (rho f) = theta (mu theta)
        let hrs = mu();
        let a = ms("mu theta", &hrs);
        let b = ms("rho f", &hrs);
        let out = project_ms(&a, &b, &hrs).unwrap();
        let expected = ms_flat_nf(&ms("theta (mu theta)", &hrs));
        assert_eq!(out, expected);
    }

    #[test]
    fn projection_under_abstraction() {
        // (\x. (\x. f x) x) / (\x. theta x) = g
        let hrs = mu();
        let a = ms("\\x. (\\x. f x) x", &hrs);
        let b = ms("\\x. theta x", &hrs);
        let out = project_ms(&a, &b, &hrs).unwrap();
        assert_eq!(out.as_rewrite(), &Rewrite::con("g"));
    }

    #[test]
    fn residual_identities() {
        let hrs = mu();
        for text in ["mu theta", "rho f", "rho theta", "theta (theta c)"] {
            let m = ms_flat_nf(&ms(text, &hrs));
            // m / m = flat target
            let mm = project_ms(&m, &m, &hrs).unwrap();
            assert_eq!(mm, ftgt(m.as_rewrite(), &hrs).unwrap(), "m/m for {text}");
            // m / src = flat m
            let src = fsrc(m.as_rewrite(), &hrs).unwrap();
            let msrc = project_ms(&m, &src, &hrs).unwrap();
            assert_eq!(msrc, m, "m/src for {text}");
            // src / m = flat target
            let srcm = project_ms(&src, &m, &hrs).unwrap();
            assert_eq!(srcm, ftgt(m.as_rewrite(), &hrs).unwrap(), "src/m for {text}");
        }
    }

    #[test]
    fn compatibilize_self_is_identityish() {
        let hrs = mu();
        let m = ms("rho theta", &hrs);
        let (a, b) = compatibilize(&m, &m, &hrs).unwrap();
        assert!(compatible(&a, &b, &hrs));
        assert_eq!(ms_flat_nf(&a), ms_flat_nf(&m));
        assert_eq!(ms_flat_nf(&b), ms_flat_nf(&m));
    }

    #[test]
    fn incompatible_rule_heads() {
        let hrs = mu();
        let a = ms("rho g", &hrs);
        let b = ms("theta c", &hrs);
        // different sources: not coinitial
        assert!(matches!(
            project_ms(&a, &b, &hrs),
            Err(Error::NotCoinitial)
        ));
    }

    #[test]
    fn decide_permeq_mu_pair() {
        let hrs = mu();
        let r1 = parse_rewrite("mu (\\x. theta x) ; rho (\\x. g x)", &hrs).unwrap();
        let r2 = parse_rewrite(
            "rho (\\x. f x) ; f (mu (\\x. theta x)) ; theta (mu (\\x. g x))",
            &hrs,
        )
        .unwrap();
        let v = decide_permeq(&r1, &r2, &hrs).unwrap();
        assert!(v.is_equivalent(), "mu pair must be equivalent: {v:?}");
        // reflexivity
        let v = decide_permeq(&r1, &r1, &hrs).unwrap();
        assert!(v.is_equivalent());
        // single distinct steps are inequivalent with witnesses on both sides
        let a = parse_rewrite("mu (\\x. theta x)", &hrs).unwrap();
        let b = parse_rewrite("rho (\\x. f x)", &hrs).unwrap();
        match decide_permeq(&a, &b, &hrs).unwrap() {
            Verdict::Inequivalent(ws) => {
                assert!(ws.iter().any(|w| w.direction == Direction::LeftOverRight));
                assert!(ws.iter().any(|w| w.direction == Direction::RightOverLeft));
            }
            Verdict::Equivalent => panic!("expected inequivalent"),
        }
    }

    #[test]
    fn cube_law_on_fixtures() {
        let hrs = mu();
        let triples = [
            ("mu theta", "rho f", "rho theta"),
            ("rho theta", "rho theta", "mu theta"),
            ("theta (theta c)", "f (theta c)", "theta (f c)"),
        ];
        for (x, y, z) in triples {
            let a = ms(x, &hrs);
            let b = ms(y, &hrs);
            let c = ms(z, &hrs);
            assert!(cube_check(&a, &b, &c, &hrs).unwrap(), "cube for {x},{y},{z}");
        }
    }

    #[test]
    fn projection_length_preserved() {
        let hrs = mu();
        let r1 = parse_rewrite("mu (\\x. theta x) ; rho (\\x. g x)", &hrs).unwrap();
        let r2 = parse_rewrite(
            "rho (\\x. f x) ; f (mu (\\x. theta x)) ; theta (mu (\\x. g x))",
            &hrs,
        )
        .unwrap();
        let f1 = flatten(&r1, &hrs).unwrap();
        let f2 = flatten(&r2, &hrs).unwrap();
        let p = project_flat(&f1, &f2, &hrs).unwrap();
        assert_eq!(p.len(), f1.len());
        let q = project_flat(&f2, &f1, &hrs).unwrap();
        assert_eq!(q.len(), f2.len());
    }
}
