//! Higher-order rewriting systems: signatures, rules, validity checks,
//! higher-order pattern matching, redex enumeration, multistep marking, and
//! the plain rewrite relation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::rewrite::{Multistep, Rewrite};
use crate::syntax::{self, Scope, Statement};
use crate::term::{
    self, beta_eta_nf, beta_nf, eta_contract_all, type_of, Name, Path, PathStep, Signature, Term,
    Type, TypingContext,
};

/// A named rewriting rule. Both sides are stored in beta-eta-long normal
/// form; metavariables appear as free variables, ordered by first occurrence
/// in the left-hand side.
#[derive(Clone, Debug)]
pub struct Rule {
    pub name: Name,
    pub metavars: Vec<(Name, Type)>,
    pub lhs: Term,
    pub rhs: Term,
    /// Type of the lambda-closure of either side over the metavariables.
    pub rule_type: Type,
    /// Closed eta-long source `\X1..Xn. lhs`.
    pub closed_src: Term,
    /// Closed eta-long target `\X1..Xn. rhs`.
    pub closed_tgt: Term,
}

impl Rule {
    pub fn metavar_context(&self) -> TypingContext {
        self.metavars.iter().cloned().collect()
    }

    pub fn side_type(&self) -> &Type {
        let (_, base) = self.rule_type.strip();
        base
    }
}

/// An HRS: a signature, a set of named rules, and optional declared free
/// variables usable in expressions.
#[derive(Clone, Debug, Default)]
pub struct Hrs {
    pub signature: Signature,
    pub rules: Vec<Rule>,
    rule_index: BTreeMap<Name, usize>,
    pub vars: TypingContext,
}

impl Hrs {
    pub fn rule(&self, name: &str) -> Result<&Rule> {
        self.rule_index
            .get(name)
            .map(|&i| &self.rules[i])
            .ok_or_else(|| Error::UnknownRuleSymbol(name.to_string()))
    }

    pub fn rule_types(&self) -> BTreeMap<Name, Type> {
        self.rules
            .iter()
            .map(|r| (r.name.clone(), r.rule_type.clone()))
            .collect()
    }

    /// The ambient context extended with the declared free variables.
    pub fn extended_ctx(&self, ctx: &TypingContext) -> TypingContext {
        let mut out = self.vars.clone();
        for (k, v) in ctx {
            out.insert(k.clone(), v.clone());
        }
        out
    }

    pub fn beta_eta_nf(&self, t: &Term) -> Result<Term> {
        beta_eta_nf(&self.vars, t, &self.signature)
    }
}

/// Loads and validates an HRS from its textual form.
///
/// Critical-pair absence is not checked; orthogonality beyond left-linearity
/// and the pattern condition is an obligation on the input.
pub fn load_hrs(text: &str) -> Result<Hrs> {
    let stmts = syntax::parse_statements(text)?;
    let mut hrs = Hrs::default();
    let mut rule_stmts = Vec::new();
    for stmt in stmts {
        match stmt {
            Statement::Sig(name, ty) => {
                if hrs.signature.insert(name.clone(), ty).is_some() {
                    return Err(Error::Parse(format!("duplicate constant `{name}`")));
                }
            }
            Statement::Var(name, ty) => {
                if hrs.signature.contains_key(&name) {
                    return Err(Error::Parse(format!(
                        "variable `{name}` clashes with a constant"
                    )));
                }
                if hrs.vars.insert(name.clone(), ty).is_some() {
                    return Err(Error::Parse(format!("duplicate variable `{name}`")));
                }
            }
            Statement::Rule(name, lhs, rhs) => rule_stmts.push((name, lhs, rhs)),
        }
    }
    let empty_rules = BTreeMap::new();
    let empty_vars = TypingContext::new();
    for (name, lhs_e, rhs_e) in rule_stmts {
        if hrs.signature.contains_key(&name)
            || hrs.vars.contains_key(&name)
            || hrs.rule_index.contains_key(&name)
        {
            return Err(Error::Parse(format!("duplicate name `{name}`")));
        }
        let scope = Scope {
            sig: &hrs.signature,
            vars: &empty_vars,
            rule_types: &empty_rules,
            metavar_mode: true,
        };
        let (l, r, ty, metavars) =
            syntax::elaborate_rule_sides(&lhs_e, &rhs_e, &scope).map_err(|e| {
                Error::IllTypedRule {
                    rule: name.clone(),
                    reason: e.to_string(),
                }
            })?;
        let lhs = l.to_term().ok_or_else(|| Error::IllTypedRule {
            rule: name.clone(),
            reason: "rule sides must be terms".into(),
        })?;
        let rhs = r.to_term().ok_or_else(|| Error::IllTypedRule {
            rule: name.clone(),
            reason: "rule sides must be terms".into(),
        })?;
        let rule = build_rule(&hrs, &name, metavars, lhs, rhs, ty)?;
        hrs.rule_index.insert(name, hrs.rules.len());
        hrs.rules.push(rule);
    }
    Ok(hrs)
}

fn build_rule(
    hrs: &Hrs,
    name: &str,
    metavars: Vec<(Name, Type)>,
    lhs: Term,
    rhs: Term,
    ty: Type,
) -> Result<Rule> {
    if !ty.is_base() {
        return Err(Error::NotBaseType(name.to_string()));
    }
    let mv_ctx: TypingContext = metavars.iter().cloned().collect();
    let lhs = beta_eta_nf(&mv_ctx, &lhs, &hrs.signature)?;
    let rhs = beta_eta_nf(&mv_ctx, &rhs, &hrs.signature)?;
    // fv(rhs) must be included in fv(lhs)
    let lhs_fv = lhs.free_vars();
    for (mv, _) in &metavars {
        if !lhs_fv.contains(mv) {
            return Err(Error::VariableEscape {
                rule: name.to_string(),
                metavar: mv.clone(),
            });
        }
    }
    // left-linearity: exactly one free occurrence of each metavariable
    for (mv, _) in &metavars {
        let count = count_free(&lhs, mv);
        if count != 1 {
            return Err(Error::NotLeftLinear {
                rule: name.to_string(),
                metavar: mv.clone(),
                count,
            });
        }
    }
    // lhs must be a pattern, not eta-equivalent to a metavariable
    let mv_set: BTreeSet<Name> = metavars.iter().map(|(n, _)| n.clone()).collect();
    if !term::is_pattern(&lhs, &mv_set)? {
        return Err(Error::NotAPattern(name.to_string()));
    }
    if matches!(eta_contract_all(&beta_nf(&lhs)), Term::Free(_)) {
        return Err(Error::NotAPattern(name.to_string()));
    }
    // reorder metavariables by first free occurrence in the lhs
    let mut ordered: Vec<(Name, Type)> = Vec::new();
    first_occurrence_order(&lhs, &mv_set, &mut ordered, &metavars);
    debug_assert_eq!(ordered.len(), metavars.len());
    // closures
    let mut closed_src = lhs.clone();
    let mut closed_tgt = rhs.clone();
    for (mv, mv_ty) in ordered.iter().rev() {
        closed_src = Term::abs(mv.clone(), mv_ty.clone(), closed_src.close(mv));
        closed_tgt = Term::abs(mv.clone(), mv_ty.clone(), closed_tgt.close(mv));
    }
    let rule_type = Type::arrows(ordered.iter().map(|(_, t)| t.clone()).collect(), ty);
    debug_assert_eq!(
        type_of(&TypingContext::new(), &closed_src, &hrs.signature)?,
        rule_type
    );
    debug_assert_eq!(
        type_of(&TypingContext::new(), &closed_tgt, &hrs.signature)?,
        rule_type
    );
    Ok(Rule {
        name: name.to_string(),
        metavars: ordered,
        lhs,
        rhs,
        rule_type,
        closed_src,
        closed_tgt,
    })
}

fn count_free(t: &Term, x: &Name) -> usize {
    match t {
        Term::Free(y) => usize::from(y == x),
        Term::Bound(_) | Term::Con(_) => 0,
        Term::Abs(_, _, b) => count_free(b, x),
        Term::App(f, a) => count_free(f, x) + count_free(a, x),
    }
}

fn first_occurrence_order(
    t: &Term,
    mv_set: &BTreeSet<Name>,
    out: &mut Vec<(Name, Type)>,
    types: &[(Name, Type)],
) {
    match t {
        Term::Free(x) if mv_set.contains(x) => {
            if !out.iter().any(|(n, _)| n == x) {
                let ty = types
                    .iter()
                    .find(|(n, _)| n == x)
                    .map(|(_, t)| t.clone())
                    .expect("metavar type");
                out.push((x.clone(), ty));
            }
        }
        Term::Free(_) | Term::Bound(_) | Term::Con(_) => {}
        Term::Abs(_, _, b) => first_occurrence_order(b, mv_set, out, types),
        Term::App(f, a) => {
            first_occurrence_order(f, mv_set, out, types);
            first_occurrence_order(a, mv_set, out, types);
        }
    }
}

/// Substitution produced by higher-order matching: metavariable name to term.
pub type TermSubstitution = BTreeMap<Name, Term>;

/// Applies a metavariable substitution and beta-eta-normalizes, following the
/// definition `theta t := betaEtaNf((\Xs. t) theta(Xs))`.
pub fn apply_subst(
    t: &Term,
    subst: &TermSubstitution,
    ctx: &TypingContext,
    sig: &Signature,
) -> Result<Term> {
    let mut cur = t.clone();
    for (x, s) in subst {
        cur = term::subst_term(&cur, x, s);
    }
    beta_eta_nf(ctx, &cur, sig)
}

/// Result of a successful match: the substitution plus, for each
/// metavariable, the path of its captured subterm within the candidate.
#[derive(Clone, Debug)]
pub(crate) struct MatchResult {
    pub subst: TermSubstitution,
    pub capture_paths: BTreeMap<Name, Path>,
}

/// Higher-order matching of a left-linear Miller pattern against a
/// beta-eta-normal candidate of the same type. Returns the unique
/// substitution when it exists.
pub fn pattern_match(
    lhs: &Term,
    metavars: &BTreeMap<Name, Type>,
    candidate: &Term,
) -> Option<TermSubstitution> {
    match_with_paths(lhs, metavars, candidate).map(|m| m.subst)
}

pub(crate) fn match_with_paths(
    lhs: &Term,
    metavars: &BTreeMap<Name, Type>,
    candidate: &Term,
) -> Option<MatchResult> {
    let mut result = MatchResult {
        subst: TermSubstitution::new(),
        capture_paths: BTreeMap::new(),
    };
    let mut path = Vec::new();
    if match_rec(lhs, candidate, metavars, 0, &mut path, &mut result) {
        Some(result)
    } else {
        None
    }
}

fn match_rec(
    pat: &Term,
    cand: &Term,
    metavars: &BTreeMap<Name, Type>,
    depth: usize,
    path: &mut Path,
    result: &mut MatchResult,
) -> bool {
    // Metavariable spine: X a1 .. ak with the ai eta-equivalent to distinct
    // bound variables.
    let (head, args) = pat.spine();
    if let Term::Free(x) = head {
        if let Some(x_ty) = metavars.get(x) {
            let mut indices = Vec::new();
            for a in &args {
                match term::as_eta_bound_var(a) {
                    Some(i) => indices.push(i),
                    None => return false,
                }
            }
            let mut seen = BTreeSet::new();
            if !indices.iter().all(|i| seen.insert(*i)) {
                return false;
            }
            let (arg_tys, _) = x_ty.strip();
            let arg_tys: Vec<Type> = arg_tys.into_iter().cloned().collect();
            if arg_tys.len() != indices.len() {
                return false;
            }
            let captured = match capture_term(cand, &indices, &arg_tys) {
                Some(c) => c,
                None => return false,
            };
            if result.subst.insert(x.clone(), captured).is_some() {
                // non-left-linear patterns are rejected upstream
                return false;
            }
            result.capture_paths.insert(x.clone(), path.clone());
            return true;
        }
    }
    match (pat, cand) {
        (Term::Bound(i), Term::Bound(j)) => i == j,
        (Term::Free(x), Term::Free(y)) => x == y,
        (Term::Con(x), Term::Con(y)) => x == y,
        (Term::Abs(_, t1, b1), Term::Abs(_, t2, b2)) => {
            t1 == t2 && {
                path.push(PathStep::Body);
                let ok = match_rec(b1, b2, metavars, depth + 1, path, result);
                path.pop();
                ok
            }
        }
        (Term::App(f1, a1), Term::App(f2, a2)) => {
            path.push(PathStep::Fun);
            let ok = match_rec(f1, f2, metavars, depth, path, result);
            path.pop();
            if !ok {
                return false;
            }
            path.push(PathStep::Arg);
            let ok = match_rec(a1, a2, metavars, depth, path, result);
            path.pop();
            ok
        }
        _ => false,
    }
}

/// Binds the dangling indices `indices` of `body` as fresh lambda binders (in
/// argument order), failing if any other dangling index occurs.
fn capture_term(body: &Term, indices: &[usize], arg_tys: &[Type]) -> Option<Term> {
    let k = indices.len();
    let remapped = remap_term(body, indices, 0, k)?;
    let mut out = remapped;
    for (j, ty) in arg_tys.iter().enumerate().rev() {
        out = Term::abs(format!("z{j}"), ty.clone(), out);
    }
    Some(out)
}

/// Remaps dangling indices: index `indices[p]` (relative to the body root)
/// becomes the new binder `k-1-p`; any other dangling index fails.
fn remap_term(t: &Term, indices: &[usize], depth: usize, k: usize) -> Option<Term> {
    match t {
        Term::Bound(i) => {
            if *i < depth {
                Some(Term::Bound(*i))
            } else {
                let at_root = i - depth;
                let p = indices.iter().position(|&x| x == at_root)?;
                Some(Term::Bound(depth + (k - 1 - p)))
            }
        }
        Term::Free(_) | Term::Con(_) => Some(t.clone()),
        Term::Abs(h, ty, b) => Some(Term::abs(
            h.clone(),
            ty.clone(),
            remap_term(b, indices, depth + 1, k)?,
        )),
        Term::App(f, a) => Some(Term::app(
            remap_term(f, indices, depth, k)?,
            remap_term(a, indices, depth, k)?,
        )),
    }
}

/// Remapping for marked rewrites. Indices listed in `indices` (pattern-bound
/// arguments) become the new binders; indices at or above `outer` (binders
/// between the capture position and the redex root that are crossed by the
/// capture path) are shifted across the `k` new binders; anything else fails.
pub(crate) fn remap_rewrite(
    t: &Rewrite,
    indices: &[usize],
    depth: usize,
    k: usize,
    outer: usize,
) -> Option<Rewrite> {
    match t {
        Rewrite::Bound(i) => {
            if *i < depth {
                Some(Rewrite::Bound(*i))
            } else {
                let at_root = i - depth;
                if let Some(p) = indices.iter().position(|&x| x == at_root) {
                    Some(Rewrite::Bound(depth + (k - 1 - p)))
                } else if at_root >= outer {
                    Some(Rewrite::Bound(depth + k + (at_root - outer)))
                } else {
                    None
                }
            }
        }
        Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => Some(t.clone()),
        Rewrite::Abs(h, ty, b) => Some(Rewrite::abs(
            h.clone(),
            ty.clone(),
            remap_rewrite(b, indices, depth + 1, k, outer)?,
        )),
        Rewrite::App(f, a) => Some(Rewrite::app(
            remap_rewrite(f, indices, depth, k, outer)?,
            remap_rewrite(a, indices, depth, k, outer)?,
        )),
        Rewrite::Seq(_, _) => None,
    }
}

/// A redex occurrence in a beta-eta-normal term: position, rule, and match.
/// Enclosing binders are instantiated with the deterministic free variables
/// `#v0`, `#v1`, ... (by depth) inside the recorded substitution.
#[derive(Clone, Debug, PartialEq)]
pub struct RedexOccurrence {
    pub path: Path,
    pub rule: Name,
    pub subst: TermSubstitution,
    pub(crate) capture_paths: BTreeMap<Name, Path>,
}

fn depth_var(depth: usize) -> Name {
    format!("#v{depth}")
}

/// Enumerates all redex occurrences in leftmost-outermost order.
/// `t` must be typable and in beta-eta-normal form.
pub fn find_redexes(t: &Term, hrs: &Hrs) -> Result<Vec<RedexOccurrence>> {
    let mut ctx = hrs.vars.clone();
    let mut out = Vec::new();
    let mut path = Vec::new();
    find_rec(t, hrs, &mut ctx, 0, &mut path, &mut out)?;
    Ok(out)
}

fn find_rec(
    t: &Term,
    hrs: &Hrs,
    ctx: &mut TypingContext,
    depth: usize,
    path: &mut Path,
    out: &mut Vec<RedexOccurrence>,
) -> Result<()> {
    for rule in &hrs.rules {
        let mv_types: BTreeMap<Name, Type> = rule.metavars.iter().cloned().collect();
        if let Some(m) = match_with_paths(&rule.lhs, &mv_types, t) {
            out.push(RedexOccurrence {
                path: path.clone(),
                rule: rule.name.clone(),
                subst: m.subst,
                capture_paths: m.capture_paths,
            });
        }
    }
    match t {
        Term::Bound(_) | Term::Free(_) | Term::Con(_) => Ok(()),
        Term::Abs(_, ty, b) => {
            let v = depth_var(depth);
            ctx.insert(v.clone(), ty.clone());
            let opened = b.open(&Term::Free(v.clone()));
            path.push(PathStep::Body);
            find_rec(&opened, hrs, ctx, depth + 1, path, out)?;
            path.pop();
            ctx.remove(&v);
            Ok(())
        }
        Term::App(f, a) => {
            path.push(PathStep::Fun);
            find_rec(f, hrs, ctx, depth, path, out)?;
            path.pop();
            path.push(PathStep::Arg);
            find_rec(a, hrs, ctx, depth, path, out)?;
            path.pop();
            Ok(())
        }
    }
}

/// Applies one rewrite step at the given occurrence; the result is returned
/// in beta-eta-normal form.
pub fn step(t: &Term, occ: &RedexOccurrence, hrs: &Hrs) -> Result<Term> {
    let known = find_redexes(t, hrs)?;
    let occ = known
        .iter()
        .find(|o| o.path == occ.path && o.rule == occ.rule)
        .ok_or(Error::StaleOccurrence)?;
    let rule = hrs.rule(&occ.rule)?;
    let replaced = replace_at(t, &occ.path, hrs, &mut Vec::new(), &|_sub, ctx| {
        apply_subst(&rule.rhs, &occ.subst, ctx, &hrs.signature)
    })?;
    beta_eta_nf(&hrs.vars, &replaced, &hrs.signature)
}

/// Rebuilds `t` with the subterm at `path` replaced; binders along the path
/// are opened with the deterministic depth variables and re-closed after.
fn replace_at(
    t: &Term,
    path: &[PathStep],
    hrs: &Hrs,
    opened: &mut Vec<(Name, Type)>,
    mk: &dyn Fn(&Term, &TypingContext) -> Result<Term>,
) -> Result<Term> {
    if path.is_empty() {
        let mut ctx = hrs.vars.clone();
        for (name, ty) in opened.iter() {
            ctx.insert(name.clone(), ty.clone());
        }
        return mk(t, &ctx);
    }
    match (&path[0], t) {
        (PathStep::Body, Term::Abs(h, ty, b)) => {
            let v = depth_var(opened.len());
            let inner_t = b.open(&Term::Free(v.clone()));
            opened.push((v.clone(), ty.clone()));
            let inner = replace_at(&inner_t, &path[1..], hrs, opened, mk)?;
            opened.pop();
            Ok(Term::abs(h.clone(), ty.clone(), inner.close(&v)))
        }
        (PathStep::Fun, Term::App(f, a)) => Ok(Term::app(
            replace_at(f, &path[1..], hrs, opened, mk)?,
            (**a).clone(),
        )),
        (PathStep::Arg, Term::App(f, a)) => Ok(Term::app(
            (**f).clone(),
            replace_at(a, &path[1..], hrs, opened, mk)?,
        )),
        _ => Err(Error::StaleOccurrence),
    }
}

/// Checks whether `inner` extends `outer` strictly through one of the
/// metavariable capture paths of `outer`'s match.
fn nests_through_metavar(outer: &RedexOccurrence, inner: &RedexOccurrence) -> bool {
    if inner.path.len() <= outer.path.len() {
        return false;
    }
    if inner.path[..outer.path.len()] != outer.path[..] {
        return false;
    }
    let rel = &inner.path[outer.path.len()..];
    outer
        .capture_paths
        .values()
        .any(|cap| rel.len() >= cap.len() && &rel[..cap.len()] == &cap[..])
}

/// Marks a set of pairwise-compatible redex occurrences, producing the
/// multistep that fires them simultaneously.
pub fn mark_redexes(t: &Term, occs: &[RedexOccurrence], hrs: &Hrs) -> Result<Multistep> {
    let known = find_redexes(t, hrs)?;
    let mut wanted: Vec<(Path, Name)> = occs
        .iter()
        .map(|o| (o.path.clone(), o.rule.clone()))
        .collect();
    wanted.sort();
    wanted.dedup();
    let mut occs = Vec::new();
    for (path, rule) in &wanted {
        let found = known
            .iter()
            .find(|o| &o.path == path && &o.rule == rule)
            .ok_or(Error::StaleOccurrence)?;
        occs.push(found.clone());
    }
    for a in &occs {
        for b in &occs {
            if a.path == b.path && a.rule == b.rule {
                continue;
            }
            if a.path == b.path {
                return Err(Error::OverlappingOccurrences);
            }
            let a_prefix_of_b =
                b.path.len() >= a.path.len() && b.path[..a.path.len()] == a.path[..];
            if a_prefix_of_b && !nests_through_metavar(a, b) {
                return Err(Error::OverlappingOccurrences);
            }
        }
    }
    let rw = mark_rec(t, &occs, hrs)?;
    Multistep::new(rw)
}

fn mark_rec(t: &Term, occs: &[RedexOccurrence], hrs: &Hrs) -> Result<Rewrite> {
    if let Some(root) = occs.iter().find(|o| o.path.is_empty()) {
        let rule = hrs.rule(&root.rule)?;
        let mut args = Vec::new();
        let mut covered = 1usize;
        for (mv, mv_ty) in &rule.metavars {
            let cap_path = &root.capture_paths[mv];
            let captured_sub = t.at_path(cap_path).ok_or(Error::StaleOccurrence)?;
            let nested: Vec<RedexOccurrence> = occs
                .iter()
                .filter(|o| {
                    o.path.len() >= cap_path.len() && o.path[..cap_path.len()] == cap_path[..]
                })
                .map(|o| o.strip_prefix(cap_path.len()))
                .collect();
            let nested_count = nested.len();
            let marked = mark_rec(captured_sub, &nested, hrs)?;
            let (arg_tys, _) = mv_ty.strip();
            let arg_tys: Vec<Type> = arg_tys.into_iter().cloned().collect();
            let indices =
                metavar_arg_indices(&rule.lhs, mv).ok_or(Error::OverlappingOccurrences)?;
            let outer = cap_path.iter().filter(|s| **s == PathStep::Body).count();
            let remapped = remap_rewrite(&marked, &indices, 0, indices.len(), outer)
                .ok_or(Error::OverlappingOccurrences)?;
            let mut arg = remapped;
            for (j, ty) in arg_tys.iter().enumerate().rev() {
                arg = Rewrite::abs(format!("z{j}"), ty.clone(), arg);
            }
            covered += nested_count;
            args.push(arg);
        }
        if covered != occs.len() {
            return Err(Error::OverlappingOccurrences);
        }
        return Ok(Rewrite::apps(Rewrite::rule(root.rule.clone()), args));
    }
    match t {
        Term::Bound(i) => {
            if occs.is_empty() {
                Ok(Rewrite::Bound(*i))
            } else {
                Err(Error::StaleOccurrence)
            }
        }
        Term::Free(x) => {
            if occs.is_empty() {
                Ok(Rewrite::Free(x.clone()))
            } else {
                Err(Error::StaleOccurrence)
            }
        }
        Term::Con(c) => {
            if occs.is_empty() {
                Ok(Rewrite::Con(c.clone()))
            } else {
                Err(Error::StaleOccurrence)
            }
        }
        Term::Abs(h, ty, b) => {
            let nested: Vec<RedexOccurrence> = occs
                .iter()
                .filter(|o| o.path.first() == Some(&PathStep::Body))
                .map(|o| o.strip_prefix(1))
                .collect();
            if nested.len() != occs.len() {
                return Err(Error::StaleOccurrence);
            }
            let body = mark_rec(b, &nested, hrs)?;
            Ok(Rewrite::abs(h.clone(), ty.clone(), body))
        }
        Term::App(f, a) => {
            let fun_occs: Vec<RedexOccurrence> = occs
                .iter()
                .filter(|o| o.path.first() == Some(&PathStep::Fun))
                .map(|o| o.strip_prefix(1))
                .collect();
            let arg_occs: Vec<RedexOccurrence> = occs
                .iter()
                .filter(|o| o.path.first() == Some(&PathStep::Arg))
                .map(|o| o.strip_prefix(1))
                .collect();
            if fun_occs.len() + arg_occs.len() != occs.len() {
                return Err(Error::StaleOccurrence);
            }
            Ok(Rewrite::app(
                mark_rec(f, &fun_occs, hrs)?,
                mark_rec(a, &arg_occs, hrs)?,
            ))
        }
    }
}

impl RedexOccurrence {
    fn strip_prefix(&self, n: usize) -> RedexOccurrence {
        RedexOccurrence {
            path: self.path[n..].to_vec(),
            rule: self.rule.clone(),
            subst: self.subst.clone(),
            capture_paths: self.capture_paths.clone(),
        }
    }
}

/// Paths (relative to the lhs root) of the bound-variable arguments of the
/// unique free occurrence of `mv` in the rule lhs — as de Bruijn indices at
/// the occurrence.
fn metavar_arg_indices(lhs: &Term, mv: &Name) -> Option<Vec<usize>> {
    fn go(t: &Term, mv: &Name) -> Option<Vec<usize>> {
        let (head, args) = t.spine();
        if head == &Term::Free(mv.clone()) {
            let mut indices = Vec::new();
            for a in &args {
                indices.push(term::as_eta_bound_var(a)?);
            }
            return Some(indices);
        }
        match t {
            Term::Abs(_, _, b) => go(b, mv),
            Term::App(f, a) => go(f, mv).or_else(|| go(a, mv)),
            _ => None,
        }
    }
    go(lhs, mv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite::{check_rewrite, rsrc, rtgt};

    pub const MU_HRS: &str = "\
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

    #[test]
    fn loads_mu_hrs() {
        let hrs = mu();
        let rho = hrs.rule("rho").unwrap();
        assert_eq!(rho.rule_type, syntax::parse_type("(o -> o) -> o").unwrap());
        let expected_src = syntax::parse_term("\\x. mu (\\y. x y)", &Hrs {
            signature: hrs.signature.clone(),
            ..Default::default()
        });
        // closed source is \X. mu (\y. X y)
        assert_eq!(rho.closed_src, expected_src.unwrap());
        let theta = hrs.rule("theta").unwrap();
        assert_eq!(theta.rule_type, syntax::parse_type("o -> o").unwrap());
    }

    #[test]
    fn rejects_bad_rules() {
        let bad = "sig c : o.\nrule bad : X => c.";
        assert!(matches!(load_hrs(bad), Err(Error::NotAPattern(_))));
        let bad = "sig c : o.\nsig d : o.\nsig h : o -> o -> o.\nrule dup : h X X => d.";
        assert!(matches!(load_hrs(bad), Err(Error::NotLeftLinear { .. })));
        let bad = "sig c : o.\nrule esc : c => X.";
        assert!(matches!(load_hrs(bad), Err(Error::VariableEscape { .. })));
        let bad = "sig h : o -> o.\nrule arrow : h => h.";
        assert!(matches!(load_hrs(bad), Err(Error::NotBaseType(_))));
    }

    #[test]
    fn pattern_match_examples() {
        let hrs = mu();
        let rho = hrs.rule("rho").unwrap();
        let mv: BTreeMap<Name, Type> = rho.metavars.iter().cloned().collect();
        // mu (\x. f x) matches with X := \x. f x
        let cand = hrs
            .beta_eta_nf(&syntax::parse_term("mu (\\x. f x)", &hrs).unwrap())
            .unwrap();
        let theta = pattern_match(&rho.lhs, &mv, &cand).unwrap();
        let expected = syntax::parse_term("\\x. f x", &hrs).unwrap();
        assert_eq!(theta["X"], expected);
        // head mismatch gives None
        let th = hrs.rule("theta").unwrap();
        let mv2: BTreeMap<Name, Type> = th.metavars.iter().cloned().collect();
        let cand = hrs
            .beta_eta_nf(&syntax::parse_term("g c", &hrs).unwrap())
            .unwrap();
        assert!(pattern_match(&th.lhs, &mv2, &cand).is_none());
        // substitute-back check
        let cand = hrs
            .beta_eta_nf(&syntax::parse_term("f c", &hrs).unwrap())
            .unwrap();
        let theta = pattern_match(&th.lhs, &mv2, &cand).unwrap();
        let back = apply_subst(&th.lhs, &theta, &hrs.vars, &hrs.signature).unwrap();
        assert_eq!(back, cand);
    }

    #[test]
    fn two_argument_pattern_match() {
        let text = "\
sig d : (o -> o) -> o -> o.
sig f : o -> o.
sig c : o.
rule varrho : d (\\z. X z) Y => X (X Y).
";
        let hrs = load_hrs(text).unwrap();
        let rule = hrs.rule("varrho").unwrap();
        let mv: BTreeMap<Name, Type> = rule.metavars.iter().cloned().collect();
        let cand = hrs
            .beta_eta_nf(&syntax::parse_term("d (\\z. f z) c", &hrs).unwrap())
            .unwrap();
        let theta = pattern_match(&rule.lhs, &mv, &cand).unwrap();
        assert_eq!(theta["X"], syntax::parse_term("\\z. f z", &hrs).unwrap());
        assert_eq!(theta["Y"], syntax::parse_term("c", &hrs).unwrap());
    }

    #[test]
    fn find_redexes_examples() {
        let hrs = mu();
        let t = hrs
            .beta_eta_nf(&syntax::parse_term("mu (\\x. f x)", &hrs).unwrap())
            .unwrap();
        let occs = find_redexes(&t, &hrs).unwrap();
        assert_eq!(occs.len(), 2);
        assert_eq!(occs[0].rule, "rho");
        assert!(occs[0].path.is_empty());
        assert_eq!(occs[1].rule, "theta");
        // normal form has no redexes
        let t = hrs
            .beta_eta_nf(&syntax::parse_term("g c", &hrs).unwrap())
            .unwrap();
        assert!(find_redexes(&t, &hrs).unwrap().is_empty());
        // nested theta redexes
        let t = hrs
            .beta_eta_nf(&syntax::parse_term("f (f c)", &hrs).unwrap())
            .unwrap();
        let occs = find_redexes(&t, &hrs).unwrap();
        assert_eq!(occs.len(), 2);
    }

    #[test]
    fn step_examples() {
        let hrs = mu();
        let t = hrs
            .beta_eta_nf(&syntax::parse_term("mu (\\x. f x)", &hrs).unwrap())
            .unwrap();
        let occs = find_redexes(&t, &hrs).unwrap();
        let rho_occ = occs.iter().find(|o| o.rule == "rho").unwrap();
        let stepped = step(&t, rho_occ, &hrs).unwrap();
        let expected = hrs
            .beta_eta_nf(&syntax::parse_term("f (mu (\\x. f x))", &hrs).unwrap())
            .unwrap();
        assert_eq!(stepped, expected);
        // theta at the head of f (...)
        let occs = find_redexes(&stepped, &hrs).unwrap();
        let theta_occ = occs.iter().find(|o| o.rule == "theta" && o.path.is_empty());
        let stepped2 = step(&stepped, theta_occ.unwrap(), &hrs).unwrap();
        let expected2 = hrs
            .beta_eta_nf(&syntax::parse_term("g (mu (\\x. f x))", &hrs).unwrap())
            .unwrap();
        assert_eq!(stepped2, expected2);
        // stale occurrence
        let nf = hrs
            .beta_eta_nf(&syntax::parse_term("g c", &hrs).unwrap())
            .unwrap();
        assert!(matches!(
            step(&nf, rho_occ, &hrs),
            Err(Error::StaleOccurrence)
        ));
    }

    #[test]
    fn mark_redexes_examples() {
        let hrs = mu();
        let t = hrs
            .beta_eta_nf(&syntax::parse_term("mu (\\x. f x)", &hrs).unwrap())
            .unwrap();
        let occs = find_redexes(&t, &hrs).unwrap();
        // mark only rho: rho (\x. f x)
        let rho_occ: Vec<_> = occs.iter().filter(|o| o.rule == "rho").cloned().collect();
        let ms = mark_redexes(&t, &rho_occ, &hrs).unwrap();
        let expected = syntax::parse_rewrite("rho (\\x. f x)", &hrs).unwrap();
        assert_eq!(ms.as_rewrite(), &expected);
        // empty marking is the unit rewrite
        let ms = mark_redexes(&t, &[], &hrs).unwrap();
        assert!(ms.is_empty());
        // nested marking over f (f c)
        let t = hrs
            .beta_eta_nf(&syntax::parse_term("f (f c)", &hrs).unwrap())
            .unwrap();
        let occs = find_redexes(&t, &hrs).unwrap();
        let ms = mark_redexes(&t, &occs, &hrs).unwrap();
        let expected = syntax::parse_rewrite("theta (theta c)", &hrs).unwrap();
        assert_eq!(ms.as_rewrite(), &expected);
        // endpoints agree with src/tgt up to beta-eta
        let j = check_rewrite(&TypingContext::new(), ms.as_rewrite(), &hrs).unwrap();
        let src_nf = hrs.beta_eta_nf(&j.src).unwrap();
        assert_eq!(src_nf, t);
        let tgt_nf = hrs.beta_eta_nf(&j.tgt).unwrap();
        let expected_tgt = hrs
            .beta_eta_nf(&syntax::parse_term("g (g c)", &hrs).unwrap())
            .unwrap();
        assert_eq!(tgt_nf, expected_tgt);
        let _ = (rsrc(ms.as_rewrite(), &hrs).unwrap(), rtgt(ms.as_rewrite(), &hrs).unwrap());
    }

    #[test]
    fn marked_nested_rho_theta() {
        let hrs = mu();
        let t = hrs
            .beta_eta_nf(&syntax::parse_term("mu (\\x. f x)", &hrs).unwrap())
            .unwrap();
        let occs = find_redexes(&t, &hrs).unwrap();
        let ms = mark_redexes(&t, &occs, &hrs).unwrap();
        let expected = syntax::parse_rewrite("rho (\\y. theta y)", &hrs).unwrap();
        assert_eq!(ms.as_rewrite(), &expected);
    }
}
