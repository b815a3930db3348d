//! Random generators, shrinkers, and independent bounded oracles used by the
//! acceptance suite. Generation is deterministic under a seed.

use std::collections::{HashSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hrs::{find_redexes, load_hrs, mark_redexes, Hrs};
use crate::rewrite::{
    check_rewrite, ms_flat_nf, refl, rsrc, rtgt, Multistep, Rewrite,
};
use crate::split::{enumerate_splits, merge_syntactic};
use crate::syntax::parse_rewrite;
use crate::term::{beta_eta_nf, Term, Type, TypingContext};

/// Generates a well-typed closed term of the given type over the signature
/// (plus the context), or `None` if the signature cannot inhabit it.
pub fn gen_term(
    rng: &mut ChaCha8Rng,
    ctx: &TypingContext,
    ty: &Type,
    size: usize,
    hrs: &Hrs,
) -> Option<Term> {
    let mut bounds: Vec<Type> = Vec::new();
    gen_term_in(rng, ctx, &mut bounds, ty, size, hrs)
}

fn gen_term_in(
    rng: &mut ChaCha8Rng,
    ctx: &TypingContext,
    bounds: &mut Vec<Type>,
    ty: &Type,
    size: usize,
    hrs: &Hrs,
) -> Option<Term> {
    if let Type::Arrow(dom, cod) = ty {
        bounds.push((**dom).clone());
        let body = gen_term_in(rng, ctx, bounds, cod, size, hrs);
        bounds.pop();
        return Some(Term::abs("x", (**dom).clone(), body?));
    }
    // base type: pick a head whose result type matches, then fill arguments
    let mut heads: Vec<(Term, Type)> = Vec::new();
    for (i, bty) in bounds.iter().rev().enumerate() {
        if bty.strip().1 == ty {
            heads.push((Term::Bound(i), bty.clone()));
        }
    }
    for (c, cty) in &hrs.signature {
        if cty.strip().1 == ty {
            heads.push((Term::con(c.clone()), cty.clone()));
        }
    }
    for (v, vty) in ctx {
        if vty.strip().1 == ty {
            heads.push((Term::free(v.clone()), vty.clone()));
        }
    }
    if heads.is_empty() {
        return None;
    }
    // an exhausted size budget forces a nullary head; if there is none the
    // type is not inhabited by a small term
    let pick = if size == 0 {
        let nullary: Vec<&(Term, Type)> =
            heads.iter().filter(|(_, t)| t.is_base()).collect();
        if nullary.is_empty() {
            return None;
        }
        nullary[rng.gen_range(0..nullary.len())].clone()
    } else {
        heads[rng.gen_range(0..heads.len())].clone()
    };
    let (head, head_ty) = pick;
    let (arg_tys, _) = head_ty.strip();
    let n = arg_tys.len();
    let mut out = head;
    for aty in arg_tys {
        let arg = gen_term_in(rng, ctx, bounds, aty, size.saturating_sub(1) / n.max(1), hrs)?;
        out = Term::app(out, arg);
    }
    Some(out)
}

/// Marks a random pairwise-compatible subset of the redexes of `src`
/// (inclusion probability `density`), producing a multistep from `src`.
pub fn gen_multistep(
    rng: &mut ChaCha8Rng,
    hrs: &Hrs,
    src: &Term,
    density: f64,
) -> Result<Multistep> {
    let s = hrs.beta_eta_nf(src)?;
    let occs = find_redexes(&s, hrs)?;
    let mut chosen = Vec::new();
    for occ in occs {
        if rng.gen_bool(density) {
            chosen.push(occ.clone());
            // keep only pairwise-compatible selections
            if mark_redexes(&s, &chosen, hrs).is_err() {
                chosen.pop();
            }
        }
    }
    mark_redexes(&s, &chosen, hrs)
}

/// Generates a well-typed rewrite from `src`: compositions, congruences, and
/// multisteps, chained so that endpoints stay composable.
pub fn gen_rewrite(
    rng: &mut ChaCha8Rng,
    hrs: &Hrs,
    src: &Term,
    fuel: usize,
) -> Result<Rewrite> {
    let s = hrs.beta_eta_nf(src)?;
    gen_rw(rng, hrs, &s, fuel, 0)
}

fn gen_rw(
    rng: &mut ChaCha8Rng,
    hrs: &Hrs,
    src: &Term,
    fuel: usize,
    depth: usize,
) -> Result<Rewrite> {
    if fuel == 0 || depth > 4 {
        return Ok(gen_multistep(rng, hrs, src, 0.6)?.into_rewrite());
    }
    match rng.gen_range(0..4u8) {
        0 | 1 => {
            // composition of two pieces
            let first = gen_rw(rng, hrs, src, fuel / 2, depth + 1)?;
            let mid = rtgt(&first, hrs)?;
            let second = gen_rw(rng, hrs, &hrs.beta_eta_nf(&mid)?, fuel / 2, depth + 1)?;
            Ok(Rewrite::seq(first, second))
        }
        2 => {
            // congruence under the head abstraction, when there is one
            if let Term::Abs(h, ty, b) = src {
                let fresh = format!("#g{depth}");
                let opened = b.open(&Term::Free(fresh.clone()));
                let mut hrs2 = hrs.clone();
                hrs2.vars.insert(fresh.clone(), ty.clone());
                let inner = gen_rw(rng, hrs, &opened, fuel - 1, depth + 1);
                let inner = match inner {
                    Ok(r) => r,
                    Err(_) => gen_multistep(rng, &hrs2, &opened, 0.6)?.into_rewrite(),
                };
                return Ok(Rewrite::abs(h.clone(), ty.clone(), inner.close(&fresh)));
            }
            gen_rw(rng, hrs, src, fuel - 1, depth + 1)
        }
        _ => Ok(gen_multistep(rng, hrs, src, 0.6)?.into_rewrite()),
    }
}

/// Right-associates every composition, normalizing modulo Assoc.
fn assoc_canon(rw: &Rewrite) -> Rewrite {
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => rw.clone(),
        Rewrite::Abs(h, ty, b) => Rewrite::abs(h.clone(), ty.clone(), assoc_canon(b)),
        Rewrite::App(f, a) => Rewrite::app(assoc_canon(f), assoc_canon(a)),
        Rewrite::Seq(a, b) => {
            let a = assoc_canon(a);
            let b = assoc_canon(b);
            match a {
                Rewrite::Seq(a1, a2) => {
                    assoc_canon(&Rewrite::seq(*a1, Rewrite::seq(*a2, b)))
                }
                other => Rewrite::seq(other, b),
            }
        }
    }
}

fn is_unit(rw: &Rewrite) -> bool {
    !rw.has_rule_symbol() && !rw.has_seq()
}

/// Sound transformations of the permutation-equivalence axioms (both
/// directions where finitely enumerable), the derived rewrite/rewrite beta
/// rule, and flat split/merge moves.
fn neighbors(rw: &Rewrite, hrs: &Hrs) -> Vec<Rewrite> {
    let mut out = Vec::new();
    local_moves(rw, hrs, &mut out);
    // congruence closure: apply moves in subterms
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => {}
        Rewrite::Abs(h, ty, b) => {
            for b2 in neighbors(b, hrs) {
                out.push(Rewrite::abs(h.clone(), ty.clone(), b2));
            }
        }
        Rewrite::App(f, a) => {
            for f2 in neighbors(f, hrs) {
                out.push(Rewrite::app(f2, (**a).clone()));
            }
            for a2 in neighbors(a, hrs) {
                out.push(Rewrite::app((**f).clone(), a2));
            }
        }
        Rewrite::Seq(f, a) => {
            for f2 in neighbors(f, hrs) {
                out.push(Rewrite::seq(f2, (**a).clone()));
            }
            for a2 in neighbors(a, hrs) {
                out.push(Rewrite::seq((**f).clone(), a2));
            }
        }
    }
    out
}

fn local_moves(rw: &Rewrite, hrs: &Hrs, out: &mut Vec<Rewrite>) {
    // IdL / IdR insertion
    if let Ok(src) = rsrc(rw, hrs) {
        out.push(Rewrite::seq(refl(&src), rw.clone()));
    }
    if let Ok(tgt) = rtgt(rw, hrs) {
        out.push(Rewrite::seq(rw.clone(), refl(&tgt)));
    }
    match rw {
        Rewrite::Seq(a, b) => {
            // IdL / IdR contraction
            if is_unit(a) {
                if let (Some(t), Ok(s)) = (a.to_term(), rsrc(b, hrs)) {
                    if t == s {
                        out.push((**b).clone());
                    }
                }
            }
            if is_unit(b) {
                if let (Some(t), Ok(s)) = (b.to_term(), rtgt(a, hrs)) {
                    if t == s {
                        out.push((**a).clone());
                    }
                }
            }
            // Abs rule, merging direction: (\x.r) ; (\x.s) -> \x. (r ; s)
            if let (Rewrite::Abs(h, ty, ba), Rewrite::Abs(_, ty2, bb)) = (a.as_ref(), b.as_ref())
            {
                if ty == ty2 {
                    out.push(Rewrite::abs(
                        h.clone(),
                        ty.clone(),
                        Rewrite::seq((**ba).clone(), (**bb).clone()),
                    ));
                }
            }
            // App rule, merging direction: (r1 r2) ; (s1 s2) -> (r1;s1)(r2;s2)
            if let (Rewrite::App(f1, a1), Rewrite::App(f2, a2)) = (a.as_ref(), b.as_ref()) {
                out.push(Rewrite::app(
                    Rewrite::seq((**f1).clone(), (**f2).clone()),
                    Rewrite::seq((**a1).clone(), (**a2).clone()),
                ));
            }
            // flat merge of two adjacent multisteps
            if !a.has_seq() && !b.has_seq() {
                let (ma, mb) = (
                    ms_flat_nf(&Multistep::new((**a).clone()).unwrap()),
                    ms_flat_nf(&Multistep::new((**b).clone()).unwrap()),
                );
                if let Ok(Some(m)) = merge_syntactic(&ma, &mb, hrs) {
                    out.push(m.into_rewrite());
                }
            }
        }
        Rewrite::Abs(h, ty, body) => {
            // Abs rule, splitting direction
            if let Rewrite::Seq(p, q) = body.as_ref() {
                out.push(Rewrite::seq(
                    Rewrite::abs(h.clone(), ty.clone(), (**p).clone()),
                    Rewrite::abs(h.clone(), ty.clone(), (**q).clone()),
                ));
            }
            // Eta contraction
            if let Rewrite::App(f, x) = body.as_ref() {
                if matches!(x.as_ref(), Rewrite::Bound(0)) && !f.mentions_bound(0) {
                    out.push(f.open_at(0, &Rewrite::Bound(0)));
                }
            }
        }
        Rewrite::App(f, a) => {
            // App rule, splitting direction
            if let (Rewrite::Seq(f1, f2), Rewrite::Seq(a1, a2)) = (f.as_ref(), a.as_ref()) {
                out.push(Rewrite::seq(
                    Rewrite::app((**f1).clone(), (**a1).clone()),
                    Rewrite::app((**f2).clone(), (**a2).clone()),
                ));
            }
            if let Rewrite::Abs(_, _, body) = f.as_ref() {
                // BetaTR: (\x. refl s) r  ~  s<x := r>
                if is_unit(body) {
                    out.push(body.open(a));
                }
                // BetaRT: (\x. r) (refl s)  ~  r{x := s}
                if is_unit(a) {
                    out.push(body.open(a));
                }
                // BetaRR (derived): (\x. r) s  ~  r{{x := s}}
                if let (Ok(ssrc), Ok(ttgt)) = (rsrc(a, hrs), rtgt(body, hrs)) {
                    let first = body.open(&refl(&ssrc));
                    let second = Rewrite::from_term(&ttgt).open(a);
                    out.push(Rewrite::seq(first, second));
                }
            }
        }
        _ => {}
    }
    // flat Perm splits of a composition-free subterm with rule occurrences
    if !rw.has_seq() && rw.has_rule_symbol() {
        if let Ok(ms) = Multistep::new(rw.clone()) {
            if ms.rule_occurrences().len() <= 4 {
                if let Ok(splits) = enumerate_splits(&ms, hrs) {
                    for (_, a, b) in splits {
                        let fa = ms_flat_nf(&a);
                        let fb = ms_flat_nf(&b);
                        out.push(Rewrite::seq(
                            fa.into_rewrite(),
                            fb.into_rewrite(),
                        ));
                    }
                }
            }
        }
    }
}

const SEARCH_FRONTIER_CAP: usize = 1500;

/// Bounded bidirectional closure of the permutation-equivalence axiom schema
/// (plus the derived BetaRR rule and flat split/merge moves, all sound for
/// permutation equivalence). `Some(true)` when the two rewrites meet within
/// `depth_bound` applications per side; `None` on exhaustion. This is a
/// semi-decision: `Some(false)` is never produced.
pub fn bounded_permeq_search(
    rho: &Rewrite,
    sigma: &Rewrite,
    hrs: &Hrs,
    depth_bound: usize,
) -> Result<Option<bool>> {
    check_rewrite(&TypingContext::new(), rho, hrs)?;
    check_rewrite(&TypingContext::new(), sigma, hrs)?;
    let start_l = assoc_canon(rho);
    let start_r = assoc_canon(sigma);
    if start_l == start_r {
        return Ok(Some(true));
    }
    let mut seen_l: HashSet<Rewrite> = [start_l.clone()].into_iter().collect();
    let mut seen_r: HashSet<Rewrite> = [start_r.clone()].into_iter().collect();
    let mut frontier_l = VecDeque::from([start_l]);
    let mut frontier_r = VecDeque::from([start_r]);
    fn expand(
        frontier: &mut VecDeque<Rewrite>,
        seen: &mut HashSet<Rewrite>,
        other: &HashSet<Rewrite>,
        hrs: &Hrs,
    ) -> bool {
        let mut next = VecDeque::new();
        while let Some(state) = frontier.pop_front() {
            for n in neighbors(&state, hrs) {
                let n = assoc_canon(&n);
                if seen.contains(&n) {
                    continue;
                }
                if check_rewrite(&TypingContext::new(), &n, hrs).is_err() {
                    continue;
                }
                if other.contains(&n) {
                    return true;
                }
                seen.insert(n.clone());
                if next.len() < SEARCH_FRONTIER_CAP {
                    next.push_back(n);
                }
            }
        }
        *frontier = next;
        false
    }
    for _ in 0..depth_bound {
        if expand(&mut frontier_l, &mut seen_l, &seen_r, hrs) {
            return Ok(Some(true));
        }
        if expand(&mut frontier_r, &mut seen_r, &seen_l, hrs) {
            return Ok(Some(true));
        }
        if frontier_l.is_empty() && frontier_r.is_empty() {
            break;
        }
    }
    Ok(None)
}

/// A corpus case: an HRS, two rewrite expressions, and the expected verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub hrs_text: String,
    pub expr1: String,
    pub expr2: String,
    pub expect: Option<bool>,
}

impl Case {
    pub fn to_case_text(&self) -> String {
        let mut out = String::new();
        out.push_str(self.hrs_text.trim_end());
        out.push('\n');
        out.push_str(&format!("#! expr1 {}\n", self.expr1));
        out.push_str(&format!("#! expr2 {}\n", self.expr2));
        match self.expect {
            Some(true) => out.push_str("#! expect equivalent\n"),
            Some(false) => out.push_str("#! expect inequivalent\n"),
            None => {}
        }
        out
    }

    pub fn from_case_text(text: &str) -> Result<Case> {
        let mut hrs_lines = Vec::new();
        let mut expr1 = None;
        let mut expr2 = None;
        let mut expect = None;
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("#! expr1 ") {
                expr1 = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("#! expr2 ") {
                expr2 = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("#! expect ") {
                expect = Some(rest.trim() == "equivalent");
            } else {
                hrs_lines.push(line);
            }
        }
        Ok(Case {
            hrs_text: hrs_lines.join("\n"),
            expr1: expr1.ok_or_else(|| Error::Parse("missing expr1".into()))?,
            expr2: expr2.ok_or_else(|| Error::Parse("missing expr2".into()))?,
            expect,
        })
    }

    pub fn load(&self) -> Result<(Hrs, Rewrite, Rewrite)> {
        let hrs = load_hrs(&self.hrs_text)?;
        let e1 = parse_rewrite(&self.expr1, &hrs)?;
        let e2 = parse_rewrite(&self.expr2, &hrs)?;
        Ok((hrs, e1, e2))
    }
}

/// Persists a case to a corpus directory as a `.case` file.
pub fn save_case(dir: &std::path::Path, name: &str, case: &Case) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Parse(format!("cannot create corpus dir: {e}")))?;
    let path = dir.join(format!("{name}.case"));
    std::fs::write(&path, case.to_case_text())
        .map_err(|e| Error::Parse(format!("cannot write case: {e}")))?;
    Ok(())
}

/// Loads every `.case` file in a corpus directory, sorted by file name.
pub fn load_cases(dir: &std::path::Path) -> Result<Vec<(String, Case)>> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Ok(out),
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("case") {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Parse(format!("cannot read case: {e}")))?;
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("case")
                .to_string();
            out.push((name, Case::from_case_text(&text)?));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Shrinks a case: truncates compositions and unmarks rule occurrences while
/// preserving typability. Returns strictly smaller candidate cases.
pub fn shrink(case: &Case) -> Vec<Case> {
    let Ok((hrs, e1, e2)) = case.load() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (which, e) in [(1, &e1), (2, &e2)] {
        for smaller in shrink_rewrite(e, &hrs) {
            let mut c = case.clone();
            let text = crate::rewrite::print_rewrite(&smaller);
            if which == 1 {
                c.expr1 = text;
            } else {
                c.expr2 = text;
            }
            c.expect = None;
            out.push(c);
        }
    }
    out
}

fn shrink_rewrite(rw: &Rewrite, hrs: &Hrs) -> Vec<Rewrite> {
    let mut out = Vec::new();
    // truncate trailing composition
    if let Rewrite::Seq(a, _) = rw {
        out.push((**a).clone());
    }
    // unmark a rule occurrence in the final component; earlier components
    // cannot change their targets without breaking composability
    match rw {
        Rewrite::Seq(a, b) => {
            if let Some(b2) = unmark_first(b, hrs) {
                out.push(Rewrite::seq((**a).clone(), b2));
            }
        }
        other => {
            if let Some(smaller) = unmark_first(other, hrs) {
                out.push(smaller);
            }
        }
    }
    out
}

fn unmark_first(rw: &Rewrite, hrs: &Hrs) -> Option<Rewrite> {
    match rw {
        Rewrite::Rule(r) => {
            let rule = hrs.rule(r).ok()?;
            Some(refl(&rule.closed_src))
        }
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) => None,
        Rewrite::Abs(h, ty, b) => {
            unmark_first(b, hrs).map(|b2| Rewrite::abs(h.clone(), ty.clone(), b2))
        }
        Rewrite::App(f, a) => {
            if let Some(f2) = unmark_first(f, hrs) {
                return Some(Rewrite::app(f2, (**a).clone()));
            }
            unmark_first(a, hrs).map(|a2| Rewrite::app((**f).clone(), a2))
        }
        Rewrite::Seq(f, a) => {
            if let Some(f2) = unmark_first(f, hrs) {
                return Some(Rewrite::seq(f2, (**a).clone()));
            }
            unmark_first(a, hrs).map(|a2| Rewrite::seq((**f).clone(), a2))
        }
    }
}

/// Convenience: the suite's standard fixtures.
pub mod fixtures {
    pub const MU_HRS: &str = "\
sig mu : (o -> o) -> o.
sig f : o -> o.
sig g : o -> o.
sig c : o.
rule rho : mu (\\y. X y) => X (mu (\\y. X y)).
rule theta : f X => g X.
";

    pub const DFG_HRS: &str = "\
sig d : (o -> o) -> o -> o.
sig f : o -> o.
sig g : o -> o.
rule varrho : d (\\z. X z) Y => X (X Y).
rule vartheta : f (f X) => g X.
";

    /// Orthogonal duplication fixture: `varrho` duplicates its higher-order
    /// argument, `vartheta` rewrites below it; no overlaps.
    pub const DUP_HRS: &str = "\
sig d : (o -> o) -> o -> o.
sig f : o -> o.
sig g : o -> o.
sig k : o.
rule varrho : d (\\z. X z) Y => X (X Y).
rule vartheta : f X => g X.
";

    pub const CD_HRS: &str = "\
sig c : o.
sig d : o.
rule rho : c => d.
";

    pub const ERASE_HRS: &str = "\
sig c : o -> o.
sig d : o.
sig e : o.
sig e' : o.
rule varrho : c X => d.
rule vartheta : e => e'.
";

    pub const LOOP_HRS: &str = "\
sig c : o.
sig d : o.
sig f : o -> o.
rule loop : c => c.
rule erase : f X => d.
";
}

/// Seeded source-term pool for an HRS: closed terms at the base result types
/// of the signature and at the argument types of its constants (some
/// signatures, like the duplication fixture, only inhabit arrow types).
pub fn source_pool(rng: &mut ChaCha8Rng, hrs: &Hrs, count: usize, size: usize) -> Vec<Term> {
    let mut set = HashSet::new();
    for ty in hrs.signature.values() {
        set.insert(ty.strip().1.clone());
        for arg in ty.strip().0 {
            set.insert(arg.clone());
        }
    }
    let mut tys: Vec<Type> = set.into_iter().collect();
    tys.sort();
    let ctx = TypingContext::new();
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count && tries < count * 50 {
        tries += 1;
        let ty = &tys[rng.gen_range(0..tys.len())];
        if let Some(t) = gen_term(rng, &ctx, ty, size, hrs) {
            if let Ok(nf) = beta_eta_nf(&ctx, &t, &hrs.signature) {
                // bias towards sources that admit at least one step
                let has_work = find_redexes(&nf, hrs)
                    .map(|o| !o.is_empty())
                    .unwrap_or(false);
                if has_work || rng.gen_bool(0.25) {
                    out.push(nf);
                }
            }
        }
    }
    out
}

/// Map from fixture name to its text, for CLI and corpus tooling.
pub fn fixture_by_name(name: &str) -> Option<&'static str> {
    match name {
        "mu" => Some(fixtures::MU_HRS),
        "dfg" => Some(fixtures::DFG_HRS),
        "dup" => Some(fixtures::DUP_HRS),
        "cd" => Some(fixtures::CD_HRS),
        "erase" => Some(fixtures::ERASE_HRS),
        "loop" => Some(fixtures::LOOP_HRS),
        _ => None,
    }
}
