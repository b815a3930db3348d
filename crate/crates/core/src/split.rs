//! The splitting judgment and its algorithmic uses: enumeration of
//! splittings, merging two sequential multisteps back into one, unfoldings,
//! depth, and the empty-multistep test.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::flatten::{fsrc, ftgt, FlatRewrite};
use crate::hrs::{find_redexes, mark_redexes, Hrs, RedexOccurrence};
use crate::project::{decide_permeq_flat, ms_equivalent};
use crate::rewrite::{ms_flat_nf, refl, Multistep, Rewrite};
use crate::term::{Path, PathStep};

/// Routing of one rule-symbol occurrence: fire now (left) or later (right).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Choice {
    L,
    R,
}

/// A total assignment of choices to the rule-symbol occurrences of a
/// multistep, keyed by occurrence path.
pub type SplitChoices = BTreeMap<Path, Choice>;

/// Splits a multistep into two sequential multisteps according to the choice
/// vector: occurrences routed L fire in the first component, occurrences
/// routed R in the second.
pub fn split(ms: &Multistep, choices: &SplitChoices, hrs: &Hrs) -> Result<(Multistep, Multistep)> {
    let occs = ms.rule_occurrences();
    if occs.len() != choices.len() || !occs.iter().all(|p| choices.contains_key(p)) {
        return Err(Error::BadChoices);
    }
    let mut path = Vec::new();
    let (a, b) = split_rec(ms.as_rewrite(), choices, hrs, &mut path)?;
    Ok((Multistep::new(a)?, Multistep::new(b)?))
}

fn split_rec(
    rw: &Rewrite,
    choices: &SplitChoices,
    hrs: &Hrs,
    path: &mut Path,
) -> Result<(Rewrite, Rewrite)> {
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) => {
            Ok((rw.clone(), rw.clone()))
        }
        Rewrite::Rule(r) => {
            let rule = hrs.rule(r)?;
            match choices.get(path).ok_or(Error::BadChoices)? {
                Choice::L => Ok((rw.clone(), refl(&rule.closed_tgt))),
                Choice::R => Ok((refl(&rule.closed_src), rw.clone())),
            }
        }
        Rewrite::Abs(h, ty, b) => {
            path.push(PathStep::Body);
            let (a, b2) = split_rec(b, choices, hrs, path)?;
            path.pop();
            Ok((
                Rewrite::abs(h.clone(), ty.clone(), a),
                Rewrite::abs(h.clone(), ty.clone(), b2),
            ))
        }
        Rewrite::App(f, x) => {
            path.push(PathStep::Fun);
            let (f1, f2) = split_rec(f, choices, hrs, path)?;
            path.pop();
            path.push(PathStep::Arg);
            let (x1, x2) = split_rec(x, choices, hrs, path)?;
            path.pop();
            Ok((Rewrite::app(f1, x1), Rewrite::app(f2, x2)))
        }
        Rewrite::Seq(_, _) => Err(Error::BadChoices),
    }
}

/// Enumerates every split of a multistep, one per choice vector, in a fixed
/// order: choice vectors ordered lexicographically over the preorder
/// occurrence paths with L before R.
pub fn enumerate_splits(
    ms: &Multistep,
    hrs: &Hrs,
) -> Result<Vec<(SplitChoices, Multistep, Multistep)>> {
    let occs = ms.rule_occurrences();
    let k = occs.len();
    let mut out = Vec::with_capacity(1 << k);
    for mask in 0u64..(1u64 << k) {
        let mut choices = SplitChoices::new();
        for (bit, path) in occs.iter().enumerate() {
            // bit 0 means L so that all-L comes first
            let c = if mask & (1 << (k - 1 - bit)) == 0 {
                Choice::L
            } else {
                Choice::R
            };
            choices.insert(path.clone(), c);
        }
        let (a, b) = split(ms, &choices, hrs)?;
        out.push((choices, a, b));
    }
    Ok(out)
}

/// True iff the flat multistep performs no work (contains no rule symbols).
pub fn is_empty(ms: &Multistep) -> bool {
    ms.is_empty()
}

/// All pairwise-compatible subsets of the redexes of `s`, marked as
/// multisteps, in mask order (fewer and earlier occurrences first). The
/// second component of each entry is the flat form of the marking.
pub(crate) fn candidate_multisteps(
    s: &crate::term::Term,
    hrs: &Hrs,
) -> Result<Vec<(Vec<RedexOccurrence>, Multistep)>> {
    let occs = find_redexes(s, hrs)?;
    let k = occs.len();
    if k > 16 {
        return Err(Error::BudgetExceeded(1 << 16));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << k) {
        let subset: Vec<RedexOccurrence> = occs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, o)| o.clone())
            .collect();
        match mark_redexes(s, &subset, hrs) {
            Ok(ms) => out.push((subset, ms_flat_nf(&ms))),
            Err(Error::OverlappingOccurrences) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Merging: searches for a single multistep whose flat form is permutation
/// equivalent to `m1 ; m2`. Candidate markings of the shared source are
/// enumerated in a fixed order and the equivalence is decided by projection;
/// `None` when no single multistep performs both.
pub fn merge(m1: &Multistep, m2: &Multistep, hrs: &Hrs) -> Result<Option<Multistep>> {
    let t1 = ftgt(m1.as_rewrite(), hrs)?;
    let s2 = fsrc(m2.as_rewrite(), hrs)?;
    if t1 != s2 {
        return Err(Error::NotComposable);
    }
    let seq = FlatRewrite::new(vec![ms_flat_nf(m1), ms_flat_nf(m2)]);
    let t2 = ftgt(m2.as_rewrite(), hrs)?;
    let src = crate::rewrite::rsrc(m1.as_rewrite(), hrs)?;
    let s = hrs.beta_eta_nf(&src)?;
    for (_, cand) in candidate_multisteps(&s, hrs)? {
        // equivalent rewrites are cofinal, so mismatched targets skip early
        if ftgt(cand.as_rewrite(), hrs)? != t2 {
            continue;
        }
        let single = FlatRewrite::singleton(cand.clone());
        match decide_permeq_flat(&single, &seq, hrs) {
            Ok(v) if v.is_equivalent() => return Ok(Some(cand)),
            Ok(_) | Err(Error::MatchFailure) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Cheap under-approximation of `merge`: only split decompositions with
/// syntactically equal flat components. Used by the bounded search oracle,
/// where soundness suffices.
pub(crate) fn merge_syntactic(
    m1: &Multistep,
    m2: &Multistep,
    hrs: &Hrs,
) -> Result<Option<Multistep>> {
    let t1 = ftgt(m1.as_rewrite(), hrs)?;
    let s2 = fsrc(m2.as_rewrite(), hrs)?;
    if t1 != s2 {
        return Err(Error::NotComposable);
    }
    let f1 = ms_flat_nf(m1);
    let f2 = ms_flat_nf(m2);
    let src = crate::rewrite::rsrc(m1.as_rewrite(), hrs)?;
    let s = hrs.beta_eta_nf(&src)?;
    for (_, cand) in candidate_multisteps(&s, hrs)? {
        for (_, a, b) in enumerate_splits(&cand, hrs)? {
            if ms_flat_nf(&a) == f1 && ms_flat_nf(&b) == f2 {
                return Ok(Some(cand));
            }
        }
    }
    Ok(None)
}

/// Candidates flat-permutation-equivalent to `cur` over the same source,
/// including `cur` itself.
fn equivalent_candidates(cur: &Multistep, hrs: &Hrs) -> Result<Vec<Multistep>> {
    let src = crate::rewrite::rsrc(cur.as_rewrite(), hrs)?;
    let s = hrs.beta_eta_nf(&src)?;
    let mut out = Vec::new();
    for (_, cand) in candidate_multisteps(&s, hrs)? {
        // a candidate that cannot be compatibilized with `cur` witnesses a
        // pattern overlap; it is simply not part of the equivalence class
        match ms_equivalent(&cand, cur, hrs) {
            Ok(true) => out.push(cand),
            Ok(false) | Err(Error::MatchFailure) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// An unfolding of a multistep: a sequence of single-occurrence multisteps
/// whose composition is flat-permutation-equivalent to the input. Produced by
/// repeatedly splitting off one innermost-leftmost occurrence (searching the
/// equivalence class of the remainder), so it diverges exactly when the
/// multistep has unboundedly long unfoldings.
pub fn unfold(ms: &Multistep, hrs: &Hrs, budget: usize) -> Result<Vec<Multistep>> {
    let mut cur = ms_flat_nf(ms);
    let mut out = Vec::new();
    loop {
        if cur.is_empty() {
            return Ok(out);
        }
        if out.len() >= budget {
            return Err(Error::BudgetExceeded(budget));
        }
        let mut best: Option<(Multistep, Path, usize)> = None;
        for cand in equivalent_candidates(&cur, hrs)? {
            let paths = cand.rule_occurrences();
            for occ in &paths {
                let nesting = nesting_depth(occ, &paths);
                let better = match &best {
                    None => true,
                    Some((_, best_path, best_nesting)) => {
                        nesting > *best_nesting
                            || (nesting == *best_nesting
                                && (occ.len() > best_path.len()
                                    || (occ.len() == best_path.len() && occ < best_path)))
                    }
                };
                if better {
                    best = Some((cand.clone(), occ.clone(), nesting));
                }
            }
        }
        let best = best.map(|(c, p, _)| (c, p));
        let Some((cand, occ)) = best else {
            // non-empty multistep with no candidates cannot happen
            return Err(Error::MatchFailure);
        };
        let mut choices = SplitChoices::new();
        for p in cand.rule_occurrences() {
            choices.insert(p.clone(), if p == occ { Choice::L } else { Choice::R });
        }
        let (a, b) = split(&cand, &choices, hrs)?;
        out.push(ms_flat_nf(&a));
        cur = ms_flat_nf(&b);
    }
}

/// How many other rule occurrences enclose `occ`: an occurrence is inside
/// another when the other's application subtree (its path minus trailing
/// spine steps) properly prefixes it.
fn nesting_depth(occ: &Path, all: &[Path]) -> usize {
    all.iter()
        .filter(|p| {
            if *p == occ {
                return false;
            }
            let mut root: &[PathStep] = p;
            while let Some((PathStep::Fun, rest)) = root.split_last().map(|(l, r)| (*l, r)) {
                root = rest;
            }
            occ.len() > root.len() && occ[..root.len()] == root[..]
        })
        .count()
}

/// Depth: length of the longest unfolding found by exhaustive search over
/// split decompositions of the equivalence class, or `None` if the budget is
/// exhausted (the finiteness condition then likely fails).
pub fn depth(ms: &Multistep, hrs: &Hrs, budget: usize) -> Result<Option<usize>> {
    let mut fuel = budget;
    let mut memo: HashMap<Rewrite, Option<usize>> = HashMap::new();
    depth_rec(&ms_flat_nf(ms), hrs, &mut fuel, &mut memo)
}

fn depth_rec(
    cur: &Multistep,
    hrs: &Hrs,
    fuel: &mut usize,
    memo: &mut HashMap<Rewrite, Option<usize>>,
) -> Result<Option<usize>> {
    if cur.is_empty() {
        return Ok(Some(0));
    }
    if let Some(hit) = memo.get(cur.as_rewrite()) {
        return Ok(*hit);
    }
    if *fuel == 0 {
        return Ok(None);
    }
    *fuel -= 1;
    let mut best = 0usize;
    for cand in equivalent_candidates(cur, hrs)? {
        for (_, a, b) in enumerate_splits(&cand, hrs)? {
            let fa = ms_flat_nf(&a);
            if fa.is_empty() {
                continue;
            }
            let fb = ms_flat_nf(&b);
            match depth_rec(&fb, hrs, fuel, memo)? {
                Some(d) => best = best.max(1 + d),
                None => return Ok(None),
            }
        }
    }
    memo.insert(cur.as_rewrite().clone(), Some(best));
    Ok(Some(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrs::load_hrs;
    use crate::syntax::{parse_rewrite, parse_term};

    const MU_HRS: &str = "\
sig mu : (o -> o) -> o.
sig f : o -> o.
sig g : o -> o.
sig c : o.
rule rho : mu (\\y. X y) => X (mu (\\y. X y)).
rule theta : f X => g X.
";

    const LOOP_HRS: &str = "\
sig c : o.
sig d : o.
sig f : o -> o.
rule loop : c => c.
rule erase : f X => d.
";

    fn ms(text: &str, hrs: &Hrs) -> Multistep {
        Multistep::new(parse_rewrite(text, hrs).unwrap()).unwrap()
    }

    #[test]
    fn splits_nested_rule_occurrences() {
        // rho theta splits into (\x. mu (\y. x y)) theta and rho (\x. g x)
        let hrs = load_hrs(MU_HRS).unwrap();
        let m = ms("rho theta", &hrs);
        let occs = m.rule_occurrences();
        assert_eq!(occs.len(), 2);
        let mut choices = SplitChoices::new();
        choices.insert(occs[0].clone(), Choice::R); // rho at the head
        choices.insert(occs[1].clone(), Choice::L); // theta in the argument
        let (a, b) = split(&m, &choices, &hrs).unwrap();
        let expected_a = Rewrite::app(
            refl(&hrs.rule("rho").unwrap().closed_src),
            Rewrite::rule("theta"),
        );
        assert_eq!(a.as_rewrite(), &expected_a);
        let expected_b = Rewrite::app(
            Rewrite::rule("rho"),
            refl(&hrs.rule("theta").unwrap().closed_tgt),
        );
        assert_eq!(b.as_rewrite(), &expected_b);
    }

    #[test]
    fn all_l_and_all_r_splits() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let m = ms("rho theta", &hrs);
        let splits = enumerate_splits(&m, &hrs).unwrap();
        assert_eq!(splits.len(), 4);
        // first is all-L: (m, refl tgt)
        let (_, a, b) = &splits[0];
        assert_eq!(a, &m);
        assert!(b.is_empty());
        // last is all-R: (refl src, m)
        let (_, a, b) = &splits[3];
        assert!(a.is_empty());
        assert_eq!(b, &m);
    }

    #[test]
    fn enumerate_counts() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let t = parse_term("g c", &hrs).unwrap();
        let unit = Multistep::from_term(&t);
        assert_eq!(enumerate_splits(&unit, &hrs).unwrap().len(), 1);
        let m = ms("rho g", &hrs);
        assert_eq!(enumerate_splits(&m, &hrs).unwrap().len(), 2);
        let m = ms("rho theta", &hrs);
        assert_eq!(enumerate_splits(&m, &hrs).unwrap().len(), 4);
    }

    #[test]
    fn merge_examples() {
        let hrs = load_hrs(MU_HRS).unwrap();
        // merge(mu theta, rho g) = rho theta
        let m1 = ms_flat_nf(&ms("mu theta", &hrs));
        let m2 = ms_flat_nf(&ms("rho g", &hrs));
        let merged = merge(&m1, &m2, &hrs).unwrap().unwrap();
        assert_eq!(merged, ms_flat_nf(&ms("rho theta", &hrs)));
        // merge(m, ftgt m) = flat m
        let m = ms_flat_nf(&ms("rho theta", &hrs));
        let t = ftgt(m.as_rewrite(), &hrs).unwrap();
        let merged = merge(&m, &t, &hrs).unwrap().unwrap();
        assert_eq!(merged, m);
        // created redexes cannot merge: rho (\x. f x) then theta at the
        // created position
        let m1 = ms_flat_nf(&ms("rho f", &hrs));
        let m2 = ms_flat_nf(&ms("theta (mu f)", &hrs));
        assert!(merge(&m1, &m2, &hrs).unwrap().is_none());
    }

    #[test]
    fn empty_multisteps() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let t = parse_term("g c", &hrs).unwrap();
        assert!(is_empty(&Multistep::from_term(&t)));
        assert!(!is_empty(&ms("rho g", &hrs)));
        // a non-empty pre-image can flatten to an empty multistep
        let _cd = load_hrs("sig c : o.\nsig d : o.\nsig k : o -> o.\nrule rho : c => d.\n").unwrap();
        let pre = Multistep::new(
            Rewrite::app(
                Rewrite::abs("x", crate::term::Type::base("o"), Rewrite::con("c")),
                Rewrite::rule("rho"),
            ),
        )
        .unwrap();
        let flat = ms_flat_nf(&pre);
        assert!(is_empty(&flat));
        assert_eq!(flat.as_rewrite(), &Rewrite::con("c"));
    }

    #[test]
    fn unfold_examples() {
        let hrs = load_hrs(MU_HRS).unwrap();
        // unfolding a unit is empty
        let t = parse_term("g c", &hrs).unwrap();
        assert!(unfold(&Multistep::from_term(&t), &hrs, 64).unwrap().is_empty());
        // nested theta (theta c) unfolds into two single steps
        let m = ms("theta (theta c)", &hrs);
        let steps = unfold(&m, &hrs, 64).unwrap();
        assert_eq!(steps.len(), 2);
        for s in &steps {
            assert_eq!(s.rule_occurrences().len(), 1);
        }
        // endpoints chain
        let mut src = fsrc(m.as_rewrite(), &hrs).unwrap();
        for s in &steps {
            assert_eq!(fsrc(s.as_rewrite(), &hrs).unwrap(), src);
            src = ftgt(s.as_rewrite(), &hrs).unwrap();
        }
        assert_eq!(src, ftgt(m.as_rewrite(), &hrs).unwrap());
    }

    #[test]
    fn unfold_loop_budget() {
        // erased looping work has unboundedly long unfoldings
        let hrs = load_hrs(LOOP_HRS).unwrap();
        let m = ms("erase c", &hrs);
        assert!(matches!(
            unfold(&m, &hrs, 16),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn depth_examples() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let t = parse_term("g c", &hrs).unwrap();
        assert_eq!(depth(&Multistep::from_term(&t), &hrs, 1000).unwrap(), Some(0));
        let m = ms("theta c", &hrs);
        assert_eq!(depth(&m, &hrs, 1000).unwrap(), Some(1));
        let m = ms("theta (theta c)", &hrs);
        assert_eq!(depth(&m, &hrs, 1000).unwrap(), Some(2));
        // looping fixture exhausts the budget
        let hrs = load_hrs(LOOP_HRS).unwrap();
        let m = ms("erase c", &hrs);
        assert_eq!(depth(&m, &hrs, 200).unwrap(), None);
    }
}
