//! The flattening rewrite system: pushes compositions to the top level and
//! normalizes each multistep, producing the canonical flat form of a rewrite.
//! Flattening is strongly normalizing and confluent, so the normal form does
//! not depend on the reduction strategy.

use std::fmt;

use crate::error::{Error, Result};
use crate::hrs::Hrs;
use crate::rewrite::{
    check_rewrite, ms_flat_nf, refl, rsrc, rtgt, Multistep, Rewrite,
};
use crate::term::TypingContext;

/// A non-empty sequence of flat multisteps: the composition tree quotiented
/// by associativity, in left-to-right leaf order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FlatRewrite {
    steps: Vec<Multistep>,
}

impl FlatRewrite {
    pub fn new(steps: Vec<Multistep>) -> FlatRewrite {
        assert!(!steps.is_empty(), "flat rewrite must be non-empty");
        FlatRewrite { steps }
    }

    pub fn singleton(ms: Multistep) -> FlatRewrite {
        FlatRewrite { steps: vec![ms] }
    }

    pub fn steps(&self) -> &[Multistep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &Multistep {
        &self.steps[0]
    }

    pub fn last(&self) -> &Multistep {
        self.steps.last().unwrap()
    }

    pub fn concat(mut self, other: FlatRewrite) -> FlatRewrite {
        self.steps.extend(other.steps);
        self
    }

    /// The underlying rewrite (right-associated composition chain).
    pub fn as_rewrite(&self) -> Rewrite {
        Rewrite::seq_all(self.steps.iter().map(|m| m.as_rewrite().clone()).collect())
    }

    /// True iff every multistep is rule-symbol-free.
    pub fn all_unit(&self) -> bool {
        self.steps.iter().all(|m| m.is_empty())
    }
}

impl fmt::Display for FlatRewrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(|m| m.to_string()).collect();
        write!(f, "{}", parts.join(" ; "))
    }
}

impl fmt::Debug for FlatRewrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Safety cap on rule firings per flatten call; flattening is strongly
/// normalizing, so hitting it indicates an implementation bug.
const FLATTEN_BUDGET: usize = 1_000_000;

/// Flat normal form of a type-correct rewrite.
pub fn flatten(rw: &Rewrite, hrs: &Hrs) -> Result<FlatRewrite> {
    check_rewrite(&TypingContext::new(), rw, hrs)?;
    flatten_unchecked(rw, hrs)
}

/// Flattening without the typing pre-check (for internal callers that already
/// hold a judgment).
pub fn flatten_unchecked(rw: &Rewrite, hrs: &Hrs) -> Result<FlatRewrite> {
    let mut budget = FLATTEN_BUDGET;
    let parts = flatten_parts(rw, hrs, true, &mut budget)?;
    Ok(FlatRewrite::new(parts))
}

/// Normal form of the flattening system without the EtaM rule: compositions
/// at the top, each multistep beta-normal (but possibly not eta-contracted).
pub fn flatten_noeta(rw: &Rewrite, hrs: &Hrs) -> Result<Rewrite> {
    check_rewrite(&TypingContext::new(), rw, hrs)?;
    let mut budget = FLATTEN_BUDGET;
    let parts = flatten_parts(rw, hrs, false, &mut budget)?;
    Ok(Rewrite::seq_all(
        parts.into_iter().map(Multistep::into_rewrite).collect(),
    ))
}

fn normalize_ms(ms: Multistep, with_eta: bool) -> Multistep {
    if with_eta {
        ms_flat_nf(&ms)
    } else {
        crate::rewrite::ms_beta_only_nf(&ms)
    }
}

fn flatten_parts(
    rw: &Rewrite,
    hrs: &Hrs,
    with_eta: bool,
    budget: &mut usize,
) -> Result<Vec<Multistep>> {
    if *budget == 0 {
        return Err(Error::InternalBudgetExceeded);
    }
    *budget -= 1;
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => {
            Ok(vec![normalize_ms(Multistep::new(rw.clone())?, with_eta)])
        }
        Rewrite::Seq(a, b) => {
            let mut parts = flatten_parts(a, hrs, with_eta, budget)?;
            parts.extend(flatten_parts(b, hrs, with_eta, budget)?);
            Ok(parts)
        }
        Rewrite::Abs(h, ty, b) => {
            let parts = flatten_parts(b, hrs, with_eta, budget)?;
            Ok(parts
                .into_iter()
                .map(|p| {
                    normalize_ms(
                        Multistep::new(Rewrite::abs(h.clone(), ty.clone(), p.into_rewrite()))
                            .expect("abs of multistep"),
                        with_eta,
                    )
                })
                .collect())
        }
        Rewrite::App(f, a) => {
            let fs = flatten_parts(f, hrs, with_eta, budget)?;
            let args = flatten_parts(a, hrs, with_eta, budget)?;
            let m = fs.len();
            let n = args.len();
            let mut out = Vec::with_capacity(m + n);
            let mk = |fun: Rewrite, arg: Rewrite| -> Result<Multistep> {
                Ok(normalize_ms(
                    Multistep::new(Rewrite::app(fun, arg))?,
                    with_eta,
                ))
            };
            if m == 1 && n == 1 {
                out.push(mk(
                    fs[0].as_rewrite().clone(),
                    args[0].as_rewrite().clone(),
                )?);
            } else if m == 1 {
                // App2 chain: mu (v1 ; .. ; vn)
                out.push(mk(
                    fs[0].as_rewrite().clone(),
                    args[0].as_rewrite().clone(),
                )?);
                let t = refl(&rtgt(fs[0].as_rewrite(), hrs)?);
                for v in &args[1..] {
                    out.push(mk(t.clone(), v.as_rewrite().clone())?);
                }
            } else if n == 1 {
                // App1 chain: (mu1 ; .. ; mum) v
                let s = refl(&rsrc(args[0].as_rewrite(), hrs)?);
                for u in &fs[..m - 1] {
                    out.push(mk(u.as_rewrite().clone(), s.clone())?);
                }
                out.push(mk(
                    fs[m - 1].as_rewrite().clone(),
                    args[0].as_rewrite().clone(),
                )?);
            } else {
                // App3 then App1/App2 chains: function part first on the
                // argument source, then argument part under the function target.
                let s = refl(&rsrc(args[0].as_rewrite(), hrs)?);
                for u in &fs {
                    out.push(mk(u.as_rewrite().clone(), s.clone())?);
                }
                let t = refl(&rtgt(fs[m - 1].as_rewrite(), hrs)?);
                for v in &args {
                    out.push(mk(t.clone(), v.as_rewrite().clone())?);
                }
            }
            Ok(out)
        }
    }
}

/// Flat source: the flat normal form of the unit rewrite on the source.
pub fn fsrc(rw: &Rewrite, hrs: &Hrs) -> Result<Multistep> {
    Ok(ms_flat_nf(&Multistep::from_term(&rsrc(rw, hrs)?)))
}

/// Flat target: the flat normal form of the unit rewrite on the target.
pub fn ftgt(rw: &Rewrite, hrs: &Hrs) -> Result<Multistep> {
    Ok(ms_flat_nf(&Multistep::from_term(&rtgt(rw, hrs)?)))
}

pub fn fsrc_flat(rw: &FlatRewrite, hrs: &Hrs) -> Result<Multistep> {
    fsrc(rw.first().as_rewrite(), hrs)
}

pub fn ftgt_flat(rw: &FlatRewrite, hrs: &Hrs) -> Result<Multistep> {
    ftgt(rw.last().as_rewrite(), hrs)
}

/// Number of heavy applications: applications whose both sides contain
/// compositions.
pub fn heavy(rw: &Rewrite) -> usize {
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => 0,
        Rewrite::Abs(_, _, b) => heavy(b),
        Rewrite::App(f, a) => {
            heavy(f) + heavy(a) + usize::from(f.has_seq() && a.has_seq())
        }
        Rewrite::Seq(f, a) => heavy(f) + heavy(a),
    }
}

/// Weight of a rewrite: compositions count 1, abstraction and application
/// double their parts.
pub fn weight(rw: &Rewrite) -> u128 {
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => 0,
        Rewrite::Abs(_, _, b) => 2 * weight(b),
        Rewrite::App(f, a) => 2 * weight(f) + 2 * weight(a),
        Rewrite::Seq(f, a) => 1 + weight(f) + weight(a),
    }
}

/// Names of the flattening rules, for traces.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FlatRule {
    Abs,
    App1,
    App2,
    App3,
    BetaM,
    EtaM,
}

impl FlatRule {
    pub fn is_beta_eta(self) -> bool {
        matches!(self, FlatRule::BetaM | FlatRule::EtaM)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Strategy {
    LeftmostOutermost,
    LeftmostInnermost,
}

/// Attempts one root-level flattening step.
fn root_step(rw: &Rewrite, hrs: &Hrs) -> Result<Option<(FlatRule, Rewrite)>> {
    match rw {
        Rewrite::Abs(h, ty, b) => {
            if let Rewrite::Seq(p, q) = b.as_ref() {
                let out = Rewrite::seq(
                    Rewrite::abs(h.clone(), ty.clone(), (**p).clone()),
                    Rewrite::abs(h.clone(), ty.clone(), (**q).clone()),
                );
                return Ok(Some((FlatRule::Abs, out)));
            }
            // EtaM: \x. mu x with x not free in mu
            if let Rewrite::App(f, a) = b.as_ref() {
                if matches!(a.as_ref(), Rewrite::Bound(0))
                    && !f.has_seq()
                    && !f.mentions_bound(0)
                {
                    return Ok(Some((FlatRule::EtaM, f.open_at(0, &Rewrite::Bound(0)))));
                }
            }
            Ok(None)
        }
        Rewrite::App(f, a) => match (f.as_ref(), a.as_ref()) {
            (Rewrite::Seq(p1, p2), Rewrite::Seq(q1, q2)) => {
                let s = refl(&rsrc(q1, hrs)?);
                let t = refl(&rtgt(p2, hrs)?);
                let left = Rewrite::app(Rewrite::seq((**p1).clone(), (**p2).clone()), s);
                let right = Rewrite::app(t, Rewrite::seq((**q1).clone(), (**q2).clone()));
                Ok(Some((FlatRule::App3, Rewrite::seq(left, right))))
            }
            (Rewrite::Seq(p, q), arg) if !arg.has_seq() => {
                let s = refl(&rsrc(arg, hrs)?);
                let out = Rewrite::seq(
                    Rewrite::app((**p).clone(), s),
                    Rewrite::app((**q).clone(), arg.clone()),
                );
                Ok(Some((FlatRule::App1, out)))
            }
            (fun, Rewrite::Seq(p, q)) if !fun.has_seq() => {
                let t = refl(&rtgt(fun, hrs)?);
                let out = Rewrite::seq(
                    Rewrite::app(fun.clone(), (**p).clone()),
                    Rewrite::app(t, (**q).clone()),
                );
                Ok(Some((FlatRule::App2, out)))
            }
            (Rewrite::Abs(_, _, b), arg) if !b.has_seq() && !arg.has_seq() => {
                Ok(Some((FlatRule::BetaM, b.open(arg))))
            }
            _ => Ok(None),
        },
        _ => Ok(None),
    }
}

/// One small-step of the flattening system under the given strategy.
pub fn step_flatten(
    rw: &Rewrite,
    hrs: &Hrs,
    strategy: Strategy,
) -> Result<Option<(FlatRule, Rewrite)>> {
    match strategy {
        Strategy::LeftmostOutermost => {
            if let Some(hit) = root_step(rw, hrs)? {
                return Ok(Some(hit));
            }
            step_in_children(rw, hrs, strategy)
        }
        Strategy::LeftmostInnermost => {
            if let Some(hit) = step_in_children(rw, hrs, strategy)? {
                return Ok(Some(hit));
            }
            Ok(root_step(rw, hrs)?)
        }
    }
}

fn step_in_children(
    rw: &Rewrite,
    hrs: &Hrs,
    strategy: Strategy,
) -> Result<Option<(FlatRule, Rewrite)>> {
    match rw {
        Rewrite::Bound(_) | Rewrite::Free(_) | Rewrite::Con(_) | Rewrite::Rule(_) => Ok(None),
        Rewrite::Abs(h, ty, b) => Ok(step_flatten(b, hrs, strategy)?
            .map(|(r, b2)| (r, Rewrite::abs(h.clone(), ty.clone(), b2)))),
        Rewrite::App(f, a) => {
            if let Some((r, f2)) = step_flatten(f, hrs, strategy)? {
                return Ok(Some((r, Rewrite::app(f2, (**a).clone()))));
            }
            Ok(step_flatten(a, hrs, strategy)?
                .map(|(r, a2)| (r, Rewrite::app((**f).clone(), a2))))
        }
        Rewrite::Seq(f, a) => {
            if let Some((r, f2)) = step_flatten(f, hrs, strategy)? {
                return Ok(Some((r, Rewrite::seq(f2, (**a).clone()))));
            }
            Ok(step_flatten(a, hrs, strategy)?
                .map(|(r, a2)| (r, Rewrite::seq((**f).clone(), a2))))
        }
    }
}

/// A traced flattening run: each entry records the rule fired and the
/// (heavy, weight) measure before and after.
#[derive(Clone, Debug)]
pub struct TraceEntry {
    pub rule: FlatRule,
    pub measure_before: (usize, u128),
    pub measure_after: (usize, u128),
}

/// Normalizes by iterated small steps, returning the normal form and trace.
pub fn small_step_normalize(
    rw: &Rewrite,
    hrs: &Hrs,
    strategy: Strategy,
) -> Result<(Rewrite, Vec<TraceEntry>)> {
    let mut cur = rw.clone();
    let mut trace = Vec::new();
    for _ in 0..FLATTEN_BUDGET {
        match step_flatten(&cur, hrs, strategy)? {
            Some((rule, next)) => {
                trace.push(TraceEntry {
                    rule,
                    measure_before: (heavy(&cur), weight(&cur)),
                    measure_after: (heavy(&next), weight(&next)),
                });
                cur = next;
            }
            None => return Ok((cur, trace)),
        }
    }
    Err(Error::InternalBudgetExceeded)
}

/// Leaf sequence of a composition tree (for comparing small-step normal forms
/// against the canonical sequence representation).
pub fn seq_leaves(rw: &Rewrite) -> Vec<Rewrite> {
    match rw {
        Rewrite::Seq(a, b) => {
            let mut out = seq_leaves(a);
            out.extend(seq_leaves(b));
            out
        }
        other => vec![other.clone()],
    }
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

    const CD_HRS: &str = "\
sig c : o.
sig d : o.
rule rho : c => d.
";

    #[test]
    fn flattens_composition_under_binder() {
        // (\x. (x ; x)) rho  flattens to  c ; rho
        let hrs = load_hrs(CD_HRS).unwrap();
        let rw = parse_rewrite("(\\x. (x ; x)) rho", &hrs).unwrap();
        let flat = flatten(&rw, &hrs).unwrap();
        assert_eq!(flat.len(), 2);
        assert_eq!(flat.to_string(), "c ; rho");
    }

    #[test]
    fn flattens_composition_of_multisteps() {
        // mu (\x. theta x) ; rho (\x. g x)  flattens to  mu theta ; rho g
        let hrs = load_hrs(MU_HRS).unwrap();
        let rw = parse_rewrite("mu (\\x. theta x) ; rho (\\x. g x)", &hrs).unwrap();
        let flat = flatten(&rw, &hrs).unwrap();
        let expected_1 = parse_rewrite("mu theta", &hrs).unwrap();
        let expected_2 = parse_rewrite("rho g", &hrs).unwrap();
        assert_eq!(flat.steps()[0].as_rewrite(), &expected_1);
        assert_eq!(flat.steps()[1].as_rewrite(), &expected_2);
    }

    #[test]
    fn flatten_of_unit_is_unit() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let t = parse_term("mu (\\x. f x)", &hrs).unwrap();
        let flat = flatten(&refl(&t), &hrs).unwrap();
        assert_eq!(flat.len(), 1);
        assert!(flat.steps()[0].is_empty());
    }

    #[test]
    fn flatten_noeta_examples() {
        let hrs = load_hrs(MU_HRS).unwrap();
        // \x. f x is already a noeta normal form (EtaM not applied)
        let rw = parse_rewrite("\\x. f x", &hrs).unwrap();
        assert_eq!(flatten_noeta(&rw, &hrs).unwrap(), rw);
        // one BetaM
        let rw = parse_rewrite("(\\x. c) (g c)", &hrs).unwrap();
        assert_eq!(
            flatten_noeta(&rw, &hrs).unwrap(),
            parse_rewrite("c", &hrs).unwrap()
        );
    }

    #[test]
    fn flatten_homomorphism_and_endpoints() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let a = parse_rewrite("mu (\\x. theta x)", &hrs).unwrap();
        let b = parse_rewrite("rho (\\x. g x)", &hrs).unwrap();
        let ab = Rewrite::seq(a.clone(), b.clone());
        let fa = flatten(&a, &hrs).unwrap();
        let fb = flatten(&b, &hrs).unwrap();
        let fab = flatten(&ab, &hrs).unwrap();
        assert_eq!(fab, fa.clone().concat(fb));
        assert_eq!(fsrc(&ab, &hrs).unwrap(), fsrc_flat(&fab, &hrs).unwrap());
        assert_eq!(ftgt(&ab, &hrs).unwrap(), ftgt_flat(&fab, &hrs).unwrap());
    }

    #[test]
    fn small_step_agrees_with_recursive_flatten() {
        let hrs = load_hrs(MU_HRS).unwrap();
        for text in [
            "(\\x. (x ; x)) (theta c)",
            "mu (\\x. theta x) ; rho (\\x. g x)",
            "(mu (\\x. theta x) ; rho (\\x. g x)) ; g (mu (\\x. g x))",
            "((\\x. f x) ; theta) ((mu (\\x. theta x)) ; (mu (\\x. g x)))",
        ] {
            let rw = parse_rewrite(text, &hrs).unwrap();
            let flat = flatten(&rw, &hrs).unwrap();
            for strategy in [Strategy::LeftmostOutermost, Strategy::LeftmostInnermost] {
                let (nf, trace) = small_step_normalize(&rw, &hrs, strategy).unwrap();
                let leaves = seq_leaves(&nf);
                let expected: Vec<Rewrite> = flat
                    .steps()
                    .iter()
                    .map(|m| m.as_rewrite().clone())
                    .collect();
                assert_eq!(leaves, expected, "strategy {strategy:?} on {text}");
                // measure decreases on structural steps
                for entry in &trace {
                    if !entry.rule.is_beta_eta() {
                        assert!(
                            entry.measure_before > entry.measure_after,
                            "measure must decrease: {entry:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn heavy_weight_measures() {
        // heavy counts applications with compositions on both sides; the
        // measure is purely syntactic, so raw trees suffice here
        let part = Rewrite::seq(Rewrite::rule("rho"), Rewrite::con("d"));
        let rw = Rewrite::app(part.clone(), part.clone());
        assert_eq!(heavy(&rw), 1);
        assert_eq!(weight(&part), 1);
        assert_eq!(heavy(&Rewrite::rule("rho")), 0);
        assert_eq!(weight(&Rewrite::seq(part.clone(), part)), 3);
    }

    #[test]
    fn flatten_is_idempotent() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let rw = parse_rewrite("(\\x. (x ; x)) (theta c)", &hrs).unwrap();
        let flat = flatten(&rw, &hrs).unwrap();
        let again = flatten(&flat.as_rewrite(), &hrs).unwrap();
        assert_eq!(flat, again);
    }
}
