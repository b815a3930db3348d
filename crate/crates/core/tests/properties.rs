//! Property tests: normalization, parsing, and flattening invariants over
//! seed-driven generated inputs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use horl_core::flatten::{flatten, fsrc, ftgt};
use horl_core::hrs::load_hrs;
use horl_core::rewrite::{print_rewrite_annotated, rtgt};
use horl_core::syntax::{parse_rewrite, parse_term};
use horl_core::term::{
    beta_eta_nf, beta_nf, print_term_annotated, subst_term, type_of, Term, Type, TypingContext,
};
use horl_core::testkit::{fixtures, gen_rewrite, gen_term, source_pool};

/// Independent conversion oracle: small-step beta then eta contraction to the
/// eta-short normal form, never eta-expanding. Two typable terms are
/// beta-eta convertible iff their short forms are alpha-equal.
fn oracle_convertible(a: &Term, b: &Term) -> bool {
    fn eta_short(t: &Term) -> Term {
        // single eta contractions to a fixpoint, leftmost-outermost
        fn step(t: &Term) -> Option<Term> {
            match t {
                Term::Abs(_, _, b) => {
                    if let Term::App(f, a) = b.as_ref() {
                        if matches!(a.as_ref(), Term::Bound(0)) && !f.mentions_bound(0) {
                            return Some(f.open_at(0, &Term::Bound(0)));
                        }
                    }
                    if let Some(b2) = step(b) {
                        let Term::Abs(h, ty, _) = t else { unreachable!() };
                        return Some(Term::abs(h.clone(), ty.clone(), b2));
                    }
                    None
                }
                Term::App(f, a) => {
                    if let Some(f2) = step(f) {
                        return Some(Term::app(f2, (**a).clone()));
                    }
                    step(a).map(|a2| Term::app((**f).clone(), a2))
                }
                _ => None,
            }
        }
        let mut cur = beta_nf(t);
        while let Some(next) = step(&cur) {
            cur = next;
        }
        cur
    }
    eta_short(a) == eta_short(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_eta_nf_is_canonical(seed in any::<u64>()) {
        let hrs = load_hrs(fixtures::MU_HRS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = TypingContext::new();
        let ty = Type::base("o");
        let Some(t) = gen_term(&mut rng, &ctx, &ty, 6, &hrs) else { return Ok(()) };
        let Some(s) = gen_term(&mut rng, &ctx, &ty, 6, &hrs) else { return Ok(()) };
        let nf_t = beta_eta_nf(&ctx, &t, &hrs.signature).unwrap();
        let nf_s = beta_eta_nf(&ctx, &s, &hrs.signature).unwrap();
        // idempotence
        prop_assert_eq!(&beta_eta_nf(&ctx, &nf_t, &hrs.signature).unwrap(), &nf_t);
        // agreement with the independent conversion oracle
        prop_assert_eq!(nf_t == nf_s, oracle_convertible(&t, &s));
        // type preservation
        prop_assert_eq!(
            type_of(&ctx, &t, &hrs.signature).unwrap(),
            type_of(&ctx, &nf_t, &hrs.signature).unwrap()
        );
    }

    #[test]
    fn substitution_lemma_holds(seed in any::<u64>()) {
        let hrs = load_hrs(fixtures::MU_HRS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ctx = TypingContext::new();
        ctx.insert("vx".into(), Type::base("o"));
        ctx.insert("vy".into(), Type::base("o"));
        let Some(big) = gen_term(&mut rng, &ctx, &Type::base("o"), 6, &hrs) else {
            return Ok(())
        };
        let Some(s) = gen_term(&mut rng, &ctx, &Type::base("o"), 4, &hrs) else {
            return Ok(())
        };
        let Some(t) = gen_term(&mut rng, &TypingContext::new(), &Type::base("o"), 4, &hrs)
        else {
            return Ok(())
        };
        // X{x:=s}{y:=t} = X{y:=t}{x:=s{y:=t}} when x /= y and x not free in t
        let x = "vx".to_string();
        let y = "vy".to_string();
        let lhs = subst_term(&subst_term(&big, &x, &s), &y, &t);
        let rhs = subst_term(&subst_term(&big, &y, &t), &x, &subst_term(&s, &y, &t));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn printing_roundtrips(seed in any::<u64>()) {
        let hrs = load_hrs(fixtures::MU_HRS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = TypingContext::new();
        for ty in [Type::base("o"), Type::arrow(Type::base("o"), Type::base("o"))] {
            if let Some(t) = gen_term(&mut rng, &ctx, &ty, 6, &hrs) {
                let nf = beta_eta_nf(&ctx, &t, &hrs.signature).unwrap();
                let reparsed = parse_term(&print_term_annotated(&nf), &hrs).unwrap();
                prop_assert_eq!(&reparsed, &nf);
            }
        }
        let pool = source_pool(&mut rng, &hrs, 2, 5);
        for src in &pool {
            let rw = gen_rewrite(&mut rng, &hrs, src, 3).unwrap();
            let reparsed = parse_rewrite(&print_rewrite_annotated(&rw), &hrs).unwrap();
            prop_assert_eq!(&reparsed, &rw);
        }
    }

    #[test]
    fn flatten_idempotent_with_stable_endpoints(seed in any::<u64>()) {
        let hrs = load_hrs(fixtures::MU_HRS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = source_pool(&mut rng, &hrs, 2, 5);
        for src in &pool {
            let rw = gen_rewrite(&mut rng, &hrs, src, 3).unwrap();
            let flat = flatten(&rw, &hrs).unwrap();
            let again = flatten(&flat.as_rewrite(), &hrs).unwrap();
            prop_assert_eq!(&again, &flat);
            prop_assert_eq!(
                fsrc(&rw, &hrs).unwrap(),
                fsrc(flat.first().as_rewrite(), &hrs).unwrap()
            );
            prop_assert_eq!(
                ftgt(&rw, &hrs).unwrap(),
                ftgt(flat.last().as_rewrite(), &hrs).unwrap()
            );
            // noeta agreement: flattening the noeta form gives the flat form
            let noeta = horl_core::flatten::flatten_noeta(&rw, &hrs).unwrap();
            prop_assert_eq!(&flatten(&noeta, &hrs).unwrap(), &flat);
            let _ = rtgt(&rw, &hrs).unwrap();
        }
    }
}
