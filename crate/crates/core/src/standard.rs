//! Sequential rewrites and the Del/Pull standardization engine: anticipating
//! steps into earlier multisteps until no step can be pulled further forward,
//! with uniqueness of normal forms up to strong equivalence.

use std::fmt;

use crate::error::{Error, Result};
use crate::flatten::{flatten, fsrc, ftgt, FlatRewrite};
use crate::hrs::Hrs;
use crate::project::{ms_equivalent, Direction, Verdict, Witness};
use crate::rewrite::{ms_flat_nf, Multistep, Rewrite};
use crate::split::{self, enumerate_splits, Choice};

/// A flat rewrite ending in a unit step: the carrier of standardization.
#[derive(Clone, PartialEq, Eq)]
pub struct SequentialRewrite {
    pub steps: Vec<Multistep>,
    /// Rule-symbol-free terminator (the flat target of the last step).
    pub terminator: Multistep,
}

impl SequentialRewrite {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The whole sequential rewrite as a flat rewrite (steps + terminator).
    pub fn as_flat(&self) -> FlatRewrite {
        let mut steps = self.steps.clone();
        steps.push(self.terminator.clone());
        FlatRewrite::new(steps)
    }
}

impl fmt::Display for SequentialRewrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            write!(f, "{s} ; ")?;
        }
        write!(f, "<{}>", self.terminator)
    }
}

impl fmt::Debug for SequentialRewrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Appends the flat target of the last multistep as the terminator. An input
/// already ending in a unit step is left as it is.
pub fn sequentialize(rho: &FlatRewrite, hrs: &Hrs) -> Result<SequentialRewrite> {
    let steps = rho.steps();
    if steps.last().unwrap().is_empty() {
        Ok(SequentialRewrite {
            steps: steps[..steps.len() - 1].to_vec(),
            terminator: steps.last().unwrap().clone(),
        })
    } else {
        let terminator = ftgt(steps.last().unwrap().as_rewrite(), hrs)?;
        Ok(SequentialRewrite {
            steps: steps.to_vec(),
            terminator,
        })
    }
}

/// Removes the first empty non-terminator step, if any.
pub fn del_step(s: &SequentialRewrite) -> Option<SequentialRewrite> {
    let i = s.steps.iter().position(|m| m.is_empty())?;
    let mut steps = s.steps.clone();
    steps.remove(i);
    Some(SequentialRewrite {
        steps,
        terminator: s.terminator.clone(),
    })
}

/// Pulls work forward: at the leftmost adjacent pair `(m1, m23)` admitting a
/// split `m23 |> m2 ; m3` with `m2` non-empty and `merge(m1, m2)` defined,
/// replaces the pair by `(m12, m3)`. Among candidate splits at a pair, the
/// one with the most occurrences routed left wins, ties broken by the
/// enumeration order.
pub fn pull_step(s: &SequentialRewrite, hrs: &Hrs) -> Result<Option<SequentialRewrite>> {
    for i in 0..s.steps.len().saturating_sub(1) {
        let m1 = &s.steps[i];
        let m23 = &s.steps[i + 1];
        let mut splits = enumerate_splits(m23, hrs)?;
        splits.sort_by_key(|(choices, _, _)| {
            std::cmp::Reverse(choices.values().filter(|c| **c == Choice::L).count())
        });
        for (_, a, b) in splits {
            let m2 = ms_flat_nf(&a);
            if m2.is_empty() {
                continue;
            }
            if let Some(m12) = split::merge(m1, &m2, hrs)? {
                let m3 = ms_flat_nf(&b);
                let mut steps = s.steps.clone();
                steps[i] = ms_flat_nf(&m12);
                steps[i + 1] = m3;
                return Ok(Some(SequentialRewrite {
                    steps,
                    terminator: s.terminator.clone(),
                }));
            }
        }
    }
    Ok(None)
}

/// One standardization step: Del first, then Pull.
pub fn std_step(s: &SequentialRewrite, hrs: &Hrs) -> Result<Option<SequentialRewrite>> {
    if let Some(next) = del_step(s) {
        return Ok(Some(next));
    }
    pull_step(s, hrs)
}

pub const DEFAULT_STD_BUDGET: usize = 10_000;

/// Flattens, sequentializes, and applies Del/Pull to a normal form.
pub fn standardize(rho: &Rewrite, hrs: &Hrs, budget: usize) -> Result<SequentialRewrite> {
    let flat = flatten(rho, hrs)?;
    standardize_flat(&flat, hrs, budget)
}

pub fn standardize_flat(
    flat: &FlatRewrite,
    hrs: &Hrs,
    budget: usize,
) -> Result<SequentialRewrite> {
    let mut cur = sequentialize(flat, hrs)?;
    for _ in 0..budget {
        match std_step(&cur, hrs)? {
            Some(next) => cur = next,
            None => return Ok(cur),
        }
    }
    Err(Error::BudgetExceeded(budget))
}

/// Strong equivalence: equal length, alpha-equal terminators, and
/// componentwise flat permutation equivalence.
pub fn strong_equiv(s1: &SequentialRewrite, s2: &SequentialRewrite, hrs: &Hrs) -> Result<bool> {
    if s1.len() != s2.len() || s1.terminator != s2.terminator {
        return Ok(false);
    }
    for (a, b) in s1.steps.iter().zip(s2.steps.iter()) {
        if !ms_equivalent(a, b, hrs)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Decides permutation equivalence by standardizing both sides and comparing
/// the normal forms up to strong equivalence. Independent of the projection
/// decision except inside the componentwise test of `strong_equiv`.
pub fn decide_permeq_std(
    rho: &Rewrite,
    sigma: &Rewrite,
    hrs: &Hrs,
    budget: usize,
) -> Result<Verdict> {
    let fr = flatten(rho, hrs)?;
    let fs = flatten(sigma, hrs)?;
    let s1 = fsrc(fr.first().as_rewrite(), hrs)?;
    let s2 = fsrc(fs.first().as_rewrite(), hrs)?;
    if s1 != s2 {
        return Err(Error::NotCoinitial);
    }
    let n1 = standardize_flat(&fr, hrs, budget)?;
    let n2 = standardize_flat(&fs, hrs, budget)?;
    if strong_equiv(&n1, &n2, hrs)? {
        return Ok(Verdict::Equivalent);
    }
    // report the first component that distinguishes the standard forms
    let mut witnesses = Vec::new();
    for (i, (a, b)) in n1.steps.iter().zip(n2.steps.iter()).enumerate() {
        if !ms_equivalent(a, b, hrs)? {
            witnesses.push(Witness {
                direction: Direction::LeftOverRight,
                index: i,
                residual: a.clone(),
            });
            witnesses.push(Witness {
                direction: Direction::RightOverLeft,
                index: i,
                residual: b.clone(),
            });
            break;
        }
    }
    if witnesses.is_empty() {
        let (dir, seq) = if n1.len() > n2.len() {
            (Direction::LeftOverRight, &n1)
        } else {
            (Direction::RightOverLeft, &n2)
        };
        let i = n1.len().min(n2.len());
        witnesses.push(Witness {
            direction: dir,
            index: i,
            residual: seq.steps[i].clone(),
        });
    }
    Ok(Verdict::Inequivalent(witnesses))
}

/// The termination measure of standardization: sequence length followed by
/// the per-step depths in reverse order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SRMeasure {
    pub length: usize,
    /// Depths of the steps, last step first; `None` when the depth search
    /// exhausted its budget.
    pub rev_depths: Vec<Option<usize>>,
}

impl SRMeasure {
    /// Strict decrease under the length-then-lexicographic order; `None` when
    /// some depth is unknown.
    pub fn decreases_to(&self, other: &SRMeasure) -> Option<bool> {
        if self.length != other.length {
            return Some(self.length > other.length);
        }
        for (a, b) in self.rev_depths.iter().zip(other.rev_depths.iter()) {
            match (a, b) {
                (Some(x), Some(y)) if x != y => return Some(x > y),
                (Some(_), Some(_)) => continue,
                _ => return None,
            }
        }
        Some(false)
    }
}

/// Computes the Sekar-Ramakrishnan measure of a sequential rewrite,
/// diagnostic only.
pub fn sr_measure(s: &SequentialRewrite, hrs: &Hrs, budget: usize) -> Result<SRMeasure> {
    let mut rev_depths = Vec::with_capacity(s.steps.len());
    for m in s.steps.iter().rev() {
        rev_depths.push(split::depth(m, hrs, budget)?);
    }
    Ok(SRMeasure {
        length: s.steps.len(),
        rev_depths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrs::load_hrs;
    use crate::project::decide_permeq;
    use crate::syntax::parse_rewrite;

    const DFG_HRS: &str = "\
sig d : (o -> o) -> o -> o.
sig f : o -> o.
sig g : o -> o.
rule varrho : d (\\z. X z) Y => X (X Y).
rule vartheta : f (f X) => g X.
";

    const MU_HRS: &str = "\
sig mu : (o -> o) -> o.
sig f : o -> o.
sig g : o -> o.
sig c : o.
rule rho : mu (\\y. X y) => X (mu (\\y. X y)).
rule theta : f X => g X.
";

    const ERASE_HRS: &str = "\
sig c : o -> o.
sig d : o.
sig e : o.
sig e' : o.
rule varrho : c X => d.
rule vartheta : e => e'.
";

    fn ms(text: &str, hrs: &Hrs) -> Multistep {
        ms_flat_nf(&Multistep::new(parse_rewrite(text, hrs).unwrap()).unwrap())
    }

    #[test]
    fn sequentialize_examples() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let rw = parse_rewrite("mu (\\x. theta x)", &hrs).unwrap();
        let flat = flatten(&rw, &hrs).unwrap();
        let seq = sequentialize(&flat, &hrs).unwrap();
        assert_eq!(seq.len(), 1);
        assert!(seq.terminator.is_empty());
        assert_eq!(
            seq.terminator,
            ftgt(seq.steps[0].as_rewrite(), &hrs).unwrap()
        );
        // already-terminated input is left as-is
        let seq2 = sequentialize(&seq.as_flat(), &hrs).unwrap();
        assert_eq!(seq, seq2);
    }

    #[test]
    fn del_removes_first_empty() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let unit = ms("g c", &hrs);
        let step = ms("theta c", &hrs);
        let s = SequentialRewrite {
            steps: vec![unit.clone(), step.clone()],
            terminator: ftgt(step.as_rewrite(), &hrs).unwrap(),
        };
        let s2 = del_step(&s).unwrap();
        assert_eq!(s2.steps, vec![step.clone()]);
        let s3 = SequentialRewrite {
            steps: vec![step.clone()],
            terminator: s.terminator.clone(),
        };
        assert!(del_step(&s3).is_none());
    }

    #[test]
    fn standardization_trace_pull_del_pull() {
        // d(varrho f) ; d(vartheta) ; varrho g standardizes by Pull, Del,
        // Pull to varrho (varrho f) ; \x. vartheta (vartheta x) ; <unit>
        let hrs = load_hrs(DFG_HRS).unwrap();
        let rw = parse_rewrite("d (varrho f) ; d vartheta ; varrho g", &hrs).unwrap();
        let flat = flatten(&rw, &hrs).unwrap();
        let s0 = sequentialize(&flat, &hrs).unwrap();
        assert_eq!(s0.len(), 3);

        // first step must be a Pull that merges d(vartheta) forward
        assert!(del_step(&s0).is_none());
        let s1 = pull_step(&s0, &hrs).unwrap().unwrap();
        assert_eq!(s1.len(), 3);
        assert_eq!(s1.steps[0], ms("d (varrho f)", &hrs));
        assert_eq!(s1.steps[1], ms("varrho vartheta", &hrs));
        assert!(s1.steps[2].is_empty());

        // then a Del
        let s2 = del_step(&s1).unwrap();
        assert_eq!(s2.len(), 2);

        // then a Pull
        assert!(del_step(&s2).is_none());
        let s3 = pull_step(&s2, &hrs).unwrap().unwrap();
        assert_eq!(s3.steps[0], ms("varrho (varrho f)", &hrs));
        assert_eq!(s3.steps[1], ms("\\x. vartheta (vartheta x)", &hrs));

        // and that is the normal form
        assert!(std_step(&s3, &hrs).unwrap().is_none());
        let full = standardize(&rw, &hrs, DEFAULT_STD_BUDGET).unwrap();
        assert_eq!(full, s3);
    }

    #[test]
    fn strong_equiv_erasing_pair() {
        let hrs = load_hrs(ERASE_HRS).unwrap();
        let a = ms("varrho vartheta", &hrs);
        let b = ms("varrho e", &hrs);
        let sa = SequentialRewrite {
            steps: vec![a.clone()],
            terminator: ftgt(a.as_rewrite(), &hrs).unwrap(),
        };
        let sb = SequentialRewrite {
            steps: vec![b.clone()],
            terminator: ftgt(b.as_rewrite(), &hrs).unwrap(),
        };
        assert!(strong_equiv(&sa, &sb, &hrs).unwrap());
        // self equivalence and length mismatch
        assert!(strong_equiv(&sa, &sa, &hrs).unwrap());
        let longer = SequentialRewrite {
            steps: vec![a.clone(), ftgt(a.as_rewrite(), &hrs).unwrap()],
            terminator: sa.terminator.clone(),
        };
        assert!(!strong_equiv(&sa, &longer, &hrs).unwrap());
    }

    #[test]
    fn std_decision_agrees_with_projection_on_mu_pair() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let r1 = parse_rewrite("mu (\\x. theta x) ; rho (\\x. g x)", &hrs).unwrap();
        let r2 = parse_rewrite(
            "rho (\\x. f x) ; f (mu (\\x. theta x)) ; theta (mu (\\x. g x))",
            &hrs,
        )
        .unwrap();
        let v1 = decide_permeq(&r1, &r2, &hrs).unwrap();
        let v2 = decide_permeq_std(&r1, &r2, &hrs, DEFAULT_STD_BUDGET).unwrap();
        assert!(v1.is_equivalent());
        assert!(v2.is_equivalent());
        // and a negative case
        let a = parse_rewrite("mu (\\x. theta x)", &hrs).unwrap();
        let b = parse_rewrite("rho (\\x. f x)", &hrs).unwrap();
        assert!(!decide_permeq(&a, &b, &hrs).unwrap().is_equivalent());
        assert!(!decide_permeq_std(&a, &b, &hrs, DEFAULT_STD_BUDGET)
            .unwrap()
            .is_equivalent());
    }

    #[test]
    fn measure_decreases_along_standardization() {
        let hrs = load_hrs(DFG_HRS).unwrap();
        let rw = parse_rewrite("d (varrho f) ; d vartheta ; varrho g", &hrs).unwrap();
        let flat = flatten(&rw, &hrs).unwrap();
        let mut cur = sequentialize(&flat, &hrs).unwrap();
        let mut measure = sr_measure(&cur, &hrs, 2000).unwrap();
        while let Some(next) = std_step(&cur, &hrs).unwrap() {
            let next_measure = sr_measure(&next, &hrs, 2000).unwrap();
            assert_eq!(
                measure.decreases_to(&next_measure),
                Some(true),
                "measure must strictly decrease: {measure:?} vs {next_measure:?}"
            );
            cur = next;
            measure = next_measure;
        }
    }

    #[test]
    fn standardize_is_idempotent_up_to_strong_equiv() {
        let hrs = load_hrs(MU_HRS).unwrap();
        let rw = parse_rewrite("mu (\\x. theta x) ; rho (\\x. g x)", &hrs).unwrap();
        let s1 = standardize(&rw, &hrs, DEFAULT_STD_BUDGET).unwrap();
        let s2 = standardize_flat(&s1.as_flat(), &hrs, DEFAULT_STD_BUDGET).unwrap();
        assert!(strong_equiv(&s1, &s2, &hrs).unwrap());
    }
}
