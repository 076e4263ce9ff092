//! Decision procedure for implicational intuitionistic logic.
//!
//! Proof search follows Dyckhoff's contraction-free calculus LJT, restricted to `->`:
//!
//! ```text
//! LJT1   A,G |- A
//! LJT2   A,G |- B                          => G |- A->B
//! LJT3   B,A,G |- X                        => A->B,A,G |- X        (A atomic)
//! LJT4   D->B,G |- C->D  and  B,G |- X     => (C->D)->B,G |- X
//! ```
//!
//! The left rules pick the first qualifying assumption in context order and commit to it.
//! Committing is safe: once the left premise holds, `B` is derivable from the conclusion's
//! context, so the remaining sequent is equivalent to the original one. Every rule
//! decreases the multiset weight of the sequent, so search always terminates.
//!
//! Search is exponential in the worst case. Sequents already settled are looked up by
//! their context multiset, and a sequent whose goal atom heads no assumption, or which has
//! a classical countermodel, fails without search. None of this changes an answer or the
//! term found, only how much failing search is repeated.

mod term;

pub use term::{alpha_eq, beta_normalize, beta_normalize_with_limit, type_check, NormalizeError, ProofTerm};

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::formula::Formula;

/// Is `goal` a theorem of implicational intuitionistic logic?
pub fn prove(goal: &Formula) -> bool {
    prove_in(goal, &[])
}

/// Provability of `goal` from `context`. Context order decides which assumption the
/// left rules try first; the head of the slice is the most recently added assumption.
pub fn prove_in(goal: &Formula, context: &[Formula]) -> bool {
    Decide::default().prove(goal, context)
}

/// Sequent with its context as a sorted multiset. Provability ignores context order, so
/// a settled sequent never needs searching again.
type SequentKey = (Vec<Formula>, Formula);

/// Final consequent of `f`.
fn head(f: &Formula) -> &Formula {
    match f {
        Formula::Imp(_, b) => head(b),
        atom => atom,
    }
}

/// Truth tables are used only below this many distinct atoms.
const CLASSICAL_ATOMS: usize = 10;

fn atoms_of<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
    match f {
        Formula::Imp(a, b) => {
            atoms_of(a, out);
            atoms_of(b, out);
        }
        atom => {
            if !out.contains(&atom) {
                out.push(atom);
            }
        }
    }
}

fn holds(f: &Formula, atoms: &[&Formula], valuation: u32) -> bool {
    match f {
        Formula::Imp(a, b) => !holds(a, atoms, valuation) || holds(b, atoms, valuation),
        atom => {
            let i = atoms.iter().position(|x| *x == atom).expect("collected");
            valuation >> i & 1 == 1
        }
    }
}

/// A sequent with a classical countermodel has no intuitionistic proof either.
fn classically_refuted(goal: &Formula, context: &[&Formula]) -> bool {
    let mut atoms = Vec::new();
    atoms_of(goal, &mut atoms);
    for f in context {
        atoms_of(f, &mut atoms);
    }
    if atoms.len() > CLASSICAL_ATOMS {
        return false;
    }
    (0..1u32 << atoms.len())
        .any(|v| context.iter().all(|f| holds(f, &atoms, v)) && !holds(goal, &atoms, v))
}

/// An atom heading no assumption is refuted classically by making every other atom true.
fn unreachable<'a>(atom: &Formula, mut heads: impl Iterator<Item = &'a Formula>) -> bool {
    !heads.any(|f| head(f) == atom)
}

fn sequent_key(goal: &Formula, context: impl Iterator<Item = Formula>) -> SequentKey {
    let mut ctx: Vec<Formula> = context.collect();
    ctx.sort();
    (ctx, goal.clone())
}

#[derive(Default)]
struct Decide {
    settled: HashMap<SequentKey, bool>,
}

impl Decide {
    fn prove(&mut self, goal: &Formula, context: &[Formula]) -> bool {
        if context.contains(goal) {
            return true;
        }
        if let Formula::Imp(a, b) = goal {
            return self.prove(b, &cons(a.as_ref().clone(), context));
        }
        if unreachable(goal, context.iter()) {
            return false;
        }
        let key = sequent_key(goal, context.iter().cloned());
        if let Some(&known) = self.settled.get(&key) {
            return known;
        }
        if classically_refuted(goal, &context.iter().collect::<Vec<_>>()) {
            self.settled.insert(key, false);
            return false;
        }
        let mut result = false;
        for (i, assumption) in context.iter().enumerate() {
            let Formula::Imp(a, b) = assumption else { continue };
            let rest = without(context, i);
            if self.left_premise(a, b, &rest) {
                result = self.prove(goal, &cons(b.as_ref().clone(), &rest));
                break;
            }
        }
        self.settled.insert(key, result);
        result
    }

    fn left_premise(&mut self, a: &Formula, b: &Formula, rest: &[Formula]) -> bool {
        match a {
            Formula::Imp(_, d) => self.prove(a, &cons(Formula::Imp(d.clone(), Arc::new(b.clone())), rest)),
            Formula::Atom(_) => rest.contains(a),
        }
    }
}

fn cons<T: Clone>(head: T, tail: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(tail.len() + 1);
    v.push(head);
    v.extend_from_slice(tail);
    v
}

fn without<T: Clone>(items: &[T], i: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(items.len().saturating_sub(1));
    v.extend_from_slice(&items[..i]);
    v.extend_from_slice(&items[i + 1..]);
    v
}

/// Proof search that also synthesizes a λ-term inhabiting `goal`.
///
/// Follows exactly the same search path as [`prove`], so the two agree on provability.
pub fn prove_with_term(goal: &Formula) -> Option<ProofTerm> {
    let mut synth = Synth { next: 0, failed: HashSet::new() };
    synth.prove(goal, &[])
}

struct Synth {
    next: usize,
    failed: HashSet<SequentKey>,
}

type Assumption = (ProofTerm, Formula);

impl Synth {
    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("x{}", self.next)
    }

    fn prove(&mut self, goal: &Formula, ctx: &[Assumption]) -> Option<ProofTerm> {
        if let Some((t, _)) = ctx.iter().find(|(_, f)| f == goal) {
            return Some(t.clone());
        }
        if let Formula::Imp(a, b) = goal {
            let x = self.fresh();
            let body = self.prove(b, &cons((ProofTerm::var(&x), a.as_ref().clone()), ctx))?;
            return Some(ProofTerm::lam(x, body));
        }
        if unreachable(goal, ctx.iter().map(|(_, f)| f)) {
            return None;
        }
        let key = sequent_key(goal, ctx.iter().map(|(_, f)| f.clone()));
        if self.failed.contains(&key) {
            return None;
        }
        if classically_refuted(goal, &ctx.iter().map(|(_, f)| f).collect::<Vec<_>>()) {
            self.failed.insert(key);
            return None;
        }
        for (i, (s, assumption)) in ctx.iter().enumerate() {
            let Formula::Imp(a, b) = assumption else { continue };
            let rest = without(ctx, i);
            if let Some(arg) = self.left_premise(s, a, b, &rest) {
                let derived = (ProofTerm::app(s.clone(), arg), b.as_ref().clone());
                let found = self.prove(goal, &cons(derived, &rest));
                if found.is_none() {
                    self.failed.insert(key);
                }
                return found;
            }
        }
        self.failed.insert(key);
        None
    }

    /// Term of type `a` given `s : a -> b`.
    fn left_premise(
        &mut self,
        s: &ProofTerm,
        a: &Formula,
        b: &Formula,
        rest: &[Assumption],
    ) -> Option<ProofTerm> {
        match a {
            Formula::Atom(_) => rest.iter().find(|(_, f)| f == a).map(|(t, _)| t.clone()),
            Formula::Imp(_, d) => {
                // Prove C->D under k : D->B, then discharge k with λy. s (λz. y).
                let k = self.fresh();
                let d_to_b = Formula::Imp(d.clone(), Arc::new(b.clone()));
                let proof = self.prove(a, &cons((ProofTerm::var(&k), d_to_b), rest))?;
                let y = self.fresh();
                let z = self.fresh();
                let witness =
                    ProofTerm::lam(y.clone(), ProofTerm::app(s.clone(), ProofTerm::lam(z, ProofTerm::var(&y))));
                Some(ProofTerm::app(ProofTerm::lam(k, proof), witness))
            }
        }
    }
}
