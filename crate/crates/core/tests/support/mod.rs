//! Reference implementations used only as test oracles. None of this calls into the
//! library's prover, checker, or normalizer.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};

use arrow_core::formula::{Atom, Formula};
use arrow_core::prover::ProofTerm;

/// Oracle-side formula, kept separate from the library type.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum F {
    A(u32),
    I(Box<F>, Box<F>),
}

impl F {
    pub fn imp(a: F, b: F) -> F {
        F::I(Box::new(a), Box::new(b))
    }

    pub fn to_formula(&self) -> Formula {
        match self {
            F::A(n) => Formula::Atom(Atom(*n)),
            F::I(a, b) => Formula::imp(a.to_formula(), b.to_formula()),
        }
    }

    pub fn from_formula(f: &Formula) -> F {
        match f {
            Formula::Atom(Atom(n)) => F::A(*n),
            Formula::Imp(a, b) => F::imp(F::from_formula(a), F::from_formula(b)),
        }
    }
}

/// Every formula over atoms `0..atoms` with exactly `imps` implication nodes.
pub fn formulas_with(atoms: u32, imps: usize, memo: &mut HashMap<usize, Vec<F>>) -> Vec<F> {
    if let Some(v) = memo.get(&imps) {
        return v.clone();
    }
    let out = if imps == 0 {
        (0..atoms).map(F::A).collect()
    } else {
        let mut out = Vec::new();
        for left in 0..imps {
            let ls = formulas_with(atoms, left, memo);
            let rs = formulas_with(atoms, imps - 1 - left, memo);
            for l in &ls {
                for r in &rs {
                    out.push(F::imp(l.clone(), r.clone()));
                }
            }
        }
        out
    };
    memo.insert(imps, out.clone());
    out
}

type Sequent = (BTreeSet<F>, F);

/// Plain LJ backward search with contraction built into the set context. A sequent that
/// reappears on its own branch is abandoned; that keeps the search finite and loses
/// nothing, since a shortest proof never repeats a sequent along a branch.
pub struct LjSearch {
    history: Vec<Sequent>,
    proven: HashSet<Sequent>,
}

impl Default for LjSearch {
    fn default() -> Self {
        Self::new()
    }
}

impl LjSearch {
    pub fn new() -> Self {
        Self { history: Vec::new(), proven: HashSet::new() }
    }

    pub fn provable(&mut self, goal: &F) -> bool {
        self.history.clear();
        self.search(BTreeSet::new(), goal.clone())
    }

    fn search(&mut self, ctx: BTreeSet<F>, goal: F) -> bool {
        if ctx.contains(&goal) {
            return true;
        }
        if let F::I(a, b) = &goal {
            let mut ctx = ctx;
            ctx.insert((**a).clone());
            return self.search(ctx, (**b).clone());
        }
        let key = (ctx, goal);
        if self.proven.contains(&key) {
            return true;
        }
        if self.history.contains(&key) {
            return false;
        }
        self.history.push(key.clone());
        let (ctx, goal) = &key;
        let mut ok = false;
        for h in ctx.iter() {
            let F::I(a, b) = h else { continue };
            if ctx.contains(b) {
                continue;
            }
            if self.search(ctx.clone(), (**a).clone()) {
                let mut with_b = ctx.clone();
                with_b.insert((**b).clone());
                if self.search(with_b, goal.clone()) {
                    ok = true;
                    break;
                }
            }
        }
        self.history.pop();
        if ok {
            self.proven.insert(key);
        }
        ok
    }
}

/// Simple types with unification variables, for principal-type inference.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Ty {
    Var(usize),
    Arr(Box<Ty>, Box<Ty>),
}

struct Infer {
    subst: Vec<Option<Ty>>,
}

impl Infer {
    fn fresh(&mut self) -> Ty {
        self.subst.push(None);
        Ty::Var(self.subst.len() - 1)
    }

    fn resolve(&self, t: &Ty) -> Ty {
        match t {
            Ty::Var(v) => match &self.subst[*v] {
                Some(bound) => self.resolve(bound),
                None => t.clone(),
            },
            Ty::Arr(a, b) => Ty::Arr(Box::new(self.resolve(a)), Box::new(self.resolve(b))),
        }
    }

    fn occurs(&self, v: usize, t: &Ty) -> bool {
        match self.resolve(t) {
            Ty::Var(w) => v == w,
            Ty::Arr(a, b) => self.occurs(v, &a) || self.occurs(v, &b),
        }
    }

    fn unify(&mut self, x: &Ty, y: &Ty) -> bool {
        let (x, y) = (self.resolve(x), self.resolve(y));
        match (x, y) {
            (Ty::Var(a), Ty::Var(b)) if a == b => true,
            (Ty::Var(a), t) | (t, Ty::Var(a)) => {
                if self.occurs(a, &t) {
                    return false;
                }
                self.subst[a] = Some(t);
                true
            }
            (Ty::Arr(a1, b1), Ty::Arr(a2, b2)) => self.unify(&a1, &a2) && self.unify(&b1, &b2),
        }
    }

    fn infer(&mut self, t: &ProofTerm, env: &mut Vec<(String, Ty)>) -> Option<Ty> {
        match t {
            ProofTerm::Var(x) => env.iter().rev().find(|(n, _)| n == x).map(|(_, ty)| ty.clone()),
            ProofTerm::Lam(x, body) => {
                let a = self.fresh();
                env.push((x.clone(), a.clone()));
                let b = self.infer(body, env);
                env.pop();
                Some(Ty::Arr(Box::new(a), Box::new(b?)))
            }
            ProofTerm::App(f, a) => {
                let tf = self.infer(f, env)?;
                let ta = self.infer(a, env)?;
                let r = self.fresh();
                self.unify(&tf, &Ty::Arr(Box::new(ta), Box::new(r.clone()))).then_some(r)
            }
        }
    }
}

/// Principal type of a closed term, if it is simply typable.
fn principal_type(t: &ProofTerm) -> Option<Ty> {
    let mut inf = Infer { subst: Vec::new() };
    let ty = inf.infer(t, &mut Vec::new())?;
    Some(inf.resolve(&ty))
}

fn matches(pattern: &Ty, target: &F, sigma: &mut HashMap<usize, F>) -> bool {
    match (pattern, target) {
        (Ty::Var(v), _) => match sigma.get(v) {
            Some(bound) => bound == target,
            None => {
                sigma.insert(*v, target.clone());
                true
            }
        },
        (Ty::Arr(a, b), F::I(x, y)) => matches(a, x, sigma) && matches(b, y, sigma),
        _ => false,
    }
}

/// Does closed term `t` have type `goal`? True iff `goal` is an instance of the principal type.
pub fn inhabits(t: &ProofTerm, goal: &F) -> bool {
    match principal_type(t) {
        Some(p) => matches(&p, goal, &mut HashMap::new()),
        None => false,
    }
}

/// de Bruijn terms for the small-step evaluator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Db {
    Free(String),
    Bound(usize),
    Lam(Box<Db>),
    App(Box<Db>, Box<Db>),
}

pub fn to_db(t: &ProofTerm) -> Db {
    fn go(t: &ProofTerm, scope: &mut Vec<String>) -> Db {
        match t {
            ProofTerm::Var(x) => match scope.iter().rev().position(|n| n == x) {
                Some(i) => Db::Bound(i),
                None => Db::Free(x.clone()),
            },
            ProofTerm::Lam(x, b) => {
                scope.push(x.clone());
                let body = go(b, scope);
                scope.pop();
                Db::Lam(Box::new(body))
            }
            ProofTerm::App(f, a) => Db::App(Box::new(go(f, scope)), Box::new(go(a, scope))),
        }
    }
    go(t, &mut Vec::new())
}

fn shift(t: &Db, by: isize, cutoff: usize) -> Db {
    match t {
        Db::Free(x) => Db::Free(x.clone()),
        Db::Bound(i) if *i >= cutoff => Db::Bound((*i as isize + by) as usize),
        Db::Bound(i) => Db::Bound(*i),
        Db::Lam(b) => Db::Lam(Box::new(shift(b, by, cutoff + 1))),
        Db::App(f, a) => Db::App(Box::new(shift(f, by, cutoff)), Box::new(shift(a, by, cutoff))),
    }
}

fn subst(t: &Db, depth: usize, s: &Db) -> Db {
    match t {
        Db::Free(x) => Db::Free(x.clone()),
        Db::Bound(i) if *i == depth => shift(s, depth as isize, 0),
        Db::Bound(i) if *i > depth => Db::Bound(i - 1),
        Db::Bound(i) => Db::Bound(*i),
        Db::Lam(b) => Db::Lam(Box::new(subst(b, depth + 1, s))),
        Db::App(f, a) => Db::App(Box::new(subst(f, depth, s)), Box::new(subst(a, depth, s))),
    }
}

/// One leftmost-outermost β step, or `None` at normal form.
pub fn step(t: &Db) -> Option<Db> {
    match t {
        Db::App(f, a) => {
            if let Db::Lam(body) = &**f {
                return Some(subst(body, 0, a));
            }
            if let Some(f2) = step(f) {
                return Some(Db::App(Box::new(f2), a.clone()));
            }
            step(a).map(|a2| Db::App(f.clone(), Box::new(a2)))
        }
        Db::Lam(b) => step(b).map(|b2| Db::Lam(Box::new(b2))),
        _ => None,
    }
}

pub fn eval(t: &Db, fuel: usize) -> Option<Db> {
    let mut cur = t.clone();
    for _ in 0..fuel {
        match step(&cur) {
            Some(next) => cur = next,
            None => return Some(cur),
        }
    }
    None
}

/// All contiguous non-empty subsequences of `xs`, by brute force.
pub fn contiguous_subsequences<T: Clone + Ord>(xs: &[T]) -> BTreeSet<Vec<T>> {
    let mut out = BTreeSet::new();
    for i in 0..xs.len() {
        for j in i + 1..=xs.len() {
            out.insert(xs[i..j].to_vec());
        }
    }
    out
}

pub fn is_contiguous_in<T: PartialEq>(needle: &[T], hay: &[T]) -> bool {
    !needle.is_empty() && needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}
