//! λ-terms witnessing implicational proofs.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::formula::{Atom, Formula};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ProofTerm {
    Var(String),
    Lam(String, Arc<ProofTerm>),
    App(Arc<ProofTerm>, Arc<ProofTerm>),
}

impl ProofTerm {
    pub fn var(name: &str) -> Self {
        ProofTerm::Var(name.to_string())
    }

    pub fn lam(bound: String, body: ProofTerm) -> Self {
        ProofTerm::Lam(bound, Arc::new(body))
    }

    pub fn app(fun: ProofTerm, arg: ProofTerm) -> Self {
        ProofTerm::App(Arc::new(fun), Arc::new(arg))
    }

    pub fn size(&self) -> usize {
        match self {
            ProofTerm::Var(_) => 1,
            ProofTerm::Lam(_, b) => 1 + b.size(),
            ProofTerm::App(f, a) => 1 + f.size() + a.size(),
        }
    }

    pub fn free_vars(&self) -> HashSet<String> {
        let mut out = HashSet::new();
        collect_free(self, &mut Vec::new(), &mut out);
        out
    }
}

fn collect_free(t: &ProofTerm, bound: &mut Vec<String>, out: &mut HashSet<String>) {
    match t {
        ProofTerm::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        ProofTerm::Lam(x, b) => {
            bound.push(x.clone());
            collect_free(b, bound, out);
            bound.pop();
        }
        ProofTerm::App(f, a) => {
            collect_free(f, bound, out);
            collect_free(a, bound, out);
        }
    }
}

/// Locally nameless form used for α-equivalence and reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Nameless {
    Bound(usize),
    Free(String),
    Lam(Box<Nameless>),
    App(Box<Nameless>, Box<Nameless>),
}

fn to_nameless(t: &ProofTerm, scope: &mut Vec<String>) -> Nameless {
    match t {
        ProofTerm::Var(x) => match scope.iter().rev().position(|y| y == x) {
            Some(i) => Nameless::Bound(i),
            None => Nameless::Free(x.clone()),
        },
        ProofTerm::Lam(x, b) => {
            scope.push(x.clone());
            let body = to_nameless(b, scope);
            scope.pop();
            Nameless::Lam(Box::new(body))
        }
        ProofTerm::App(f, a) => {
            Nameless::App(Box::new(to_nameless(f, scope)), Box::new(to_nameless(a, scope)))
        }
    }
}

fn from_nameless(t: &Nameless, scope: &mut Vec<String>, fresh: &mut Fresh) -> ProofTerm {
    match t {
        Nameless::Bound(i) => ProofTerm::Var(scope[scope.len() - 1 - i].clone()),
        Nameless::Free(x) => ProofTerm::Var(x.clone()),
        Nameless::Lam(b) => {
            let x = fresh.next();
            scope.push(x.clone());
            let body = from_nameless(b, scope, fresh);
            scope.pop();
            ProofTerm::lam(x, body)
        }
        Nameless::App(f, a) => {
            ProofTerm::app(from_nameless(f, scope, fresh), from_nameless(a, scope, fresh))
        }
    }
}

struct Fresh {
    next: usize,
    avoid: HashSet<String>,
}

impl Fresh {
    fn next(&mut self) -> String {
        loop {
            self.next += 1;
            let name = format!("v{}", self.next);
            if !self.avoid.contains(&name) {
                return name;
            }
        }
    }
}

/// Structural equality up to renaming of bound variables.
pub fn alpha_eq(a: &ProofTerm, b: &ProofTerm) -> bool {
    to_nameless(a, &mut Vec::new()) == to_nameless(b, &mut Vec::new())
}

/// Shift free de Bruijn indices `>= cutoff` by `by`.
fn shift(t: &Nameless, by: isize, cutoff: usize) -> Nameless {
    match t {
        Nameless::Bound(i) if *i >= cutoff => Nameless::Bound((*i as isize + by) as usize),
        Nameless::Bound(_) | Nameless::Free(_) => t.clone(),
        Nameless::Lam(b) => Nameless::Lam(Box::new(shift(b, by, cutoff + 1))),
        Nameless::App(f, a) => Nameless::App(Box::new(shift(f, by, cutoff)), Box::new(shift(a, by, cutoff))),
    }
}

/// `t[depth := s]`, decrementing indices above `depth`.
fn subst(t: &Nameless, depth: usize, s: &Nameless) -> Nameless {
    match t {
        Nameless::Bound(i) if *i == depth => shift(s, depth as isize, 0),
        Nameless::Bound(i) if *i > depth => Nameless::Bound(i - 1),
        Nameless::Bound(_) | Nameless::Free(_) => t.clone(),
        Nameless::Lam(b) => Nameless::Lam(Box::new(subst(b, depth + 1, s))),
        Nameless::App(f, a) => Nameless::App(Box::new(subst(f, depth, s)), Box::new(subst(a, depth, s))),
    }
}

/// One leftmost-outermost β-step, or `None` if `t` is normal.
fn reduce_once(t: &Nameless) -> Option<Nameless> {
    match t {
        Nameless::App(f, a) => {
            if let Nameless::Lam(body) = f.as_ref() {
                return Some(subst(body, 0, a));
            }
            if let Some(f2) = reduce_once(f) {
                return Some(Nameless::App(Box::new(f2), a.clone()));
            }
            reduce_once(a).map(|a2| Nameless::App(f.clone(), Box::new(a2)))
        }
        Nameless::Lam(b) => reduce_once(b).map(|b2| Nameless::Lam(Box::new(b2))),
        _ => None,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("β-normalization exceeded {0} reduction steps")]
    StepLimitExceeded(usize),
}

pub const DEFAULT_STEP_LIMIT: usize = 1_000_000;

/// β-normal form by normal-order reduction, bounded by 10⁶ steps.
pub fn beta_normalize(t: &ProofTerm) -> Result<ProofTerm, NormalizeError> {
    beta_normalize_with_limit(t, DEFAULT_STEP_LIMIT)
}

pub fn beta_normalize_with_limit(t: &ProofTerm, limit: usize) -> Result<ProofTerm, NormalizeError> {
    let mut cur = to_nameless(t, &mut Vec::new());
    let mut steps = 0;
    while let Some(next) = reduce_once(&cur) {
        steps += 1;
        if steps > limit {
            return Err(NormalizeError::StepLimitExceeded(limit));
        }
        cur = next;
    }
    let mut fresh = Fresh { next: 0, avoid: t.free_vars() };
    Ok(from_nameless(&cur, &mut Vec::new(), &mut fresh))
}

/// Does `t` have type `ty` under `env`?
///
/// Binder types are unknowns solved by first-order unification against `ty` and the
/// types in `env`, so every way of annotating the λs is considered at once.
pub fn type_check(t: &ProofTerm, ty: &Formula, env: &HashMap<String, Formula>) -> bool {
    let mut u = Unifier::default();
    let mut scope: Vec<(String, Ty)> = env.iter().map(|(k, v)| (k.clone(), Ty::from(v))).collect();
    match u.infer(t, &mut scope) {
        Some(found) => u.unify(&found, &Ty::from(ty)),
        None => false,
    }
}

#[derive(Clone, Debug)]
enum Ty {
    Atom(Atom),
    Var(usize),
    Arr(Box<Ty>, Box<Ty>),
}

impl From<&Formula> for Ty {
    fn from(f: &Formula) -> Self {
        match f {
            Formula::Atom(a) => Ty::Atom(*a),
            Formula::Imp(a, b) => Ty::Arr(Box::new(Ty::from(a.as_ref())), Box::new(Ty::from(b.as_ref()))),
        }
    }
}

#[derive(Default)]
struct Unifier {
    bound: Vec<Option<Ty>>,
}

impl Unifier {
    fn fresh(&mut self) -> Ty {
        self.bound.push(None);
        Ty::Var(self.bound.len() - 1)
    }

    /// Follow variable bindings at the root only.
    fn shallow(&self, t: &Ty) -> Ty {
        let mut t = t.clone();
        while let Ty::Var(v) = t {
            match &self.bound[v] {
                Some(next) => t = next.clone(),
                None => break,
            }
        }
        t
    }

    fn occurs(&self, v: usize, t: &Ty) -> bool {
        match self.shallow(t) {
            Ty::Var(w) => v == w,
            Ty::Atom(_) => false,
            Ty::Arr(a, b) => self.occurs(v, &a) || self.occurs(v, &b),
        }
    }

    fn unify(&mut self, x: &Ty, y: &Ty) -> bool {
        match (self.shallow(x), self.shallow(y)) {
            (Ty::Var(a), Ty::Var(b)) if a == b => true,
            (Ty::Var(a), t) | (t, Ty::Var(a)) => {
                if self.occurs(a, &t) {
                    return false;
                }
                self.bound[a] = Some(t);
                true
            }
            (Ty::Atom(a), Ty::Atom(b)) => a == b,
            (Ty::Arr(a1, b1), Ty::Arr(a2, b2)) => self.unify(&a1, &a2) && self.unify(&b1, &b2),
            _ => false,
        }
    }

    fn infer(&mut self, t: &ProofTerm, scope: &mut Vec<(String, Ty)>) -> Option<Ty> {
        match t {
            ProofTerm::Var(x) => scope.iter().rev().find(|(y, _)| y == x).map(|(_, ty)| ty.clone()),
            ProofTerm::Lam(x, body) => {
                let dom = self.fresh();
                scope.push((x.clone(), dom.clone()));
                let cod = self.infer(body, scope);
                scope.pop();
                Some(Ty::Arr(Box::new(dom), Box::new(cod?)))
            }
            ProofTerm::App(f, a) => {
                let tf = self.infer(f, scope)?;
                let ta = self.infer(a, scope)?;
                let cod = self.fresh();
                self.unify(&tf, &Ty::Arr(Box::new(ta), Box::new(cod.clone()))).then_some(cod)
            }
        }
    }
}

const DISPLAY_NAMES: [&str; 6] = ["x", "y", "z", "u", "v", "w"];

/// Prints binders renamed by introduction order (`x`, `y`, `z`, `u`, `v`, `w`, `x6`, ...);
/// free variables keep their names.
impl fmt::Display for ProofTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nameless = to_nameless(self, &mut Vec::new());
        let free = self.free_vars();
        let mut counter = 0usize;
        let mut scope = Vec::new();
        write_term(f, &nameless, &mut scope, &mut counter, &free)
    }
}

fn write_term(
    f: &mut fmt::Formatter<'_>,
    t: &Nameless,
    scope: &mut Vec<String>,
    counter: &mut usize,
    free: &HashSet<String>,
) -> fmt::Result {
    match t {
        Nameless::Bound(i) => f.write_str(&scope[scope.len() - 1 - i]),
        Nameless::Free(x) => f.write_str(x),
        Nameless::Lam(body) => {
            let name = loop {
                let n = *counter;
                *counter += 1;
                let candidate = match DISPLAY_NAMES.get(n) {
                    Some(s) => s.to_string(),
                    None => format!("{}{}", DISPLAY_NAMES[n % DISPLAY_NAMES.len()], n),
                };
                if !free.contains(&candidate) {
                    break candidate;
                }
            };
            write!(f, "λ{name}.")?;
            scope.push(name);
            write_term(f, body, scope, counter, free)?;
            scope.pop();
            Ok(())
        }
        Nameless::App(fun, arg) => {
            f.write_str("(")?;
            write_term(f, fun, scope, counter, free)?;
            f.write_str(" ")?;
            write_term(f, arg, scope, counter, free)?;
            f.write_str(")")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, Symbols};

    fn v(x: &str) -> ProofTerm {
        ProofTerm::var(x)
    }
    fn lam(x: &str, b: ProofTerm) -> ProofTerm {
        ProofTerm::lam(x.to_string(), b)
    }
    fn app(f: ProofTerm, a: ProofTerm) -> ProofTerm {
        ProofTerm::app(f, a)
    }

    #[test]
    fn alpha_equivalence_ignores_binder_names() {
        assert!(alpha_eq(&lam("a", lam("b", v("a"))), &lam("x", lam("y", v("x")))));
        assert!(!alpha_eq(&lam("a", lam("b", v("a"))), &lam("x", lam("y", v("y")))));
        assert!(!alpha_eq(&v("a"), &v("b")));
    }

    #[test]
    fn simple_reductions() {
        let id_y = app(lam("x", v("x")), v("y"));
        assert_eq!(beta_normalize(&id_y).unwrap(), v("y"));
        let k_ab = app(app(lam("x", lam("y", v("x"))), v("a")), v("b"));
        assert_eq!(beta_normalize(&k_ab).unwrap(), v("a"));
    }

    #[test]
    fn substitution_avoids_capture() {
        // (λx.λy.x) y  ~>  λv.y, not λy.y
        let t = app(lam("x", lam("y", v("x"))), v("y"));
        let n = beta_normalize(&t).unwrap();
        assert!(alpha_eq(&n, &lam("q", v("y"))));
        assert!(!alpha_eq(&n, &lam("q", v("q"))));
    }

    #[test]
    fn omega_hits_step_limit() {
        let w = lam("x", app(v("x"), v("x")));
        let omega = app(w.clone(), w);
        assert_eq!(beta_normalize_with_limit(&omega, 100), Err(NormalizeError::StepLimitExceeded(100)));
    }

    #[test]
    fn identity_checks() {
        let mut syms = Symbols::new();
        let pp = parse_formula("p->p", &mut syms).unwrap();
        let pq = parse_formula("p->q", &mut syms).unwrap();
        let id = lam("x", v("x"));
        assert!(type_check(&id, &pp, &HashMap::new()));
        assert!(!type_check(&id, &pq, &HashMap::new()));
    }

    #[test]
    fn redexes_check_through_candidate_types() {
        let mut syms = Symbols::new();
        let pp = parse_formula("p->p", &mut syms).unwrap();
        // (λf.f) (λx.x) : p->p
        let t = app(lam("f", v("f")), lam("x", v("x")));
        assert!(type_check(&t, &pp, &HashMap::new()));
    }

    #[test]
    fn display_uses_canonical_names() {
        let t = lam("a", lam("b", app(v("b"), v("a"))));
        assert_eq!(t.to_string(), "λx.λy.(y x)");
        let open = lam("a", app(v("x"), v("a")));
        assert_eq!(open.to_string(), "λy.(x y)");
    }
}
