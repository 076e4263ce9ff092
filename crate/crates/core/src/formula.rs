//! Implicational formulas and the left-nested chain encoding of token sequences.
//!
//! A sentence `w1 w2 ... wn` is encoded as `((((w1->w2)->w3)->...)->wn)`. Unlike the
//! right-nested form, this chain is not invariant under permutation of its atoms, so
//! token order becomes part of what is provable.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Interned atomic proposition. Ids are only meaningful relative to a [`Symbols`] table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(pub u32);

/// Bijective mapping between atom surface forms and ids.
#[derive(Clone, Debug, Default)]
pub struct Symbols {
    words: Vec<String>,
    index: HashMap<String, Atom>,
}

impl Symbols {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, word: &str) -> Atom {
        if let Some(&atom) = self.index.get(word) {
            return atom;
        }
        let atom = Atom(self.words.len() as u32);
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), atom);
        atom
    }

    pub fn get(&self, word: &str) -> Option<Atom> {
        self.index.get(word).copied()
    }

    /// Surface text of `atom`. Unknown ids render as `#<id>`.
    pub fn name(&self, atom: Atom) -> std::borrow::Cow<'_, str> {
        match self.words.get(atom.0 as usize) {
            Some(w) => std::borrow::Cow::Borrowed(w.as_str()),
            None => std::borrow::Cow::Owned(format!("#{}", atom.0)),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(Atom),
    Imp(Arc<Formula>, Arc<Formula>),
}

impl Formula {
    pub fn imp(antecedent: Formula, consequent: Formula) -> Formula {
        Formula::Imp(Arc::new(antecedent), Arc::new(consequent))
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Formula::Atom(_))
    }

    /// Number of implication nodes.
    pub fn imp_count(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::Imp(a, b) => 1 + a.imp_count() + b.imp_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::Imp(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Every subformula, including `self`, in pre-order.
    pub fn subformulas(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            out.push(f);
            if let Formula::Imp(a, b) = f {
                stack.push(b);
                stack.push(a);
            }
        }
        out
    }

    pub fn display<'a>(&'a self, symbols: &'a Symbols) -> FormulaDisplay<'a> {
        FormulaDisplay { formula: self, symbols }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("cannot encode an empty token list")]
    EmptyTokenList,
    #[error("formula is not a left-nested chain (a consequent is not atomic)")]
    NotAChain,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

/// Encode tokens as the left-nested chain `((t1->t2)->t3)->...`.
pub fn list_to_impl(tokens: &[Atom]) -> Result<Formula, FormulaError> {
    let (first, rest) = tokens.split_first().ok_or(FormulaError::EmptyTokenList)?;
    Ok(rest
        .iter()
        .fold(Formula::Atom(*first), |chain, &t| Formula::imp(chain, Formula::Atom(t))))
}

/// Inverse of [`list_to_impl`].
pub fn impl_to_list(f: &Formula) -> Result<Vec<Atom>, FormulaError> {
    let mut rev = Vec::new();
    let mut cur = f;
    loop {
        match cur {
            Formula::Atom(a) => {
                rev.push(*a);
                break;
            }
            Formula::Imp(ante, cons) => match cons.as_ref() {
                Formula::Atom(a) => {
                    rev.push(*a);
                    cur = ante;
                }
                Formula::Imp(..) => return Err(FormulaError::NotAChain),
            },
        }
    }
    rev.reverse();
    Ok(rev)
}

/// All left-nested encodings of contiguous subsequences of the chain `f`.
///
/// Yields `n(n+1)/2` formulas for a chain of `n` atoms. Suffixes are visited from the
/// shortest (last atom) to the whole chain; within each suffix, prefixes go from the
/// longest to the single leading atom.
pub fn suffix_prefixes(f: &Formula) -> Result<Vec<Formula>, FormulaError> {
    let tokens = impl_to_list(f)?;
    let n = tokens.len();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for start in (0..n).rev() {
        for end in (start + 1..=n).rev() {
            out.push(list_to_impl(&tokens[start..end])?);
        }
    }
    Ok(out)
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    symbols: &'a Symbols,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(f, self.formula, self.symbols)
    }
}

fn write_formula(out: &mut fmt::Formatter<'_>, f: &Formula, symbols: &Symbols) -> fmt::Result {
    match f {
        Formula::Atom(a) => out.write_str(&symbols.name(*a)),
        Formula::Imp(ante, cons) => {
            if ante.is_atom() {
                write_formula(out, ante, symbols)?;
            } else {
                out.write_str("(")?;
                write_formula(out, ante, symbols)?;
                out.write_str(")")?;
            }
            out.write_str("->")?;
            write_formula(out, cons, symbols)
        }
    }
}

/// Render `f` with `->` right-associative and no outer parentheses.
pub fn print_formula(f: &Formula, symbols: &Symbols) -> String {
    f.display(symbols).to_string()
}

fn is_atom_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'\''
}

/// Parse the textual notation, interning new atoms into `symbols`.
///
/// ```text
/// formula := operand ("->" formula)?
/// operand := atom | "(" formula ")"
/// atom    := [a-z0-9_']+
/// ```
pub fn parse_formula(text: &str, symbols: &mut Symbols) -> Result<Formula, FormulaError> {
    let mut parser = Parser { src: text.as_bytes(), pos: 0, symbols };
    let f = parser.formula()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(f)
}

struct Parser<'s, 'y> {
    src: &'s [u8],
    pos: usize,
    symbols: &'y mut Symbols,
}

impl Parser<'_, '_> {
    fn error(&self, message: &str) -> FormulaError {
        FormulaError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.operand()?;
        self.skip_ws();
        if self.src[self.pos..].starts_with(b"->") {
            self.pos += 2;
            let rhs = self.formula()?;
            Ok(Formula::imp(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn operand(&mut self) -> Result<Formula, FormulaError> {
        self.skip_ws();
        match self.src.get(self.pos) {
            None => Err(self.error("expected atom or '('")),
            Some(b'(') => {
                self.pos += 1;
                let f = self.formula()?;
                self.skip_ws();
                if self.src.get(self.pos) != Some(&b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(f)
            }
            Some(&b) if is_atom_byte(b) => {
                let start = self.pos;
                while self.pos < self.src.len() && is_atom_byte(self.src[self.pos]) {
                    self.pos += 1;
                }
                // Atom bytes are ASCII, so this slice is valid UTF-8.
                let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(Formula::Atom(self.symbols.intern(word)))
            }
            Some(_) => Err(self.error("expected atom or '('")),
        }
    }
}
