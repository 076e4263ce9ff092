//! Sentence store answering queries by contiguous-fragment match.
//!
//! A query matches a stored sentence exactly when its left-nested encoding is one of the
//! sentence formula's suffix-prefix fragments, which is the same as the query tokens
//! occurring contiguously in the sentence. Fragments are never materialized as formulas;
//! short queries go through an n-gram index, longer ones fall back to a scan.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::formula::{list_to_impl, Atom, Formula, Symbols};

pub const DEFAULT_K_MAX: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("sentence {0} is empty")]
    EmptySentence(usize),
    #[error("k_max must be at least 1")]
    InvalidKMax,
    #[error("query is empty after normalization")]
    EmptyQuery,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum QueryItem {
    Word(String),
    /// `?name` binds a word; `_` (no name) matches anything without binding.
    Wildcard(Option<String>),
}

#[derive(Clone, Debug)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<Atom>,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hit {
    pub sentence_id: usize,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternMatch {
    pub bindings: BTreeMap<String, String>,
    pub sentence_id: usize,
    pub formula: Formula,
}

/// Occurrence of a query inside a stored sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occurrence {
    pub sentence_id: usize,
    pub start: usize,
}

#[derive(Clone, Debug)]
pub struct SentenceDb {
    symbols: Symbols,
    sentences: Vec<Sentence>,
    index: HashMap<Vec<Atom>, Vec<Occurrence>>,
    k_max: usize,
}

impl SentenceDb {
    /// Deduplicate `sentences` (first occurrence wins, ids follow input order) and index
    /// every n-gram with `n <= k_max`.
    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>], k_max: usize) -> Result<Self, RetrievalError> {
        if k_max == 0 {
            return Err(RetrievalError::InvalidKMax);
        }
        let mut symbols = Symbols::new();
        let mut seen = HashSet::new();
        let mut stored = Vec::new();
        for (i, words) in sentences.iter().enumerate() {
            if words.is_empty() {
                return Err(RetrievalError::EmptySentence(i));
            }
            let tokens: Vec<Atom> = words.iter().map(|w| symbols.intern(w.as_ref())).collect();
            if !seen.insert(tokens.clone()) {
                continue;
            }
            let formula = list_to_impl(&tokens).expect("non-empty");
            stored.push(Sentence { id: stored.len(), tokens, formula });
        }

        let mut index: HashMap<Vec<Atom>, Vec<Occurrence>> = HashMap::new();
        for s in &stored {
            for start in 0..s.tokens.len() {
                for end in start + 1..=(start + k_max).min(s.tokens.len()) {
                    index
                        .entry(s.tokens[start..end].to_vec())
                        .or_default()
                        .push(Occurrence { sentence_id: s.id, start });
                }
            }
        }
        Ok(Self { symbols, sentences: stored, index, k_max })
    }

    /// One sentence per line, words separated by whitespace; blank lines are skipped.
    pub fn from_lines(text: &str, k_max: usize) -> Result<Self, RetrievalError> {
        let sentences: Vec<Vec<&str>> = text
            .lines()
            .map(|l| l.split_whitespace().collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        Self::build(&sentences, k_max)
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn symbols(&self) -> &Symbols {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn words(&self, id: usize) -> Vec<String> {
        self.sentences[id].tokens.iter().map(|&a| self.symbols.name(a).into_owned()).collect()
    }

    pub fn text(&self, id: usize) -> String {
        self.words(id).join(" ")
    }

    /// `None` when some word never occurs in the store.
    fn atoms<S: AsRef<str>>(&self, words: &[S]) -> Option<Vec<Atom>> {
        words.iter().map(|w| self.symbols.get(w.as_ref())).collect()
    }

    /// Every position where `words` occurs contiguously, ordered by sentence then offset.
    pub fn occurrences<S: AsRef<str>>(&self, words: &[S]) -> Vec<Occurrence> {
        let Some(query) = self.atoms(words) else { return Vec::new() };
        if query.is_empty() {
            return Vec::new();
        }
        if query.len() <= self.k_max {
            self.index.get(&query).cloned().unwrap_or_default()
        } else {
            scan_occurrences(&self.sentences, &query)
        }
    }

    /// Stored sentences containing `words` contiguously, each once, in id order.
    pub fn query_exact<S: AsRef<str>>(&self, words: &[S]) -> Vec<Hit> {
        self.hits(self.occurrences(words))
    }

    /// [`query_exact`](Self::query_exact) without the index.
    pub fn query_exact_scan<S: AsRef<str>>(&self, words: &[S]) -> Vec<Hit> {
        let Some(query) = self.atoms(words) else { return Vec::new() };
        if query.is_empty() {
            return Vec::new();
        }
        self.hits(scan_occurrences(&self.sentences, &query))
    }

    fn hits(&self, occurrences: Vec<Occurrence>) -> Vec<Hit> {
        let mut out: Vec<Hit> = Vec::new();
        for occ in occurrences {
            if out.last().map(|h| h.sentence_id) != Some(occ.sentence_id) {
                out.push(Hit {
                    sentence_id: occ.sentence_id,
                    formula: self.sentences[occ.sentence_id].formula.clone(),
                });
            }
        }
        out
    }

    /// Match a pattern of words and wildcards. Repeated names must bind the same word.
    /// Results are unique per (bindings, sentence) and ordered by sentence, then offset.
    pub fn query_pattern(&self, items: &[QueryItem]) -> Vec<PatternMatch> {
        if items.is_empty() {
            return Vec::new();
        }
        let mut pattern = Vec::with_capacity(items.len());
        for item in items {
            pattern.push(match item {
                QueryItem::Word(w) => match self.symbols.get(w) {
                    Some(a) => Slot::Word(a),
                    None => return Vec::new(),
                },
                QueryItem::Wildcard(name) => Slot::Any(name.as_deref()),
            });
        }

        // Restrict to sentences containing the first literal word, if any.
        let candidates: Vec<usize> = match pattern.iter().find_map(|s| match s {
            Slot::Word(a) => Some(*a),
            Slot::Any(_) => None,
        }) {
            Some(a) => {
                let mut ids: Vec<usize> = self
                    .index
                    .get(&vec![a])
                    .map(|occ| occ.iter().map(|o| o.sentence_id).collect())
                    .unwrap_or_default();
                ids.dedup();
                ids
            }
            None => (0..self.sentences.len()).collect(),
        };

        let mut out = Vec::new();
        for id in candidates {
            let tokens = &self.sentences[id].tokens;
            let mut seen: HashSet<BTreeMap<&str, Atom>> = HashSet::new();
            for start in 0..tokens.len().saturating_sub(pattern.len() - 1) {
                let Some(bindings) = match_at(&pattern, &tokens[start..start + pattern.len()]) else {
                    continue;
                };
                if seen.insert(bindings.clone()) {
                    out.push(PatternMatch {
                        bindings: bindings
                            .into_iter()
                            .map(|(k, a)| (k.to_string(), self.symbols.name(a).into_owned()))
                            .collect(),
                        sentence_id: id,
                        formula: self.sentences[id].formula.clone(),
                    });
                }
            }
        }
        out
    }

    /// Lowercase, split on whitespace, match exactly; answers are rendered sentences.
    pub fn query_text(&self, raw: &str) -> Result<Vec<String>, RetrievalError> {
        let words = normalize_query(raw)?;
        Ok(self.query_exact(&words).into_iter().map(|h| self.text(h.sentence_id)).collect())
    }
}

enum Slot<'a> {
    Word(Atom),
    Any(Option<&'a str>),
}

fn match_at<'a>(pattern: &[Slot<'a>], window: &[Atom]) -> Option<BTreeMap<&'a str, Atom>> {
    let mut bindings = BTreeMap::new();
    for (slot, &tok) in pattern.iter().zip(window) {
        match slot {
            Slot::Word(a) if *a != tok => return None,
            Slot::Word(_) | Slot::Any(None) => {}
            Slot::Any(Some(name)) => {
                if *bindings.entry(*name).or_insert(tok) != tok {
                    return None;
                }
            }
        }
    }
    Some(bindings)
}

fn scan_occurrences(sentences: &[Sentence], query: &[Atom]) -> Vec<Occurrence> {
    let mut out = Vec::new();
    for s in sentences {
        if s.tokens.len() < query.len() {
            continue;
        }
        for (start, window) in s.tokens.windows(query.len()).enumerate() {
            if window == query {
                out.push(Occurrence { sentence_id: s.id, start });
            }
        }
    }
    out
}

/// Lowercased whitespace-separated words of `raw`.
pub fn normalize_query(raw: &str) -> Result<Vec<String>, RetrievalError> {
    let words: Vec<String> = raw.to_lowercase().split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    Ok(words)
}

/// Parse `the ?x chases _` into pattern items.
pub fn parse_pattern(raw: &str) -> Result<Vec<QueryItem>, RetrievalError> {
    Ok(normalize_query(raw)?
        .into_iter()
        .map(|w| {
            if w == "_" {
                QueryItem::Wildcard(None)
            } else if let Some(name) = w.strip_prefix('?') {
                QueryItem::Wildcard(if name.is_empty() { None } else { Some(name.to_string()) })
            } else {
                QueryItem::Word(w)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: [&str; 4] =
        ["the cat sits on the mat", "the dog sits on the log", "the cat chases the mouse", "the dog chases the cat"];

    fn toy() -> SentenceDb {
        let sentences: Vec<Vec<&str>> = TOY.iter().map(|s| s.split(' ').collect()).collect();
        SentenceDb::build(&sentences, DEFAULT_K_MAX).unwrap()
    }

    #[test]
    fn stores_each_sentence_as_a_left_nested_chain() {
        let db = toy();
        assert_eq!(db.len(), 4);
        let printed = crate::formula::print_formula(&db.sentences()[0].formula, db.symbols());
        assert_eq!(printed, "((((the->cat)->sits)->on)->the)->mat");
    }

    #[test]
    fn duplicates_are_stored_once() {
        let sentences = vec![vec!["a", "b"], vec!["c"], vec!["a", "b"]];
        let db = SentenceDb::build(&sentences, 5).unwrap();
        assert_eq!(db.len(), 2);
        assert_eq!(db.text(1), "c");
    }

    #[test]
    fn empty_sentence_and_bad_k_are_rejected() {
        let sentences: Vec<Vec<&str>> = vec![vec!["a"], vec![]];
        assert_eq!(SentenceDb::build(&sentences, 5).unwrap_err(), RetrievalError::EmptySentence(1));
        assert_eq!(SentenceDb::build(&[vec!["a"]], 0).unwrap_err(), RetrievalError::InvalidKMax);
    }

    #[test]
    fn exact_queries() {
        let db = toy();
        let ids = |q: &str| -> Vec<usize> {
            db.query_exact(&q.split(' ').collect::<Vec<_>>()).iter().map(|h| h.sentence_id).collect()
        };
        assert_eq!(ids("the cat"), vec![0, 2, 3]);
        assert_eq!(ids("sits"), vec![0, 1]);
        assert_eq!(ids("purple unicorn"), Vec::<usize>::new());
        assert_eq!(ids("the cat sits on the mat"), vec![0]);
    }

    #[test]
    fn text_queries_are_lowercased() {
        let db = toy();
        assert_eq!(db.query_text("The Cat").unwrap(), db.query_text("the cat").unwrap());
        assert_eq!(db.query_text("the dog sits").unwrap(), vec!["the dog sits on the log"]);
        assert_eq!(db.query_text("  "), Err(RetrievalError::EmptyQuery));
    }

    #[test]
    fn wildcard_between_words() {
        let db = toy();
        let got = db.query_pattern(&parse_pattern("the ?X chases").unwrap());
        let summary: Vec<(String, usize)> =
            got.iter().map(|m| (m.bindings["x"].clone(), m.sentence_id)).collect();
        assert_eq!(summary, vec![("cat".to_string(), 2), ("dog".to_string(), 3)]);
    }

    #[test]
    fn repeated_names_must_agree() {
        let db = toy();
        assert!(db.query_pattern(&parse_pattern("?x ?x").unwrap()).is_empty());
        let db2 = SentenceDb::build(&[vec!["a", "a", "b"]], 5).unwrap();
        let got = db2.query_pattern(&parse_pattern("?x ?x").unwrap());
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].bindings["x"], "a");
    }

    #[test]
    fn lone_wildcard_matches_every_distinct_word() {
        let db = toy();
        let got = db.query_pattern(&parse_pattern("?w").unwrap());
        // distinct words per sentence: 5 + 5 + 4 + 4
        assert_eq!(got.len(), 18);
        let anon = db.query_pattern(&parse_pattern("_").unwrap());
        assert_eq!(anon.len(), 4);
        assert!(anon.iter().all(|m| m.bindings.is_empty()));
    }

    #[test]
    fn long_queries_fall_back_to_scan() {
        let db = SentenceDb::build(&[TOY[0].split(' ').collect::<Vec<_>>()], 2).unwrap();
        let q: Vec<&str> = "cat sits on".split(' ').collect();
        assert_eq!(db.query_exact(&q), db.query_exact_scan(&q));
        assert_eq!(db.query_exact(&q).len(), 1);
    }
}
