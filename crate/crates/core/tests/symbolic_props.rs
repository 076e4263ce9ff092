mod support;

use std::collections::BTreeSet;

use arrow_core::corpus::{self, enumerate_fragments, Corpus};
use arrow_core::formula::{impl_to_list, list_to_impl, parse_formula, print_formula, suffix_prefixes, Atom, Symbols};
use arrow_core::retrieval::{QueryItem, SentenceDb};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{contiguous_subsequences, is_contiguous_in, F};

const TOY: [&str; 4] =
    ["the cat sits on the mat", "the dog sits on the log", "the cat chases the mouse", "the dog chases the cat"];

fn toy_db() -> SentenceDb {
    let s: Vec<Vec<&str>> = TOY.iter().map(|l| l.split(' ').collect()).collect();
    SentenceDb::build(&s, 5).unwrap()
}

fn chain(n: usize) -> Vec<Atom> {
    (0..n as u32).map(Atom).collect()
}

#[test]
fn fragment_count_is_triangular() {
    for n in 1..=64 {
        let f = list_to_impl(&chain(n)).unwrap();
        let frags = suffix_prefixes(&f).unwrap();
        assert_eq!(frags.len(), n * (n + 1) / 2, "n={n}");
        let distinct: BTreeSet<_> = frags.iter().collect();
        assert_eq!(distinct.len(), frags.len(), "n={n}: distinct atoms give distinct fragments");
    }
}

/// Every chain up to 8 tokens over a 3-letter alphabet.
#[test]
fn fragments_are_exactly_the_contiguous_subsequences() {
    for n in 1..=8u32 {
        for code in 0..3u32.pow(n) {
            let mut c = code;
            let tokens: Vec<Atom> = (0..n)
                .map(|_| {
                    let a = Atom(c % 3);
                    c /= 3;
                    a
                })
                .collect();
            let f = list_to_impl(&tokens).unwrap();
            let got: BTreeSet<Vec<Atom>> =
                suffix_prefixes(&f).unwrap().iter().map(|g| impl_to_list(g).unwrap()).collect();
            assert_eq!(got, contiguous_subsequences(&tokens), "{tokens:?}");
        }
    }
}

fn named_formula() -> impl Strategy<Value = F> {
    let leaf = (0u32..6).prop_map(F::A);
    leaf.prop_recursive(10, 128, 2, |inner| (inner.clone(), inner).prop_map(|(a, b)| F::imp(a, b)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, ..ProptestConfig::default() })]

    #[test]
    fn parse_inverts_print(f in named_formula()) {
        let mut sym = Symbols::new();
        for w in ["the", "cat", "sits", "on", "mat", "dog"] {
            sym.intern(w);
        }
        let formula = f.to_formula();
        let text = print_formula(&formula, &sym);
        let back = parse_formula(&text, &mut sym).unwrap();
        prop_assert_eq!(back, formula);
    }
}

proptest! {
    #[test]
    fn list_round_trip(tokens in prop::collection::vec(0u32..50, 1..40)) {
        let atoms: Vec<Atom> = tokens.into_iter().map(Atom).collect();
        prop_assert_eq!(impl_to_list(&list_to_impl(&atoms).unwrap()).unwrap(), atoms);
    }

    #[test]
    fn seven_token_chain_has_28_fragments(tokens in prop::collection::vec(0u32..100, 7)) {
        let atoms: Vec<Atom> = tokens.into_iter().map(Atom).collect();
        let frags = suffix_prefixes(&list_to_impl(&atoms).unwrap()).unwrap();
        prop_assert_eq!(frags.len(), 28);
        let got: BTreeSet<_> = frags.into_iter().collect();
        let want: BTreeSet<_> =
            contiguous_subsequences(&atoms).iter().map(|s| list_to_impl(s).unwrap()).collect();
        prop_assert_eq!(got, want);
    }
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let words = rng.random_range(2..8);
    let n = rng.random_range(1..15);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=12);
            (0..len).map(|_| format!("w{}", rng.random_range(0..words))).collect()
        })
        .collect()
}

#[test]
fn index_matches_scan_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let sentences = random_corpus(&mut rng);
        let db = SentenceDb::build(&sentences, 5).unwrap();
        // all queries of length ≤ 5 that occur, plus random ones that mostly do not
        let mut queries: BTreeSet<Vec<String>> = BTreeSet::new();
        for s in &sentences {
            for q in contiguous_subsequences(s) {
                if q.len() <= 5 {
                    queries.insert(q);
                }
            }
        }
        for _ in 0..50 {
            let len = rng.random_range(1..=5);
            queries.insert((0..len).map(|_| format!("w{}", rng.random_range(0..9))).collect());
        }
        for q in &queries {
            let indexed = db.query_exact(q);
            assert_eq!(indexed, db.query_exact_scan(q), "query {q:?}");
            let ids: Vec<usize> = indexed.iter().map(|h| h.sentence_id).collect();
            let mut dedup = ids.clone();
            dedup.dedup();
            assert_eq!(ids, dedup);
            assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

/// Containment three ways: by query, by fragment membership, by brute-force subsequence.
fn check_semantics(db: &SentenceDb) {
    for (id, stored) in db.sentences().iter().enumerate() {
        let words = db.words(id);
        let frags: BTreeSet<_> = suffix_prefixes(&stored.formula).unwrap().into_iter().collect();
        for q in contiguous_subsequences(&words).into_iter().chain(
            // non-occurring lists of every length too
            (1..=words.len()).map(|n| vec!["zz".to_string(); n]),
        ) {
            let hit = db.query_exact(&q).iter().any(|h| h.sentence_id == id);
            let member = match q.iter().map(|w| db.symbols().get(w)).collect::<Option<Vec<_>>>() {
                Some(atoms) => frags.contains(&list_to_impl(&atoms).unwrap()),
                None => false,
            };
            assert_eq!(hit, member, "{q:?} in sentence {id}");
            assert_eq!(hit, is_contiguous_in(&q, &words));
        }
    }
}

#[test]
fn query_semantics_match_fragment_membership() {
    check_semantics(&toy_db());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random: Vec<Vec<String>> = (0..100)
        .map(|_| {
            let len = rng.random_range(1..=12);
            (0..len).map(|_| format!("w{}", rng.random_range(0..6))).collect()
        })
        .collect();
    let db = SentenceDb::build(&random, 5).unwrap();
    // identical sentences are stored once
    let distinct: BTreeSet<_> = random.iter().collect();
    assert_eq!(db.len(), distinct.len());
    check_semantics(&db);
}

#[test]
fn toy_queries() {
    let db = toy_db();
    assert_eq!(
        db.query_text("the cat").unwrap(),
        ["the cat sits on the mat", "the cat chases the mouse", "the dog chases the cat"]
    );
    assert_eq!(db.query_text("sits").unwrap(), ["the cat sits on the mat", "the dog sits on the log"]);
    assert_eq!(db.query_text("the dog sits").unwrap(), ["the dog sits on the log"]);
    let w = |s: &str| QueryItem::Word(s.into());
    let x = || QueryItem::Wildcard(Some("x".into()));
    let m = db.query_pattern(&[w("the"), x(), w("chases")]);
    let got: Vec<(String, String)> = m.iter().map(|p| (p.bindings["x"].clone(), db.text(p.sentence_id))).collect();
    assert_eq!(
        got,
        [
            ("cat".to_string(), "the cat chases the mouse".to_string()),
            ("dog".to_string(), "the dog chases the cat".to_string())
        ]
    );
    assert!(db.query_pattern(&[x(), x()]).is_empty());
}

fn random_text(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    let mut s = String::new();
    for _ in 0..sentences {
        let len = rng.random_range(1..20);
        for i in 0..len {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(&format!("w{}", rng.random_range(0..30)));
        }
        s.push_str(". ");
    }
    s
}

#[test]
fn fragment_count_is_linear_in_corpus_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 2..=6 {
        let c = Corpus::from_raw(&random_text(&mut rng, 200), 256, k).unwrap();
        let bound: usize = c.sentences.iter().map(|s| s.len() * (k - 1)).sum::<usize>() + c.sentences.len();
        assert!(c.training.len() <= bound, "k={k}: {} > {bound}", c.training.len());
    }
}

#[test]
fn fragments_trace_back_to_their_sentences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let toy = TOY.join(". ") + ".";
    for raw in [toy, random_text(&mut rng, 50)] {
        let c = Corpus::from_raw(&raw, 256, 5).unwrap();
        let ids: Vec<Vec<u32>> = c.sentences.iter().map(|s| c.vocab.encode(s).unwrap()).collect();
        for (frag, prov) in c.training.fragments.iter().zip(&c.training.provenance) {
            let sentence = &ids[prov.sentence];
            if frag.last() == Some(&c.vocab.eos()) {
                assert_eq!(prov.offset, 0);
                assert_eq!(&frag[..frag.len() - 1], sentence.as_slice());
            } else {
                assert!((2..=5).contains(&frag.len()));
                assert_eq!(&sentence[prov.offset..prov.offset + frag.len()], frag.as_slice());
            }
        }
    }
}

#[test]
fn corpus_build_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let raw = random_text(&mut rng, 300);
    let a = Corpus::from_raw(&raw, 256, 5).unwrap();
    let b = Corpus::from_raw(&raw, 256, 5).unwrap();
    assert_eq!(a.vocab.to_file_string(), b.vocab.to_file_string());
    assert_eq!(a.fragments_file(), b.fragments_file());
    assert_eq!(a.sentences_file(), b.sentences_file());
}

#[test]
fn toy_corpus_shape() {
    let c = Corpus::from_raw(&(TOY.join(". ") + "."), corpus::DEFAULT_MAX_SENTENCE_LEN, 5).unwrap();
    assert_eq!(c.sentences.len(), 4);
    assert_eq!(c.vocab.len(), 11);
    let ids: Vec<Vec<u32>> = c.sentences.iter().map(|s| c.vocab.encode(s).unwrap()).collect();
    let again = enumerate_fragments(&ids, c.vocab.eos(), 5, 256).unwrap();
    assert_eq!(again, c.training);
}
