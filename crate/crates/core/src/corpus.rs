//! Raw book text to sentences, vocabulary, and the fragment-augmented training set.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

pub const DEFAULT_MAX_SENTENCE_LEN: usize = 256;
pub const DEFAULT_MAX_FRAGMENT_LEN: usize = 5;
pub const EOS: &str = "<eos>";
pub const PAD: &str = "<pad>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus has no sentences")]
    EmptyCorpus,
    #[error("fragment length cap must be at least 2, got {0}")]
    InvalidFragmentLen(usize),
    #[error("malformed vocabulary file: {0}")]
    MalformedVocab(String),
}

/// Body text plus whether the boilerplate markers were found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stripped {
    pub body: String,
    pub warning: Option<String>,
}

/// Keep the lines strictly between the first `*** START OF` line and the next
/// `*** END OF` line. Without both markers the text comes back unchanged, with a warning.
pub fn strip_boilerplate(raw: &str) -> Stripped {
    let lines: Vec<&str> = raw.lines().collect();
    let start = lines.iter().position(|l| l.contains("*** START OF"));
    let end = start.and_then(|s| lines[s + 1..].iter().position(|l| l.contains("*** END OF")).map(|e| s + 1 + e));
    match (start, end) {
        (Some(s), Some(e)) => Stripped { body: lines[s + 1..e].join("\n"), warning: None },
        _ => Stripped {
            body: raw.to_string(),
            warning: Some("boilerplate markers not found; using the whole text".to_string()),
        },
    }
}

/// Split on `.`, `!`, `?`, lowercase, keep only `[a-z0-9_' ]`, and cap at `max_len` words.
pub fn split_sentences(body: &str, max_len: usize) -> Vec<Vec<String>> {
    body.split(['.', '!', '?'])
        .filter_map(|chunk| {
            let cleaned: String = chunk
                .chars()
                .flat_map(char::to_lowercase)
                .filter_map(|c| match c {
                    'a'..='z' | '0'..='9' | '_' | '\'' => Some(c),
                    c if c.is_whitespace() => Some(' '),
                    _ => None,
                })
                .collect();
            let words: Vec<String> = cleaned.split_whitespace().take(max_len).map(str::to_string).collect();
            (!words.is_empty()).then_some(words)
        })
        .collect()
}

/// Dense word ids in first-occurrence order, followed by the two reserved ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn build(sentences: &[Vec<String>]) -> Result<Self, CorpusError> {
        if sentences.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for w in sentences.iter().flatten() {
            if !index.contains_key(w) {
                index.insert(w.clone(), words.len() as u32);
                words.push(w.clone());
            }
        }
        for special in [EOS, PAD] {
            index.insert(special.to_string(), words.len() as u32);
            words.push(special.to_string());
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn eos(&self) -> u32 {
        (self.words.len() - 2) as u32
    }

    pub fn pad(&self) -> u32 {
        (self.words.len() - 1) as u32
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Option<Vec<u32>> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.word(i).to_string()).collect()
    }

    /// One word per line; line number is the id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn from_file_string(text: &str) -> Result<Self, CorpusError> {
        let words: Vec<String> = text.lines().map(str::to_string).collect();
        let n = words.len();
        if n < 2 || words[n - 2] != EOS || words[n - 1] != PAD {
            return Err(CorpusError::MalformedVocab("last two lines must be <eos> and <pad>".into()));
        }
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(CorpusError::MalformedVocab(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self { words, index })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub sentence: usize,
    pub offset: usize,
}

/// Globally deduplicated training sequences with the position each first came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainingSet {
    pub fragments: Vec<Vec<u32>>,
    pub provenance: Vec<Provenance>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    /// Number of next-token predictions one pass over the set makes.
    pub fn prediction_count(&self) -> usize {
        self.fragments.iter().map(|f| f.len().saturating_sub(1)).sum()
    }
}

/// Every contiguous fragment of 2..=`max_frag` tokens, plus every sentence (capped at
/// `max_len` tokens) followed by EOS. Single tokens carry no prediction target and are
/// left out.
pub fn enumerate_fragments(
    sentences: &[Vec<u32>],
    eos: u32,
    max_frag: usize,
    max_len: usize,
) -> Result<TrainingSet, CorpusError> {
    if max_frag < 2 {
        return Err(CorpusError::InvalidFragmentLen(max_frag));
    }
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut set = TrainingSet::default();
    let mut push = |frag: Vec<u32>, prov: Provenance, set: &mut TrainingSet| {
        if !seen.contains(&frag) {
            seen.insert(frag.clone());
            set.fragments.push(frag);
            set.provenance.push(prov);
        }
    };
    for (si, sentence) in sentences.iter().enumerate() {
        let sentence = &sentence[..sentence.len().min(max_len)];
        let n = sentence.len();
        for i in 0..n {
            for j in i + 2..=(i + max_frag).min(n) {
                push(sentence[i..j].to_vec(), Provenance { sentence: si, offset: i }, &mut set);
            }
        }
        if n > 0 {
            let mut full = sentence.to_vec();
            full.push(eos);
            push(full, Provenance { sentence: si, offset: 0 }, &mut set);
        }
    }
    Ok(set)
}

/// Everything the corpus stage produces from one raw text.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
    pub vocab: Vocab,
    pub training: TrainingSet,
    pub warning: Option<String>,
}

impl Corpus {
    pub fn from_raw(raw: &str, max_len: usize, max_frag: usize) -> Result<Self, CorpusError> {
        let stripped = strip_boilerplate(raw);
        let sentences = split_sentences(&stripped.body, max_len);
        Self::from_sentences(sentences, max_len, max_frag, stripped.warning)
    }

    pub fn from_sentences(
        sentences: Vec<Vec<String>>,
        max_len: usize,
        max_frag: usize,
        warning: Option<String>,
    ) -> Result<Self, CorpusError> {
        let vocab = Vocab::build(&sentences)?;
        let ids: Vec<Vec<u32>> =
            sentences.iter().map(|s| vocab.encode(s).expect("vocab covers corpus")).collect();
        let training = enumerate_fragments(&ids, vocab.eos(), max_frag, max_len)?;
        Ok(Self { sentences, vocab, training, warning })
    }

    /// One space-joined sentence per line.
    pub fn sentences_file(&self) -> String {
        let mut s = String::new();
        for words in &self.sentences {
            s.push_str(&words.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn fragments_file(&self) -> String {
        let mut s = String::new();
        for frag in &self.training.fragments {
            s.push_str(&self.vocab.decode(frag).join(" "));
            s.push('\n');
        }
        s
    }
}
