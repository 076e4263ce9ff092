//! Continuation scoring, retrieval-first completion, and free generation.

use std::collections::HashSet;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::Vocab;
use crate::model::{ModelError, ModelParams, Scalar};
use crate::retrieval::SentenceDb;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InferenceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("word {0:?} is not in the model vocabulary")]
    UnknownWord(String),
    #[error("invalid decoding configuration: {0}")]
    InvalidConfig(String),
}

/// Log-probabilities of every next token from state `h`, computed in the model's precision.
pub fn next_log_probs<F: Scalar>(params: &ModelParams<F>, h: &[F]) -> Vec<f64> {
    let logits = params.logits(h);
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = logits.iter().map(|x| (*x - max).exp()).sum::<F>().ln() + max;
    logits.iter().map(|x| (*x - lse).to_f64().unwrap_or(f64::NAN)).collect()
}

/// Sum and per-token log-probabilities of `continuation` after running `prefix`.
pub fn score_continuation<F: Scalar>(
    params: &ModelParams<F>,
    prefix: &[u32],
    continuation: &[u32],
) -> Result<(f64, Vec<f64>), InferenceError> {
    if prefix.is_empty() {
        return Err(InferenceError::EmptyPrompt);
    }
    for &t in continuation {
        if t as usize >= params.vocab {
            return Err(ModelError::TokenOutOfRange { token: t, vocab: params.vocab }.into());
        }
    }
    let mut h = params.run(prefix)?;
    let mut per_token = Vec::with_capacity(continuation.len());
    for &c in continuation {
        per_token.push(next_log_probs(params, &h)[c as usize]);
        h = params.step(&h, c)?;
    }
    Ok((per_token.iter().sum(), per_token))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub sentence_id: usize,
    /// Match span `[start, end)` within the sentence.
    pub start: usize,
    pub end: usize,
    pub continuation: Vec<String>,
    pub total_log_prob: f64,
    pub mean_log_prob: f64,
}

impl Candidate {
    pub fn text(&self) -> String {
        self.continuation.join(" ")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Retrieval {
    /// Non-empty continuations, best first, at most `k`.
    pub ranked: Vec<Candidate>,
    /// Sentences where the query ends the sentence, one per sentence.
    pub exact: Vec<Candidate>,
}

impl Retrieval {
    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty() && self.exact.is_empty()
    }
}

/// Enumerate every occurrence of `query` in `db`, deduplicate the suffixes that follow it
/// by text, and rank them by mean per-token log-probability (ties: lower sentence id).
pub fn retrieval_first<F: Scalar>(
    params: &ModelParams<F>,
    vocab: &Vocab,
    db: &SentenceDb,
    query: &[String],
    k: usize,
) -> Result<Retrieval, InferenceError> {
    if query.is_empty() {
        return Err(InferenceError::EmptyPrompt);
    }
    let occurrences = db.occurrences(query);
    if occurrences.is_empty() {
        return Ok(Retrieval::default());
    }
    let prefix = encode(vocab, query)?;
    let mut seen_text = HashSet::new();
    let mut exact_ids = HashSet::new();
    let mut out = Retrieval::default();
    for occ in occurrences {
        let words = db.words(occ.sentence_id);
        let end = occ.start + query.len();
        let continuation = words[end..].to_vec();
        if continuation.is_empty() {
            if exact_ids.insert(occ.sentence_id) {
                out.exact.push(Candidate {
                    sentence_id: occ.sentence_id,
                    start: occ.start,
                    end,
                    continuation,
                    total_log_prob: 0.0,
                    mean_log_prob: 0.0,
                });
            }
            continue;
        }
        if !seen_text.insert(continuation.join(" ")) {
            continue;
        }
        let (total, per_token) = score_continuation(params, &prefix, &encode(vocab, &continuation)?)?;
        out.ranked.push(Candidate {
            sentence_id: occ.sentence_id,
            start: occ.start,
            end,
            continuation,
            total_log_prob: total,
            mean_log_prob: total / per_token.len().max(1) as f64,
        });
    }
    out.ranked.sort_by(|a, b| {
        b.mean_log_prob
            .total_cmp(&a.mean_log_prob)
            .then(a.sentence_id.cmp(&b.sentence_id))
            .then(a.start.cmp(&b.start))
    });
    out.ranked.truncate(k.max(1));
    Ok(out)
}

fn encode(vocab: &Vocab, words: &[String]) -> Result<Vec<u32>, InferenceError> {
    words.iter().map(|w| vocab.id(w).ok_or_else(|| InferenceError::UnknownWord(w.clone()))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
    Beam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub temperature: f64,
    /// 0 disables the cutoff.
    pub top_k: usize,
    pub beam_width: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { mode: DecodeMode::Greedy, temperature: 1.0, top_k: 0, beam_width: 4, max_new_tokens: 32, seed: 0 }
    }
}

/// Special token ids the decoder needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Specials {
    pub eos: u32,
    pub pad: u32,
}

impl From<&Vocab> for Specials {
    fn from(v: &Vocab) -> Self {
        Self { eos: v.eos(), pad: v.pad() }
    }
}

/// Continue `prompt` one token at a time. The output excludes the prompt and a final EOS.
pub fn generate_free<F: Scalar>(
    params: &ModelParams<F>,
    specials: Specials,
    prompt: &[u32],
    cfg: &DecodeConfig,
) -> Result<Vec<u32>, InferenceError> {
    if prompt.is_empty() {
        return Err(InferenceError::EmptyPrompt);
    }
    let h = params.run(prompt)?;
    match cfg.mode {
        DecodeMode::Greedy => Ok(greedy(params, specials, h, cfg.max_new_tokens)?),
        DecodeMode::Sample => sample(params, specials, h, cfg),
        DecodeMode::Beam => {
            if cfg.beam_width == 0 {
                return Err(InferenceError::InvalidConfig("beam width must be at least 1".into()));
            }
            Ok(beam(params, specials, h, cfg.beam_width, cfg.max_new_tokens)?)
        }
    }
}

fn greedy<F: Scalar>(
    params: &ModelParams<F>,
    specials: Specials,
    mut h: Vec<F>,
    max_new: usize,
) -> Result<Vec<u32>, ModelError> {
    let mut out = Vec::new();
    while out.len() < max_new {
        let lp = next_log_probs(params, &h);
        let mut best = None;
        for (id, &x) in lp.iter().enumerate() {
            if id as u32 == specials.pad {
                continue;
            }
            // strict comparison keeps the lowest id on ties
            if best.is_none_or(|(_, bx)| x > bx) {
                best = Some((id as u32, x));
            }
        }
        let Some((tok, _)) = best else { break };
        if tok == specials.eos {
            break;
        }
        out.push(tok);
        h = params.step(&h, tok)?;
    }
    Ok(out)
}

fn sample<F: Scalar>(
    params: &ModelParams<F>,
    specials: Specials,
    mut h: Vec<F>,
    cfg: &DecodeConfig,
) -> Result<Vec<u32>, InferenceError> {
    if !(cfg.temperature > 0.0) {
        return Err(InferenceError::InvalidConfig("temperature must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    while out.len() < cfg.max_new_tokens {
        let lp = next_log_probs(params, &h);
        let mut support: Vec<(u32, f64)> = lp
            .iter()
            .enumerate()
            .filter(|(id, _)| *id as u32 != specials.pad)
            .map(|(id, &x)| (id as u32, x / cfg.temperature))
            .collect();
        if cfg.top_k > 0 && cfg.top_k < support.len() {
            support.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            support.truncate(cfg.top_k);
        }
        let max = support.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = support.iter().map(|s| (s.1 - max).exp()).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| InferenceError::InvalidConfig(format!("degenerate distribution: {e}")))?;
        let tok = support[dist.sample(&mut rng)].0;
        if tok == specials.eos {
            break;
        }
        out.push(tok);
        h = params.step(&h, tok)?;
    }
    Ok(out)
}

struct Hypothesis<F> {
    tokens: Vec<u32>,
    log_prob: f64,
    state: Vec<F>,
    finished: bool,
}

impl<F> Hypothesis<F> {
    fn mean(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }
}

/// Width-`width` beam search on mean log-probability. EOS counts toward the score of a
/// finished hypothesis but is not part of its output. Ties go to the lexicographically
/// smaller token sequence, so width 1 reproduces greedy decoding.
fn beam<F: Scalar>(
    params: &ModelParams<F>,
    specials: Specials,
    h: Vec<F>,
    width: usize,
    max_new: usize,
) -> Result<Vec<u32>, ModelError> {
    let mut beams = vec![Hypothesis { tokens: Vec::new(), log_prob: 0.0, state: h, finished: false }];
    for _ in 0..max_new {
        if beams.iter().all(|b| b.finished) {
            break;
        }
        // (parent, next token or None to carry a finished beam, total log-prob, tokens)
        let mut ranked: Vec<(usize, Option<u32>, f64, Vec<u32>)> = Vec::new();
        for (bi, hyp) in beams.iter().enumerate() {
            if hyp.finished {
                ranked.push((bi, None, hyp.log_prob, hyp.tokens.clone()));
                continue;
            }
            for (id, &x) in next_log_probs(params, &hyp.state).iter().enumerate() {
                if id as u32 == specials.pad {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(id as u32);
                ranked.push((bi, Some(id as u32), hyp.log_prob + x, tokens));
            }
        }
        let mean = |e: &(usize, Option<u32>, f64, Vec<u32>)| e.2 / e.3.len().max(1) as f64;
        ranked.sort_by(|a, b| mean(b).total_cmp(&mean(a)).then_with(|| a.3.cmp(&b.3)));
        ranked.truncate(width);

        let mut next = Vec::with_capacity(ranked.len());
        for (bi, tok, log_prob, tokens) in ranked {
            let parent = &beams[bi];
            let (state, finished) = match tok {
                None => (parent.state.clone(), true),
                Some(t) if t == specials.eos => (parent.state.clone(), true),
                Some(t) => (params.step(&parent.state, t)?, false),
            };
            next.push(Hypothesis { tokens, log_prob, state, finished });
        }
        beams = next;
    }
    let best = beams
        .into_iter()
        .min_by(|a, b| b.mean().total_cmp(&a.mean()).then_with(|| a.tokens.cmp(&b.tokens)))
        .expect("at least one beam");
    let mut tokens = best.tokens;
    if best.finished && tokens.last() == Some(&specials.eos) {
        tokens.pop();
    }
    Ok(tokens)
}
