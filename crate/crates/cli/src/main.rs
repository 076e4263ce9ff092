//! `arrow`: prove formulas, build corpora, train, and query.
//!
//! Exit status: 0 success or provable, 1 valid but negative (not provable, no results),
//! 2 usage, configuration, or I/O error.

mod manifest;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use arrow_core::corpus::{self, Corpus, Vocab, EOS};
use arrow_core::formula::{parse_formula, Symbols};
use arrow_core::inference::{generate_free, retrieval_first, DecodeConfig, DecodeMode, Specials};
use arrow_core::model::{load_checkpoint, save_checkpoint, train, vocab_path, ModelParams, TrainConfig};
use arrow_core::prover::{beta_normalize, prove, prove_with_term};
use arrow_core::retrieval::{self, QueryItem, SentenceDb};
use clap::{Args, Parser, Subcommand};

use manifest::{parse_config, sha256_hex, Manifest};

const SENTENCES_FILE: &str = "sentences.txt";
const VOCAB_FILE: &str = "vocab.txt";
const FRAGMENTS_FILE: &str = "fragments.txt";
const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Parser)]
#[command(name = "arrow", version, about = "Implicational retrieval and the Arrow language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide provability of an implicational formula.
    Prove {
        formula: String,
        /// Print the synthesized proof term.
        #[arg(long)]
        term: bool,
        /// Print the β-normal form of the proof term.
        #[arg(long)]
        normalize: bool,
    },
    /// Corpus preparation.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Train a model on a prepared corpus.
    Train(TrainArgs),
    /// Retrieval-first completion, or purely symbolic lookup with --symbolic.
    Query(QueryArgs),
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Turn raw text into sentence, vocabulary, and fragment files.
    Build(BuildArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    max_frag: Option<usize>,
    /// `key=value` file supplying any flag; flags on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Query text; omit with --repl.
    query: Option<String>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Pure fragment lookup; `?name` and `_` are wildcards.
    #[arg(long)]
    symbolic: bool,
    /// Read one query per line from stdin.
    #[arg(long)]
    repl: bool,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    /// greedy, sample, or beam
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    max_new: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the run manifest to this path.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String, std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Io(what, e) => write!(f, "{what}: {e}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}", path.display()), e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("writing {}", path.display()), e))
}

/// Flag value, else config-file value, else default.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => parse_config(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
            None => BTreeMap::new(),
        };
        Ok(Self { file })
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(raw) => raw.parse().map_err(|_| usage(format!("config key {key}: cannot parse {raw:?}"))),
            None => Ok(default),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prove { formula, term, normalize } => cmd_prove(&formula, term, normalize),
        Command::Corpus { action: CorpusAction::Build(args) } => cmd_corpus_build(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Query(args) => cmd_query(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_prove(text: &str, show_term: bool, normalize: bool) -> Result<u8, CliError> {
    let mut symbols = Symbols::new();
    let goal = parse_formula(text, &mut symbols).map_err(|e| usage(e.to_string()))?;
    if !prove(&goal) {
        println!("not provable");
        return Ok(1);
    }
    println!("provable");
    if show_term || normalize {
        let term = prove_with_term(&goal).expect("provable formulas have terms");
        if show_term {
            println!("term: {term}");
        }
        if normalize {
            let normal = beta_normalize(&term).map_err(|e| usage(e.to_string()))?;
            println!("normal: {normal}");
        }
    }
    Ok(0)
}

fn cmd_corpus_build(args: &BuildArgs) -> Result<u8, CliError> {
    let settings = Settings::load(args.config.as_deref())?;
    let max_len = settings.pick(args.max_len, "max-len", corpus::DEFAULT_MAX_SENTENCE_LEN)?;
    let max_frag = settings.pick(args.max_frag, "max-frag", corpus::DEFAULT_MAX_FRAGMENT_LEN)?;
    if max_len == 0 {
        return Err(usage("--max-len must be positive"));
    }
    let mut manifest = Manifest::new("corpus build");
    manifest.set("input", args.input.display());
    manifest.set("max-len", max_len);
    manifest.set("max-frag", max_frag);
    let raw = manifest.time("read", || read(&args.input))?;
    manifest.set("sha256.input", sha256_hex(raw.as_bytes()));
    let built = manifest.time("build", || Corpus::from_raw(&raw, max_len, max_frag));
    let built = built.map_err(|e| usage(e.to_string()))?;
    if let Some(w) = &built.warning {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::Io(format!("creating {}", args.out.display()), e))?;
    let files = [
        (SENTENCES_FILE, built.sentences_file()),
        (VOCAB_FILE, built.vocab.to_file_string()),
        (FRAGMENTS_FILE, built.fragments_file()),
    ];
    for (name, contents) in &files {
        write(&args.out.join(name), contents)?;
        manifest.set(&format!("sha256.{name}"), sha256_hex(contents.as_bytes()));
    }
    manifest.set("sentences", built.sentences.len());
    manifest.set("vocab", built.vocab.len());
    manifest.set("fragments", built.training.len());
    manifest.finish();
    write(&args.out.join(MANIFEST_FILE), &manifest.render())?;
    println!(
        "{} sentences, {} words + 2 specials, {} fragments",
        built.sentences.len(),
        built.vocab.len() - 2,
        built.training.len()
    );
    Ok(0)
}

/// Vocabulary and training sequences of a prepared corpus directory.
fn load_corpus(dir: &Path, settings: &Settings) -> Result<(Vocab, Vec<Vec<u32>>, Vec<Vec<String>>), CliError> {
    let vocab = Vocab::from_file_string(&read(&dir.join(VOCAB_FILE))?).map_err(|e| usage(e.to_string()))?;
    let sentences: Vec<Vec<String>> = read(&dir.join(SENTENCES_FILE))?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    let frag_path = dir.join(FRAGMENTS_FILE);
    let fragments = if frag_path.exists() {
        let mut out = Vec::new();
        for (n, line) in read(&frag_path)?.lines().enumerate() {
            let words: Vec<&str> = line.split_whitespace().collect();
            let ids = vocab
                .encode(&words)
                .ok_or_else(|| usage(format!("{}:{}: word not in vocabulary", frag_path.display(), n + 1)))?;
            out.push(ids);
        }
        out
    } else {
        let max_len = settings.pick(None, "max-len", corpus::DEFAULT_MAX_SENTENCE_LEN)?;
        let max_frag = settings.pick(None, "max-frag", corpus::DEFAULT_MAX_FRAGMENT_LEN)?;
        let ids: Vec<Vec<u32>> = sentences
            .iter()
            .map(|s| vocab.encode(s).ok_or_else(|| usage("sentence word missing from vocabulary")))
            .collect::<Result<_, _>>()?;
        corpus::enumerate_fragments(&ids, vocab.eos(), max_frag, max_len).map_err(|e| usage(e.to_string()))?.fragments
    };
    Ok((vocab, fragments, sentences))
}

fn cmd_train(args: &TrainArgs) -> Result<u8, CliError> {
    let settings = Settings::load(args.config.as_deref())?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        dim: settings.pick(args.d, "d", defaults.dim)?,
        rank: settings.pick(args.r, "r", defaults.rank)?,
        epochs: settings.pick(args.epochs, "epochs", defaults.epochs)?,
        seed: settings.pick(args.seed, "seed", defaults.seed)?,
        learning_rate: settings.pick(args.lr, "lr", defaults.learning_rate)?,
        warmup_steps: settings.pick(args.warmup, "warmup", defaults.warmup_steps)?,
        batch_size: settings.pick(args.batch_size, "batch-size", defaults.batch_size)?,
        weight_decay: settings.pick(args.weight_decay, "weight-decay", defaults.weight_decay)?,
        grad_clip: settings.pick(args.clip, "clip", defaults.grad_clip)?,
        ..defaults
    };
    let mut manifest = Manifest::new("train");
    manifest.set("corpus", args.corpus.display());
    for (k, v) in [
        ("d", config.dim.to_string()),
        ("r", config.rank.to_string()),
        ("epochs", config.epochs.to_string()),
        ("seed", config.seed.to_string()),
        ("lr", config.learning_rate.to_string()),
        ("warmup", config.warmup_steps.to_string()),
        ("batch-size", config.batch_size.to_string()),
        ("weight-decay", config.weight_decay.to_string()),
        ("clip", config.grad_clip.to_string()),
        ("adam-beta1", config.beta1.to_string()),
        ("adam-beta2", config.beta2.to_string()),
        ("adam-eps", config.adam_eps.to_string()),
    ] {
        manifest.set(k, v);
    }
    for name in [SENTENCES_FILE, VOCAB_FILE, FRAGMENTS_FILE] {
        let p = args.corpus.join(name);
        if p.exists() {
            manifest.digest_file(name, &p).map_err(|e| CliError::Io(format!("reading {}", p.display()), e))?;
        }
    }
    let (vocab, fragments, _) = manifest.time("load", || load_corpus(&args.corpus, &settings))?;
    let mut params = ModelParams::<f32>::init(vocab.len(), config.dim, config.rank, config.seed)
        .map_err(|e| usage(e.to_string()))?;

    let started = Instant::now();
    let mut log = String::new();
    let report = if config.epochs == 0 {
        None
    } else {
        let r = train(&mut params, &fragments, vocab.pad(), &config, |epoch, loss| {
            let line = format!("{} {:.6} {:.3}", epoch + 1, loss, started.elapsed().as_secs_f64());
            println!("{line}");
            log.push_str(&line);
            log.push('\n');
        })
        .map_err(|e| usage(e.to_string()))?;
        Some(r)
    };
    manifest.set("time_ms.train", started.elapsed().as_millis());
    if let Some(r) = &report {
        manifest.set("steps", r.steps);
        manifest.set("final-loss", r.loss_history.last().map_or(f64::NAN, |x| *x));
    }
    save_checkpoint(&params, &vocab, &args.out).map_err(|e| usage(e.to_string()))?;
    let bytes = std::fs::read(&args.out).map_err(|e| CliError::Io(format!("reading {}", args.out.display()), e))?;
    manifest.set("sha256.checkpoint", sha256_hex(&bytes));
    manifest.set("fragments", fragments.len());
    manifest.set("vocab", vocab.len());
    manifest.finish();
    write(&sibling(&args.out, "loss"), &log)?;
    write(&sibling(&args.out, "manifest"), &manifest.render())?;
    Ok(0)
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

struct QueryContext {
    db: SentenceDb,
    model: Option<(ModelParams<f32>, Vocab)>,
    k: usize,
    decode: DecodeConfig,
}

fn cmd_query(args: &QueryArgs) -> Result<u8, CliError> {
    let settings = Settings::load(args.config.as_deref())?;
    let mut manifest = Manifest::new("query");
    let k_max = settings.pick(args.k_max, "k-max", retrieval::DEFAULT_K_MAX)?;
    let sent_path = args.corpus.join(SENTENCES_FILE);
    let text = manifest.time("load-db", || read(&sent_path))?;
    manifest.set("sha256.sentences.txt", sha256_hex(text.as_bytes()));
    let db = SentenceDb::from_lines(&text, k_max).map_err(|e| usage(e.to_string()))?;

    let model = if args.symbolic {
        None
    } else {
        let path = args.model.as_ref().ok_or_else(|| usage("--model is required unless --symbolic"))?;
        let (params, vocab) = manifest
            .time("load-model", || load_checkpoint(path))
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let corpus_vocab = read(&args.corpus.join(VOCAB_FILE))?;
        let model_vocab = read(&vocab_path(path))?;
        if sha256_hex(corpus_vocab.as_bytes()) != sha256_hex(model_vocab.as_bytes()) {
            return Err(usage("model vocabulary does not match corpus vocabulary"));
        }
        manifest.set("sha256.vocab", sha256_hex(model_vocab.as_bytes()));
        Some((params, vocab))
    };
    let mode = match settings.pick(args.mode.clone(), "mode", "greedy".to_string())?.as_str() {
        "greedy" => DecodeMode::Greedy,
        "sample" => DecodeMode::Sample,
        "beam" => DecodeMode::Beam,
        other => return Err(usage(format!("unknown decoding mode {other:?}"))),
    };
    let defaults = DecodeConfig::default();
    let decode = DecodeConfig {
        mode,
        temperature: settings.pick(args.temperature, "temperature", defaults.temperature)?,
        top_k: settings.pick(args.top_k, "top-k", defaults.top_k)?,
        beam_width: settings.pick(args.beam, "beam", defaults.beam_width)?,
        max_new_tokens: settings.pick(args.max_new, "max-new", defaults.max_new_tokens)?,
        seed: settings.pick(args.seed, "seed", defaults.seed)?,
    };
    let ctx = QueryContext { db, model, k: settings.pick(args.k, "k", 5)?, decode };
    manifest.set("symbolic", args.symbolic);
    manifest.set("k", ctx.k);
    manifest.set("k-max", k_max);
    manifest.set("seed", ctx.decode.seed);

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = if args.repl {
        let mut any = false;
        for line in std::io::stdin().lock().lines() {
            let line = line.map_err(|e| CliError::Io("reading stdin".into(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let started = Instant::now();
            any |= answer(&ctx, &line, args.symbolic, &mut out)? == 0;
            writeln!(out).ok();
            out.flush().ok();
            eprintln!("# {:.3}s", started.elapsed().as_secs_f64());
        }
        if any { 0 } else { 1 }
    } else {
        let q = args.query.as_deref().ok_or_else(|| usage("a query or --repl is required"))?;
        manifest.time("answer", || answer(&ctx, q, args.symbolic, &mut out))?
    };
    manifest.finish();
    let rendered = manifest.render();
    for line in rendered.lines() {
        eprintln!("# {line}");
    }
    if let Some(path) = &args.manifest {
        write(path, &rendered)?;
    }
    Ok(code)
}

fn answer(ctx: &QueryContext, raw: &str, symbolic: bool, out: &mut impl Write) -> Result<u8, CliError> {
    let items = retrieval::parse_pattern(raw).map_err(|e| usage(e.to_string()))?;
    let emit = |out: &mut dyn Write, s: String| {
        writeln!(out, "{s}").map_err(|e| CliError::Io("writing output".into(), e))
    };
    if symbolic {
        let has_wildcards = items.iter().any(|i| matches!(i, QueryItem::Wildcard(_)));
        if has_wildcards {
            let matches = ctx.db.query_pattern(&items);
            for m in &matches {
                let b: Vec<String> = m.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
                emit(out, format!("{}\t{}", b.join(" "), ctx.db.text(m.sentence_id)))?;
            }
            return Ok(if matches.is_empty() { 1 } else { 0 });
        }
        let hits = ctx.db.query_text(raw).map_err(|e| usage(e.to_string()))?;
        for h in &hits {
            emit(out, h.clone())?;
        }
        return Ok(if hits.is_empty() { 1 } else { 0 });
    }

    let (params, vocab) = ctx.model.as_ref().expect("model loaded for non-symbolic queries");
    let words: Vec<String> = items
        .iter()
        .map(|i| match i {
            QueryItem::Word(w) => Ok(w.clone()),
            QueryItem::Wildcard(_) => Err(usage("wildcards need --symbolic")),
        })
        .collect::<Result<_, _>>()?;
    let found = retrieval_first(params, vocab, &ctx.db, &words, ctx.k).map_err(|e| usage(e.to_string()))?;
    if !found.is_empty() {
        for (i, c) in found.ranked.iter().enumerate() {
            emit(out, format!("{}. {}\tmean={:.4} total={:.4}", i + 1, c.text(), c.mean_log_prob, c.total_log_prob))?;
        }
        for c in &found.exact {
            emit(out, format!("[exact] {}", ctx.db.text(c.sentence_id)))?;
        }
        return Ok(0);
    }

    let prompt: Vec<u32> = words.iter().filter_map(|w| vocab.id(w).filter(|&id| vocab.word(id) != EOS)).collect();
    if prompt.len() < words.len() {
        eprintln!("warning: dropped {} word(s) missing from the vocabulary", words.len() - prompt.len());
    }
    if prompt.is_empty() {
        emit(out, "[free]".to_string())?;
        return Ok(1);
    }
    let generated =
        generate_free(params, Specials::from(vocab), &prompt, &ctx.decode).map_err(|e| usage(e.to_string()))?;
    emit(out, format!("[free] {}", vocab.decode(&generated).join(" ")).trim_end().to_string())?;
    Ok(0)
}
