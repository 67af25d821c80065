//! Measurements: span containment under marked vs. unmarked revision with a
//! one-sided sign test, sentence alignment and pairwise scoring of drafts,
//! and simple draft statistics.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::{GenerationError, Reviser};
use crate::text::{self, tokenize, MarkedText, Span};

pub const FOCUS_K: usize = 10;
pub const MIN_SPAN_TOKENS: usize = 2;
pub const MAX_SPAN_TOKENS: usize = 6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sign test undefined: all {0} pairs are ties")]
    AllTies(usize),
    #[error("sign test undefined: no pairs")]
    NoPairs,
    #[error("reference text has no sentences")]
    EmptyReference,
    #[error("pair metric failed on pairs {pairs:?}: {first}")]
    MetricFailed { pairs: Vec<usize>, first: String },
    #[error("word vector file line {line}: {message}")]
    Vectors { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

fn contains_run<S: AsRef<str>>(haystack: &[S], needle: &[S]) -> bool {
    needle.is_empty()
        || haystack.windows(needle.len()).any(|w| w.iter().zip(needle).all(|(a, b)| a.as_ref() == b.as_ref()))
}

/// Number of outputs containing `x`'s tokens `span` as a contiguous run.
pub fn containment_score<S: AsRef<str>>(x: &[S], span: Span, outputs: &[Vec<S>]) -> usize {
    let needle = &x[span.as_range()];
    outputs.iter().filter(|o| contains_run(o, needle)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub n: usize,
    /// Pairs whose first element is smaller.
    pub k: usize,
    pub p_value: f64,
}

/// `P[X >= k]` for `X ~ Binomial(n, 1/2)`. Exact up to the final rounding
/// for `n <= 120`; summed in log space beyond.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if n <= 120 {
        let mut c: u128 = 1;
        let mut tail: u128 = 0;
        for i in 0..=n {
            if i >= k {
                tail += c;
            }
            if i < n {
                c = c * (n - i) as u128 / (i + 1) as u128;
            }
        }
        return tail as f64 / 2f64.powi(n as i32);
    }
    let mut ln_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut tail = 0.0;
    for i in 0..=n {
        if i >= k {
            tail += ln_pmf.exp();
        }
        if i < n {
            ln_pmf += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
    }
    tail.min(1.0)
}

/// One-sided sign test that the first element of each pair tends to be
/// smaller. Ties are dropped.
pub fn sign_test(pairs: &[(f64, f64)]) -> Result<SignTest, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let n = pairs.iter().filter(|(a, b)| a != b).count();
    if n == 0 {
        return Err(EvalError::AllTies(pairs.len()));
    }
    let k = pairs.iter().filter(|(a, b)| a < b).count();
    Ok(SignTest { n, k, p_value: binomial_upper_tail(n, k) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusPair {
    pub sentence: usize,
    pub span: [usize; 2],
    pub r: usize,
    pub r_prime: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusResult {
    pub pairs: Vec<FocusPair>,
    /// Sentences too short for a span.
    pub skipped: usize,
}

/// All spans of 2 to 6 tokens in a sentence of `len` tokens.
pub fn legal_spans(len: usize) -> Vec<Span> {
    let mut out = Vec::new();
    for i in 1..=len {
        for l in MIN_SPAN_TOKENS..=MAX_SPAN_TOKENS {
            let j = i + l - 1;
            if j <= len {
                out.push(Span::new(i, j));
            }
        }
    }
    out
}

fn k_best_words(reviser: &dyn Reviser, source: &MarkedText, k: usize) -> Result<Vec<Vec<String>>, EvalError> {
    Ok(reviser.generate(source)?.into_iter().take(k).map(|c| text::words(&c.text)).collect())
}

/// Marks a uniformly drawn 2–6 token span in each sentence and compares
/// the containment score of the marked run's k-best outputs (`r`) with that
/// of the unmarked run (`r_prime`).
pub fn focus_experiment<S: AsRef<str>>(
    sentences: &[S],
    reviser: &dyn Reviser,
    seed: u64,
    k: usize,
) -> Result<FocusResult, EvalError> {
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (idx, s) in sentences.iter().enumerate() {
        let sent = tokenize(s.as_ref().trim());
        let spans = legal_spans(sent.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let Some(&span) = spans.choose(&mut rng) else {
            skipped += 1;
            continue;
        };
        let words = sent.owned_words();
        let marked = MarkedText::with_span(sent.clone(), span).expect("legal span");
        let plain = MarkedText::plain(sent);
        let r = containment_score(&words, span, &k_best_words(reviser, &marked, k)?);
        let r_prime = containment_score(&words, span, &k_best_words(reviser, &plain, k)?);
        pairs.push(FocusPair { sentence: idx, span: [span.start_token, span.end_token], r, r_prime });
    }
    Ok(FocusResult { pairs, skipped })
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len().is_multiple_of(2) { (values[m - 1] + values[m]) / 2.0 } else { values[m] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub r: Option<f64>,
    pub r_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub r: usize,
    pub r_prime: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusReport {
    pub pairs: Vec<PairScores>,
    /// `None` when the test is undefined (no pairs, or all ties).
    pub p_value: Option<f64>,
    pub medians: Medians,
    pub n: usize,
    pub skipped: usize,
    pub non_ties: usize,
    pub r_smaller: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FocusReport {
    pub fn from_result(result: &FocusResult) -> Self {
        let pairs: Vec<(f64, f64)> = result.pairs.iter().map(|p| (p.r as f64, p.r_prime as f64)).collect();
        let mut warnings = Vec::new();
        let test = sign_test(&pairs);
        if let Err(e) = &test {
            warnings.push(e.to_string());
        }
        if result.pairs.len() < 10 {
            warnings.push(format!("insufficient data: only {} sentence(s) evaluated", result.pairs.len()));
        }
        let mut rs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut rps: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let test = test.ok();
        Self {
            pairs: result.pairs.iter().map(|p| PairScores { r: p.r, r_prime: p.r_prime }).collect(),
            p_value: test.map(|t| t.p_value),
            medians: Medians { r: median(&mut rs), r_prime: median(&mut rps) },
            n: result.pairs.len(),
            skipped: result.skipped,
            non_ties: test.map_or(0, |t| t.n),
            r_smaller: test.map_or(0, |t| t.k),
            warnings,
        }
    }

    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x}"));
        let mut s = String::new();
        s.push_str(&format!("{:<22}{}\n", "sentences", self.n));
        s.push_str(&format!("{:<22}{}\n", "skipped", self.skipped));
        s.push_str(&format!("{:<22}{}\n", "median r", fmt(self.medians.r)));
        s.push_str(&format!("{:<22}{}\n", "median r'", fmt(self.medians.r_prime)));
        s.push_str(&format!("{:<22}{}\n", "non-tied pairs", self.non_ties));
        s.push_str(&format!("{:<22}{}\n", "r < r'", self.r_smaller));
        s.push_str(&format!(
            "{:<22}{}\n",
            "sign test p",
            self.p_value.map_or("undefined".to_string(), |p| if p < 1e-4 {
                format!("{p:.3e}")
            } else {
                format!("{p:.4}")
            })
        ));
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

/// Maps tokenized sentences to vectors. Batched so that embedders with a
/// corpus-dependent basis can build it once.
pub trait Embedder {
    fn embed(&self, sentences: &[Vec<String>]) -> Vec<Vec<f64>>;
}

fn is_content(tok: &str) -> bool {
    tok.chars().any(char::is_alphanumeric)
}

/// L2-normalized term counts over the batch vocabulary, case-folded,
/// punctuation ignored.
#[derive(Debug, Default, Clone, Copy)]
pub struct BagOfWords;

impl Embedder for BagOfWords {
    fn embed(&self, sentences: &[Vec<String>]) -> Vec<Vec<f64>> {
        let mut index: HashMap<String, usize> = HashMap::new();
        for s in sentences {
            for t in s.iter().filter(|t| is_content(t)) {
                let n = index.len();
                index.entry(t.to_lowercase()).or_insert(n);
            }
        }
        sentences
            .iter()
            .map(|s| {
                let mut v = vec![0.0; index.len()];
                for t in s.iter().filter(|t| is_content(t)) {
                    v[index[&t.to_lowercase()]] += 1.0;
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect()
    }
}

/// Pretrained word vectors; a sentence maps to the mean vector of its known
/// tokens.
#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    /// Reads `token v1 ... vd` lines. A leading `count dim` header line is
    /// accepted and skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut wv = WordVectors::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vals: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| EvalError::Vectors { line: i + 1, message: e.to_string() })?;
            if i == 0 && vals.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            if wv.dim == 0 {
                wv.dim = vals.len();
            } else if vals.len() != wv.dim {
                return Err(EvalError::Vectors {
                    line: i + 1,
                    message: format!("expected {} values, found {}", wv.dim, vals.len()),
                });
            }
            wv.vectors.insert(word.to_string(), vals);
        }
        Ok(wv)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Embedder for WordVectors {
    fn embed(&self, sentences: &[Vec<String>]) -> Vec<Vec<f64>> {
        sentences
            .iter()
            .map(|s| {
                let mut sum = vec![0.0; self.dim];
                let mut n = 0usize;
                for t in s {
                    if let Some(v) = self.vectors.get(t).or_else(|| self.vectors.get(&t.to_lowercase())) {
                        sum.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                        n += 1;
                    }
                }
                if n > 0 {
                    sum.iter_mut().for_each(|a| *a /= n as f64);
                }
                sum
            })
            .collect()
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub draft: usize,
    pub reference: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAlignment {
    pub pairs: Vec<AlignedPair>,
}

fn sentence_texts(text: &str) -> Vec<String> {
    text::sentence_ranges(text).into_iter().map(|r| text[r].to_string()).collect()
}

/// Aligns each draft sentence with its most similar reference sentence;
/// ties go to the earliest reference sentence.
pub fn align_sentences(draft: &str, reference: &str, embedder: &dyn Embedder) -> Result<SentenceAlignment, EvalError> {
    let (d, r) = (sentence_texts(draft), sentence_texts(reference));
    align_sentence_lists(&d, &r, embedder)
}

pub fn align_sentence_lists<S: AsRef<str>>(
    draft: &[S],
    reference: &[S],
    embedder: &dyn Embedder,
) -> Result<SentenceAlignment, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let toks: Vec<Vec<String>> = draft.iter().chain(reference).map(|s| text::words(s.as_ref())).collect();
    let vecs = embedder.embed(&toks);
    let (dv, rv) = vecs.split_at(draft.len());
    let pairs = dv
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut best = AlignedPair { draft: i, reference: 0, similarity: cosine(d, &rv[0]) };
            for (j, r) in rv.iter().enumerate().skip(1) {
                let s = cosine(d, r);
                if s > best.similarity {
                    best = AlignedPair { draft: i, reference: j, similarity: s };
                }
            }
            best
        })
        .collect();
    Ok(SentenceAlignment { pairs })
}

/// Scores a candidate sentence against a reference sentence.
pub trait PairMetric {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, String>;
}

/// Token-level F1 between two sentences (multiset overlap, case-sensitive).
/// A proxy for learned metrics, not a substitute.
#[derive(Debug, Default, Clone, Copy)]
pub struct TokenF1;

impl PairMetric for TokenF1 {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, String> {
        let c = text::words(candidate);
        let r = text::words(reference);
        if c.is_empty() && r.is_empty() {
            return Ok(1.0);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &r {
            *counts.entry(t).or_default() += 1;
        }
        let mut overlap = 0usize;
        for t in &c {
            if let Some(n) = counts.get_mut(t.as_str()) {
                if *n > 0 {
                    *n -= 1;
                    overlap += 1;
                }
            }
        }
        if overlap == 0 {
            return Ok(0.0);
        }
        let p = overlap as f64 / c.len() as f64;
        let rec = overlap as f64 / r.len() as f64;
        Ok(2.0 * p * rec / (p + rec))
    }
}

/// Mean pair score over the alignment of `draft` to `reference`.
pub fn score_drafts(
    draft: &str,
    reference: &str,
    metric: &dyn PairMetric,
    embedder: &dyn Embedder,
) -> Result<f64, EvalError> {
    let (d, r) = (sentence_texts(draft), sentence_texts(reference));
    let alignment = align_sentence_lists(&d, &r, embedder)?;
    let mut total = 0.0;
    let mut failed = Vec::new();
    let mut first = None;
    for p in &alignment.pairs {
        match metric.score(&d[p.draft], &r[p.reference]) {
            Ok(s) => total += s,
            Err(e) => {
                failed.push(p.draft);
                first.get_or_insert(e);
            }
        }
    }
    if !failed.is_empty() {
        return Err(EvalError::MetricFailed { pairs: failed, first: first.unwrap_or_default() });
    }
    if alignment.pairs.is_empty() {
        return Ok(0.0);
    }
    Ok(total / alignment.pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftStats {
    pub length: usize,
    pub word_types: usize,
}

pub fn draft_stats(text: &str) -> DraftStats {
    let toks: Vec<String> = text.lines().flat_map(text::words).collect();
    let types: HashSet<&str> = toks.iter().map(String::as_str).collect();
    DraftStats { length: toks.len(), word_types: types.len() }
}

const SUBJECTS: &[&str] = &[
    "the model",
    "our method",
    "the proposed approach",
    "this system",
    "the baseline",
    "the encoder",
    "the decoder",
    "our analysis",
    "the classifier",
    "the parser",
];
const VERBS: &[&str] = &[
    "improves",
    "outperforms",
    "reduces",
    "increases",
    "captures",
    "requires",
    "achieves",
    "handles",
    "predicts",
    "generates",
];
const OBJECTS: &[&str] = &[
    "the accuracy",
    "the error rate",
    "strong results",
    "the training cost",
    "long sentences",
    "rare words",
    "the final score",
    "useful features",
    "the annotation effort",
    "new examples",
];
const TAILS: &[&str] = &[
    "on the test set",
    "in most cases",
    "by a large margin",
    "without extra data",
    "for all languages",
    "on both tasks",
    "in our experiments",
    "at a low cost",
];
const OPENERS: &[&str] = &["", "", "", "in addition ,", "as expected ,", "however ,", "in practice ,"];

/// Sentences from a small template grammar of experimental-results prose,
/// deterministic per seed.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut parts: Vec<&str> = Vec::new();
            let opener = OPENERS[rng.random_range(0..OPENERS.len())];
            if !opener.is_empty() {
                parts.push(opener);
            }
            parts.push(SUBJECTS[rng.random_range(0..SUBJECTS.len())]);
            parts.push(VERBS[rng.random_range(0..VERBS.len())]);
            parts.push(OBJECTS[rng.random_range(0..OBJECTS.len())]);
            if rng.random_bool(0.7) {
                parts.push(TAILS[rng.random_range(0..TAILS.len())]);
            }
            let toks: Vec<&str> = parts.iter().flat_map(|p| p.split_whitespace()).chain(["."]).collect();
            let mut s = text::detokenize(&toks);
            if let Some(first) = s.get(..1) {
                let up = first.to_uppercase();
                s.replace_range(..1, &up);
            }
            s
        })
        .collect()
}
