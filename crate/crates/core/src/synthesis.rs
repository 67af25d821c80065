//! Training-data construction: edit-mark attachment over (draft, revision)
//! pairs, the completion corpus layout, and a small seeded noiser for
//! manufacturing pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::render_tokens;
use crate::text::{insert_marks, lemma, tokenize, Span, TokenizedSentence};

pub const MAX_EDIT_RATIO: f64 = 0.4;
pub const TITLE_OMISSION_P: f64 = 0.2;
pub const END_OF_TEXT: &str = "<|endoftext|>";

const FLAGGED_WEIGHT: i64 = 10;
const UNFLAGGED_WEIGHT: i64 = -1;
const WINDOW: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("line {line}: expected draft<TAB>revision")]
    MissingTab { line: usize },
    #[error("line {line}: empty draft or revision")]
    EmptySide { line: usize },
    #[error("line {line}: {message}")]
    BadPaper { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x: TokenizedSentence,
    pub y: TokenizedSentence,
}

impl TrainingPair {
    pub fn new(x: &str, y: &str) -> Self {
        Self { x: tokenize(x), y: tokenize(y) }
    }
}

/// Parses one `draft<TAB>revision` line; `line` is 1-based, for messages.
pub fn parse_pair_line(text: &str, line: usize) -> Result<TrainingPair, SynthError> {
    let (x, y) = text.split_once('\t').ok_or(SynthError::MissingTab { line })?;
    let pair = TrainingPair::new(x.trim(), y.trim());
    if pair.x.is_empty() || pair.y.is_empty() {
        return Err(SynthError::EmptySide { line });
    }
    Ok(pair)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteFlags {
    pub c: Vec<bool>,
}

impl RewriteFlags {
    pub fn count(&self) -> usize {
        self.c.iter().filter(|&&b| b).count()
    }
}

/// `c_i` is set when no token of `y` in the window `[i-3, i+3]` (1-based,
/// clamped to `[1, M]`) shares the lemma of `x_i`.
pub fn rewrite_flags(pair: &TrainingPair) -> RewriteFlags {
    let ylemmas: Vec<String> = pair.y.tokens.iter().map(|t| lemma(&t.surface)).collect();
    let m = ylemmas.len();
    let c = pair
        .x
        .tokens
        .iter()
        .enumerate()
        .map(|(idx, t)| {
            let i = idx + 1;
            let lo = i.saturating_sub(WINDOW).max(1);
            let hi = (i + WINDOW).min(m);
            if lo > hi {
                return true;
            }
            let l = lemma(&t.surface);
            !ylemmas[lo - 1..hi].contains(&l)
        })
        .collect();
    RewriteFlags { c }
}

/// Fraction of flagged tokens.
pub fn edit_ratio(flags: &RewriteFlags) -> f64 {
    if flags.c.is_empty() {
        return 0.0;
    }
    flags.count() as f64 / flags.c.len() as f64
}

fn weight(flag: bool) -> i64 {
    if flag {
        FLAGGED_WEIGHT
    } else {
        UNFLAGGED_WEIGHT
    }
}

/// The span maximizing (weight inside) - (weight outside), with flagged
/// tokens weighing 10 and others -1. Ties go to the smallest start, then
/// the smallest end. `None` when nothing is flagged.
pub fn select_span(flags: &RewriteFlags) -> Option<(Span, i64)> {
    if flags.count() == 0 {
        return None;
    }
    let n = flags.c.len();
    let mut prefix = vec![0i64; n + 1];
    for (i, &f) in flags.c.iter().enumerate() {
        prefix[i + 1] = prefix[i] + weight(f);
    }
    let total = prefix[n];
    let mut best: Option<(Span, i64)> = None;
    for a in 1..=n {
        for b in a..=n {
            let inside = prefix[b] - prefix[a - 1];
            let value = inside - (total - inside);
            if best.is_none_or(|(_, v)| value > v) {
                best = Some((Span::new(a, b), value));
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum MarkBranch {
    Marked { start: usize, end: usize },
    TooManyEdits,
    NothingRewritten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPair {
    pub text: String,
    pub ratio: f64,
    pub branch: MarkBranch,
}

/// Marks the draft when its edit ratio is at most 0.4 and something was
/// rewritten; otherwise returns the draft unchanged.
pub fn attach_marks(pair: &TrainingPair) -> MarkedPair {
    let flags = rewrite_flags(pair);
    let ratio = edit_ratio(&flags);
    let unchanged = |branch| MarkedPair { text: pair.x.raw.clone(), ratio, branch };
    if ratio > MAX_EDIT_RATIO {
        return unchanged(MarkBranch::TooManyEdits);
    }
    match select_span(&flags) {
        None => unchanged(MarkBranch::NothingRewritten),
        Some((span, _)) => MarkedPair {
            text: insert_marks(&pair.x, span).expect("span lies within the draft"),
            ratio,
            branch: MarkBranch::Marked { start: span.start_token, end: span.end_token },
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    #[serde(default)]
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paper {
    pub title: String,
    #[serde(default)]
    pub sections: Vec<Section>,
}

pub fn parse_paper_line(text: &str, line: usize) -> Result<Paper, SynthError> {
    serde_json::from_str(text).map_err(|e| SynthError::BadPaper { line, message: e.to_string() })
}

/// RNG for paper `index`: one ChaCha stream per paper under a shared seed,
/// so papers can be formatted independently.
pub fn paper_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One paper in corpus layout, ending with the end-of-text line. Returns
/// the text and whether the title was kept.
pub fn format_paper(paper: &Paper, rng: &mut impl Rng) -> (String, bool) {
    let keep_title = !rng.random_bool(TITLE_OMISSION_P);
    let mut sections: Vec<&Section> = paper.sections.iter().collect();
    sections.shuffle(rng);
    let mut out = String::new();
    if keep_title {
        out.push_str(&format!("@ {} @\n\n", paper.title));
    }
    for (k, s) in sections.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        out.push_str(&format!("* {}\n", s.name));
        for p in &s.paragraphs {
            out.push_str(p);
            out.push('\n');
        }
    }
    out.push_str(END_OF_TEXT);
    out.push('\n');
    (out, keep_title)
}

/// Papers in corpus layout, separated by a blank line.
pub fn format_completion_corpus(papers: &[Paper], seed: u64) -> String {
    papers.iter().enumerate().map(|(i, p)| format_paper(p, &mut paper_rng(seed, i)).0).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub dropout: f64,
    pub swap: f64,
    pub inflect: f64,
}

impl Default for NoiseRates {
    fn default() -> Self {
        Self { dropout: 0.1, swap: 0.05, inflect: 0.1 }
    }
}

impl NoiseRates {
    pub const NONE: Self = Self { dropout: 0.0, swap: 0.0, inflect: 0.0 };
}

/// Other surface forms sharing `word`'s lemma.
fn inflections(word: &str) -> Vec<String> {
    if !word.chars().all(|c| c.is_ascii_lowercase()) {
        return Vec::new();
    }
    let base = lemma(word);
    let stem = base.strip_suffix('e').unwrap_or(&base);
    let forms = [base.clone(), format!("{base}s"), format!("{stem}ed"), format!("{stem}ing")];
    let mut out: Vec<String> = forms.into_iter().filter(|f| f != word && lemma(f) == base).collect();
    out.dedup();
    out
}

/// Draft tokens derived from revision `y` by seeded word dropout, adjacent
/// swaps and inflection changes, applied in that order.
pub fn noise_tokens(y: &TokenizedSentence, rates: NoiseRates, rng: &mut impl Rng) -> Vec<String> {
    let mut toks: Vec<String> =
        y.tokens.iter().filter(|_| !rng.random_bool(rates.dropout)).map(|t| t.surface.clone()).collect();
    if toks.is_empty() && !y.is_empty() {
        toks.push(y.tokens[0].surface.clone());
    }
    let mut i = 0;
    while i + 1 < toks.len() {
        if rng.random_bool(rates.swap) {
            toks.swap(i, i + 1);
            i += 2;
        } else {
            i += 1;
        }
    }
    for t in toks.iter_mut() {
        if rng.random_bool(rates.inflect) {
            let forms = inflections(t);
            if let Some(f) = forms.get(rng.random_range(0..forms.len().max(1))) {
                *t = f.clone();
            }
        }
    }
    toks
}

pub fn synth_noise_with(y: &str, rates: NoiseRates, seed: u64) -> String {
    let ys = tokenize(y.trim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let toks = noise_tokens(&ys, rates, &mut rng);
    render_tokens(&ys, &toks)
}

pub fn synth_noise(y: &str, seed: u64) -> String {
    synth_noise_with(y, NoiseRates::default(), seed)
}
