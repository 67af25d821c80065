//! Request/select orchestration for sentence revision.
//!
//! A revision request names a selection inside one sentence of a document.
//! The sentence is marked (or left unmarked for full-sentence revision),
//! candidates are generated, deduplicated, re-ranked by perplexity in
//! document context, filtered against the input's own perplexity, cut to
//! the top few, and annotated with a diff against the original sentence.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{diff_highlight, DiffRun};
use crate::generate::{GeneratedCandidate, GenerationError, Reviser};
use crate::lm::NGramLanguageModel;
use crate::text::{self, parse_marked_with_offsets, MarkError, MarkedText, Span};

pub const DEFAULT_TOP_K: usize = 8;
pub const DEFAULT_PPL_FACTOR: f64 = 1.3;
pub const DEFAULT_CONTEXT_TOKENS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevisionSettings {
    pub top_k: usize,
    pub ppl_factor: f64,
    pub context_tokens: usize,
}

impl Default for RevisionSettings {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K, ppl_factor: DEFAULT_PPL_FACTOR, context_tokens: DEFAULT_CONTEXT_TOKENS }
    }
}

#[derive(Debug, Error)]
pub enum RevisionError {
    #[error("selection must not cross sentences")]
    CrossesSentences,
    #[error("selection {start}..{end} is outside the document or not on a character boundary")]
    OutOfRange { start: usize, end: usize },
    #[error("no sentence at the selection")]
    NoSentence,
    #[error(transparent)]
    Marks(#[from] MarkError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

/// A validated request: the sentence under revision, the token span the
/// user selected inside it (if any), and the surrounding context.
#[derive(Debug, Clone, PartialEq)]
pub struct RevisionRequest {
    /// Byte range of the sentence in the document.
    pub sentence_range: Range<usize>,
    /// The sentence exactly as it appears in the document.
    pub sentence_text: String,
    /// Marked source handed to the generator.
    pub source: MarkedText,
    pub left_context: Vec<String>,
    pub right_context: Vec<String>,
}

impl RevisionRequest {
    /// Builds a request from a byte-offset selection in `document`. An empty
    /// selection (a cursor) or one covering the whole sentence revises the
    /// whole sentence; anything smaller is snapped outward to token
    /// boundaries and marked.
    pub fn from_selection(
        document: &str,
        selection: Range<usize>,
        context_tokens: usize,
    ) -> Result<Self, RevisionError> {
        let Range { start, end } = selection;
        if start > end || end > document.len() || !document.is_char_boundary(start) || !document.is_char_boundary(end) {
            return Err(RevisionError::OutOfRange { start, end });
        }
        let selected = &document[start..end];
        let trimmed_start = start + (selected.len() - selected.trim_start().len());
        let trimmed_end = end - (selected.len() - selected.trim_end().len());
        let (s, e) = if trimmed_start >= trimmed_end { (start, start) } else { (trimmed_start, trimmed_end) };
        let ranges = text::sentence_ranges(document);
        let sentence_range = if s == e {
            ranges.iter().find(|r| r.start <= s && s <= r.end).cloned().ok_or(RevisionError::NoSentence)?
        } else {
            let touching: Vec<&Range<usize>> = ranges.iter().filter(|r| r.start < e && s < r.end).collect();
            match touching.as_slice() {
                [] => return Err(RevisionError::NoSentence),
                [one] if one.start <= s && e <= one.end => (*one).clone(),
                _ => return Err(RevisionError::CrossesSentences),
            }
        };
        let sentence_text = document[sentence_range.clone()].to_string();
        let (mut source, offsets) = parse_marked_with_offsets(&sentence_text)?;
        if s < e {
            let (cs, ce) = (offsets[s - sentence_range.start], offsets[e - sentence_range.start]);
            let toks = &source.sentence.tokens;
            let first = toks.iter().position(|t| t.char_end > cs && t.char_start < ce);
            let last = toks.iter().rposition(|t| t.char_end > cs && t.char_start < ce);
            if let (Some(a), Some(b)) = (first, last) {
                let whole = a == 0 && b + 1 == toks.len();
                if !whole {
                    source.edit_span = Some(Span::new(a + 1, b + 1));
                }
            }
        }
        let (left_context, right_context) = context_around(document, &sentence_range, context_tokens);
        Ok(Self { sentence_range, sentence_text, source, left_context, right_context })
    }

    /// Request for a standalone sentence with explicit contexts.
    pub fn for_sentence(source: MarkedText, left_context: Vec<String>, right_context: Vec<String>) -> Self {
        let sentence_text = source.render();
        Self { sentence_range: 0..sentence_text.len(), sentence_text, source, left_context, right_context }
    }
}

/// Byte range of the paragraph (maximal run of non-blank lines) holding
/// `offset`.
pub fn paragraph_range(document: &str, offset: usize) -> Range<usize> {
    let mut start = 0;
    let mut pos = 0;
    for line in document.split_inclusive('\n') {
        let line_end = pos + line.len();
        if line.trim().is_empty() {
            if offset < pos {
                return start..pos;
            }
            start = line_end;
        }
        pos = line_end;
    }
    start..document.len().max(start)
}

/// Up to `n` tokens immediately before and after `range`, staying inside
/// its paragraph.
pub fn context_around(document: &str, range: &Range<usize>, n: usize) -> (Vec<String>, Vec<String>) {
    let para = paragraph_range(document, range.start);
    let left_words = text::words(&document[para.start..range.start]);
    let right_end = para.end.max(range.end);
    let right_words = text::words(&document[range.end..right_end]);
    let left = left_words[left_words.len().saturating_sub(n)..].to_vec();
    let right = right_words.into_iter().take(n).collect();
    (left, right)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionCandidate {
    pub text: String,
    pub logprob: f64,
    pub perplexity: f64,
    pub diff: Vec<DiffRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionStatus {
    Ok,
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionOutcome {
    pub status: RevisionStatus,
    pub input_perplexity: f64,
    pub candidates: Vec<RevisionCandidate>,
}

/// A candidate with its perplexity in context.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked<T> {
    pub item: T,
    pub perplexity: f64,
}

/// Stable ascending sort by perplexity, keeping only items within
/// `factor` times the input perplexity.
pub fn filter_by_perplexity<T>(items: Vec<Ranked<T>>, input_perplexity: f64, factor: f64) -> Vec<Ranked<T>> {
    let bound = factor * input_perplexity;
    let mut kept: Vec<Ranked<T>> = items.into_iter().filter(|r| r.perplexity <= bound).collect();
    kept.sort_by(|a, b| a.perplexity.total_cmp(&b.perplexity));
    kept
}

/// Scores every candidate and the input with identical contexts, then
/// sorts and filters. Candidates with no tokens cannot be scored and are
/// dropped. Returns the input perplexity alongside.
pub fn rerank_and_filter(
    candidates: Vec<GeneratedCandidate>,
    input_sentence: &str,
    left_context: &[String],
    right_context: &[String],
    lm: &NGramLanguageModel,
    factor: f64,
) -> (f64, Vec<Ranked<GeneratedCandidate>>) {
    let input_tokens = text::words(input_sentence);
    let input_ppl = if input_tokens.is_empty() {
        f64::INFINITY
    } else {
        lm.perplexity(&input_tokens, left_context, right_context).expect("non-empty target")
    };
    let scored = candidates
        .into_iter()
        .filter_map(|c| {
            let toks = text::words(&c.text);
            let ppl = lm.perplexity(&toks, left_context, right_context).ok()?;
            Some(Ranked { item: c, perplexity: ppl })
        })
        .collect();
    (input_ppl, filter_by_perplexity(scored, input_ppl, factor))
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops duplicates (after whitespace normalization) and candidates equal to
/// the input, keeping first occurrences.
pub fn dedup_candidates(candidates: Vec<GeneratedCandidate>, input: &str) -> Vec<GeneratedCandidate> {
    let mut seen = std::collections::HashSet::new();
    seen.insert(normalize_ws(input));
    candidates.into_iter().filter(|c| seen.insert(normalize_ws(&c.text))).collect()
}

pub fn revise(
    request: &RevisionRequest,
    reviser: &dyn Reviser,
    lm: &NGramLanguageModel,
    settings: &RevisionSettings,
) -> Result<RevisionOutcome, RevisionError> {
    let generated = reviser.generate(&request.source)?;
    let clean_input = &request.source.sentence.raw;
    let mut unique = dedup_candidates(generated, clean_input);
    // A sentence that still shows placeholders is never an acceptable answer.
    unique.retain(|c| normalize_ws(&c.text) != normalize_ws(&request.sentence_text));
    let (input_ppl, ranked) =
        rerank_and_filter(unique, clean_input, &request.left_context, &request.right_context, lm, settings.ppl_factor);
    let candidates: Vec<RevisionCandidate> = ranked
        .into_iter()
        .take(settings.top_k)
        .map(|r| RevisionCandidate {
            diff: diff_highlight(&request.sentence_text, &r.item.text),
            text: r.item.text,
            logprob: r.item.logprob,
            perplexity: r.perplexity,
        })
        .collect();
    Ok(RevisionOutcome {
        status: if candidates.is_empty() { RevisionStatus::NoImprovement } else { RevisionStatus::Ok },
        input_perplexity: input_ppl,
        candidates,
    })
}

/// Per-sentence record of a machine-only pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEdit {
    pub range: Range<usize>,
    pub before: String,
    pub after: String,
}

/// Replaces every sentence with its best re-ranked candidate, or leaves it
/// unchanged when nothing survives the filter.
pub fn machine_only_revise(
    document: &str,
    reviser: &dyn Reviser,
    lm: &NGramLanguageModel,
    settings: &RevisionSettings,
) -> Result<(String, Vec<SentenceEdit>), RevisionError> {
    let mut edits = Vec::new();
    for range in text::sentence_ranges(document) {
        let sentence = &document[range.clone()];
        let source = MarkedText::plain(text::tokenize(sentence));
        let (left, right) = context_around(document, &range, settings.context_tokens);
        let generated = reviser.generate(&source)?;
        let (_, ranked) = rerank_and_filter(generated, sentence, &left, &right, lm, settings.ppl_factor);
        if let Some(best) = ranked.into_iter().next() {
            if best.item.text != sentence {
                edits.push(SentenceEdit { range, before: sentence.to_string(), after: best.item.text });
            }
        }
    }
    let mut out = document.to_string();
    for e in edits.iter().rev() {
        out.replace_range(e.range.clone(), &e.after);
    }
    Ok((out, edits))
}
