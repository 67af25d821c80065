use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokenize::TokenizedSentence;

pub const OPEN_MARK: &str = "<?";
pub const CLOSE_MARK: &str = "?>";
pub const PLACEHOLDER: &str = "()";

/// Inclusive token span, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_token: usize,
    pub end_token: usize,
}

impl Span {
    pub fn new(start_token: usize, end_token: usize) -> Self {
        Self { start_token, end_token }
    }

    pub fn checked(start_token: usize, end_token: usize, len: usize) -> Result<Self, MarkError> {
        if start_token == 0 || start_token > end_token || end_token > len {
            return Err(MarkError::InvalidSpan { start: start_token, end: end_token, len });
        }
        Ok(Self::new(start_token, end_token))
    }

    pub fn len(&self) -> usize {
        self.end_token + 1 - self.start_token
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether the 1-based token index lies inside the span.
    pub fn contains(&self, token: usize) -> bool {
        (self.start_token..=self.end_token).contains(&token)
    }

    /// 0-based half-open token range.
    pub fn as_range(&self) -> std::ops::Range<usize> {
        self.start_token - 1..self.end_token
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkError {
    #[error("span ({start}, {end}) is out of range for a sentence of {len} tokens")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("unbalanced edit mark at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("more than one edit span (second mark at offset {offset})")]
    MultipleSpans { offset: usize },
    #[error("edit marks at offset {offset} enclose no tokens")]
    EmptySpan { offset: usize },
}

/// A sentence with its optional edit span and placeholder positions.
///
/// `sentence` never contains the marks or the placeholders themselves.
/// Placeholders are gap indices: gap `g` sits after token `g` (gap 0 is the
/// sentence start), so `0 <= g <= T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedText {
    pub sentence: TokenizedSentence,
    pub edit_span: Option<Span>,
    pub placeholders: Vec<usize>,
}

impl MarkedText {
    pub fn plain(sentence: TokenizedSentence) -> Self {
        Self { sentence, edit_span: None, placeholders: Vec::new() }
    }

    pub fn with_span(sentence: TokenizedSentence, span: Span) -> Result<Self, MarkError> {
        let span = Span::checked(span.start_token, span.end_token, sentence.len())?;
        Ok(Self { sentence, edit_span: Some(span), placeholders: Vec::new() })
    }

    pub fn has_marks(&self) -> bool {
        self.edit_span.is_some() || !self.placeholders.is_empty()
    }

    /// Renders the canonical marked form. Placeholders sitting right after
    /// the last span token render inside the closing mark.
    pub fn render(&self) -> String {
        let s = &self.sentence;
        if s.is_empty() {
            let mut out = s.raw.clone();
            for _ in &self.placeholders {
                if !out.is_empty() && !out.ends_with(' ') {
                    out.push(' ');
                }
                out.push_str(PLACEHOLDER);
            }
            return out;
        }
        // (offset, priority, text); end-of-token insertions sort before
        // start-of-token ones at equal offsets.
        let mut inserts: Vec<(usize, u8, String)> = Vec::new();
        for &g in &self.placeholders {
            if g == 0 {
                inserts.push((s.tokens[0].char_start, 2, format!("{PLACEHOLDER} ")));
            } else {
                inserts.push((s.tokens[g - 1].char_end, 0, format!(" {PLACEHOLDER}")));
            }
        }
        if let Some(span) = self.edit_span {
            inserts.push((s.tokens[span.start_token - 1].char_start, 3, format!("{OPEN_MARK} ")));
            inserts.push((s.tokens[span.end_token - 1].char_end, 1, format!(" {CLOSE_MARK}")));
        }
        inserts.sort_by_key(|(off, prio, _)| (*off, *prio));
        let mut out = String::with_capacity(s.raw.len() + 8 * inserts.len());
        let mut cursor = 0;
        for (off, _, text) in inserts {
            out.push_str(&s.raw[cursor..off]);
            out.push_str(&text);
            cursor = off;
        }
        out.push_str(&s.raw[cursor..]);
        out
    }
}

/// Wraps the tokens `span` covers in edit marks.
pub fn insert_marks(sentence: &TokenizedSentence, span: Span) -> Result<String, MarkError> {
    Ok(MarkedText::with_span(sentence.clone(), span)?.render())
}

/// Parses a sentence carrying at most one `<? ... ?>` pair and any number of
/// standalone `()` placeholders.
pub fn parse_marked(text: &str) -> Result<MarkedText, MarkError> {
    parse_marked_with_offsets(text).map(|(m, _)| m)
}

/// Like [`parse_marked`], also returning for every byte offset of `text`
/// (including `text.len()`) the corresponding offset in the clean sentence.
pub fn parse_marked_with_offsets(text: &str) -> Result<(MarkedText, Vec<usize>), MarkError> {
    let bytes = text.as_bytes();
    let mut offsets = Vec::with_capacity(text.len() + 1);
    let mut clean = String::with_capacity(text.len());
    let mut open: Option<(usize, usize)> = None; // (input offset, clean offset)
    let mut close: Option<usize> = None;
    let mut placeholder_offsets = Vec::new();
    // Input offset just past the last byte copied verbatim into `clean`.
    let mut copied_until = usize::MAX;
    let mut i = 0;
    while i < bytes.len() {
        offsets.resize(i + 1, clean.len());
        let rest = &text[i..];
        if rest.starts_with(OPEN_MARK) {
            if open.is_some() {
                let offset = i;
                return Err(if close.is_some() {
                    MarkError::MultipleSpans { offset }
                } else {
                    MarkError::Unbalanced { offset }
                });
            }
            open = Some((i, clean.len()));
            i += OPEN_MARK.len();
            if bytes.get(i) == Some(&b' ') {
                i += 1;
            }
            continue;
        }
        if rest.starts_with(CLOSE_MARK) {
            if open.is_none() || close.is_some() {
                return Err(MarkError::Unbalanced { offset: i });
            }
            if copied_until == i && clean.ends_with(' ') {
                clean.pop();
            }
            close = Some(clean.len());
            i += CLOSE_MARK.len();
            continue;
        }
        if rest.starts_with(PLACEHOLDER) && is_standalone_placeholder(text, i) {
            if copied_until == i && clean.ends_with(' ') {
                clean.pop();
                placeholder_offsets.push(clean.len());
                i += PLACEHOLDER.len();
            } else {
                placeholder_offsets.push(clean.len());
                i += PLACEHOLDER.len();
                if bytes.get(i) == Some(&b' ') {
                    i += 1;
                }
            }
            continue;
        }
        let ch = rest.chars().next().expect("non-empty remainder");
        clean.push(ch);
        i += ch.len_utf8();
        copied_until = i;
    }
    if let (Some((offset, _)), None) = (open, close) {
        return Err(MarkError::Unbalanced { offset });
    }
    offsets.resize(text.len() + 1, clean.len());
    let clean_len = clean.len();
    for o in offsets.iter_mut() {
        *o = (*o).min(clean_len);
    }

    let sentence = TokenizedSentence::new(clean);
    let edit_span = match (open, close) {
        (Some((open_at, open_off)), Some(close_off)) => {
            let start = sentence.tokens.iter().position(|t| t.char_start >= open_off).map(|k| k + 1);
            let end = sentence.tokens.iter().rposition(|t| t.char_end <= close_off).map(|k| k + 1);
            match (start, end) {
                (Some(a), Some(b)) if a <= b => Some(Span::new(a, b)),
                _ => return Err(MarkError::EmptySpan { offset: open_at }),
            }
        }
        _ => None,
    };
    let placeholders = placeholder_offsets
        .into_iter()
        .map(|off| sentence.tokens.iter().filter(|t| t.char_end <= off).count())
        .collect();
    Ok((MarkedText { sentence, edit_span, placeholders }, offsets))
}

fn is_standalone_placeholder(text: &str, at: usize) -> bool {
    let before_ok = text[..at].chars().next_back().is_none_or(char::is_whitespace);
    let after_ok = text[at + PLACEHOLDER.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    before_ok && after_ok
}
