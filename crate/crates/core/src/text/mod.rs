//! Tokenization, sentence splitting, edit-mark syntax and lemmatization.
//!
//! Offsets throughout are byte offsets into UTF-8 text.

mod lemma;
mod marks;
mod sentences;
mod tokenize;

pub use lemma::lemma;
pub use marks::{
    insert_marks, parse_marked, parse_marked_with_offsets, MarkError, MarkedText, Span, CLOSE_MARK, OPEN_MARK,
    PLACEHOLDER,
};
pub use sentences::{is_abbreviation, sentence_ranges, split_sentences, ABBREVIATIONS};
pub use tokenize::{tokenize, Token, TokenizedSentence};

/// Tokens of `text` as owned strings.
pub fn words(text: &str) -> Vec<String> {
    tokenize(text).owned_words()
}

/// Byte offset of the UTF-16 code-unit offset `units` in `text`, or `None`
/// when it is past the end or splits a surrogate pair.
pub fn utf16_to_byte(text: &str, units: usize) -> Option<usize> {
    let mut seen = 0;
    for (b, ch) in text.char_indices() {
        if seen == units {
            return Some(b);
        }
        seen += ch.len_utf16();
        if seen > units {
            return None;
        }
    }
    (seen == units).then_some(text.len())
}

/// UTF-16 code-unit offset of byte offset `byte` (which must be a char
/// boundary) in `text`.
pub fn byte_to_utf16(text: &str, byte: usize) -> usize {
    text[..byte].chars().map(char::len_utf16).sum()
}

/// Joins tokens with single spaces, attaching closing punctuation to the
/// previous token and opening brackets to the next one.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = false;
    for tok in tokens {
        let tok = tok.as_ref();
        let attach_left = matches!(tok, "." | "," | ";" | ":" | "!" | "?" | ")" | "]" | "%");
        if !out.is_empty() && !attach_left && !glue_next {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = matches!(tok, "(" | "[");
    }
    out
}
