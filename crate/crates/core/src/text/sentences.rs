use std::ops::Range;

use super::tokenize::{tokenize_spans, TokenizedSentence};

/// Words that, followed by a period, do not end a sentence. Matched
/// case-insensitively against the token preceding the period.
pub const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "al", "fig", "figs", "eq", "eqs", "sec", "secs",
    "no", "vol", "pp", "cf", "e.g", "i.e", "approx", "dept", "ch", "tab", "resp", "inc", "ltd", "co", "u.s", "jan",
    "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

const TERMINALS: &[&str] = &[".", "!", "?"];
const CLOSERS: &[&str] = &[")", "]", "\"", "'", "\u{201d}", "\u{2019}"];

pub fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Byte ranges of the sentences in `text`. Whitespace between sentences
/// belongs to no sentence; a newline always ends a sentence.
pub fn sentence_ranges(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut line_start = 0;
    for line in text.split('\n') {
        split_line(line, line_start, &mut out);
        line_start += line.len() + 1;
    }
    out
}

fn split_line(line: &str, base: usize, out: &mut Vec<Range<usize>>) {
    let spans = tokenize_spans(line);
    let mut first: Option<usize> = None;
    let mut k = 0;
    while k < spans.len() {
        let (s, e) = spans[k];
        first.get_or_insert(s);
        let surface = &line[s..e];
        if TERMINALS.contains(&surface) {
            let mut last = k;
            // Runs like "?!" or "...", then closing quotes/brackets stuck to them.
            while last + 1 < spans.len()
                && spans[last + 1].0 == spans[last].1
                && TERMINALS.contains(&&line[spans[last + 1].0..spans[last + 1].1])
            {
                last += 1;
            }
            while last + 1 < spans.len()
                && spans[last + 1].0 == spans[last].1
                && CLOSERS.contains(&&line[spans[last + 1].0..spans[last + 1].1])
            {
                last += 1;
            }
            if ends_sentence(line, &spans, k, last) {
                out.push(base + first.take().unwrap_or(s)..base + spans[last].1);
            }
            k = last + 1;
            continue;
        }
        k += 1;
    }
    if let Some(s) = first {
        let end = spans.last().map(|sp| sp.1).unwrap_or(s);
        out.push(base + s..base + end);
    }
}

fn ends_sentence(line: &str, spans: &[(usize, usize)], term: usize, last: usize) -> bool {
    if &line[spans[term].0..spans[term].1] == "." && term > 0 {
        let prev = spans[term - 1];
        if prev.1 == spans[term].0 && is_abbreviation(&line[prev.0..prev.1]) {
            return false;
        }
    }
    match spans.get(last + 1) {
        None => true,
        // "et al. showed" style continuations.
        Some(&(s, _)) => !line[s..].starts_with(|c: char| c.is_lowercase()),
    }
}

/// Splits paragraph text into tokenized sentences.
pub fn split_sentences(text: &str) -> Vec<TokenizedSentence> {
    sentence_ranges(text).into_iter().map(|r| TokenizedSentence::new(&text[r])).collect()
}
