use serde::{Deserialize, Serialize};

/// A token with byte offsets into the sentence it was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// A sentence together with its tokenization.
///
/// Offsets are byte offsets into `raw`. Tokens are strictly increasing and
/// non-overlapping, and everything between them is whitespace, so `raw` can
/// always be rebuilt from the tokens and the gaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub raw: String,
    pub tokens: Vec<Token>,
}

impl TokenizedSentence {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let tokens = tokenize_spans(&raw)
            .into_iter()
            .map(|(s, e)| Token { surface: raw[s..e].to_string(), char_start: s, char_end: e })
            .collect();
        Self { raw, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn owned_words(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.surface.clone()).collect()
    }

    /// The whitespace between token `k` and token `k + 1` (0-based), or the
    /// leading/trailing whitespace for the ends.
    pub fn gap(&self, k: usize) -> &str {
        let start = if k == 0 { 0 } else { self.tokens[k - 1].char_end };
        let end = self.tokens.get(k).map(|t| t.char_start).unwrap_or(self.raw.len());
        &self.raw[start..end]
    }

    /// Rebuilds the raw text from token surfaces and the recorded gaps.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.raw.len());
        for (k, tok) in self.tokens.iter().enumerate() {
            out.push_str(self.gap(k));
            out.push_str(&tok.surface);
        }
        out.push_str(self.gap(self.tokens.len()));
        out
    }
}

/// Tokenizes a single line of text.
pub fn tokenize(text: &str) -> TokenizedSentence {
    TokenizedSentence::new(text)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Characters that may join two word characters into one token
/// ("human-computer", "don't", "3.5", "e.g").
fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}' | '_' | '.' | ',')
}

pub(crate) fn tokenize_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let (start, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
            continue;
        }
        if !is_word_char(c) {
            spans.push((start, start + c.len_utf8()));
            k += 1;
            continue;
        }
        let mut j = k + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if is_word_char(c) {
                j += 1;
                continue;
            }
            let joins = is_joiner(c)
                && j + 1 < chars.len()
                && is_word_char(chars[j + 1].1)
                && joiner_allowed(c, chars[j - 1].1, chars[j + 1].1);
            if joins {
                j += 2;
            } else {
                break;
            }
        }
        let end = chars.get(j).map(|(i, _)| *i).unwrap_or(text.len());
        spans.push((start, end));
        k = j;
    }
    spans
}

fn joiner_allowed(joiner: char, prev: char, next: char) -> bool {
    match joiner {
        // Decimal separators only between digits; periods also inside
        // dotted abbreviations such as "e.g" or "U.S".
        ',' => prev.is_ascii_digit() && next.is_ascii_digit(),
        '.' => (prev.is_ascii_digit() && next.is_ascii_digit()) || (prev.is_alphabetic() && next.is_alphabetic()),
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        tokenize(s).owned_words()
    }

    #[test]
    fn simple_words_and_offsets() {
        let t = tokenize("the cat sat");
        assert_eq!(t.words(), vec!["the", "cat", "sat"]);
        let offs: Vec<_> = t.tokens.iter().map(|t| (t.char_start, t.char_end)).collect();
        assert_eq!(offs, vec![(0, 3), (4, 7), (8, 11)]);
    }

    #[test]
    fn empty_input_has_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn placeholder_splits_into_parens() {
        assert_eq!(words("GEC ()"), vec!["GEC", "(", ")"]);
    }

    #[test]
    fn punctuation_and_joiners() {
        assert_eq!(words("human-computer interaction."), vec!["human-computer", "interaction", "."]);
        assert_eq!(words("(GEC) is 3.5 e.g. fine"), vec!["(", "GEC", ")", "is", "3.5", "e.g", ".", "fine"]);
        assert_eq!(words("end-"), vec!["end", "-"]);
        assert_eq!(words("don't"), vec!["don't"]);
    }

    #[test]
    fn reconstruct_roundtrip() {
        let s = "  Hello,  world (x) \t ok. ";
        assert_eq!(tokenize(s).reconstruct(), s);
    }

    #[test]
    fn multibyte_offsets() {
        let t = tokenize("naïve café—ok");
        assert_eq!(t.words(), vec!["naïve", "café", "—", "ok"]);
        assert_eq!(t.reconstruct(), "naïve café—ok");
    }
}
