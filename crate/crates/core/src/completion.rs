//! Title- and section-conditioned continuation from the cursor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lm::{NGramLanguageModel, BOS, EOS, UNK};
use crate::text;

pub const DEFAULT_NUCLEUS_P: f64 = 0.97;
pub const DEFAULT_SUGGESTIONS: usize = 3;
pub const DEFAULT_MAX_TOKENS: usize = 30;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionContext {
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub section: Option<String>,
    #[serde(default)]
    pub left_text: String,
}

/// Prefix in the training-corpus layout: `@ title @`, a blank line,
/// `* section`, a newline, then the text left of the cursor. Absent fields
/// drop out together with their separators.
pub fn build_prefix(ctx: &CompletionContext) -> String {
    let mut out = String::new();
    if let Some(title) = &ctx.title {
        out.push_str("@ ");
        out.push_str(title);
        out.push_str(" @\n\n");
    }
    if let Some(section) = &ctx.section {
        out.push_str("* ");
        out.push_str(section);
        out.push('\n');
    }
    out.push_str(&ctx.left_text);
    out
}

/// Prefix as LM tokens. Line breaks count as ordinary whitespace.
pub fn prefix_tokens(ctx: &CompletionContext) -> Vec<String> {
    build_prefix(ctx).lines().flat_map(text::words).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub text: String,
    pub tokens: Vec<String>,
    /// Per-token perplexity given the prefix; absent for an empty
    /// continuation.
    pub perplexity: Option<f64>,
}

fn is_sentence_final(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

/// Draws one continuation. Stops after sentence-final punctuation, at
/// `</s>`, on an out-of-vocabulary draw, or after `max_tokens` tokens.
pub fn sample_continuation(
    lm: &NGramLanguageModel,
    prefix: &[String],
    max_tokens: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut context = prefix.to_vec();
    let mut out = Vec::new();
    while out.len() < max_tokens {
        let tok = lm.sample_nucleus(&context, p, rng);
        if tok == EOS || tok == UNK || tok == BOS {
            break;
        }
        let stop = is_sentence_final(&tok);
        context.push(tok.clone());
        out.push(tok);
        if stop {
            break;
        }
    }
    out
}

/// `k` seeded nucleus samples, duplicates collapsed, ordered by perplexity
/// ascending (generation order among equals).
pub fn complete(
    ctx: &CompletionContext,
    lm: &NGramLanguageModel,
    k: usize,
    max_tokens: usize,
    p: f64,
    seed: u64,
) -> Vec<Continuation> {
    let prefix = prefix_tokens(ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for _ in 0..k {
        let tokens = sample_continuation(lm, &prefix, max_tokens, p, &mut rng);
        if !seen.insert(tokens.clone()) {
            continue;
        }
        let perplexity = lm.perplexity(&tokens, &prefix, &[]).ok();
        out.push(Continuation { text: text::detokenize(&tokens), tokens, perplexity });
    }
    out.sort_by(|a, b| {
        let pa = a.perplexity.unwrap_or(f64::INFINITY);
        let pb = b.perplexity.unwrap_or(f64::INFINITY);
        pa.total_cmp(&pb)
    });
    out
}
