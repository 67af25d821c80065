//! Interpolated absolute-discounting n-gram language model.
//!
//! Used for re-ranking revisions by contextual perplexity and for sampling
//! completions. Each level interpolates with the one below it:
//!
//! ```text
//! P_k(w | h) = max(c(h w) - D, 0) / c(h) + D * N1+(h .) / c(h) * P_{k-1}(w | h')
//! ```
//!
//! bottoming out in the uniform distribution over every predictable symbol
//! (vocabulary words, `<unk>` and `</s>`). Contexts never seen in training
//! fall through to the next lower order unchanged.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::text;

pub type TokenId = u32;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_DISCOUNT: f64 = 0.75;
pub const MAX_ORDER: usize = 5;

const MAGIC: &[u8; 4] = b"DFLM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("order must be in 1..={MAX_ORDER}, got {0}")]
    InvalidOrder(usize),
    #[error("discount must be in (0, 1], got {0}")]
    InvalidDiscount(f64),
    #[error("cannot compute perplexity of an empty target")]
    EmptyTarget,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
struct ContextStats {
    total: u64,
    followers: Vec<(TokenId, u64)>,
}

#[derive(Debug, Clone)]
pub struct NGramLanguageModel {
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    /// `counts[k - 1]` holds the k-gram counts.
    counts: Vec<HashMap<Vec<TokenId>, u64>>,
    /// Context statistics for orders >= 2, keyed by the (k-1)-token history.
    contexts: HashMap<Vec<TokenId>, ContextStats>,
    unigram_total: u64,
    unigram_types: u64,
    /// Word ids sorted by descending unigram count.
    frequent: Vec<TokenId>,
}

/// Next-token probabilities indexed by token id. `<s>` always has mass 0.
#[derive(Debug, Clone)]
pub struct TokenDistribution<'m> {
    model: &'m NGramLanguageModel,
    pub probs: Vec<f64>,
}

impl<'m> TokenDistribution<'m> {
    pub fn get(&self, token: &str) -> f64 {
        self.probs[self.model.id(token) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'m str, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(id, _)| *id as TokenId != BOS_ID)
            .map(|(id, p)| (self.model.vocab[id].as_str(), *p))
    }
}

impl NGramLanguageModel {
    /// Trains on whitespace/punctuation-tokenized lines.
    pub fn train<S: AsRef<str>>(corpus_lines: &[S], order: usize, discount: f64) -> Result<Self, LmError> {
        let sentences: Vec<Vec<String>> =
            corpus_lines.iter().map(|l| text::words(l.as_ref())).filter(|ws| !ws.is_empty()).collect();
        Self::train_tokenized(&sentences, order, discount)
    }

    pub fn train_tokenized<S: AsRef<str>>(sentences: &[Vec<S>], order: usize, discount: f64) -> Result<Self, LmError> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(LmError::InvalidOrder(order));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(LmError::InvalidDiscount(discount));
        }
        if sentences.iter().all(|s| s.is_empty()) {
            return Err(LmError::EmptyCorpus);
        }
        let mut vocab = vec![UNK.to_string(), BOS.to_string(), EOS.to_string()];
        let mut index: HashMap<String, TokenId> =
            vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();
        let mut counts: Vec<HashMap<Vec<TokenId>, u64>> = vec![HashMap::new(); order];
        for sentence in sentences.iter().filter(|s| !s.is_empty()) {
            let mut padded = vec![BOS_ID; order - 1];
            for w in sentence {
                let w = w.as_ref();
                let id = *index.entry(w.to_string()).or_insert_with(|| {
                    vocab.push(w.to_string());
                    (vocab.len() - 1) as TokenId
                });
                padded.push(id);
            }
            padded.push(EOS_ID);
            for t in order - 1..padded.len() {
                for k in 1..=order {
                    *counts[k - 1].entry(padded[t + 1 - k..=t].to_vec()).or_insert(0) += 1;
                }
            }
        }
        Ok(Self::from_parts(order, discount, vocab, counts))
    }

    fn from_parts(order: usize, discount: f64, vocab: Vec<String>, counts: Vec<HashMap<Vec<TokenId>, u64>>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();
        let unigram_total = counts[0].values().sum();
        let unigram_types = counts[0].len() as u64;
        let mut contexts: HashMap<Vec<TokenId>, ContextStats> = HashMap::new();
        for level in counts.iter().skip(1) {
            for (gram, &c) in level {
                let (h, w) = gram.split_at(gram.len() - 1);
                let stats = contexts.entry(h.to_vec()).or_default();
                stats.total += c;
                stats.followers.push((w[0], c));
            }
        }
        for stats in contexts.values_mut() {
            stats.followers.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        }
        let mut frequent: Vec<(TokenId, u64)> =
            counts[0].iter().map(|(g, &c)| (g[0], c)).filter(|(id, _)| *id > EOS_ID).collect();
        frequent.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Self {
            order,
            discount,
            vocab,
            index,
            counts,
            contexts,
            unigram_total,
            unigram_types,
            frequent: frequent.into_iter().map(|(id, _)| id).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Number of symbols that can be predicted: every entry except `<s>`.
    pub fn support_size(&self) -> usize {
        self.vocab.len() - 1
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.vocab[id as usize]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// History for predicting the first token after `context`: `<s>` padding
    /// followed by the context ids.
    pub fn history<S: AsRef<str>>(&self, context: &[S]) -> Vec<TokenId> {
        let mut h = vec![BOS_ID; self.order - 1];
        h.extend(self.encode(context));
        h
    }

    /// P(word | history), where only the last `order - 1` ids of `history`
    /// matter.
    pub fn prob_id(&self, word: TokenId, history: &[TokenId]) -> f64 {
        if word == BOS_ID {
            return 0.0;
        }
        let d = self.discount;
        let uniform = 1.0 / self.support_size() as f64;
        let c = self.counts[0].get(&[word][..]).copied().unwrap_or(0) as f64;
        let total = self.unigram_total as f64;
        let mut p = ((c - d).max(0.0) + d * self.unigram_types as f64 * uniform) / total;
        let mut gram = Vec::with_capacity(self.order);
        for k in 2..=self.order {
            if history.len() < k - 1 {
                break;
            }
            let h = &history[history.len() - (k - 1)..];
            let Some(stats) = self.contexts.get(h) else {
                continue;
            };
            gram.clear();
            gram.extend_from_slice(h);
            gram.push(word);
            let c = self.counts[k - 1].get(&gram).copied().unwrap_or(0) as f64;
            let ctotal = stats.total as f64;
            p = ((c - d).max(0.0) + d * stats.followers.len() as f64 * p) / ctotal;
        }
        p
    }

    pub fn prob(&self, word: &str, context: &[&str]) -> f64 {
        self.prob_id(self.id(word), &self.history(context))
    }

    pub fn next_token_dist<S: AsRef<str>>(&self, context: &[S]) -> TokenDistribution<'_> {
        let history = self.history(context);
        self.dist_for_history(&history)
    }

    pub fn dist_for_history(&self, history: &[TokenId]) -> TokenDistribution<'_> {
        let probs = (0..self.vocab.len() as TokenId).map(|id| self.prob_id(id, history)).collect();
        TokenDistribution { model: self, probs }
    }

    /// The `k` most probable non-special continuations of `history`, drawn
    /// from observed followers of every history suffix plus the most frequent
    /// unigrams. Sorted by probability, ties by id.
    pub fn top_continuations(&self, history: &[TokenId], k: usize) -> Vec<(TokenId, f64)> {
        let mut candidates: Vec<TokenId> = Vec::new();
        for n in 1..self.order {
            if history.len() < n {
                break;
            }
            if let Some(stats) = self.contexts.get(&history[history.len() - n..]) {
                candidates.extend(stats.followers.iter().take(4 * k).map(|(id, _)| *id));
            }
        }
        candidates.extend(self.frequent.iter().take(2 * k).copied());
        candidates.retain(|&id| id > EOS_ID);
        candidates.sort_unstable();
        candidates.dedup();
        let mut scored: Vec<(TokenId, f64)> =
            candidates.into_iter().map(|id| (id, self.prob_id(id, history))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }

    /// Sum of natural-log probabilities of `tokens` given `history`,
    /// extending the history as it goes.
    pub fn log_prob_ids(&self, history: &[TokenId], tokens: &[TokenId]) -> f64 {
        let mut h = history.to_vec();
        let mut total = 0.0;
        for &t in tokens {
            total += self.prob_id(t, &h).ln();
            h.push(t);
        }
        total
    }

    /// Per-token perplexity of `target` between two contexts.
    ///
    /// Left context, target and right context are scored as one left-to-right
    /// stream. The average is taken over the target tokens plus the single
    /// transition into the first right-context token (`</s>` when the right
    /// context is empty), which is how right context reaches the score.
    pub fn perplexity<S: AsRef<str>>(
        &self,
        target: &[S],
        left_context: &[S],
        right_context: &[S],
    ) -> Result<f64, LmError> {
        if target.is_empty() {
            return Err(LmError::EmptyTarget);
        }
        let history = self.history(left_context);
        let mut scored = self.encode(target);
        scored.push(right_context.first().map(|t| self.id(t.as_ref())).unwrap_or(EOS_ID));
        let logp = self.log_prob_ids(&history, &scored);
        Ok((-logp / scored.len() as f64).exp())
    }

    /// Samples the next token from the nucleus of the context's distribution.
    pub fn sample_nucleus<S: AsRef<str>, R: Rng + ?Sized>(&self, context: &[S], p: f64, rng: &mut R) -> String {
        let dist = self.next_token_dist(context);
        let id = sample_from_nucleus(&dist.probs, p, rng);
        self.vocab[id].clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LmError> {
        Self::read_from(&mut std::io::Cursor::new(bytes))
    }

    /// Layout (little endian): magic, u32 version, u32 order, f64 discount,
    /// u32 vocab size, then each word as u32 length + UTF-8 bytes, then for
    /// each order k an u64 entry count followed by sorted entries of k u32
    /// ids and an u64 count.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.order as u32).to_le_bytes())?;
        w.write_all(&self.discount.to_le_bytes())?;
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        for word in &self.vocab {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
        }
        for level in &self.counts {
            let sorted: BTreeMap<&Vec<TokenId>, &u64> = level.iter().collect();
            w.write_all(&(sorted.len() as u64).to_le_bytes())?;
            for (gram, count) in sorted {
                for id in gram {
                    w.write_all(&id.to_le_bytes())?;
                }
                w.write_all(&count.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, LmError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LmError::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(LmError::Format(format!("unsupported version {version}")));
        }
        let order = read_u32(r)? as usize;
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(LmError::InvalidOrder(order));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let discount = f64::from_le_bytes(b8);
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(LmError::InvalidDiscount(discount));
        }
        let vocab_len = read_u32(r)? as usize;
        if vocab_len < 3 {
            return Err(LmError::Format("vocabulary lacks reserved symbols".into()));
        }
        let mut vocab = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let len = read_u32(r)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            vocab.push(String::from_utf8(bytes).map_err(|e| LmError::Format(e.to_string()))?);
        }
        let mut counts = Vec::with_capacity(order);
        for k in 1..=order {
            let entries = read_u64(r)?;
            let mut level = HashMap::new();
            for _ in 0..entries {
                let mut gram = Vec::with_capacity(k);
                for _ in 0..k {
                    let id = read_u32(r)?;
                    if id as usize >= vocab_len {
                        return Err(LmError::Format(format!("token id {id} out of range")));
                    }
                    gram.push(id);
                }
                level.insert(gram, read_u64(r)?);
            }
            counts.push(level);
        }
        if counts[0].is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        Ok(Self::from_parts(order, discount, vocab, counts))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, LmError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, LmError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Indices of the nucleus: the smallest prefix of the probability-sorted
/// distribution whose mass reaches `p`. Ties are ordered by index.
pub fn nucleus(probs: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    let mut cut = order.len();
    for (k, &i) in order.iter().enumerate() {
        mass += probs[i];
        if mass >= p - 1e-12 {
            cut = k + 1;
            break;
        }
    }
    order.truncate(cut);
    order
}

/// Draws an index from the renormalized nucleus of `probs`.
pub fn sample_from_nucleus<R: Rng + ?Sized>(probs: &[f64], p: f64, rng: &mut R) -> usize {
    let kept = nucleus(probs, p);
    let mass: f64 = kept.iter().map(|&i| probs[i]).sum();
    let mut u = rng.random::<f64>() * mass;
    for &i in &kept {
        u -= probs[i];
        if u < 0.0 {
            return i;
        }
    }
    *kept.last().expect("nucleus is never empty for a normalized distribution")
}
