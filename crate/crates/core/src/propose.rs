//! Built-in edit-proposal backend.
//!
//! A small transducer over the source tokens: at each step a hypothesis
//! either copies the next source token, substitutes it with one of the
//! language model's top proposals, deletes it, or inserts a proposal in
//! front of it. Placeholders force 1 to 4 inserted tokens. Where edits are
//! allowed depends on the marks:
//!
//! * with an edit span, tokens inside it are cheap to rewrite, the single
//!   token on each side of it may be adjusted, and everything else is copied;
//! * with placeholders only, the neighbours of each placeholder may be
//!   adjusted;
//! * with no marks at all, every token is editable.

use crate::beam::{diverse_beam, BackendError, BeamConfig, BeamError, Expansion, GeneratorBackend, Hypothesis};
use crate::diff::render_tokens;
use crate::lm::{NGramLanguageModel, TokenId, EOS, EOS_ID};
use crate::text::MarkedText;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditParams {
    /// Probability of copying a token inside the edit span.
    pub keep_in_span: f64,
    /// Probability of copying one of the tokens bordering the span or a
    /// placeholder.
    pub keep_halo: f64,
    /// Probability of copying a token when the sentence carries no marks.
    pub keep_unmarked: f64,
    /// Split of the edit mass between substitution, deletion and insertion.
    pub substitute_share: f64,
    pub delete_share: f64,
    pub insert_share: f64,
    /// Number of language-model proposals considered per edit.
    pub proposals: usize,
    /// Maximum tokens a single placeholder may expand to.
    pub max_fill: usize,
}

impl Default for EditParams {
    fn default() -> Self {
        Self {
            keep_in_span: 0.3,
            keep_halo: 0.9,
            keep_unmarked: 0.85,
            substitute_share: 0.6,
            delete_share: 0.2,
            insert_share: 0.2,
            proposals: 6,
            max_fill: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    InSpan,
    Halo,
    Unmarked,
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditState {
    /// Next source token to consume (0-based).
    pos: usize,
    /// Tokens already inserted at the placeholder gap before `pos`.
    fill: usize,
    /// Whether a free insertion already happened before `pos`.
    inserted: bool,
    done: bool,
    history: Vec<TokenId>,
}

pub struct EditBackend<'a> {
    lm: &'a NGramLanguageModel,
    params: EditParams,
}

impl<'a> EditBackend<'a> {
    pub fn new(lm: &'a NGramLanguageModel) -> Self {
        Self::with_params(lm, EditParams::default())
    }

    pub fn with_params(lm: &'a NGramLanguageModel, params: EditParams) -> Self {
        Self { lm, params }
    }

    /// Editing region of 0-based source token `i`.
    pub fn region(source: &MarkedText, i: usize) -> Region {
        let t = i + 1;
        match source.edit_span {
            Some(span) if span.contains(t) => Region::InSpan,
            Some(span) if t + 1 == span.start_token || t == span.end_token + 1 => Region::Halo,
            Some(_) => Region::Frozen,
            None if source.placeholders.is_empty() => Region::Unmarked,
            None => {
                // Gap g sits between 0-based tokens g - 1 and g.
                let borders = source.placeholders.iter().any(|&g| i + 1 == g || i == g);
                if borders {
                    Region::Halo
                } else {
                    Region::Frozen
                }
            }
        }
    }

    fn keep_prob(&self, region: Region) -> f64 {
        match region {
            Region::InSpan => self.params.keep_in_span,
            Region::Halo => self.params.keep_halo,
            Region::Unmarked => self.params.keep_unmarked,
            Region::Frozen => 1.0,
        }
    }

    fn insertion_allowed(source: &MarkedText, i: usize) -> bool {
        match Self::region(source, i) {
            Region::InSpan | Region::Unmarked => true,
            // Only the gap closing the span, not the one before the left halo.
            Region::Halo => source.edit_span.is_some_and(|s| i == s.end_token),
            Region::Frozen => false,
        }
    }

    fn placeholders_at(source: &MarkedText, gap: usize) -> usize {
        source.placeholders.iter().filter(|&&g| g == gap).count()
    }

    /// LM proposals after `history`, excluding `avoid`, renormalized.
    fn proposals(&self, history: &[TokenId], avoid: Option<TokenId>) -> Vec<(TokenId, f64)> {
        let mut top = self.lm.top_continuations(history, self.params.proposals + 1);
        top.retain(|(id, _)| Some(*id) != avoid);
        top.truncate(self.params.proposals);
        let mass: f64 = top.iter().map(|(_, p)| p).sum();
        top.into_iter().map(|(id, p)| (id, p / mass)).collect()
    }

    fn emit(
        &self,
        state: &EditState,
        id: TokenId,
        logprob: f64,
        next: impl FnOnce(&mut EditState),
    ) -> Expansion<EditState> {
        let mut s = state.clone();
        s.history.push(id);
        next(&mut s);
        Expansion {
            token: if id == EOS_ID { EOS.to_string() } else { self.lm.token(id).to_string() },
            logprob,
            state: s,
        }
    }

    /// Expansions that consume source token `pos` (or finish the sentence).
    fn advance(
        &self,
        source: &MarkedText,
        state: &EditState,
        pos: usize,
        base: f64,
        allow_delete: bool,
        out: &mut Vec<Expansion<EditState>>,
    ) {
        let words = &source.sentence.tokens;
        if pos == words.len() {
            out.push(self.emit(state, EOS_ID, base, |s| {
                s.pos = pos;
                s.done = true;
            }));
            return;
        }
        let region = Self::region(source, pos);
        let keep = self.keep_prob(region);
        let src_id = self.lm.id(&words[pos].surface);
        // Copies keep the surface form even for out-of-vocabulary tokens.
        let mut copy = state.clone();
        copy.history.push(src_id);
        copy.pos = pos + 1;
        copy.fill = 0;
        copy.inserted = false;
        out.push(Expansion { token: words[pos].surface.clone(), logprob: base + keep.ln(), state: copy });
        if region == Region::Frozen {
            return;
        }
        let edit = 1.0 - keep;
        let p = &self.params;
        for (id, q) in self.proposals(&state.history, Some(src_id)) {
            out.push(self.emit(state, id, base + (edit * p.substitute_share).ln() + q.ln(), |s| {
                s.pos = pos + 1;
                s.fill = 0;
                s.inserted = false;
            }));
        }
        if allow_delete && Self::placeholders_at(source, pos + 1) == 0 {
            self.advance(source, state, pos + 1, base + (edit * p.delete_share).ln(), false, out);
        }
        if !state.inserted && Self::insertion_allowed(source, pos) {
            for (id, q) in self.proposals(&state.history, Some(src_id)) {
                out.push(self.emit(state, id, base + (edit * p.insert_share).ln() + q.ln(), |s| {
                    s.inserted = true;
                }));
            }
        }
    }
}

impl GeneratorBackend for EditBackend<'_> {
    type State = EditState;

    fn initial_state(&self, _source: &MarkedText) -> Result<EditState, BackendError> {
        Ok(EditState { pos: 0, fill: 0, inserted: false, done: false, history: self.lm.history::<&str>(&[]) })
    }

    fn step(
        &self,
        hyp: &Hypothesis<EditState>,
        source: &MarkedText,
    ) -> Result<Vec<Expansion<EditState>>, BackendError> {
        let state = &hyp.state;
        let mut out = Vec::new();
        let need = Self::placeholders_at(source, state.pos);
        if need > 0 {
            let max = need * self.params.max_fill;
            if state.fill < max {
                for (id, p) in self.lm.top_continuations(&state.history, self.params.proposals) {
                    out.push(self.emit(state, id, p.ln(), |s| s.fill += 1));
                }
            }
            if state.fill >= need {
                let next = source.sentence.tokens.get(state.pos).map(|t| self.lm.id(&t.surface)).unwrap_or(EOS_ID);
                let stop = self.lm.prob_id(next, &state.history).ln();
                // The gap is settled; what follows is an ordinary position.
                let mut settled = state.clone();
                settled.inserted = true;
                self.advance(source, &settled, state.pos, stop, true, &mut out);
            }
        } else {
            self.advance(source, state, state.pos, 0.0, true, &mut out);
        }
        if out.is_empty() {
            return Err(BackendError::Failed(format!("no expansion available at source position {}", state.pos)));
        }
        Ok(out)
    }

    fn is_complete(&self, hyp: &Hypothesis<EditState>) -> bool {
        hyp.state.done
    }
}

/// Output tokens of a hypothesis, without the end marker.
pub fn output_tokens<S>(hyp: &Hypothesis<S>) -> &[String] {
    match hyp.tokens.last() {
        Some(t) if t == EOS => &hyp.tokens[..hyp.tokens.len() - 1],
        _ => &hyp.tokens,
    }
}

/// Decoding length bound for a source: room for every token, every
/// placeholder fill and one insertion per position.
pub fn max_len_for(source: &MarkedText, params: &EditParams) -> usize {
    2 * source.sentence.len() + params.max_fill * source.placeholders.len() + 2
}

/// A candidate sentence together with its generation log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub text: String,
    pub tokens: Vec<String>,
    pub logprob: f64,
}

/// Runs the built-in backend through diverse beam search.
pub fn propose_with(
    lm: &NGramLanguageModel,
    params: EditParams,
    source: &MarkedText,
    beam: &BeamConfig,
) -> Result<Vec<Proposal>, BeamError> {
    let backend = EditBackend::with_params(lm, params);
    let mut config = *beam;
    config.max_len = config.max_len.max(max_len_for(source, &params));
    let hyps = diverse_beam(&backend, source, &config)?;
    Ok(hyps
        .iter()
        .map(|h| {
            let tokens = output_tokens(h).to_vec();
            Proposal { text: render_tokens(&source.sentence, &tokens), tokens, logprob: h.logprob }
        })
        .collect())
}

/// Up to `k` candidate revisions of `source`, using `k` groups of width one.
/// Falls back to the unchanged sentence if decoding yields nothing.
pub fn propose_edits(lm: &NGramLanguageModel, source: &MarkedText, k: usize) -> Vec<String> {
    let k = k.max(1);
    let beam = BeamConfig { beam_size: k, num_groups: k, strength: 1.0, max_len: 0 };
    match propose_with(lm, EditParams::default(), source, &beam) {
        Ok(p) if !p.is_empty() => p.into_iter().map(|p| p.text).collect(),
        _ => vec![source.sentence.raw.clone()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_marked, tokenize, Span};

    fn lm(lines: &[&str]) -> NGramLanguageModel {
        NGramLanguageModel::train(lines, 3, 0.75).unwrap()
    }

    #[test]
    fn regions_follow_marks() {
        let m = parse_marked("a b <? c d ?> e f g").unwrap();
        let r: Vec<Region> = (0..7).map(|i| EditBackend::region(&m, i)).collect();
        use Region::*;
        assert_eq!(r, vec![Frozen, Halo, InSpan, InSpan, Halo, Frozen, Frozen]);
        let m = parse_marked("a b () c d").unwrap();
        let r: Vec<Region> = (0..4).map(|i| EditBackend::region(&m, i)).collect();
        assert_eq!(r, vec![Frozen, Halo, Halo, Frozen]);
        let m = parse_marked("a b").unwrap();
        assert_eq!(EditBackend::region(&m, 0), Unmarked);
    }

    #[test]
    fn placeholder_is_filled_from_lm() {
        let corpus = [
            "Grammatical error correction ( GEC ) is the task of automatically correcting errors in text .",
            "Machine translation ( MT ) is the task of automatically translating text .",
            "Summarization is the task of automatically shortening text .",
            "Parsing is the task of automatically analysing sentences .",
        ];
        let lm = lm(&corpus);
        let src = parse_marked(
            "Grammar error correction (GEC) () of automatically correcting errors made by a human writer in text.",
        )
        .unwrap();
        let cands = propose_edits(&lm, &src, 15);
        assert!(!cands.is_empty());
        assert!(cands.iter().any(|c| c.contains("the task of automatically")), "{cands:#?}");
        for c in &cands {
            assert!(!c.contains("()"), "placeholder left in {c}");
            assert!(c.ends_with("made by a human writer in text."), "{c}");
        }
    }

    #[test]
    fn dominant_substitute_appears() {
        let mut corpus = vec!["the model improves accuracy ."; 20];
        corpus.push("the model boosts accuracy .");
        let lm = lm(&corpus);
        let src = MarkedText::with_span(tokenize("the model raises accuracy ."), Span::new(3, 3)).unwrap();
        let cands = propose_edits(&lm, &src, 15);
        assert!(cands.iter().any(|c| c == "the model improves accuracy ."), "{cands:#?}");
    }

    #[test]
    fn tokens_beyond_halo_are_preserved() {
        let lm = lm(&["we propose a new method for the task .", "a simple method works well ."]);
        let src =
            MarkedText::with_span(tokenize("we propose a novel approach for this task ."), Span::new(4, 5)).unwrap();
        let beam = BeamConfig { beam_size: 15, num_groups: 15, strength: 1.0, max_len: 0 };
        let words = src.sentence.owned_words();
        for p in propose_with(&lm, EditParams::default(), &src, &beam).unwrap() {
            assert_eq!(p.tokens[..2], words[..2], "{:?}", p.tokens);
            let tail = &words[6..];
            assert_eq!(&p.tokens[p.tokens.len() - tail.len()..], tail, "{:?}", p.tokens);
        }
    }

    #[test]
    fn unmarked_sentence_is_fully_editable_and_deterministic() {
        let lm = lm(&["we propose a new method .", "we present a new model ."]);
        let src = MarkedText::plain(tokenize("we propose a novel method ."));
        let a = propose_edits(&lm, &src, 15);
        let b = propose_edits(&lm, &src, 15);
        assert_eq!(a, b);
        assert!(a.len() > 1);
        assert!(a.iter().any(|c| !c.starts_with("we")), "{a:#?}");
    }
}
