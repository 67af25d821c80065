//! Diverse beam search over a pluggable generation backend.
//!
//! The beam is split into `num_groups` groups of equal width. At every time
//! step the groups are expanded in a fixed order; a candidate in group `g`
//! has `strength * n` subtracted from its score, where `n` counts the
//! hypotheses of groups `0..g` that emitted the same token at this step
//! (Hamming diversity). With one group or zero strength this is ordinary
//! beam search.

use std::collections::HashMap;

use thiserror::Error;

use crate::text::MarkedText;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend produced a non-finite or positive log-probability {0} for token {1:?}")]
    InvalidScore(f64, String),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamError {
    #[error("invalid beam configuration: {0}")]
    InvalidConfig(String),
    #[error("generation failed in group {group} at step {step}: {source}")]
    Generation {
        group: usize,
        step: usize,
        #[source]
        source: BackendError,
    },
}

/// One scored continuation proposed by a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion<S> {
    pub token: String,
    pub logprob: f64,
    pub state: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<S> {
    pub tokens: Vec<String>,
    /// Cumulative backend log-probability.
    pub logprob: f64,
    /// Cumulative log-probability minus the diversity penalties paid.
    pub score: f64,
    pub group: usize,
    /// Set when `max_len` cut the hypothesis off before the backend
    /// completed it.
    pub truncated: bool,
    pub state: S,
}

pub trait GeneratorBackend {
    type State: Clone;

    fn initial_state(&self, source: &MarkedText) -> Result<Self::State, BackendError>;

    /// Scored next-token expansions of an incomplete hypothesis.
    fn step(
        &self,
        hypothesis: &Hypothesis<Self::State>,
        source: &MarkedText,
    ) -> Result<Vec<Expansion<Self::State>>, BackendError>;

    fn is_complete(&self, hypothesis: &Hypothesis<Self::State>) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub num_groups: usize,
    pub strength: f64,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { beam_size: 15, num_groups: 15, strength: 1.0, max_len: 64 }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), BeamError> {
        if self.beam_size == 0 || self.num_groups == 0 {
            return Err(BeamError::InvalidConfig("beam size and group count must be positive".into()));
        }
        if !self.beam_size.is_multiple_of(self.num_groups) {
            return Err(BeamError::InvalidConfig(format!(
                "{} groups do not divide beam size {}",
                self.num_groups, self.beam_size
            )));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(BeamError::InvalidConfig(format!("strength {} must be >= 0", self.strength)));
        }
        Ok(())
    }

    pub fn group_width(&self) -> usize {
        self.beam_size / self.num_groups
    }
}

/// Runs diverse beam search and returns at most `beam_size` hypotheses,
/// sorted by score (best first; ties keep group order).
pub fn diverse_beam<B: GeneratorBackend>(
    backend: &B,
    source: &MarkedText,
    config: &BeamConfig,
) -> Result<Vec<Hypothesis<B::State>>, BeamError> {
    config.validate()?;
    let width = config.group_width();
    let init = backend.initial_state(source).map_err(|source| BeamError::Generation { group: 0, step: 0, source })?;
    let mut groups: Vec<Vec<Hypothesis<B::State>>> = (0..config.num_groups)
        .map(|g| {
            vec![Hypothesis {
                tokens: Vec::new(),
                logprob: 0.0,
                score: 0.0,
                group: g,
                truncated: false,
                state: init.clone(),
            }]
        })
        .collect();

    for step in 0..config.max_len {
        let live = groups.iter().flatten().any(|h| !backend.is_complete(h));
        if !live {
            break;
        }
        let mut emitted: HashMap<String, usize> = HashMap::new();
        for (g, beam) in groups.iter_mut().enumerate() {
            // (hypothesis, emitted a token at this step)
            let mut candidates: Vec<(Hypothesis<B::State>, bool)> = Vec::new();
            for hyp in beam.iter() {
                if backend.is_complete(hyp) {
                    candidates.push((hyp.clone(), false));
                    continue;
                }
                let expansions =
                    backend.step(hyp, source).map_err(|source| BeamError::Generation { group: g, step, source })?;
                for e in expansions {
                    if !e.logprob.is_finite() || e.logprob > 1e-12 {
                        return Err(BeamError::Generation {
                            group: g,
                            step,
                            source: BackendError::InvalidScore(e.logprob, e.token),
                        });
                    }
                    let penalty = config.strength * emitted.get(&e.token).copied().unwrap_or(0) as f64;
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(e.token);
                    candidates.push((
                        Hypothesis {
                            tokens,
                            logprob: hyp.logprob + e.logprob,
                            score: hyp.score + e.logprob - penalty,
                            group: g,
                            truncated: false,
                            state: e.state,
                        },
                        true,
                    ));
                }
            }
            candidates.sort_by(|a, b| b.0.score.total_cmp(&a.0.score));
            candidates.truncate(width);
            for (hyp, fresh) in &candidates {
                if *fresh {
                    let token = hyp.tokens.last().expect("fresh hypotheses have a token");
                    *emitted.entry(token.clone()).or_insert(0) += 1;
                }
            }
            *beam = candidates.into_iter().map(|(h, _)| h).collect();
        }
    }

    let mut finished: Vec<Hypothesis<B::State>> = groups
        .into_iter()
        .flatten()
        .map(|mut h| {
            if !backend.is_complete(&h) {
                h.truncated = true;
            }
            h
        })
        .collect();
    finished.sort_by(|a, b| b.score.total_cmp(&a.score));
    finished.truncate(config.beam_size);
    Ok(finished)
}

/// Seeded random backends over tiny vocabularies, for exercising the
/// search itself.
pub mod toy {
    use std::hash::{DefaultHasher, Hash, Hasher};

    use super::{BackendError, Expansion, GeneratorBackend, Hypothesis};
    use crate::text::MarkedText;

    pub const END: &str = "</s>";

    /// Scores are a log-softmax over pseudo-random logits keyed by
    /// (seed, prefix). Every token, `END` included, is offered at every
    /// step; a hypothesis completes on `END` or at `length` tokens.
    #[derive(Debug, Clone)]
    pub struct RandomBackend {
        pub seed: u64,
        pub vocab: Vec<String>,
        pub length: usize,
    }

    impl RandomBackend {
        pub fn new(seed: u64, vocab_size: usize, length: usize) -> Self {
            let mut vocab: Vec<String> = (0..vocab_size).map(|i| format!("t{i}")).collect();
            vocab.push(END.to_string());
            Self { seed, vocab, length }
        }

        pub fn scores(&self, prefix: &[String]) -> Vec<f64> {
            let logits: Vec<f64> = self
                .vocab
                .iter()
                .map(|tok| {
                    let mut h = DefaultHasher::new();
                    (self.seed, prefix, tok).hash(&mut h);
                    (h.finish() >> 11) as f64 / (1u64 << 53) as f64 * 4.0
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
            logits.iter().map(|l| l - z).collect()
        }

        pub fn complete(&self, tokens: &[String]) -> bool {
            tokens.last().is_some_and(|t| t == END) || tokens.len() >= self.length
        }
    }

    impl GeneratorBackend for RandomBackend {
        type State = ();

        fn initial_state(&self, _: &MarkedText) -> Result<(), BackendError> {
            Ok(())
        }

        fn step(&self, hyp: &Hypothesis<()>, _: &MarkedText) -> Result<Vec<Expansion<()>>, BackendError> {
            Ok(self
                .vocab
                .iter()
                .zip(self.scores(&hyp.tokens))
                .map(|(t, lp)| Expansion { token: t.clone(), logprob: lp, state: () })
                .collect())
        }

        fn is_complete(&self, hyp: &Hypothesis<()>) -> bool {
            self.complete(&hyp.tokens)
        }
    }
}
