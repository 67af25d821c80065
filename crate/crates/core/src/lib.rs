//! Revision and completion machinery for a scientific writing assistant.
//!
//! A sentence (optionally with `<? … ?>` edit marks and `()` placeholders)
//! goes to a [`generate::Reviser`]; candidates are re-ranked by contextual
//! perplexity under an [`lm::NGramLanguageModel`] and returned with token
//! diffs. The same model samples completions. [`synthesis`] builds training
//! data, [`eval`] runs the span-focus experiment, and [`checker`] produces
//! grammar diagnostics.

pub mod beam;
pub mod checker;
pub mod completion;
pub mod config;
pub mod diff;
pub mod eval;
pub mod generate;
pub mod lm;
pub mod propose;
pub mod revision;
pub mod synthesis;
pub mod text;
