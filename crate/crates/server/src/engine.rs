use std::sync::Arc;

use draftforge_core::checker::{check, CheckReport, CheckerConfig};
use draftforge_core::completion::{complete, DEFAULT_MAX_TOKENS, DEFAULT_NUCLEUS_P, DEFAULT_SUGGESTIONS};
use draftforge_core::generate::Reviser;
use draftforge_core::lm::NGramLanguageModel;
use draftforge_core::revision::{revise, RevisionSettings, DEFAULT_CONTEXT_TOKENS};

use crate::session::{Job, JobOutput};

pub const CONTEXT_TOKENS: usize = DEFAULT_CONTEXT_TOKENS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionSettings {
    pub k: usize,
    pub max_tokens: usize,
    pub nucleus_p: f64,
}

impl Default for CompletionSettings {
    fn default() -> Self {
        Self { k: DEFAULT_SUGGESTIONS, max_tokens: DEFAULT_MAX_TOKENS, nucleus_p: DEFAULT_NUCLEUS_P }
    }
}

/// Shared, immutable resources for running session jobs.
pub struct Engine {
    pub lm: Arc<NGramLanguageModel>,
    pub reviser: Arc<dyn Reviser>,
    pub revision: RevisionSettings,
    pub completion: CompletionSettings,
    pub checker: CheckerConfig,
    pub seed: u64,
}

impl Engine {
    pub fn new(lm: Arc<NGramLanguageModel>, reviser: Arc<dyn Reviser>) -> Self {
        Self {
            lm,
            reviser,
            revision: RevisionSettings::default(),
            completion: CompletionSettings::default(),
            checker: CheckerConfig::default(),
            seed: 0,
        }
    }

    pub fn run(&self, job: Job) -> JobOutput {
        match job {
            Job::Revision { meta, request } => {
                let result =
                    revise(&request, self.reviser.as_ref(), &self.lm, &self.revision).map_err(|e| e.to_string());
                JobOutput::Revision { meta, result }
            }
            Job::Completion { meta, context, k, seed } => {
                let c = &self.completion;
                let continuations =
                    complete(&context, &self.lm, k.unwrap_or(c.k), c.max_tokens, c.nucleus_p, self.seed ^ seed);
                JobOutput::Completion { meta, continuations }
            }
        }
    }

    pub fn check(&self, text: &str) -> CheckReport {
        check(text, &self.checker)
    }
}
