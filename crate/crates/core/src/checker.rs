//! Grammar and spelling diagnostics: a handful of built-in rules plus an
//! optional client for a LanguageTool-compatible checking service.

use std::ops::Range;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text::{self, tokenize, utf16_to_byte};

pub const CHECKER_URL_ENV: &str = "DRAFTFORGE_CHECKER_URL";
pub const DEFAULT_LANGUAGE: &str = "en-US";
pub const DEFAULT_CHECK_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticSource {
    External,
    Builtin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Byte range in the checked text.
    pub range: Range<usize>,
    pub message: String,
    pub replacements: Vec<String>,
    pub source: DiagnosticSource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckerConfig {
    pub url: Option<String>,
    pub language: String,
    pub timeout: Duration,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        Self { url: None, language: DEFAULT_LANGUAGE.into(), timeout: DEFAULT_CHECK_TIMEOUT }
    }
}

impl CheckerConfig {
    /// Defaults with the service URL taken from the environment, if set.
    pub fn from_env() -> Self {
        Self { url: std::env::var(CHECKER_URL_ENV).ok().filter(|u| !u.is_empty()), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub diagnostics: Vec<Diagnostic>,
    /// Set when a service was configured but could not be used.
    pub degraded: bool,
}

const AN_EXCEPTIONS: &[&str] = &["hour", "hours", "honest", "honor", "honour", "heir", "herb"];
const A_EXCEPTIONS: &[&str] = &[
    "one",
    "once",
    "university",
    "unique",
    "unit",
    "union",
    "user",
    "users",
    "usual",
    "useful",
    "usage",
    "uniform",
    "universal",
    "european",
    "eu",
    "unified",
    "utility",
    "utterance",
];

fn wants_an(word: &str) -> Option<bool> {
    let lower = word.to_lowercase();
    let first = lower.chars().next()?;
    if !first.is_ascii_alphabetic() {
        return None;
    }
    if AN_EXCEPTIONS.contains(&lower.as_str()) {
        return Some(true);
    }
    if A_EXCEPTIONS.contains(&lower.as_str()) {
        return Some(false);
    }
    Some(matches!(first, 'a' | 'e' | 'i' | 'o' | 'u'))
}

fn match_case(replacement: &str, original: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        capitalize(replacement)
    } else {
        replacement.to_string()
    }
}

fn capitalize(word: &str) -> String {
    let mut cs = word.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

fn is_word(s: &str) -> bool {
    s.chars().any(char::is_alphabetic)
}

/// Built-in rules: doubled words, a/an agreement, and lowercase sentence
/// starts.
pub fn builtin_diagnostics(text: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for range in text::sentence_ranges(text) {
        let base = range.start;
        let sent = tokenize(&text[range]);
        let toks = &sent.tokens;
        for k in 0..toks.len() {
            let t = &toks[k];
            let at = |r: Range<usize>| base + r.start..base + r.end;
            if k + 1 < toks.len() {
                let n = &toks[k + 1];
                let gap = sent.gap(k + 1);
                if is_word(&t.surface)
                    && t.surface.to_lowercase() == n.surface.to_lowercase()
                    && !gap.is_empty()
                    && gap.trim().is_empty()
                {
                    out.push(Diagnostic {
                        range: at(t.char_start..n.char_end),
                        message: format!("Possible repeated word: \"{}\"", t.surface),
                        replacements: vec![t.surface.clone()],
                        source: DiagnosticSource::Builtin,
                    });
                }
                let article = t.surface.to_lowercase();
                if article == "a" || article == "an" {
                    if let Some(an) = wants_an(&n.surface) {
                        if an != (article == "an") {
                            let fix = if an { "an" } else { "a" };
                            out.push(Diagnostic {
                                range: at(t.char_start..t.char_end),
                                message: format!("Use \"{fix}\" before \"{}\"", n.surface),
                                replacements: vec![match_case(fix, &t.surface)],
                                source: DiagnosticSource::Builtin,
                            });
                        }
                    }
                }
            }
            let starts_sentence = k == 0
                || (matches!(toks[k - 1].surface.as_str(), "." | "!" | "?")
                    && !sent.gap(k).is_empty()
                    && (k < 2 || !text::is_abbreviation(&toks[k - 2].surface)));
            if starts_sentence
                && t.surface.chars().next().is_some_and(|c| c.is_ascii_lowercase())
                && t.surface.chars().all(char::is_alphabetic)
            {
                out.push(Diagnostic {
                    range: at(t.char_start..t.char_end),
                    message: "Sentence should start with a capital letter".into(),
                    replacements: vec![capitalize(&t.surface)],
                    source: DiagnosticSource::Builtin,
                });
            }
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct LtReplacement {
    value: String,
}

#[derive(Debug, Deserialize)]
struct LtMatch {
    offset: usize,
    length: usize,
    message: String,
    #[serde(default)]
    replacements: Vec<LtReplacement>,
}

#[derive(Debug, Deserialize)]
struct LtResponse {
    matches: Vec<LtMatch>,
}

/// Queries the external service. Offsets in its answer are UTF-16 code
/// units; matches that do not land on character boundaries are dropped.
pub fn external_diagnostics(
    text: &str,
    url: &str,
    language: &str,
    timeout: Duration,
) -> Result<Vec<Diagnostic>, String> {
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(true).build().into();
    let mut resp = agent.post(url).send_form([("text", text), ("language", language)]).map_err(|e| e.to_string())?;
    let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
    let parsed: LtResponse = serde_json::from_str(&body).map_err(|e| e.to_string())?;
    Ok(parsed
        .matches
        .into_iter()
        .filter_map(|m| {
            let start = utf16_to_byte(text, m.offset)?;
            let end = utf16_to_byte(text, m.offset + m.length)?;
            Some(Diagnostic {
                range: start..end,
                message: m.message,
                replacements: m.replacements.into_iter().map(|r| r.value).collect(),
                source: DiagnosticSource::External,
            })
        })
        .collect())
}

/// Orders by start offset and drops any diagnostic overlapping one already
/// kept. Earlier entries in `diagnostics` win ties, so callers list the
/// preferred source first.
pub fn merge_diagnostics(diagnostics: Vec<Diagnostic>) -> Vec<Diagnostic> {
    let mut indexed: Vec<(usize, Diagnostic)> = diagnostics.into_iter().enumerate().collect();
    indexed.sort_by_key(|(i, d)| (d.range.start, *i));
    let mut kept: Vec<Diagnostic> = Vec::new();
    for (_, d) in indexed {
        let overlaps = kept.iter().any(|k| {
            let touch = d.range.start < k.range.end && k.range.start < d.range.end;
            touch || d.range == k.range
        });
        if !overlaps {
            kept.push(d);
        }
    }
    kept
}

pub fn check(text: &str, config: &CheckerConfig) -> CheckReport {
    let mut all = Vec::new();
    let mut degraded = false;
    if let Some(url) = &config.url {
        match external_diagnostics(text, url, &config.language, config.timeout) {
            Ok(ds) => all.extend(ds),
            Err(_) => degraded = true,
        }
    }
    all.extend(builtin_diagnostics(text));
    CheckReport { diagnostics: merge_diagnostics(all), degraded }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtin(text: &str) -> Vec<Diagnostic> {
        check(text, &CheckerConfig::default()).diagnostics
    }

    #[test]
    fn doubled_word() {
        let ds = builtin("the the cat");
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].range, 0..7);
        assert_eq!(ds[0].replacements, vec!["the"]);
    }

    #[test]
    fn article_agreement() {
        let ds = builtin("An cat sat. It is a apple and an hour.");
        let fixes: Vec<(&str, &str)> = ds
            .iter()
            .map(|d| (&"An cat sat. It is a apple and an hour."[d.range.clone()], d.replacements[0].as_str()))
            .collect();
        assert_eq!(fixes, vec![("An", "A"), ("a", "an")]);
        assert_eq!(builtin("an cat")[0].replacements, vec!["a"]);
    }

    #[test]
    fn lowercase_sentence_start() {
        let ds = builtin("Fine here. then it broke.");
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].range, 11..15);
        assert_eq!(ds[0].replacements, vec!["Then"]);
    }

    #[test]
    fn clean_text_has_no_diagnostics() {
        assert!(builtin("The cat sat on a mat. An hour passed.").is_empty());
        assert!(builtin("").is_empty());
    }

    #[test]
    fn closed_port_degrades() {
        let cfg = CheckerConfig {
            url: Some("http://127.0.0.1:9/v2/check".into()),
            timeout: Duration::from_millis(500),
            ..Default::default()
        };
        let r = check("the the cat", &cfg);
        assert!(r.degraded);
        assert_eq!(r.diagnostics.len(), 1);
    }

    #[test]
    fn merge_sorts_and_removes_overlaps() {
        let d = |r: Range<usize>, s| Diagnostic { range: r, message: String::new(), replacements: vec![], source: s };
        let merged = merge_diagnostics(vec![
            d(5..8, DiagnosticSource::External),
            d(0..3, DiagnosticSource::External),
            d(6..9, DiagnosticSource::Builtin),
            d(0..3, DiagnosticSource::Builtin),
            d(9..10, DiagnosticSource::Builtin),
        ]);
        let ranges: Vec<_> = merged.iter().map(|d| (d.range.clone(), d.source)).collect();
        assert_eq!(
            ranges,
            vec![
                (0..3, DiagnosticSource::External),
                (5..8, DiagnosticSource::External),
                (9..10, DiagnosticSource::Builtin)
            ]
        );
    }
}
