//! Token-level longest-common-subsequence diff between a sentence and a
//! revision of it.
//!
//! Runs carry the exact bytes they stand for, whitespace included, so
//! applying a script to its source reproduces the target byte for byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{tokenize, TokenizedSentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffOp {
    Keep,
    Insert,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRun {
    pub op: DiffOp,
    pub text: String,
}

impl DiffRun {
    fn new(op: DiffOp, text: impl Into<String>) -> Self {
        Self { op, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("diff does not match source at byte {offset}")]
pub struct DiffError {
    pub offset: usize,
}

/// Index pairs `(i, j)` of a longest common subsequence of `a` and `b`,
/// in increasing order. Among equal-length alignments, earlier tokens of
/// `a` are matched first.
pub fn lcs_pairs<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    // suffix[i][j] = LCS length of a[i..], b[j..]
    let mut suffix = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i][j] = if a[i] == b[j] { suffix[i + 1][j + 1] + 1 } else { suffix[i + 1][j].max(suffix[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::with_capacity(suffix[0][0] as usize);
    while i < n && j < m {
        if a[i] == b[j] {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if suffix[i + 1][j] >= suffix[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

fn push(runs: &mut Vec<DiffRun>, op: DiffOp, text: &str) {
    if text.is_empty() {
        return;
    }
    match runs.last_mut() {
        Some(last) if last.op == op => last.text.push_str(text),
        _ => runs.push(DiffRun::new(op, text)),
    }
}

/// Keep/insert/delete runs turning `source` into `candidate`.
pub fn diff_highlight(source: &str, candidate: &str) -> Vec<DiffRun> {
    let src = tokenize(source);
    let cand = tokenize(candidate);
    let pairs = lcs_pairs(&src.words(), &cand.words());
    let mut runs = Vec::new();
    let (mut i, mut j) = (0, 0);
    let flush_to = |runs: &mut Vec<DiffRun>, i: &mut usize, j: &mut usize, ti: usize, tj: usize| {
        while *i < ti {
            push(runs, DiffOp::Delete, src.gap(*i));
            push(runs, DiffOp::Delete, &src.tokens[*i].surface);
            *i += 1;
        }
        while *j < tj {
            push(runs, DiffOp::Insert, cand.gap(*j));
            push(runs, DiffOp::Insert, &cand.tokens[*j].surface);
            *j += 1;
        }
    };
    for &(pi, pj) in &pairs {
        flush_to(&mut runs, &mut i, &mut j, pi, pj);
        let (sg, cg) = (src.gap(i), cand.gap(j));
        if sg == cg {
            push(&mut runs, DiffOp::Keep, sg);
        } else {
            push(&mut runs, DiffOp::Delete, sg);
            push(&mut runs, DiffOp::Insert, cg);
        }
        push(&mut runs, DiffOp::Keep, &src.tokens[i].surface);
        i += 1;
        j += 1;
    }
    flush_to(&mut runs, &mut i, &mut j, src.len(), cand.len());
    let (sg, cg) = (src.gap(src.len()), cand.gap(cand.len()));
    if sg == cg {
        push(&mut runs, DiffOp::Keep, sg);
    } else {
        push(&mut runs, DiffOp::Delete, sg);
        push(&mut runs, DiffOp::Insert, cg);
    }
    runs
}

/// Replays a script over `source`.
pub fn apply_diff(source: &str, runs: &[DiffRun]) -> Result<String, DiffError> {
    let mut out = String::with_capacity(source.len());
    let mut at = 0;
    for run in runs {
        match run.op {
            DiffOp::Insert => out.push_str(&run.text),
            DiffOp::Keep | DiffOp::Delete => {
                if !source[at..].starts_with(&run.text) {
                    return Err(DiffError { offset: at });
                }
                if run.op == DiffOp::Keep {
                    out.push_str(&run.text);
                }
                at += run.text.len();
            }
        }
    }
    if at != source.len() {
        return Err(DiffError { offset: at });
    }
    Ok(out)
}

/// Joins generated tokens into text, reusing the source sentence's spacing
/// wherever two consecutive output tokens were copied from consecutive
/// source tokens.
pub fn render_tokens<S: AsRef<str>>(source: &TokenizedSentence, tokens: &[S]) -> String {
    let out: Vec<&str> = tokens.iter().map(|t| t.as_ref()).collect();
    let pairs = lcs_pairs(&source.words(), &out);
    let mut aligned = vec![None; out.len()];
    for (i, j) in pairs {
        aligned[j] = Some(i);
    }
    let mut text = String::new();
    for (j, tok) in out.iter().enumerate() {
        if j > 0 {
            match (aligned[j - 1], aligned[j]) {
                (Some(pi), Some(ci)) if ci == pi + 1 => text.push_str(source.gap(ci)),
                _ => {
                    let attach_left = matches!(*tok, "." | "," | ";" | ":" | "!" | "?" | ")" | "]" | "%");
                    let glued = matches!(out[j - 1], "(" | "[");
                    if !attach_left && !glued {
                        text.push(' ');
                    }
                }
            }
        }
        text.push_str(tok);
    }
    text
}
