use std::collections::HashSet;

use draftforge_core::beam::toy::RandomBackend;
use draftforge_core::beam::{diverse_beam, BeamConfig};
use draftforge_core::checker::{builtin_diagnostics, merge_diagnostics};
use draftforge_core::completion::{build_prefix, CompletionContext};
use draftforge_core::diff::{apply_diff, diff_highlight};
use draftforge_core::eval::{align_sentence_lists, containment_score, BagOfWords};
use draftforge_core::generate::{GeneratedCandidate, GenerationError, Reviser};
use draftforge_core::lm::{nucleus, NGramLanguageModel};
use draftforge_core::revision::{revise, RevisionRequest, RevisionSettings};
use draftforge_core::synthesis::{attach_marks, edit_ratio, select_span, MarkBranch, RewriteFlags, TrainingPair};
use draftforge_core::text::{insert_marks, lemma, parse_marked, tokenize, MarkedText, Span};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-zA-Z0-9]{1,8}",
        1 => "[.,;:!]",
        1 => "[a-z]{1,5}-[a-z]{1,5}",
    ]
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..16).prop_map(|ws| ws.join(" "))
}

fn toy_lm() -> NGramLanguageModel {
    NGramLanguageModel::train(
        &[
            "the model improves the accuracy .",
            "the method improves the score .",
            "a model reduces the error .",
            "our method reduces the cost on the test set .",
        ],
        3,
        0.75,
    )
    .unwrap()
}

const VOCAB: &[&str] = &["the", "model", "method", "improves", "reduces", "accuracy", "error", "cost", ".", "zebra"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mark_roundtrip(s in sentence(), a in 0usize..16, l in 0usize..16) {
        let sent = tokenize(&s);
        let n = sent.len();
        let start = a % n + 1;
        let end = (start + l % (n - start + 1)).min(n);
        let span = Span::new(start, end);
        let marked = insert_marks(&sent, span).unwrap();
        let parsed = parse_marked(&marked).unwrap();
        prop_assert_eq!(parsed.edit_span, Some(span));
        prop_assert_eq!(&parsed.sentence.raw, &s);
        prop_assert_eq!(parsed.render(), marked);
    }

    #[test]
    fn offsets_reconstruct(s in "[^\n]{0,60}") {
        let t = tokenize(&s);
        prop_assert_eq!(t.reconstruct(), s.clone());
        for w in t.tokens.windows(2) {
            prop_assert!(w[0].char_end <= w[1].char_start);
        }
        for tok in &t.tokens {
            prop_assert!(tok.char_start < tok.char_end);
            prop_assert_eq!(&s[tok.char_start..tok.char_end], tok.surface.as_str());
        }
    }

    #[test]
    fn lemma_idempotent(w in "[a-zA-Z]{1,14}") {
        let once = lemma(&w);
        prop_assert_eq!(lemma(&once), once);
    }

    #[test]
    fn span_matches_brute_force(bits in prop::collection::vec(any::<bool>(), 1..30)) {
        let flags = RewriteFlags { c: bits.clone() };
        let got = select_span(&flags);
        let n = bits.len();
        let cp = |i: usize| -> i64 {
            if i == 0 || i == n + 1 { 0 } else if bits[i - 1] { 10 } else { -1 }
        };
        let mut best: Option<(usize, usize, i64)> = None;
        if bits.iter().any(|&b| b) {
            for a in 1..=n {
                for b in a..=n {
                    let v = (a..=b).map(cp).sum::<i64>() - (0..a).map(cp).sum::<i64>() - (b + 1..=n + 1).map(cp).sum::<i64>();
                    if best.is_none_or(|(_, _, bv)| v > bv) {
                        best = Some((a, b, v));
                    }
                }
            }
        }
        prop_assert_eq!(got.map(|(s, v)| (s.start_token, s.end_token, v)), best);
    }

    #[test]
    fn attach_marks_reparses_and_covers_a_flag(x in sentence(), y in sentence()) {
        let pair = TrainingPair::new(&x, &y);
        let out = attach_marks(&pair);
        let parsed = parse_marked(&out.text).unwrap();
        match out.branch {
            MarkBranch::Marked { start, end } => {
                prop_assert!(out.ratio <= 0.4);
                prop_assert_eq!(parsed.edit_span, Some(Span::new(start, end)));
                let flags = draftforge_core::synthesis::rewrite_flags(&pair);
                prop_assert!((start..=end).any(|i| flags.c[i - 1]));
            }
            _ => prop_assert_eq!(out.text, pair.x.raw),
        }
    }

    #[test]
    fn edit_ratio_bounded_and_monotone(bits in prop::collection::vec(any::<bool>(), 1..30), flip in any::<prop::sample::Index>()) {
        let f = RewriteFlags { c: bits.clone() };
        let r = edit_ratio(&f);
        prop_assert!((0.0..=1.0).contains(&r));
        let mut more = bits;
        let i = flip.index(more.len());
        more[i] = true;
        let more_ratio = edit_ratio(&RewriteFlags { c: more });
        prop_assert!(more_ratio >= r);
    }

    #[test]
    fn diff_applies_exactly(s in "[a-c ,.]{0,20}", c in "[a-d ,.]{0,20}") {
        let runs = diff_highlight(&s, &c);
        prop_assert_eq!(apply_diff(&s, &runs).unwrap(), c);
    }

    #[test]
    fn lm_normalizes(ctx in prop::collection::vec(prop::sample::select(VOCAB), 0..6)) {
        let lm = toy_lm();
        let d = lm.next_token_dist(&ctx);
        prop_assert!((d.sum() - 1.0).abs() < 1e-9);
        prop_assert!(d.iter().filter(|(t, _)| *t != "<s>").all(|(_, p)| p > 0.0));
    }

    #[test]
    fn perplexity_is_geometric_mean_of_dist(
        left in prop::collection::vec(prop::sample::select(VOCAB), 0..4),
        target in prop::collection::vec(prop::sample::select(VOCAB), 1..6),
        right in prop::collection::vec(prop::sample::select(VOCAB), 0..3),
    ) {
        let lm = toy_lm();
        let mut ctx: Vec<&str> = left.clone();
        let mut log_sum = 0.0;
        let scored: Vec<&str> = target.iter().copied().chain([right.first().copied().unwrap_or("</s>")]).collect();
        for t in &scored {
            log_sum += lm.next_token_dist(&ctx).get(t).ln();
            ctx.push(t);
        }
        let expected = (-log_sum / scored.len() as f64).exp();
        let got = lm.perplexity(&target, &left, &right).unwrap();
        prop_assert!(((got - expected) / expected).abs() < 1e-6);
    }

    #[test]
    fn containment_monotone_and_order_free(
        outs in prop::collection::vec(prop::collection::vec(prop::sample::select(&["a", "b", "c"][..]), 0..6), 0..8),
        x in prop::collection::vec(prop::sample::select(&["a", "b", "c"][..]), 2..6),
    ) {
        let span = Span::new(1, 2);
        let r = containment_score(&x, span, &outs);
        prop_assert!(r <= outs.len());
        let mut rev = outs.clone();
        rev.reverse();
        prop_assert_eq!(containment_score(&x, span, &rev), r);
        if !outs.is_empty() {
            prop_assert!(containment_score(&x, span, &outs[1..]) <= r);
        }
    }

    #[test]
    fn diagnostics_sorted_disjoint_and_local(s in "([a-zA-Z]{1,4}|an|a|the)( ([a-zA-Z]{1,4}|an|a|the|\\.)){0,12}") {
        let ds = merge_diagnostics(builtin_diagnostics(&s));
        for w in ds.windows(2) {
            prop_assert!(w[0].range.end <= w[1].range.start);
        }
        for d in &ds {
            for rep in &d.replacements {
                let mut t = s.clone();
                t.replace_range(d.range.clone(), rep);
                prop_assert_eq!(&t[..d.range.start], &s[..d.range.start]);
                prop_assert_eq!(&t[d.range.start + rep.len()..], &s[d.range.end..]);
            }
        }
    }

    #[test]
    fn prefix_injective(t1 in prop::option::of("[a-z]{0,3}"), s1 in prop::option::of("[a-z]{0,3}"),
                        t2 in prop::option::of("[a-z]{0,3}"), s2 in prop::option::of("[a-z]{0,3}")) {
        let p = |t: &Option<String>, s: &Option<String>| build_prefix(&CompletionContext { title: t.clone(), section: s.clone(), left_text: "left".into() });
        if (t1.clone(), s1.clone()) != (t2.clone(), s2.clone()) {
            prop_assert_ne!(p(&t1, &s1), p(&t2, &s2));
        }
    }
}

struct Fixed(Vec<String>);

impl Reviser for Fixed {
    fn generate(&self, _: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError> {
        Ok(self.0.iter().map(|t| GeneratedCandidate { text: t.clone(), logprob: -1.0 }).collect())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn revise_output_contract(
        input in prop::collection::vec(prop::sample::select(VOCAB), 1..7),
        cands in prop::collection::vec(prop::collection::vec(prop::sample::select(VOCAB), 0..7), 0..20),
        left in prop::collection::vec(prop::sample::select(VOCAB), 0..20),
        right in prop::collection::vec(prop::sample::select(VOCAB), 0..20),
    ) {
        let lm = toy_lm();
        let src = MarkedText::plain(tokenize(&input.join(" ")));
        let req = RevisionRequest::for_sentence(
            src,
            left.iter().map(|s| s.to_string()).collect(),
            right.iter().map(|s| s.to_string()).collect(),
        );
        let reviser = Fixed(cands.iter().map(|c| c.join(" ")).collect());
        let out = revise(&req, &reviser, &lm, &RevisionSettings::default()).unwrap();
        prop_assert!(out.candidates.len() <= 8);
        for w in out.candidates.windows(2) {
            prop_assert!(w[0].perplexity <= w[1].perplexity);
        }
        let mut seen = HashSet::new();
        for c in &out.candidates {
            prop_assert!(c.perplexity <= 1.3 * out.input_perplexity);
            prop_assert_eq!(apply_diff(&req.sentence_text, &c.diff).unwrap(), c.text.clone());
            prop_assert!(c.text != req.sentence_text);
            prop_assert!(seen.insert(c.text.clone()));
        }
    }

    #[test]
    fn alignment_permutation_invariant(perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let refs = vec!["the cat sat on the mat", "dogs bark loudly", "models improve accuracy", "rain falls in spring"];
        let drafts = vec!["a cat sat on a mat", "accuracy improves with models", "loud dogs"];
        let base = align_sentence_lists(&drafts, &refs, &BagOfWords).unwrap();
        let mut idx: Vec<usize> = (0..refs.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let permuted: Vec<&str> = idx.iter().map(|&i| refs[i]).collect();
        let other = align_sentence_lists(&drafts, &permuted, &BagOfWords).unwrap();
        for (a, b) in base.pairs.iter().zip(&other.pairs) {
            prop_assert_eq!(a.reference, idx[b.reference]);
            prop_assert!((a.similarity - b.similarity).abs() < 1e-12);
        }
    }
}

/// Per-step full expansion, stable-sorted and cut to the beam size.
fn naive_beam(b: &RandomBackend, beam: usize, max_len: usize) -> Vec<(Vec<String>, f64)> {
    let mut hyps: Vec<(Vec<String>, f64)> = vec![(Vec::new(), 0.0)];
    for _ in 0..max_len {
        if hyps.iter().all(|(t, _)| b.complete(t)) {
            break;
        }
        let mut next = Vec::new();
        for (toks, lp) in &hyps {
            if b.complete(toks) {
                next.push((toks.clone(), *lp));
                continue;
            }
            for (tok, s) in b.vocab.iter().zip(b.scores(toks)) {
                let mut t = toks.clone();
                t.push(tok.clone());
                next.push((t, lp + s));
            }
        }
        next.sort_by(|a, b| b.1.total_cmp(&a.1));
        next.truncate(beam);
        hyps = next;
    }
    hyps.sort_by(|a, b| b.1.total_cmp(&a.1));
    hyps
}

/// Every complete sequence, best first.
fn enumerate_all(b: &RandomBackend) -> Vec<(Vec<String>, f64)> {
    let mut done = Vec::new();
    let mut frontier = vec![(Vec::<String>::new(), 0.0)];
    while let Some((toks, lp)) = frontier.pop() {
        if b.complete(&toks) {
            done.push((toks, lp));
            continue;
        }
        for (tok, s) in b.vocab.iter().zip(b.scores(&toks)) {
            let mut t = toks.clone();
            t.push(tok.clone());
            frontier.push((t, lp + s));
        }
    }
    done.sort_by(|a, b| b.1.total_cmp(&a.1));
    done
}

#[test]
fn single_group_beam_matches_reference_search() {
    let src = MarkedText::plain(tokenize("x"));
    for seed in 0..100u64 {
        let vocab = 2 + (seed as usize % 3);
        let length = 2 + (seed as usize % 4);
        let beam = 1 + (seed as usize % 5);
        let backend = RandomBackend::new(seed, vocab, length);
        let cfg = BeamConfig { beam_size: beam, num_groups: 1, strength: 0.0, max_len: 5 };
        let got: Vec<(Vec<String>, f64)> =
            diverse_beam(&backend, &src, &cfg).unwrap().into_iter().map(|h| (h.tokens, h.logprob)).collect();
        assert_eq!(got, naive_beam(&backend, beam, 5), "seed {seed}");
    }
}

#[test]
fn wide_beam_is_exhaustive() {
    let src = MarkedText::plain(tokenize("x"));
    for seed in 0..20u64 {
        let backend = RandomBackend::new(seed, 2, 3);
        let all = enumerate_all(&backend);
        let cfg = BeamConfig { beam_size: 64, num_groups: 1, strength: 0.0, max_len: 5 };
        let got = diverse_beam(&backend, &src, &cfg).unwrap();
        assert_eq!(got.len(), all.len());
        for (h, (t, lp)) in got.iter().zip(&all) {
            assert_eq!(&h.tokens, t);
            assert!((h.logprob - lp).abs() < 1e-12);
        }
    }
}

#[test]
fn nucleus_bound_holds_over_many_samples() {
    let lm = toy_lm();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let contexts: Vec<Vec<&str>> =
        vec![vec![], vec!["the"], vec!["the", "model"], vec!["reduces", "the"], vec!["zebra"]];
    for i in 0..10_000 {
        let ctx = &contexts[i % contexts.len()];
        let d = lm.next_token_dist(ctx);
        let allowed: HashSet<usize> = nucleus(&d.probs, 0.97).into_iter().collect();
        let tok = lm.sample_nucleus(ctx, 0.97, &mut rng);
        assert!(allowed.contains(&(lm.id(&tok) as usize)), "{tok} outside nucleus of {ctx:?}");
    }
}
