/// Irregular forms mapped to their base form.
const IRREGULAR: &[(&str, &str)] = &[
    ("am", "be"),
    ("is", "be"),
    ("are", "be"),
    ("was", "be"),
    ("were", "be"),
    ("been", "be"),
    ("being", "be"),
    ("has", "have"),
    ("had", "have"),
    ("having", "have"),
    ("does", "do"),
    ("did", "do"),
    ("done", "do"),
    ("doing", "do"),
    ("ran", "run"),
    ("running", "run"),
    ("went", "go"),
    ("gone", "go"),
    ("goes", "go"),
    ("made", "make"),
    ("took", "take"),
    ("taken", "take"),
    ("gave", "give"),
    ("given", "give"),
    ("got", "get"),
    ("gotten", "get"),
    ("saw", "see"),
    ("seen", "see"),
    ("came", "come"),
    ("knew", "know"),
    ("known", "know"),
    ("thought", "think"),
    ("said", "say"),
    ("found", "find"),
    ("wrote", "write"),
    ("written", "write"),
    ("began", "begin"),
    ("begun", "begin"),
    ("brought", "bring"),
    ("built", "build"),
    ("bought", "buy"),
    ("chose", "choose"),
    ("chosen", "choose"),
    ("drew", "draw"),
    ("drawn", "draw"),
    ("fell", "fall"),
    ("fallen", "fall"),
    ("felt", "feel"),
    ("held", "hold"),
    ("kept", "keep"),
    ("led", "lead"),
    ("left", "leave"),
    ("lost", "lose"),
    ("meant", "mean"),
    ("met", "meet"),
    ("paid", "pay"),
    ("read", "read"),
    ("rose", "rise"),
    ("risen", "rise"),
    ("sat", "sit"),
    ("sent", "send"),
    ("shown", "show"),
    ("spent", "spend"),
    ("stood", "stand"),
    ("taught", "teach"),
    ("told", "tell"),
    ("understood", "understand"),
    ("won", "win"),
    ("better", "good"),
    ("best", "good"),
    ("worse", "bad"),
    ("worst", "bad"),
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("mice", "mouse"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("data", "datum"),
    ("analyses", "analysis"),
    ("hypotheses", "hypothesis"),
    ("criteria", "criterion"),
    ("phenomena", "phenomenon"),
    ("corpora", "corpus"),
    ("indices", "index"),
    ("matrices", "matrix"),
    ("vertices", "vertex"),
];

/// Words ending in "-ing" that are not participles.
const ING_WORDS: &[&str] = &[
    "thing",
    "things",
    "string",
    "strings",
    "nothing",
    "something",
    "anything",
    "everything",
    "during",
    "morning",
    "evening",
    "bring",
    "sing",
    "king",
    "ring",
    "spring",
    "wing",
    "ceiling",
    "sibling",
    "ping",
    "swing",
    "sting",
    "cling",
    "fling",
    "sling",
];

fn irregular(word: &str) -> Option<&'static str> {
    IRREGULAR.iter().find(|(form, _)| *form == word).map(|(_, base)| *base)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn strip_once(w: &str) -> Option<String> {
    if let Some(base) = irregular(w) {
        return (base != w).then(|| base.to_string());
    }
    if ING_WORDS.contains(&w) || !w.chars().all(|c| c.is_alphabetic() || c == '-') {
        return None;
    }
    let n = w.len();
    if n > 4 && w.ends_with("ies") {
        return Some(format!("{}y", &w[..n - 3]));
    }
    if n > 4 && w.ends_with("sses") {
        return Some(w[..n - 2].to_string());
    }
    if n > 4 && ["ches", "shes", "xes", "zes"].iter().any(|s| w.ends_with(s)) {
        return Some(w[..n - 2].to_string());
    }
    if n > 3 && w.ends_with('s') && !["ss", "us", "is"].iter().any(|s| w.ends_with(s)) {
        return Some(w[..n - 1].to_string());
    }
    if n > 5 && w.ends_with("ing") {
        return Some(undouble(&w[..n - 3]));
    }
    if n > 4 && w.ends_with("ed") && !w.ends_with("eed") {
        let stem = &w[..n - 2];
        if let Some(base) = stem.strip_suffix('i') {
            return Some(format!("{base}y"));
        }
        return Some(undouble(stem));
    }
    None
}

fn undouble(stem: &str) -> String {
    let cs: Vec<char> = stem.chars().collect();
    let k = cs.len();
    if k >= 3 && cs[k - 1] == cs[k - 2] && !is_vowel(cs[k - 1]) && !matches!(cs[k - 1], 'l' | 's' | 'z') {
        return cs[..k - 1].iter().collect();
    }
    stem.to_string()
}

/// Deterministic lowercase lemma by suffix stripping and an irregular-form
/// table. Rules are applied to a fixed point, so `lemma` is idempotent.
pub fn lemma(token: &str) -> String {
    let mut w = token.to_lowercase();
    // Each step strictly shortens the word or maps through the irregular
    // table onto a base form, so this terminates.
    for _ in 0..8 {
        match strip_once(&w) {
            Some(next) if next != w => w = next,
            _ => break,
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_examples() {
        assert_eq!(lemma("promotes"), "promote");
        assert_eq!(lemma("ran"), "run");
        assert_eq!(lemma("GEC"), "gec");
    }

    #[test]
    fn suffix_rules() {
        assert_eq!(lemma("studies"), "study");
        assert_eq!(lemma("classes"), "class");
        assert_eq!(lemma("approaches"), "approach");
        assert_eq!(lemma("running"), "run");
        assert_eq!(lemma("stopped"), "stop");
        assert_eq!(lemma("proceeded"), "proceed");
        assert_eq!(lemma("seeds"), "seed");
        assert_eq!(lemma("this"), "this");
        assert_eq!(lemma("string"), "string");
        assert_eq!(lemma("analysis"), "analysis");
        assert_eq!(lemma("Was"), "be");
    }

    #[test]
    fn idempotent_on_samples() {
        for w in [
            "promotes",
            "ran",
            "studies",
            "applied",
            "bringing",
            "models",
            "processes",
            "used",
            "seeded",
            "pressing",
            "buses",
            "indices",
            "x",
            "3.5",
            "human-computer",
        ] {
            let once = lemma(w);
            assert_eq!(lemma(&once), once, "{w}");
        }
    }
}
