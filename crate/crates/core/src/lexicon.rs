//! Rule-based entity linking, realization and speech-act tagging.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::Kb;
use crate::schema::{Entity, EntityId, Schema, SurfaceFormStore};
use crate::transcript::{LinkedSpan, SpeechAct};

pub const SCORE_EXACT: f64 = 3.0;
pub const SCORE_VARIATION: f64 = 2.0;
pub const SCORE_SUBSTRING: f64 = 1.5;
pub const SCORE_EDIT: f64 = 1.0;
pub const KB_BONUS: f64 = 0.5;
/// Spans shorter than this only match exactly.
pub const EDIT_MIN_LEN: usize = 5;
const MIN_PREFIX: usize = 4;

/// Words that are never linked on their own.
const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "anyone", "are", "at", "be",
    "being", "but", "can", "do", "does", "even", "for", "friend", "friends", "from", "go",
    "had", "has", "have", "hello", "hey", "hi", "hiya", "how", "i", "in", "is", "it", "know",
    "like", "likes", "me", "my", "named", "no", "none", "nope", "not", "of", "ok", "okay",
    "on", "one", "or", "prefer", "so", "some", "sorry", "that", "the", "them", "then",
    "there", "they", "to", "went", "what", "which", "who", "with", "work", "works", "yeah",
    "yep", "yes", "you", "your",
];

/// Name words shared by many entities, excluded from word-level variations.
const GENERIC_WORDS: &[&str] = &[
    "&", "air", "college", "company", "corporation", "inc", "lines", "motor", "of", "state",
    "the", "university",
];

const QUESTION_WORDS: &[&str] = &[
    "do", "does", "what", "who", "which", "how", "any", "anyone", "have",
];
const ANSWER_WORDS: &[&str] = &["yes", "no", "nope", "yep", "yeah", "none"];
const GREETING_WORDS: &[&str] = &["hi", "hello", "hey", "hiya"];
/// Tokens skipped when looking for a sentence-initial question word.
const LEADING_FILLERS: &[&str] = &[
    "hi", "hello", "hey", "hiya", ",", ".", "!", "ok", "okay", "so", "well", "and", "oh",
];

const PUNCT: &[char] = &['?', ',', '.', '!', '\''];

/// Lowercases and splits on whitespace, detaching `? , . ! '` into their
/// own tokens. A trailing `n't` stays together (`don't` → `do n't`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let mut word = word;
        let mut trailing = Vec::new();
        while let Some(c) = word.chars().last() {
            if PUNCT.contains(&c) && !word.ends_with("n't") {
                trailing.push(c.to_string());
                word = &word[..word.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        let mut rest = word;
        while let Some(c) = rest.chars().next() {
            if PUNCT.contains(&c) {
                out.push(c.to_string());
                rest = &rest[c.len_utf8()..];
            } else {
                break;
            }
        }
        if let Some(stem) = rest.strip_suffix("n't") {
            if !stem.is_empty() {
                push_split(&mut out, stem);
            }
            out.push("n't".to_string());
        } else if !rest.is_empty() {
            push_split(&mut out, rest);
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

fn push_split(out: &mut Vec<String>, word: &str) {
    let mut cur = String::new();
    for c in word.chars() {
        if PUNCT.contains(&c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
}

/// How a variation string was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationKind {
    Exact,
    Acronym,
    Prefix,
    Morphological,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    variations: HashMap<String, BTreeSet<EntityId>>,
    kinds: BTreeMap<EntityId, BTreeMap<String, VariationKind>>,
    canonical: HashMap<String, EntityId>,
    lowered: Vec<(EntityId, String)>,
    /// Single-deletion neighbourhood index over variation strings.
    deletions: HashMap<String, Vec<String>>,
    max_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedToken {
    pub span: String,
    pub entity: Option<EntityId>,
    pub score: f64,
}

impl LinkedToken {
    fn word(span: &str) -> Self {
        Self {
            span: span.to_string(),
            entity: None,
            score: 0.0,
        }
    }
}

fn is_stopword(s: &str) -> bool {
    STOPWORDS.contains(&s)
}

fn acronym(words: &[String]) -> Option<String> {
    if words.len() < 2 {
        return None;
    }
    let a: String = words
        .iter()
        .filter_map(|w| w.chars().next())
        .filter(|c| c.is_alphabetic())
        .collect();
    (a.len() >= 2).then_some(a)
}

fn plural(word: &str) -> String {
    if word.ends_with('s') || word.ends_with("sh") || word.ends_with("ch") || word.ends_with('x')
    {
        format!("{word}es")
    } else {
        format!("{word}s")
    }
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Base verb of a gerund: `hiking` → `hike`, `swimming` → `swim`,
/// `reading` → `read`.
pub fn gerund_base(word: &str) -> Option<String> {
    let stem = word.strip_suffix("ing")?;
    let b = stem.as_bytes();
    if b.len() < 2 {
        return None;
    }
    let last = b[b.len() - 1];
    let prev = b[b.len() - 2];
    if last == prev && !is_vowel(last) && !matches!(last, b'l' | b's') {
        return Some(stem[..stem.len() - 1].to_string());
    }
    let cvc = b.len() >= 3
        && !is_vowel(last)
        && is_vowel(prev)
        && !is_vowel(b[b.len() - 3])
        && !matches!(last, b'w' | b'x' | b'y');
    let needs_e = matches!(last, b'c' | b'v' | b'z')
        || (last == b'l' && !is_vowel(prev) && prev != b'l')
        || (cvc && b.len() <= 4);
    Some(if needs_e {
        format!("{stem}e")
    } else {
        stem.to_string()
    })
}

impl Lexicon {
    /// Computes the variation table for every schema entity.
    pub fn build(schema: &Schema) -> Self {
        // Word-level variations are only kept for words owned by one entity.
        let mut word_owners: HashMap<String, HashSet<&str>> = HashMap::new();
        for e in schema.entities() {
            for w in tokenize(&e.canonical_name) {
                word_owners.entry(w).or_default().insert(e.id.as_str());
            }
        }

        let mut kinds: BTreeMap<EntityId, BTreeMap<String, VariationKind>> = BTreeMap::new();
        let mut canonical = HashMap::new();
        let mut lowered = Vec::new();
        for e in schema.entities() {
            let words = tokenize(&e.canonical_name);
            let canon = words.join(" ");
            canonical.insert(canon.clone(), e.id.clone());
            lowered.push((e.id.clone(), canon.clone()));
            let entry = kinds.entry(e.id.clone()).or_default();
            let mut add = |s: String, k: VariationKind| {
                if s.is_empty() || (k != VariationKind::Exact && is_stopword(&s)) {
                    return;
                }
                let slot = entry.entry(s).or_insert(k);
                if k < *slot {
                    *slot = k;
                }
            };
            add(canon.clone(), VariationKind::Exact);
            if let Some(a) = acronym(&words) {
                add(a, VariationKind::Acronym);
            }
            if words.len() == 1 {
                add(plural(&canon), VariationKind::Morphological);
            }
            for w in &words {
                if GENERIC_WORDS.contains(&w.as_str()) || word_owners[w].len() > 1 {
                    continue;
                }
                let chars: Vec<char> = w.chars().collect();
                for len in MIN_PREFIX..=chars.len() {
                    add(chars[..len].iter().collect(), VariationKind::Prefix);
                }
                if words.len() > 1 {
                    add(plural(w), VariationKind::Morphological);
                }
                if e.kind == "hobby" {
                    if let Some(base) = gerund_base(w) {
                        add(plural(&base), VariationKind::Morphological);
                        add(base, VariationKind::Morphological);
                    }
                }
            }
        }

        let mut variations: HashMap<String, BTreeSet<EntityId>> = HashMap::new();
        for (id, vars) in &kinds {
            for v in vars.keys() {
                variations.entry(v.clone()).or_default().insert(id.clone());
            }
        }
        let mut deletions: HashMap<String, Vec<String>> = HashMap::new();
        for v in variations.keys() {
            if v.chars().count() + 1 < EDIT_MIN_LEN {
                continue;
            }
            for d in deletion_neighbourhood(v) {
                deletions.entry(d).or_default().push(v.clone());
            }
        }
        for list in deletions.values_mut() {
            list.sort();
            list.dedup();
        }
        let max_words = variations
            .keys()
            .map(|v| v.split(' ').count())
            .max()
            .unwrap_or(1);
        Self {
            variations,
            kinds,
            canonical,
            lowered,
            deletions,
            max_words,
        }
    }

    /// Variation strings of one entity with how each was derived.
    pub fn variations_of(&self, entity: &str) -> Option<&BTreeMap<String, VariationKind>> {
        self.kinds.get(entity)
    }

    pub fn candidates(&self, variation: &str) -> Option<&BTreeSet<EntityId>> {
        self.variations.get(variation)
    }

    /// Ranker scores of every candidate for one span, before the KB bonus.
    pub fn score_span(&self, span: &str) -> BTreeMap<EntityId, f64> {
        let mut scores: BTreeMap<EntityId, f64> = BTreeMap::new();
        if is_stopword(span) {
            return scores;
        }
        let mut bump = |id: &EntityId, s: f64| {
            let slot = scores.entry(id.clone()).or_insert(s);
            if s > *slot {
                *slot = s;
            }
        };
        if let Some(id) = self.canonical.get(span) {
            bump(id, SCORE_EXACT);
        }
        if let Some(ids) = self.variations.get(span) {
            for id in ids {
                bump(id, SCORE_VARIATION);
            }
        }
        let span_len = span.chars().count();
        if span_len >= MIN_PREFIX {
            for (id, canon) in &self.lowered {
                if canon.contains(span) {
                    bump(id, SCORE_SUBSTRING);
                }
            }
        }
        if span_len >= EDIT_MIN_LEN {
            let mut near = BTreeSet::new();
            for key in std::iter::once(span.to_string()).chain(deletion_neighbourhood(span)) {
                if let Some(vs) = self.deletions.get(&key) {
                    near.extend(vs.iter());
                }
                if let Some((v, _)) = self.variations.get_key_value(&key) {
                    near.insert(v);
                }
            }
            for v in near {
                if levenshtein(span, v) <= 1 {
                    for id in &self.variations[v] {
                        bump(id, SCORE_EDIT);
                    }
                }
            }
        }
        scores
    }

    /// Greedy left-to-right linking, longest span first. Candidates in `kb`
    /// get a bonus; ties go to the alphabetically first entity id.
    pub fn link(&self, tokens: &[String], kb: Option<&Kb>) -> Vec<LinkedToken> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut linked = None;
            let max_len = self.max_words.min(tokens.len() - i);
            for len in (1..=max_len).rev() {
                let span = tokens[i..i + len].join(" ");
                let scores = self.score_span(&span);
                let best = scores
                    .into_iter()
                    .map(|(id, s)| {
                        let bonus = match kb {
                            Some(kb) if kb.contains_entity(&id) => KB_BONUS,
                            _ => 0.0,
                        };
                        (id, s + bonus)
                    })
                    .fold(None::<(EntityId, f64)>, |best, (id, s)| match best {
                        Some((bid, bs)) if bs >= s => Some((bid, bs)),
                        _ => Some((id, s)),
                    });
                if let Some((id, score)) = best {
                    linked = Some((len, LinkedToken {
                        span,
                        entity: Some(id),
                        score,
                    }));
                    break;
                }
            }
            match linked {
                Some((len, tok)) => {
                    out.push(tok);
                    i += len;
                }
                None => {
                    out.push(LinkedToken::word(&tokens[i]));
                    i += 1;
                }
            }
        }
        out
    }

    /// Tokenizes and links raw text.
    pub fn link_text(&self, text: &str, kb: Option<&Kb>) -> Vec<LinkedToken> {
        self.link(&tokenize(text), kb)
    }
}

/// Convenience wrapper matching [`Lexicon::build`].
pub fn build_lexicon(schema: &Schema) -> Lexicon {
    Lexicon::build(schema)
}

pub fn link_entities(tokens: &[String], lexicon: &Lexicon, kb: Option<&Kb>) -> Vec<LinkedToken> {
    lexicon.link(tokens, kb)
}

/// Entity spans of a linked sequence, in order.
pub fn spans(links: &[LinkedToken]) -> Vec<LinkedSpan> {
    links
        .iter()
        .filter_map(|t| {
            t.entity.as_ref().map(|e| LinkedSpan {
                span: t.span.clone(),
                entity: e.clone(),
            })
        })
        .collect()
}

fn deletion_neighbourhood(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    (0..chars.len())
        .map(|skip| {
            chars
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, c)| *c)
                .collect()
        })
        .collect()
}

/// Plain Levenshtein distance over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Samples a surface string from the recorded forms of `entity`, falling
/// back to its lowercased canonical name.
pub fn realize_entity<R: Rng + ?Sized>(
    entity: &Entity,
    store: &SurfaceFormStore,
    rng: &mut R,
) -> String {
    let Some(forms) = store.forms(&entity.id).filter(|f| !f.is_empty()) else {
        return entity.canonical_name.to_lowercase();
    };
    let total: u64 = forms.values().sum();
    let mut r = rng.gen_range(0..total);
    for (surface, &count) in forms {
        if r < count {
            return surface.clone();
        }
        r -= count;
    }
    unreachable!("sampled index within total count")
}

/// Heuristic speech-act tagging. An utterance is an ask if it contains `?`
/// or opens with a question word (after greetings and fillers).
pub fn classify_utterance(tokens: &[String], links: &[LinkedToken]) -> BTreeSet<SpeechAct> {
    let mut acts = BTreeSet::new();
    let has = |set: &[&str]| tokens.iter().any(|t| set.contains(&t.as_str()));
    let opener = tokens
        .iter()
        .find(|t| !LEADING_FILLERS.contains(&t.as_str()))
        .map(|t| t.as_str());
    let ask = tokens.iter().any(|t| t == "?")
        || opener.is_some_and(|t| QUESTION_WORDS.contains(&t));
    if ask {
        acts.insert(SpeechAct::Ask);
    }
    if has(ANSWER_WORDS) {
        acts.insert(SpeechAct::Answer);
    }
    if has(GREETING_WORDS) {
        acts.insert(SpeechAct::Greeting);
    }
    if has(&["sorry"]) {
        acts.insert(SpeechAct::Apology);
    }
    if !ask && links.iter().any(|l| l.entity.is_some()) {
        acts.insert(SpeechAct::Inform);
    }
    acts
}

/// True if the utterance is a negative mention (`no`, `none`, `n't`, ...).
pub fn is_negative(tokens: &[String]) -> bool {
    tokens
        .iter()
        .any(|t| matches!(t.as_str(), "no" | "none" | "n't" | "nothing" | "zero" | "nope"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lex() -> (Schema, Lexicon) {
        let schema = Schema::bundled();
        let lex = Lexicon::build(&schema);
        (schema, lex)
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenization() {
        assert_eq!(
            toks("Anyone went to Columbia?"),
            ["anyone", "went", "to", "columbia", "?"]
        );
        assert_eq!(toks("sorry, no"), ["sorry", ",", "no"]);
        assert_eq!(toks("I don't"), ["i", "do", "n't"]);
    }

    #[test]
    fn levenshtein_oracle() {
        assert_eq!(levenshtein("colombia", "columbia"), 1);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
    }

    #[test]
    fn gerunds() {
        assert_eq!(gerund_base("hiking").unwrap(), "hike");
        assert_eq!(gerund_base("swimming").unwrap(), "swim");
        assert_eq!(gerund_base("reading").unwrap(), "read");
        assert_eq!(gerund_base("dancing").unwrap(), "dance");
        assert_eq!(gerund_base("juggling").unwrap(), "juggle");
        assert_eq!(gerund_base("cooking").unwrap(), "cook");
        assert_eq!(gerund_base("gardening").unwrap(), "garden");
    }

    #[test]
    fn variations() {
        let (_, lex) = lex();
        let upenn = lex.variations_of("university-of-pennsylvania").unwrap();
        assert_eq!(upenn.get("uop"), Some(&VariationKind::Acronym));
        assert_eq!(upenn.get("penn"), Some(&VariationKind::Prefix));
        let hiking = lex.variations_of("hiking").unwrap();
        assert!(hiking.contains_key("hike"));
        assert!(hiking.contains_key("hikes"));
        assert_eq!(
            lex.variations_of("google").unwrap().get("google"),
            Some(&VariationKind::Exact)
        );
        // shared words are not word-level variations
        assert!(lex.candidates("science").is_none());
        assert!(lex.candidates("university").is_none());
    }

    #[test]
    fn links_columbia() {
        let (_, lex) = lex();
        let linked = lex.link(&toks("anyone went to columbia ?"), None);
        let ents: Vec<_> = linked.iter().filter_map(|t| t.entity.clone()).collect();
        assert_eq!(ents, ["columbia-university"]);
        assert_eq!(linked.len(), 5);
    }

    #[test]
    fn edit_distance_link() {
        let (_, lex) = lex();
        let linked = lex.link(&toks("colombia"), None);
        assert_eq!(linked[0].entity.as_deref(), Some("columbia-university"));
        assert_eq!(linked[0].score, SCORE_EDIT);
        // short spans never fuzzy-match
        assert!(lex.link(&toks("yage"), None)[0].entity.is_none());
    }

    #[test]
    fn kb_bonus_applies() {
        let (_, lex) = lex();
        let kb = Kb {
            attributes: vec!["school".into()],
            items: vec![vec!["columbia-university".into()]],
        };
        let linked = lex.link(&toks("colombia"), Some(&kb));
        assert_eq!(linked[0].score, SCORE_EDIT + KB_BONUS);
    }

    #[test]
    fn multiword_longest_span() {
        let (_, lex) = lex();
        let linked = lex.link(&toks("i studied computer science at rice university"), None);
        let ents: Vec<_> = linked.iter().filter_map(|t| t.entity.clone()).collect();
        assert_eq!(ents, ["computer-science", "rice-university"]);
        assert_eq!(linked[2].score, SCORE_EXACT);
    }

    #[test]
    fn stopwords_unlinked() {
        let (_, lex) = lex();
        assert!(lex.link(&toks("the"), None)[0].entity.is_none());
    }

    #[test]
    fn realization_fallback_and_sampling() {
        let (schema, _) = lex();
        let google = schema.entity("google").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(realize_entity(google, &SurfaceFormStore::new(), &mut rng), "google");
        let upenn = schema.entity("university-of-pennsylvania").unwrap();
        assert_eq!(
            realize_entity(upenn, &SurfaceFormStore::new(), &mut rng),
            "university of pennsylvania"
        );

        let mut store = SurfaceFormStore::new();
        store.add("google", "google", 3);
        store.add("google", "google inc", 1);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| realize_entity(google, &store, &mut rng) == "google")
            .count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.05);

        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(
                realize_entity(google, &store, &mut a),
                realize_entity(google, &store, &mut b)
            );
        }
    }

    fn acts_of(lex: &Lexicon, text: &str) -> BTreeSet<SpeechAct> {
        let t = tokenize(text);
        let l = lex.link(&t, None);
        classify_utterance(&t, &l)
    }

    #[test]
    fn classification_examples() {
        let (_, lex) = lex();
        use SpeechAct::*;
        assert_eq!(
            acts_of(&lex, "do you have anyone who went to columbia ?"),
            BTreeSet::from([Ask])
        );
        assert_eq!(acts_of(&lex, "hi"), BTreeSet::from([Greeting]));
        assert_eq!(acts_of(&lex, "sorry , no"), BTreeSet::from([Apology, Answer]));
        assert_eq!(
            acts_of(&lex, "i have 2 friends who went to columbia"),
            BTreeSet::from([Inform])
        );
        assert_eq!(acts_of(&lex, "anyone went to columbia"), BTreeSet::from([Ask]));
        assert!(acts_of(&lex, "ok then").is_empty());
    }

    #[test]
    fn negative_mentions() {
        assert!(is_negative(&toks("no google friends")));
        assert!(is_negative(&toks("I don't have any")));
        assert!(!is_negative(&toks("i have 2 columbia friends")));
    }
}
