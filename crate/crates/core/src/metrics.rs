//! Automatic evaluation statistics over transcript corpora: language
//! variation, task effectiveness, speech-act shares and the starting
//! strategy of each agent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::tokenize;
use crate::scenario::{alpha_groups, AlphaGroup, Scenario};
use crate::schema::Schema;
use crate::transcript::{Event, Side, SpeechAct, Transcript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageStats {
    pub dialogues: usize,
    pub utterances: usize,
    /// Mean tokens per utterance; a linked entity counts as one token.
    pub mean_utterance_len: f64,
    /// Unigram entropy in bits.
    pub entropy: f64,
    /// Successful / total dialogues.
    pub success_rate: f64,
    /// Successful dialogues / total turns.
    pub success_per_turn: f64,
    /// Successful dialogues / total selection events.
    pub success_per_selection: f64,
    pub mean_turns: f64,
    pub mean_selections: f64,
    /// Selections over all utterance and selection events.
    pub select_share: f64,
    /// Fraction of utterances carrying each act.
    pub act_shares: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    /// Normalized KB frequency of each agent's first-mentioned entity.
    pub first_entity_freq: f64,
    /// Normalized domain size of each agent's first-mentioned attribute.
    pub first_attr_size: f64,
    /// Distinct entities mentioned per dialogue.
    pub entities_per_dialogue: f64,
    /// Distinct attributes mentioned per dialogue.
    pub attrs_per_dialogue: f64,
    pub first_attr_histogram: BTreeMap<AlphaGroup, usize>,
    /// Agents excluded from first-mention stats for never mentioning an entity.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Per-token cross-entropy, when a model supplied it.
    pub loss: Option<f64>,
    #[serde(flatten)]
    pub language: LanguageStats,
    pub strategy: Option<StrategyStats>,
}

/// Tokens of an utterance with each linked span collapsed into one token.
pub fn utterance_tokens(event: &Event) -> Vec<String> {
    let tokens = tokenize(event.text.as_deref().unwrap_or(""));
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    let mut links = event.links.iter().peekable();
    while i < tokens.len() {
        if let Some(link) = links.peek() {
            let words: Vec<&str> = link.span.split(' ').collect();
            if i + words.len() <= tokens.len()
                && tokens[i..i + words.len()].iter().zip(&words).all(|(a, b)| a == b)
            {
                out.push(link.span.clone());
                i += words.len();
                links.next();
                continue;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

pub fn corpus_stats(transcripts: &[Transcript]) -> Result<LanguageStats> {
    if transcripts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut unigrams: HashMap<String, usize> = HashMap::new();
    let mut n_tokens = 0usize;
    let mut n_utts = 0usize;
    let mut n_sel = 0usize;
    let mut n_turns = 0usize;
    let mut successes = 0usize;
    let mut act_counts: BTreeMap<SpeechAct, usize> = BTreeMap::new();
    for t in transcripts {
        if t.is_success() {
            successes += 1;
        }
        n_turns += t.turns;
        for e in &t.events {
            if e.is_select() {
                n_sel += 1;
            } else if e.is_utterance() {
                n_utts += 1;
                let toks = utterance_tokens(e);
                n_tokens += toks.len();
                for tok in toks {
                    *unigrams.entry(tok).or_insert(0) += 1;
                }
                for act in e.acts.iter().collect::<BTreeSet<_>>() {
                    *act_counts.entry(*act).or_insert(0) += 1;
                }
            }
        }
    }
    let n = transcripts.len() as f64;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    // sort counts so the entropy sum is independent of hash order
    let mut counts: Vec<usize> = unigrams.into_values().collect();
    counts.sort_unstable();
    let entropy = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n_tokens as f64;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(LanguageStats {
        dialogues: transcripts.len(),
        utterances: n_utts,
        mean_utterance_len: ratio(n_tokens, n_utts),
        entropy,
        success_rate: successes as f64 / n,
        success_per_turn: ratio(successes, n_turns),
        success_per_selection: ratio(successes, n_sel),
        mean_turns: n_turns as f64 / n,
        mean_selections: n_sel as f64 / n,
        select_share: ratio(n_sel, n_sel + n_utts),
        act_shares: SpeechAct::ALL
            .iter()
            .map(|a| (a.name().to_string(), ratio(act_counts.get(a).copied().unwrap_or(0), n_utts)))
            .collect(),
    })
}

/// Strategy statistics; `scenarios` must contain every transcript's scenario.
pub fn strategy_stats(
    transcripts: &[Transcript],
    scenarios: &[Scenario],
    schema: &Schema,
) -> Result<StrategyStats> {
    if transcripts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let by_id: HashMap<&str, &Scenario> = scenarios.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut ent1 = Vec::new();
    let mut attr1 = Vec::new();
    let mut histogram: BTreeMap<AlphaGroup, usize> = AlphaGroup::ALL.iter().map(|&g| (g, 0)).collect();
    let mut excluded = 0usize;
    let mut n_ents = 0usize;
    let mut n_attrs = 0usize;
    for t in transcripts {
        let scenario = by_id
            .get(t.scenario_id.as_str())
            .ok_or_else(|| Error::InvalidScenario(format!("no scenario `{}`", t.scenario_id)))?;
        let groups = alpha_groups(scenario);
        let mut ents = BTreeSet::new();
        let mut attrs = BTreeSet::new();
        for e in t.utterances() {
            for l in &e.links {
                ents.insert(l.entity.as_str());
                if let Some(ent) = schema.entity(&l.entity) {
                    attrs.insert(ent.kind.as_str());
                }
            }
        }
        n_ents += ents.len();
        n_attrs += attrs.len();

        for side in [Side::A, Side::B] {
            let first = t
                .utterances()
                .filter(|e| e.agent == side)
                .flat_map(|e| e.links.iter())
                .next();
            let Some(entity) = first.and_then(|l| schema.entity(&l.entity)) else {
                excluded += 1;
                continue;
            };
            let kb = scenario.kb(side);
            let max_count = kb.entities().iter().map(|e| kb.count(e)).max().unwrap_or(0);
            ent1.push(if max_count == 0 {
                0.0
            } else {
                kb.count(&entity.id) as f64 / max_count as f64
            });
            let sizes: Vec<usize> = (0..kb.attributes.len()).map(|a| kb.distinct_values(a)).collect();
            let max_size = sizes.iter().copied().max().unwrap_or(0);
            if let Some(col) = kb.attribute_index(&entity.kind) {
                attr1.push(sizes[col] as f64 / max_size.max(1) as f64);
            }
            if let Some(&g) = groups.get(&entity.kind) {
                *histogram.entry(g).or_insert(0) += 1;
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let n = transcripts.len() as f64;
    Ok(StrategyStats {
        first_entity_freq: mean(&ent1),
        first_attr_size: mean(&attr1),
        entities_per_dialogue: n_ents as f64 / n,
        attrs_per_dialogue: n_attrs as f64 / n,
        first_attr_histogram: histogram,
        excluded,
    })
}

pub fn full_stats(
    transcripts: &[Transcript],
    scenarios: Option<&[Scenario]>,
    schema: &Schema,
    loss: Option<f64>,
) -> Result<CorpusStats> {
    Ok(CorpusStats {
        loss,
        language: corpus_stats(transcripts)?,
        strategy: scenarios
            .map(|s| strategy_stats(transcripts, s, schema))
            .transpose()?,
    })
}

/// Column order of the text report.
pub const TABLE_COLUMNS: [&str; 15] = [
    "loss", "L_u", "H", "C", "C_T", "C_S", "Sel", "Inf", "Ask", "Ans", "Greet", "#Ent1", "|Attr1|",
    "#Ent", "#Attr",
];

/// Aligned-column text table, one row per named system.
pub fn render_table(rows: &[(String, CorpusStats)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "system");
    for c in TABLE_COLUMNS {
        let _ = write!(out, "{c:>8}");
    }
    out.push('\n');
    for (name, s) in rows {
        let l = &s.language;
        let act = |k: &str| l.act_shares.get(k).copied().unwrap_or(0.0);
        let strat = s.strategy.as_ref();
        let cells = [
            s.loss.map(|v| format!("{v:.2}")),
            Some(format!("{:.2}", l.mean_utterance_len)),
            Some(format!("{:.2}", l.entropy)),
            Some(format!("{:.2}", l.success_rate)),
            Some(format!("{:.3}", l.success_per_turn)),
            Some(format!("{:.2}", l.success_per_selection)),
            Some(format!("{:.2}", l.select_share)),
            Some(format!("{:.2}", act("inform"))),
            Some(format!("{:.2}", act("ask"))),
            Some(format!("{:.2}", act("answer"))),
            Some(format!("{:.2}", act("greeting"))),
            strat.map(|s| format!("{:.2}", s.first_entity_freq)),
            strat.map(|s| format!("{:.2}", s.first_attr_size)),
            strat.map(|s| format!("{:.1}", s.entities_per_dialogue)),
            strat.map(|s| format!("{:.1}", s.attrs_per_dialogue)),
        ];
        let _ = write!(out, "{name:<12}");
        for c in cells {
            let _ = write!(out, "{:>8}", c.unwrap_or_else(|| "-".into()));
        }
        out.push('\n');
    }
    out
}

/// First-attribute histogram as CSV: `group,count,fraction`.
pub fn histogram_csv(histogram: &BTreeMap<AlphaGroup, usize>) -> String {
    let total: usize = histogram.values().sum();
    let mut out = String::from("group,count,fraction\n");
    for g in AlphaGroup::ALL {
        let c = histogram.get(&g).copied().unwrap_or(0);
        let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
        let _ = writeln!(out, "{},{c},{frac:.4}", g.name());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{EventKind, LinkedSpan, Outcome};

    fn utt(side: Side, text: &str, links: &[(&str, &str)]) -> Event {
        Event {
            time_ms: 0,
            agent: side,
            kind: EventKind::Utterance,
            text: Some(text.into()),
            item: None,
            links: links
                .iter()
                .map(|(s, e)| LinkedSpan { span: s.to_string(), entity: e.to_string() })
                .collect(),
            acts: vec![],
        }
    }

    fn transcript(events: Vec<Event>, success: bool, turns: usize) -> Transcript {
        let mut t = Transcript::new("s");
        t.events = events;
        t.outcome = if success { Outcome::Success } else { Outcome::Failure };
        t.turns = turns;
        t
    }

    #[test]
    fn mean_length_and_entropy() {
        let t = transcript(vec![utt(Side::A, "a a b", &[]), utt(Side::B, "b c d e f g h", &[])], true, 2);
        let s = corpus_stats(&[t]).unwrap();
        assert_eq!(s.mean_utterance_len, 5.0);
        let t = transcript(vec![utt(Side::A, "a a b b", &[])], true, 1);
        assert_eq!(corpus_stats(&[t]).unwrap().entropy, 1.0);
    }

    #[test]
    fn linked_spans_are_single_tokens() {
        let e = utt(Side::A, "went to rice university", &[("rice university", "rice-university")]);
        assert_eq!(utterance_tokens(&e), ["went", "to", "rice university"]);
    }

    #[test]
    fn per_turn_rate_matches_reported_anchor() {
        // 100 dialogues, 82 successes, 1141 turns in total
        let mut corpus = Vec::new();
        for i in 0..100 {
            let turns = if i < 41 { 12 } else { 11 };
            corpus.push(transcript(vec![utt(Side::A, "hi", &[])], i < 82, turns));
        }
        let s = corpus_stats(&corpus).unwrap();
        assert_eq!(s.mean_turns, 11.41);
        assert!((s.success_rate - 0.82).abs() < 1e-12);
        assert!((s.success_per_turn - 0.82 / 11.41).abs() < 1e-12);
        assert_eq!(format!("{:.2}", s.success_per_turn), "0.07");
        assert!((s.success_per_turn * s.mean_turns - s.success_rate).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(corpus_stats(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn histogram_csv_format() {
        let h = BTreeMap::from([(AlphaGroup::LeastUniform, 3), (AlphaGroup::Medium, 1)]);
        let csv = histogram_csv(&h);
        assert!(csv.starts_with("group,count,fraction\nleast_uniform,3,0.7500\n"));
        assert!(csv.contains("most_uniform,0,0.0000"));
    }
}
