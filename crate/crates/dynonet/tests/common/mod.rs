#![allow(dead_code)]

use mutualfriends_core::{Kb, Schema, Side};
use mutualfriends_dynonet::vocab::SELECT;
use mutualfriends_dynonet::{Model, ModelConfig, Step, Tok, Vocab};

pub const WORDS: &[&str] = &[
    "hi", "do", "you", "have", "any", "friends", "who", "like", "?", "yes", "no", "i", "went", "to",
    "work", "at", "anyone",
];

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden: 4,
        emb: 3,
        k: 2,
        rel_dim: 3,
        seed: 1,
        ..ModelConfig::default()
    }
}

pub fn model(config: ModelConfig) -> Model {
    Model::new(config, Schema::bundled_small(), Vocab::build(WORDS.iter().copied(), 1))
}

pub fn kb(attrs: &[&str], items: &[&[&str]]) -> Kb {
    Kb {
        attributes: attrs.iter().map(|s| s.to_string()).collect(),
        items: items
            .iter()
            .map(|row| row.iter().map(|s| s.to_string()).collect())
            .collect(),
    }
}

pub fn w(m: &Model, word: &str) -> Tok {
    Tok::Word(m.net.vocab.id(word))
}

pub fn e(m: &Model, id: &str) -> Tok {
    Tok::Entity(m.net.entities.index(id).expect("entity in schema"))
}

/// An utterance step whose graph entities are its entity tokens.
pub fn utter(m: &Model, speaker: Side, toks: Vec<Tok>) -> Step {
    let entities = toks
        .iter()
        .filter_map(|t| match t {
            Tok::Entity(i) => Some(m.net.entities.ids[*i].clone()),
            _ => None,
        })
        .collect();
    Step {
        speaker,
        input: toks.clone(),
        target: toks,
        entities,
    }
}

/// A selection of `item` of `kb` by `speaker`.
pub fn select(m: &Model, speaker: Side, kb: &Kb, item: usize) -> Step {
    let entities: Vec<String> = kb.items[item].clone();
    let mut input = vec![Tok::Word(SELECT)];
    input.extend(entities.iter().map(|id| e(m, id)));
    Step {
        speaker,
        input,
        target: vec![Tok::Word(SELECT), Tok::Item(item)],
        entities,
    }
}
