//! Turning transcript events into model token sequences.

use std::collections::HashMap;

use mutualfriends_core::lexicon::tokenize;
use mutualfriends_core::{EntityId, Event, EventKind, Schema};

use crate::vocab::{Vocab, SELECT};

/// A surface unit of an event before vocabulary lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unit {
    Word(String),
    Entity(EntityId),
}

/// Splits an utterance into words and linked entity spans.
pub fn utterance_units(text: &str, links: &[mutualfriends_core::transcript::LinkedSpan]) -> Vec<Unit> {
    let tokens = tokenize(text);
    let mut out = Vec::new();
    let mut next = links.iter().peekable();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(link) = next.peek() {
            let w = link.span.split(' ').count();
            if i + w <= tokens.len() && tokens[i..i + w].join(" ") == link.span {
                out.push(Unit::Entity(link.entity.clone()));
                next.next();
                i += w;
                continue;
            }
        }
        out.push(Unit::Word(tokens[i].clone()));
        i += 1;
    }
    out
}

/// Entity ids of a selection in schema attribute order.
pub fn selection_entities(event: &Event, schema: &Schema) -> Vec<EntityId> {
    let Some(item) = &event.item else {
        return Vec::new();
    };
    let mut vals: Vec<(usize, &String)> = item
        .values
        .iter()
        .map(|(a, v)| (schema.attribute_index(a).unwrap_or(usize::MAX), v))
        .collect();
    vals.sort();
    vals.into_iter().map(|(_, v)| v.clone()).collect()
}

/// Words of an event for vocabulary building.
pub fn event_words(event: &Event) -> Vec<String> {
    match (&event.kind, &event.text) {
        (EventKind::Utterance, Some(text)) => utterance_units(text, &event.links)
            .into_iter()
            .filter_map(|u| match u {
                Unit::Word(w) => Some(w),
                Unit::Entity(_) => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// Model token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tok {
    Word(usize),
    /// Index into the schema's entity list.
    Entity(usize),
    /// Row of the perspective's own KB.
    Item(usize),
}

/// Schema entities by index, with their attribute.
#[derive(Debug, Clone)]
pub struct EntityTable {
    pub ids: Vec<EntityId>,
    pub attr: Vec<usize>,
    index: HashMap<EntityId, usize>,
}

impl EntityTable {
    pub fn new(schema: &Schema) -> Self {
        let mut ids = Vec::new();
        let mut attr = Vec::new();
        for e in schema.entities() {
            ids.push(e.id.clone());
            attr.push(schema.attribute_index(&e.kind).expect("entity type is an attribute"));
        }
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self { ids, attr, index }
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One event as seen by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub speaker: mutualfriends_core::Side,
    /// Tokens fed to the encoder.
    pub input: Vec<Tok>,
    /// Tokens the speaker's decoder must produce (EOS implied).
    pub target: Vec<Tok>,
    /// Entities that update the graph.
    pub entities: Vec<EntityId>,
}

/// Compiles an event; typing indicators and empty events give `None`.
pub fn compile_event(event: &Event, vocab: &Vocab, table: &EntityTable, schema: &Schema) -> Option<Step> {
    match event.kind {
        EventKind::Utterance => {
            let text = event.text.as_deref()?;
            let mut toks = Vec::new();
            let mut entities = Vec::new();
            for u in utterance_units(text, &event.links) {
                match u {
                    Unit::Word(w) => toks.push(Tok::Word(vocab.id(&w))),
                    Unit::Entity(e) => match table.index(&e) {
                        Some(i) => {
                            toks.push(Tok::Entity(i));
                            entities.push(e);
                        }
                        None => toks.push(Tok::Word(vocab.id(&e))),
                    },
                }
            }
            Some(Step {
                speaker: event.agent,
                input: toks.clone(),
                target: toks,
                entities,
            })
        }
        EventKind::Select => {
            let item = event.item.as_ref()?;
            let entities = selection_entities(event, schema);
            let mut input = vec![Tok::Word(SELECT)];
            input.extend(entities.iter().filter_map(|e| table.index(e)).map(Tok::Entity));
            Some(Step {
                speaker: event.agent,
                input,
                target: vec![Tok::Word(SELECT), Tok::Item(item.index)],
                entities,
            })
        }
        EventKind::Typing => None,
    }
}
