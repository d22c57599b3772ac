use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: usize = 0;
pub const EOS: usize = 1;
pub const SELECT: usize = 2;
pub const BOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<unk>", "<eos>", "<select>", "<bos>"];

/// Word vocabulary. Entities are never words; they are copied from the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Specials first, then words seen at least `min_count` times, sorted.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for w in words {
            *counts.entry(w).or_default() += 1;
        }
        let mut list: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        list.extend(
            counts
                .into_iter()
                .filter(|(w, c)| *c >= min_count && !SPECIALS.contains(w))
                .map(|(w, _)| w.to_string()),
        );
        list.into()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
