//! Scenario sampling: two private KBs over a random attribute subset, with
//! values drawn from symmetric Dirichlet-multinomials and exactly one item
//! in common.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{EntityId, Schema};
use crate::transcript::Side;

pub const MIN_ITEMS: usize = 5;
pub const MAX_ITEMS: usize = 12;
pub const ALPHAS: [f64; 3] = [0.3, 1.0, 3.0];
/// Resampling attempts before giving up on a scenario. The hardest draws
/// on the bundled catalog need about 30k attempts on average.
pub const REJECTION_CAP: usize = 1_000_000;

/// An agent's private list of items; `items[i][a]` is the value of
/// `attributes[a]` for item `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kb {
    pub attributes: Vec<String>,
    pub items: Vec<Vec<EntityId>>,
}

impl Kb {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    pub fn item_map(&self, index: usize) -> BTreeMap<String, String> {
        self.attributes
            .iter()
            .cloned()
            .zip(self.items[index].iter().cloned())
            .collect()
    }

    /// Index of the first item whose values equal `values` exactly.
    pub fn find_item(&self, values: &BTreeMap<String, String>) -> Option<usize> {
        self.items.iter().position(|item| {
            values.len() == self.attributes.len()
                && self
                    .attributes
                    .iter()
                    .zip(item)
                    .all(|(a, v)| values.get(a) == Some(v))
        })
    }

    /// Number of items having `entity` as some attribute value.
    pub fn count(&self, entity: &str) -> usize {
        self.items
            .iter()
            .filter(|item| item.iter().any(|v| v == entity))
            .count()
    }

    /// Number of items having every entity in `entities`.
    pub fn count_all(&self, entities: &[EntityId]) -> usize {
        self.items
            .iter()
            .filter(|item| entities.iter().all(|e| item.contains(e)))
            .count()
    }

    pub fn contains_entity(&self, entity: &str) -> bool {
        self.items.iter().any(|item| item.iter().any(|v| v == entity))
    }

    /// Distinct entities in first-appearance order (row-major).
    pub fn entities(&self) -> Vec<EntityId> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for item in &self.items {
            for v in item {
                if seen.insert(v.as_str()) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    /// Distinct values of one attribute column.
    pub fn distinct_values(&self, attr: usize) -> usize {
        self.items
            .iter()
            .map(|item| item[attr].as_str())
            .collect::<HashSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioAttribute {
    pub name: String,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub attrs: Vec<ScenarioAttribute>,
    pub kbs: [Kb; 2],
}

#[derive(Serialize, Deserialize)]
struct ScenarioLine {
    id: String,
    attrs: Vec<ScenarioAttribute>,
    kbs: Vec<Vec<BTreeMap<String, String>>>,
}

impl Scenario {
    pub fn n_items(&self) -> usize {
        self.kbs[0].len()
    }

    pub fn kb(&self, side: Side) -> &Kb {
        &self.kbs[side.index()]
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attrs.iter().map(|a| a.name.clone()).collect()
    }

    /// Distinct item tuples present in both KBs.
    pub fn shared_items(&self) -> Vec<Vec<EntityId>> {
        shared_tuples(&self.kbs[0], &self.kbs[1])
    }

    /// The unique shared item as (index in KB A, index in KB B).
    pub fn shared_indices(&self) -> Option<(usize, usize)> {
        let shared = self.shared_items();
        if shared.len() != 1 {
            return None;
        }
        let a = self.kbs[0].items.iter().position(|i| *i == shared[0])?;
        let b = self.kbs[1].items.iter().position(|i| *i == shared[0])?;
        Some((a, b))
    }

    pub fn shared_values(&self) -> Option<BTreeMap<String, String>> {
        self.shared_indices().map(|(a, _)| self.kbs[0].item_map(a))
    }

    /// Checks the structural invariants against a schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let n = self.n_items();
        if !(MIN_ITEMS..=MAX_ITEMS).contains(&n) {
            return Err(Error::InvalidScenario(format!("{n} items")));
        }
        if !(3..=4).contains(&self.attrs.len()) {
            return Err(Error::InvalidScenario(format!("{} attributes", self.attrs.len())));
        }
        let names = self.attribute_names();
        for kb in &self.kbs {
            if kb.attributes != names || kb.len() != n {
                return Err(Error::InvalidScenario("KB shape mismatch".into()));
            }
            for item in &kb.items {
                for (attr, value) in names.iter().zip(item) {
                    match schema.entity(value) {
                        Some(e) if &e.kind == attr => {}
                        _ => {
                            return Err(Error::InvalidScenario(format!(
                                "`{value}` is not a value of `{attr}`"
                            )))
                        }
                    }
                }
            }
        }
        let shared = self.shared_items().len();
        if shared != 1 {
            return Err(Error::InvalidScenario(format!("{shared} shared items")));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        let line = ScenarioLine {
            id: self.id.clone(),
            attrs: self.attrs.clone(),
            kbs: self
                .kbs
                .iter()
                .map(|kb| (0..kb.len()).map(|i| kb.item_map(i)).collect())
                .collect(),
        };
        serde_json::to_string(&line).expect("scenario serializes")
    }

    pub fn from_json_line(text: &str) -> Result<Self> {
        let line: ScenarioLine = serde_json::from_str(text)?;
        let attributes: Vec<String> = line.attrs.iter().map(|a| a.name.clone()).collect();
        if line.kbs.len() != 2 {
            return Err(Error::InvalidScenario("expected two KBs".into()));
        }
        let mut kbs = line.kbs.into_iter().map(|rows| {
            let items = rows
                .into_iter()
                .map(|row| {
                    attributes
                        .iter()
                        .map(|a| {
                            row.get(a).cloned().ok_or_else(|| {
                                Error::InvalidScenario(format!("item missing `{a}`"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok::<Kb, Error>(Kb {
                attributes: attributes.clone(),
                items,
            })
        });
        let a = kbs.next().unwrap()?;
        let b = kbs.next().unwrap()?;
        Ok(Scenario {
            id: line.id,
            attrs: line.attrs,
            kbs: [a, b],
        })
    }
}

fn shared_tuples(a: &Kb, b: &Kb) -> Vec<Vec<EntityId>> {
    let in_b: HashSet<&Vec<EntityId>> = b.items.iter().collect();
    let mut seen = HashSet::new();
    a.items
        .iter()
        .filter(|item| in_b.contains(item) && seen.insert(*item))
        .cloned()
        .collect()
}

/// Draws `n` values from a symmetric Dirichlet-multinomial via a Pólya urn:
/// the k-th draw picks value `e` with probability
/// `(alpha + count(e)) / (|values| * alpha + k - 1)`.
pub fn polya_sample<T: Clone, R: Rng + ?Sized>(
    values: &[T],
    alpha: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::EmptyValueSet);
    }
    let mut out = Vec::with_capacity(n);
    polya_indices(values.len(), alpha, n, rng, &mut out);
    Ok(out.into_iter().map(|i| values[i as usize].clone()).collect())
}

/// Index form of [`polya_sample`], reusing `out`.
fn polya_indices<R: Rng + ?Sized>(
    n_values: usize,
    alpha: f64,
    n: usize,
    rng: &mut R,
    out: &mut Vec<u16>,
) {
    assert!(alpha > 0.0, "concentration must be positive");
    out.clear();
    let base = n_values as f64 * alpha;
    for k in 0..n {
        // u < base: a fresh value, uniform; otherwise a copy of an earlier
        // draw chosen uniformly, i.e. in proportion to its count
        let u = rng.gen::<f64>() * (base + k as f64);
        let pick = if u < base {
            ((u / alpha) as usize).min(n_values - 1) as u16
        } else {
            out[((u - base) as usize).min(k - 1)]
        };
        out.push(pick);
    }
}

/// Distinct item codes of `a` that also occur in `b`, stopping at two.
fn shared_codes(a: &[u64], b: &[u64]) -> usize {
    let mut first: Option<u64> = None;
    for &x in a {
        if Some(x) == first || !b.contains(&x) {
            continue;
        }
        if first.is_some() {
            return 2;
        }
        first = Some(x);
    }
    first.is_some() as usize
}

/// Samples one scenario. KBs are resampled until exactly one item tuple is
/// shared, giving up after [`REJECTION_CAP`] attempts.
pub fn generate_scenario<R: Rng + ?Sized>(
    schema: &Schema,
    id: impl Into<String>,
    rng: &mut R,
) -> Result<Scenario> {
    let attrs_all = schema.attributes();
    if attrs_all.len() < 4 {
        return Err(Error::InvalidSchema("need at least 4 attributes".into()));
    }
    if let Some(a) = attrs_all.iter().find(|a| a.values.len() < 2) {
        return Err(Error::InvalidSchema(format!(
            "attribute `{}` needs at least 2 values",
            a.name
        )));
    }
    let n_items = rng.gen_range(MIN_ITEMS..=MAX_ITEMS);
    let n_attrs = rng.gen_range(3..=4);
    let mut chosen = sample_indices(rng, attrs_all.len(), n_attrs).into_vec();
    chosen.sort_unstable();
    let attrs: Vec<ScenarioAttribute> = chosen
        .iter()
        .map(|&i| ScenarioAttribute {
            name: attrs_all[i].name.clone(),
            alpha: ALPHAS[rng.gen_range(0..ALPHAS.len())],
        })
        .collect();
    let names: Vec<String> = attrs.iter().map(|a| a.name.clone()).collect();

    let domains: Vec<Vec<&str>> = chosen
        .iter()
        .map(|&ai| attrs_all[ai].values.iter().map(|e| e.id.as_str()).collect())
        .collect();
    if domains.iter().any(|d| d.len() > u16::MAX as usize) {
        return Err(Error::InvalidSchema("value set too large".into()));
    }
    // items are packed as one u16 value index per attribute
    let mut codes = [vec![0u64; n_items], vec![0u64; n_items]];
    let mut column = Vec::with_capacity(n_items);
    for _ in 0..REJECTION_CAP {
        for kb in codes.iter_mut() {
            kb.iter_mut().for_each(|c| *c = 0);
            for (d, attr) in domains.iter().zip(&attrs) {
                polya_indices(d.len(), attr.alpha, n_items, rng, &mut column);
                for (c, &v) in kb.iter_mut().zip(&column) {
                    *c = (*c << 16) | v as u64;
                }
            }
        }
        if shared_codes(&codes[0], &codes[1]) == 1 {
            let kb = |codes: &[u64]| Kb {
                attributes: names.clone(),
                items: codes
                    .iter()
                    .map(|&code| {
                        domains
                            .iter()
                            .enumerate()
                            .map(|(j, d)| {
                                let shift = 16 * (domains.len() - 1 - j);
                                d[((code >> shift) & 0xFFFF) as usize].to_string()
                            })
                            .collect()
                    })
                    .collect(),
            };
            let (a, b) = (kb(&codes[0]), kb(&codes[1]));
            debug_assert_eq!(shared_tuples(&a, &b).len(), 1);
            return Ok(Scenario {
                id: id.into(),
                attrs,
                kbs: [a, b],
            });
        }
    }
    Err(Error::RejectionCapExceeded(REJECTION_CAP))
}

/// Deterministic batch generation: scenario `i` uses its own stream derived
/// from `(seed, i)`, so batches are reproducible and parallelizable.
pub fn generate_scenarios(schema: &Schema, n: usize, seed: u64) -> Result<Vec<Scenario>> {
    (0..n).map(|i| scenario_at(schema, seed, i)).collect()
}

/// Scenario `i` of the batch seeded with `seed`, with id `s{seed}-{i}`.
pub fn scenario_at(schema: &Schema, seed: u64, i: usize) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    generate_scenario(schema, format!("s{seed}-{i}"), &mut rng)
}

pub fn read_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(Scenario::from_json_line)
        .collect()
}

pub fn write_scenarios(path: impl AsRef<Path>, scenarios: &[Scenario]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for s in scenarios {
        text.push_str(&s.to_json_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaGroup {
    LeastUniform,
    Medium,
    MostUniform,
}

impl AlphaGroup {
    pub const ALL: [AlphaGroup; 3] = [
        AlphaGroup::LeastUniform,
        AlphaGroup::Medium,
        AlphaGroup::MostUniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlphaGroup::LeastUniform => "least_uniform",
            AlphaGroup::Medium => "medium",
            AlphaGroup::MostUniform => "most_uniform",
        }
    }
}

/// Bins a scenario's attributes by the rank of their concentration
/// parameter; equal alphas are ranked by attribute name.
pub fn alpha_groups(scenario: &Scenario) -> BTreeMap<String, AlphaGroup> {
    let mut ranked: Vec<&ScenarioAttribute> = scenario.attrs.iter().collect();
    ranked.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then_with(|| a.name.cmp(&b.name)));
    let last = ranked.len().saturating_sub(1);
    ranked
        .into_iter()
        .enumerate()
        .map(|(rank, attr)| {
            let group = if rank == 0 {
                AlphaGroup::LeastUniform
            } else if rank == last {
                AlphaGroup::MostUniform
            } else {
                AlphaGroup::Medium
            };
            (attr.name.clone(), group)
        })
        .collect()
}
