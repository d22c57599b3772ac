//! Attribute schema, entity catalog and the surface-form store used when
//! realizing entities back into text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcript::Transcript;

/// Canonical entity identifier, unique across the whole schema.
pub type EntityId = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    /// Name of the attribute this entity is a value of.
    #[serde(rename = "type")]
    pub kind: String,
    pub canonical_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    attributes: Vec<Attribute>,
    index: HashMap<EntityId, (usize, usize)>,
}

// On-disk layout: `{attributes: [{name, values: [{id, canonical}]}]}`.
#[derive(Serialize, Deserialize)]
struct SchemaFile {
    attributes: Vec<AttributeFile>,
}

#[derive(Serialize, Deserialize)]
struct AttributeFile {
    name: String,
    values: Vec<ValueFile>,
}

#[derive(Serialize, Deserialize)]
struct ValueFile {
    id: String,
    canonical: String,
}

const DEFAULT_SCHEMA: &str = include_str!("../data/schema_default.json");
const SMALL_SCHEMA: &str = include_str!("../data/schema_small.json");

impl Schema {
    /// Builds a schema, failing on the first invariant violation.
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let violations = validate_attributes(&attributes);
        if let Some(first) = violations.into_iter().next() {
            return Err(Error::InvalidSchema(first));
        }
        let mut index = HashMap::new();
        for (a, attr) in attributes.iter().enumerate() {
            for (v, e) in attr.values.iter().enumerate() {
                index.insert(e.id.clone(), (a, v));
            }
        }
        Ok(Self { attributes, index })
    }

    /// The bundled seven-attribute catalog.
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    /// A reduced catalog (six values per open attribute) used for fast
    /// training experiments.
    pub fn bundled_small() -> Self {
        Self::from_json(SMALL_SCHEMA).expect("bundled small schema is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemaFile = serde_json::from_str(text)?;
        let attributes = file
            .attributes
            .into_iter()
            .map(|a| Attribute {
                values: a
                    .values
                    .into_iter()
                    .map(|v| Entity {
                        id: v.id,
                        kind: a.name.clone(),
                        canonical_name: v.canonical,
                    })
                    .collect(),
                name: a.name,
            })
            .collect();
        Self::new(attributes)
    }

    pub fn to_json(&self) -> String {
        let file = SchemaFile {
            attributes: self
                .attributes
                .iter()
                .map(|a| AttributeFile {
                    name: a.name.clone(),
                    values: a
                        .values
                        .iter()
                        .map(|e| ValueFile {
                            id: e.id.clone(),
                            canonical: e.canonical_name.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.index
            .get(id)
            .map(|&(a, v)| &self.attributes[a].values[v])
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.attributes.iter().flat_map(|a| a.values.iter())
    }

    pub fn num_entities(&self) -> usize {
        self.index.len()
    }
}

/// Loads and validates a schema file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schema::from_json(&text)
}

/// Lists every schema invariant violation; empty means the schema is valid.
pub fn validate_schema(schema: &Schema) -> Vec<String> {
    validate_attributes(&schema.attributes)
}

fn validate_attributes(attributes: &[Attribute]) -> Vec<String> {
    let mut violations = Vec::new();
    let mut names = HashSet::new();
    let mut ids = HashSet::new();
    for attr in attributes {
        if !names.insert(attr.name.as_str()) {
            violations.push(format!("duplicate attribute name `{}`", attr.name));
        }
        if attr.values.is_empty() {
            violations.push(format!("attribute `{}` has an empty value set", attr.name));
        }
        for e in &attr.values {
            if !ids.insert(e.id.as_str()) {
                violations.push(format!("duplicate entity id `{}`", e.id));
            }
            if e.canonical_name.trim().is_empty() {
                violations.push(format!("entity `{}` has an empty canonical name", e.id));
            }
            if e.kind != attr.name {
                violations.push(format!(
                    "entity `{}` typed `{}` but listed under `{}`",
                    e.id, e.kind, attr.name
                ));
            }
        }
    }
    violations
}

/// Counts of observed surface strings per entity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SurfaceFormStore {
    forms: BTreeMap<EntityId, BTreeMap<String, u64>>,
}

impl SurfaceFormStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, entity: &str, surface: &str, count: u64) {
        if count == 0 {
            return;
        }
        *self
            .forms
            .entry(entity.to_string())
            .or_default()
            .entry(surface.to_lowercase())
            .or_insert(0) += count;
    }

    pub fn forms(&self, entity: &str) -> Option<&BTreeMap<String, u64>> {
        self.forms.get(entity)
    }

    pub fn count(&self, entity: &str, surface: &str) -> u64 {
        self.forms
            .get(entity)
            .and_then(|m| m.get(&surface.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    /// Empirical distribution over the recorded forms of `entity`.
    pub fn distribution(&self, entity: &str) -> Vec<(String, f64)> {
        let Some(forms) = self.forms.get(entity) else {
            return Vec::new();
        };
        let total: u64 = forms.values().sum();
        forms
            .iter()
            .map(|(s, &c)| (s.clone(), c as f64 / total as f64))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.forms
            .iter()
            .flat_map(|(e, m)| m.iter().map(move |(s, &c)| (e.as_str(), s.as_str(), c)))
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn check_against(&self, schema: &Schema) -> Result<()> {
        for id in self.forms.keys() {
            if schema.entity(id).is_none() {
                return Err(Error::UnknownEntity(id.clone()));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("store serializes")
    }
}

/// Adds one count per linked span in the transcript's utterances.
pub fn record_surface_forms(
    mut store: SurfaceFormStore,
    transcript: &Transcript,
    schema: &Schema,
) -> Result<SurfaceFormStore> {
    for event in transcript.utterances() {
        for link in &event.links {
            if schema.entity(&link.entity).is_none() {
                return Err(Error::UnknownEntity(link.entity.clone()));
            }
            store.add(&link.entity, &link.span, 1);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::{Event, EventKind, LinkedSpan, Side};

    fn utterance(links: &[(&str, &str)]) -> Event {
        Event {
            time_ms: 0,
            agent: Side::A,
            kind: EventKind::Utterance,
            text: Some(String::new()),
            item: None,
            links: links
                .iter()
                .map(|(s, e)| LinkedSpan {
                    span: s.to_string(),
                    entity: e.to_string(),
                })
                .collect(),
            acts: vec![],
        }
    }

    #[test]
    fn bundled_schema_shape() {
        let schema = Schema::bundled();
        assert_eq!(schema.attributes().len(), 7);
        let names: Vec<_> = schema.attributes().iter().map(|a| a.name.as_str()).collect();
        for n in ["name", "school", "major", "company", "hobby"] {
            assert!(names.contains(&n));
        }
        let tod: Vec<_> = schema
            .attribute("time_of_day")
            .unwrap()
            .values
            .iter()
            .map(|e| e.id.as_str())
            .collect();
        assert_eq!(tod, ["morning", "afternoon", "evening"]);
        assert_eq!(schema.attribute("location").unwrap().values.len(), 2);
        assert!(validate_schema(&schema).is_empty());
    }

    #[test]
    fn duplicate_entity_rejected() {
        let text = r#"{"attributes":[
            {"name":"school","values":[{"id":"x","canonical":"X"}]},
            {"name":"company","values":[{"id":"x","canonical":"X Corp"}]}]}"#;
        assert!(matches!(Schema::from_json(text), Err(Error::InvalidSchema(_))));
    }

    #[test]
    fn violations_are_listed() {
        let empty = Attribute { name: "hobby".into(), values: vec![] };
        assert_eq!(validate_attributes(&[empty]).len(), 1);
        let h = |id: &str| Attribute {
            name: "hobby".into(),
            values: vec![Entity {
                id: id.into(),
                kind: "hobby".into(),
                canonical_name: id.into(),
            }],
        };
        assert_eq!(validate_attributes(&[h("a"), h("b")]).len(), 1);
    }

    #[test]
    fn schema_round_trips() {
        let schema = Schema::bundled();
        assert_eq!(Schema::from_json(&schema.to_json()).unwrap(), schema);
    }

    #[test]
    fn surface_counts() {
        let schema = Schema::bundled();
        let mut t = Transcript::new("s");
        t.events.push(utterance(&[("columbia", "columbia-university")]));
        t.events.push(utterance(&[("Columbia", "columbia-university")]));
        let store = record_surface_forms(SurfaceFormStore::new(), &t, &schema).unwrap();
        assert_eq!(store.count("columbia-university", "columbia"), 2);

        let unchanged =
            record_surface_forms(store.clone(), &Transcript::new("e"), &schema).unwrap();
        assert_eq!(unchanged, store);

        let mut t = Transcript::new("g");
        for _ in 0..3 {
            t.events.push(utterance(&[("google", "google")]));
        }
        t.events.push(utterance(&[("Google inc", "google")]));
        let store = record_surface_forms(SurfaceFormStore::new(), &t, &schema).unwrap();
        assert_eq!(
            store.distribution("google"),
            vec![("google".to_string(), 0.75), ("google inc".to_string(), 0.25)]
        );
    }

    #[test]
    fn unknown_entity_link_is_an_error() {
        let schema = Schema::bundled();
        let mut t = Transcript::new("s");
        t.events.push(utterance(&[("xyz", "no-such-entity")]));
        assert!(record_surface_forms(SurfaceFormStore::new(), &t, &schema).is_err());
    }
}
