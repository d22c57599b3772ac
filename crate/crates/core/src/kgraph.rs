//! The dynamic knowledge graph over one agent's KB and the entities
//! mentioned so far in the dialogue.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Kb;
use crate::schema::{EntityId, Schema};
use crate::transcript::Side;

pub const DEGREE_BUCKETS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    /// Row `index` of the KB.
    Item(usize),
    /// Schema attribute index.
    Attribute(usize),
    /// An entity whose type is the given schema attribute index.
    Entity(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// `item-<i>`, the attribute name, or the entity id.
    pub label: String,
    pub in_kb: bool,
}

/// Edge labels, indexed as `has_<a>` = 2a, `has_<a>_inv` = 2a+1,
/// `instance_of` = 2A, `has_value` = 2A+1 for A schema attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeLabel {
    Has(usize),
    HasInv(usize),
    InstanceOf,
    HasValue,
}

impl EdgeLabel {
    pub fn index(self, num_attributes: usize) -> usize {
        match self {
            EdgeLabel::Has(a) => 2 * a,
            EdgeLabel::HasInv(a) => 2 * a + 1,
            EdgeLabel::InstanceOf => 2 * num_attributes,
            EdgeLabel::HasValue => 2 * num_attributes + 1,
        }
    }

    pub fn count(num_attributes: usize) -> usize {
        2 * num_attributes + 2
    }

    pub fn name(self, schema_attrs: &[String]) -> String {
        match self {
            EdgeLabel::Has(a) => format!("has_{}", schema_attrs[a]),
            EdgeLabel::HasInv(a) => format!("has_{}_inv", schema_attrs[a]),
            EdgeLabel::InstanceOf => "instance_of".into(),
            EdgeLabel::HasValue => "has_value".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub label: EdgeLabel,
}

/// Entity nodes relevant to the current turn.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelevantEntities(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueGraph {
    schema_attrs: Vec<String>,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    out: Vec<Vec<(usize, EdgeLabel)>>,
    entity_nodes: HashMap<EntityId, usize>,
    attribute_nodes: HashMap<usize, usize>,
    turn: usize,
    current_mentions: Vec<usize>,
    previous_mentions: Vec<usize>,
    last_speaker: Option<Side>,
}

impl DialogueGraph {
    /// G_0: one node per item, KB attribute and distinct value.
    pub fn from_kb(kb: &Kb, schema: &Schema) -> Result<Self> {
        let schema_attrs: Vec<String> = schema.attributes().iter().map(|a| a.name.clone()).collect();
        let mut g = Self {
            schema_attrs,
            nodes: Vec::new(),
            edges: Vec::new(),
            out: Vec::new(),
            entity_nodes: HashMap::new(),
            attribute_nodes: HashMap::new(),
            turn: 0,
            current_mentions: Vec::new(),
            previous_mentions: Vec::new(),
            last_speaker: None,
        };
        let attr_ids = kb
            .attributes
            .iter()
            .map(|a| {
                schema
                    .attribute_index(a)
                    .ok_or_else(|| Error::InvalidScenario(format!("unknown attribute `{a}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        for i in 0..kb.len() {
            g.push_node(Node {
                kind: NodeKind::Item(i),
                label: format!("item-{i}"),
                in_kb: true,
            });
        }
        for &a in &attr_ids {
            g.attribute_node(a);
        }
        for (i, item) in kb.items.iter().enumerate() {
            for (&a, value) in attr_ids.iter().zip(item) {
                match schema.entity(value) {
                    Some(e) if e.kind == g.schema_attrs[a] => {}
                    _ => return Err(Error::UnknownEntity(value.clone())),
                }
                let e = g.entity_node(value, a, true);
                g.push_edge(i, e, EdgeLabel::Has(a));
                g.push_edge(e, i, EdgeLabel::HasInv(a));
            }
        }
        Ok(g)
    }

    fn push_node(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.out.push(Vec::new());
        self.nodes.len() - 1
    }

    fn push_edge(&mut self, from: usize, to: usize, label: EdgeLabel) {
        self.edges.push(Edge { from, to, label });
        self.out[from].push((to, label));
    }

    fn attribute_node(&mut self, attr: usize) -> usize {
        if let Some(&n) = self.attribute_nodes.get(&attr) {
            return n;
        }
        let n = self.push_node(Node {
            kind: NodeKind::Attribute(attr),
            label: self.schema_attrs[attr].clone(),
            in_kb: true,
        });
        self.attribute_nodes.insert(attr, n);
        n
    }

    fn entity_node(&mut self, id: &str, attr: usize, in_kb: bool) -> usize {
        if let Some(&n) = self.entity_nodes.get(id) {
            return n;
        }
        let a = self.attribute_node(attr);
        let n = self.push_node(Node {
            kind: NodeKind::Entity(attr),
            label: id.to_string(),
            in_kb,
        });
        self.entity_nodes.insert(id.to_string(), n);
        self.push_edge(n, a, EdgeLabel::InstanceOf);
        self.push_edge(a, n, EdgeLabel::HasValue);
        n
    }

    /// Advances to the next turn: adds nodes for entities not yet in the
    /// graph, refreshes the current-turn mention flags and returns E_t.
    pub fn apply_utterance(
        &mut self,
        entities: &[EntityId],
        schema: &Schema,
        speaker: Side,
    ) -> Result<RelevantEntities> {
        let mut mentioned = Vec::new();
        for id in entities {
            let entity = schema
                .entity(id)
                .ok_or_else(|| Error::UnknownEntity(id.clone()))?;
            let attr = schema
                .attribute_index(&entity.kind)
                .expect("entity type is a schema attribute");
            let n = self.entity_node(id, attr, false);
            if !mentioned.contains(&n) {
                mentioned.push(n);
            }
        }
        self.turn += 1;
        self.last_speaker = Some(speaker);
        self.previous_mentions = std::mem::replace(&mut self.current_mentions, mentioned);
        Ok(self.relevant_entities())
    }

    /// E_t: this turn's mentions, else the previous turn's, else empty.
    pub fn relevant_entities(&self) -> RelevantEntities {
        if self.current_mentions.is_empty() {
            RelevantEntities(self.previous_mentions.clone())
        } else {
            RelevantEntities(self.current_mentions.clone())
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, EdgeLabel)] {
        &self.out[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.out[node].len()
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn last_speaker(&self) -> Option<Side> {
        self.last_speaker
    }

    pub fn entity_node_of(&self, id: &str) -> Option<usize> {
        self.entity_nodes.get(id).copied()
    }

    pub fn item_node(&self, index: usize) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.kind == NodeKind::Item(index))
    }

    pub fn num_attributes(&self) -> usize {
        self.schema_attrs.len()
    }

    pub fn num_edge_labels(&self) -> usize {
        EdgeLabel::count(self.schema_attrs.len())
    }

    pub fn is_mentioned(&self, node: usize) -> bool {
        self.current_mentions.contains(&node)
    }

    /// Width of [`DialogueGraph::node_features`] for a schema.
    pub fn feature_dim_for(num_attributes: usize) -> usize {
        DEGREE_BUCKETS + 2 + num_attributes + 1
    }

    pub fn feature_dim(&self) -> usize {
        Self::feature_dim_for(self.schema_attrs.len())
    }

    /// F_t(v): one-hot degree bucket, one-hot node kind (item, attribute,
    /// or one slot per entity type), then the current-turn mention bit.
    pub fn node_features(&self, node: usize) -> Result<Vec<f64>> {
        let n = self
            .nodes
            .get(node)
            .ok_or_else(|| Error::Transcript(format!("unknown graph node {node}")))?;
        let mut f = vec![0.0; self.feature_dim()];
        f[self.degree(node).min(DEGREE_BUCKETS - 1)] = 1.0;
        let kind_slot = match n.kind {
            NodeKind::Item(_) => 0,
            NodeKind::Attribute(_) => 1,
            NodeKind::Entity(a) => 2 + a,
        };
        f[DEGREE_BUCKETS + kind_slot] = 1.0;
        if self.is_mentioned(node) {
            f[DEGREE_BUCKETS + 2 + self.schema_attrs.len()] = 1.0;
        }
        Ok(f)
    }

    /// Graphviz rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph G {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = match n.kind {
                NodeKind::Item(_) => "box",
                NodeKind::Attribute(_) => "diamond",
                NodeKind::Entity(_) => "ellipse",
            };
            let style = if n.in_kb { "" } else { ",style=dashed" };
            let _ = writeln!(s, "  n{i} [label=\"{}\",shape={shape}{style}];", n.label);
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  n{} -> n{} [label=\"{}\"];",
                e.from,
                e.to,
                e.label.name(&self.schema_attrs)
            );
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb(rows: &[&[&str]], attrs: &[&str]) -> Kb {
        Kb {
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            items: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn node_counts() {
        let schema = Schema::bundled();
        let g = DialogueGraph::from_kb(
            &kb(
                &[&["columbia-university", "google"], &["rice-university", "intel"]],
                &["school", "company"],
            ),
            &schema,
        )
        .unwrap();
        assert_eq!(g.len(), 8);
        // item <-> entity both ways, entity <-> attribute both ways
        assert_eq!(g.edges().len(), 2 * 4 + 2 * 4);

        let g = DialogueGraph::from_kb(
            &kb(
                &[&["columbia-university", "google"], &["columbia-university", "intel"]],
                &["school", "company"],
            ),
            &schema,
        )
        .unwrap();
        let col = g.entity_node_of("columbia-university").unwrap();
        let to_items = g
            .neighbors(col)
            .iter()
            .filter(|(n, _)| matches!(g.nodes()[*n].kind, NodeKind::Item(_)))
            .count();
        assert_eq!(to_items, 2);
    }

    #[test]
    fn partner_mention_adds_node() {
        let schema = Schema::bundled();
        let mut g = DialogueGraph::from_kb(&kb(&[&["google"]], &["company"]), &schema).unwrap();
        let g0 = g.clone();
        let e = g
            .apply_utterance(&["columbia-university".into()], &schema, Side::B)
            .unwrap();
        let col = g.entity_node_of("columbia-university").unwrap();
        assert_eq!(e.0, vec![col]);
        assert_eq!(g.degree(col), 1);
        assert!(!g.nodes()[col].in_kb);
        // monotone growth
        assert!(g0.nodes().iter().zip(g.nodes()).all(|(a, b)| a == b));
        assert!(g0.edges().iter().all(|e| g.edges().contains(e)));
        let f = g.node_features(col).unwrap();
        assert_eq!(f[1], 1.0);
        assert_eq!(*f.last().unwrap(), 1.0);
    }

    #[test]
    fn relevant_entity_fallback() {
        let schema = Schema::bundled();
        let mut g = DialogueGraph::from_kb(&kb(&[&["google"]], &["company"]), &schema).unwrap();
        assert!(g.apply_utterance(&[], &schema, Side::A).unwrap().0.is_empty());
        let google = g.entity_node_of("google").unwrap();
        let e = g.apply_utterance(&["google".into()], &schema, Side::A).unwrap();
        assert_eq!(e.0, vec![google]);
        let e = g.apply_utterance(&[], &schema, Side::B).unwrap();
        assert_eq!(e.0, vec![google]);
        assert!(!g.is_mentioned(google));
        let e = g.apply_utterance(&[], &schema, Side::A).unwrap();
        assert!(e.0.is_empty());
    }

    #[test]
    fn features() {
        let schema = Schema::bundled();
        let rows: Vec<Vec<String>> = ["google", "intel", "apple", "nike", "visa"]
            .iter()
            .map(|c| vec!["rice-university".to_string(), "hiking".to_string(), c.to_string()])
            .collect();
        let kb = Kb {
            attributes: vec!["school".into(), "hobby".into(), "company".into()],
            items: rows,
        };
        let g = DialogueGraph::from_kb(&kb, &schema).unwrap();
        let dim = g.feature_dim();
        for n in 0..g.len() {
            assert_eq!(g.node_features(n).unwrap().len(), dim);
        }
        // item: degree 3, kind item
        let f = g.node_features(0).unwrap();
        assert_eq!(f[3], 1.0);
        assert_eq!(f[DEGREE_BUCKETS], 1.0);
        assert_eq!(f.iter().sum::<f64>(), 2.0);
        // company attribute node has 5 values -> bucket >=5
        let company = g
            .nodes()
            .iter()
            .position(|n| n.label == "company")
            .unwrap();
        let f = g.node_features(company).unwrap();
        assert_eq!(f[5], 1.0);
        assert_eq!(f[DEGREE_BUCKETS + 1], 1.0);
        assert!(g.node_features(999).is_err());
    }

    #[test]
    fn dot_dump() {
        let schema = Schema::bundled();
        let g = DialogueGraph::from_kb(&kb(&[&["google"]], &["company"]), &schema).unwrap();
        let dot = g.to_dot();
        assert!(dot.contains("has_company"));
        assert!(dot.starts_with("digraph"));
    }
}
