//! The rule-based agent: entity and item weights driven by the partner's
//! mentions, a pattern-matching reader and a templated writer.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentOutput, AgentSetup, Resources};
use crate::error::Result;
use crate::lexicon::{is_negative, realize_entity, tokenize};
use crate::scenario::Kb;
use crate::schema::{EntityId, Schema, SurfaceFormStore};
use crate::transcript::{Event, EventKind, Side, SpeechAct};

const TEMPLATES: &str = include_str!("../data/rule_templates.json");

/// Tunable constants of the rule bot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleConfig {
    /// Weight change for an entity the partner mentions.
    pub mention_delta: f64,
    /// Weight change for entities sharing a row or column with a mention.
    pub related_delta: f64,
    /// Minimum sampling weight of an entity.
    pub weight_floor: f64,
    /// Probability of selecting when some item weighs more than 1.
    pub select_prob: f64,
    /// Item weight removed once the bot has selected that item.
    pub selected_penalty: f64,
    /// Weight removed from entities the bot itself talked about.
    pub own_mention_delta: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            mention_delta: 1.0,
            related_delta: 0.5,
            weight_floor: 0.05,
            select_prob: 0.3,
            selected_penalty: 10.0,
            own_mention_delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleAction {
    Greet,
    Inform(Vec<EntityId>),
    Ask(Vec<EntityId>),
    /// Reply to a question about these entities with the matching count.
    Answer(Vec<EntityId>),
    Select(usize),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct TemplateTable {
    pub greet: Vec<String>,
    pub inform: Vec<String>,
    pub ask: Vec<String>,
    pub answer_yes: Vec<String>,
    pub answer_no: Vec<String>,
    pub predicates: BTreeMap<String, String>,
}

impl TemplateTable {
    pub fn bundled() -> Self {
        serde_json::from_str(TEMPLATES).expect("bundled template table parses")
    }
}

#[derive(Debug, Clone)]
pub struct RuleState {
    pub kb: Kb,
    pub entity_weights: BTreeMap<EntityId, f64>,
    pub item_weights: Vec<f64>,
    /// Entities of an unanswered partner question.
    pub pending_question: Option<Vec<EntityId>>,
    /// Own item matching the partner's latest selection.
    pub partner_selection: Option<usize>,
    pub greeted: bool,
}

impl RuleState {
    pub fn new(kb: &Kb) -> Self {
        let mut entity_weights = BTreeMap::new();
        for item in &kb.items {
            for v in item {
                *entity_weights.entry(v.clone()).or_insert(0.0) += 1.0;
            }
        }
        Self {
            kb: kb.clone(),
            entity_weights,
            item_weights: vec![1.0; kb.len()],
            pending_question: None,
            partner_selection: None,
            greeted: false,
        }
    }

    /// Applies the weight updates for one partner utterance.
    pub fn observe_utterance(
        &mut self,
        tokens: &[String],
        entities: &[EntityId],
        acts: &BTreeSet<SpeechAct>,
        config: &RuleConfig,
    ) {
        if acts.contains(&SpeechAct::Ask) && !entities.is_empty() {
            self.pending_question = Some(entities.to_vec());
        }
        if entities.is_empty() {
            return;
        }
        let sign = if is_negative(tokens) { -1.0 } else { 1.0 };
        let mentioned: BTreeSet<&str> = entities.iter().map(String::as_str).collect();
        let mut deltas: BTreeMap<&str, f64> = BTreeMap::new();
        for &e in &mentioned {
            deltas.insert(e, sign * config.mention_delta);
        }
        for &e in &mentioned {
            for item in self.kb.items.iter().filter(|it| it.iter().any(|v| v == e)) {
                for v in item {
                    deltas.entry(v).or_insert(sign * config.related_delta);
                }
            }
            if let Some(col) = self.column_of(e) {
                for item in &self.kb.items {
                    deltas.entry(&item[col]).or_insert(sign * config.related_delta);
                }
            }
        }
        for (e, d) in &deltas {
            *self.entity_weights.entry(e.to_string()).or_insert(0.0) += d;
        }
        for (w, item) in self.item_weights.iter_mut().zip(&self.kb.items) {
            let mut seen = BTreeSet::new();
            for v in item {
                if seen.insert(v.as_str()) {
                    *w += deltas.get(v.as_str()).copied().unwrap_or(0.0);
                }
            }
        }
    }

    /// Column of `entity` in this KB, if any item has it.
    fn column_of(&self, entity: &str) -> Option<usize> {
        self.kb
            .items
            .iter()
            .find_map(|item| item.iter().position(|v| v == entity))
    }

    pub fn observe_partner_selection(&mut self, values: &BTreeMap<String, String>) {
        self.partner_selection = self.kb.find_item(values);
    }

    /// Highest-weighted item, lowest index on ties.
    pub fn best_item(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &w) in self.item_weights.iter().enumerate() {
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((i, w));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn decide<R: Rng + ?Sized>(&mut self, config: &RuleConfig, rng: &mut R) -> RuleAction {
        if let Some(i) = self.partner_selection.take() {
            return self.select(i, config);
        }
        if !self.greeted {
            self.greeted = true;
            return RuleAction::Greet;
        }
        if self.item_weights.iter().any(|&w| w > 1.0) && rng.gen_bool(config.select_prob) {
            let i = self.best_item().expect("non-empty KB");
            return self.select(i, config);
        }
        if let Some(asked) = self.pending_question.take() {
            return RuleAction::Answer(asked);
        }
        let entities = self.sample_entities(config, rng);
        for e in &entities {
            if let Some(w) = self.entity_weights.get_mut(e) {
                *w -= config.own_mention_delta;
            }
        }
        if rng.gen_bool(0.5) {
            RuleAction::Inform(entities)
        } else {
            RuleAction::Ask(entities)
        }
    }

    fn select(&mut self, item: usize, config: &RuleConfig) -> RuleAction {
        self.item_weights[item] -= config.selected_penalty;
        RuleAction::Select(item)
    }

    /// One or two co-occurring entities of the own KB, drawn with
    /// probability proportional to their (floored) weights.
    fn sample_entities<R: Rng + ?Sized>(&self, config: &RuleConfig, rng: &mut R) -> Vec<EntityId> {
        let own = self.kb.entities();
        let weight = |e: &EntityId| {
            self.entity_weights
                .get(e)
                .copied()
                .unwrap_or(0.0)
                .max(config.weight_floor)
        };
        let first = weighted_pick(&own, &weight, rng).clone();
        let mut set = vec![first.clone()];
        if rng.gen_bool(0.5) {
            let first_col = self.column_of(&first);
            let mut mates: Vec<EntityId> = Vec::new();
            for item in self.kb.items.iter().filter(|it| it.contains(&first)) {
                for (col, v) in item.iter().enumerate() {
                    if Some(col) != first_col && !mates.contains(v) {
                        mates.push(v.clone());
                    }
                }
            }
            if !mates.is_empty() {
                set.push(weighted_pick(&mates, &weight, rng).clone());
            }
        }
        set
    }
}

fn weighted_pick<'a, R: Rng + ?Sized>(
    items: &'a [EntityId],
    weight: &dyn Fn(&EntityId) -> f64,
    rng: &mut R,
) -> &'a EntityId {
    let total: f64 = items.iter().map(weight).sum();
    let mut r = rng.gen::<f64>() * total;
    for e in items {
        let w = weight(e);
        if r < w {
            return e;
        }
        r -= w;
    }
    items.last().expect("non-empty candidate list")
}

/// Turns an action into text (or a selection) using the template table.
pub fn render<R: Rng + ?Sized>(
    action: &RuleAction,
    kb: &Kb,
    templates: &TemplateTable,
    schema: &Schema,
    store: &SurfaceFormStore,
    rng: &mut R,
) -> AgentOutput {
    let pick = |list: &[String], rng: &mut R| list[rng.gen_range(0..list.len())].clone();
    let facts = |entities: &[EntityId], rng: &mut R| {
        entities
            .iter()
            .filter_map(|id| schema.entity(id))
            .map(|e| {
                let surface = realize_entity(e, store, rng);
                templates
                    .predicates
                    .get(&e.kind)
                    .map(|p| p.replace("{}", &surface))
                    .unwrap_or(surface)
            })
            .collect::<Vec<_>>()
            .join(" and ")
    };
    let fill = |template: String, count: usize, facts: String| {
        template
            .replace("{count}", &count.to_string())
            .replace("{friends}", if count == 1 { "friend" } else { "friends" })
            .replace("{facts}", &facts)
    };
    match action {
        RuleAction::Select(i) => AgentOutput::Select(*i),
        RuleAction::Greet => AgentOutput::Utterance(pick(&templates.greet, rng)),
        RuleAction::Inform(es) => {
            let t = pick(&templates.inform, rng);
            let f = facts(es, rng);
            AgentOutput::Utterance(fill(t, kb.count_all(es), f))
        }
        RuleAction::Ask(es) => {
            let t = pick(&templates.ask, rng);
            let f = facts(es, rng);
            AgentOutput::Utterance(fill(t, 0, f))
        }
        RuleAction::Answer(es) => {
            let count = kb.count_all(es);
            let list = if count > 0 {
                &templates.answer_yes
            } else {
                &templates.answer_no
            };
            let t = pick(list, rng);
            let f = facts(es, rng);
            AgentOutput::Utterance(fill(t, count, f))
        }
    }
}

/// The rule bot as a session agent.
pub struct RuleBot {
    resources: Arc<Resources>,
    side: Side,
    state: RuleState,
    config: RuleConfig,
    templates: TemplateTable,
}

impl RuleBot {
    pub fn new(setup: &AgentSetup) -> Self {
        Self::with_config(setup, RuleConfig::default())
    }

    pub fn with_config(setup: &AgentSetup, config: RuleConfig) -> Self {
        Self {
            resources: setup.resources.clone(),
            side: setup.side,
            state: RuleState::new(setup.kb()),
            config,
            templates: TemplateTable::bundled(),
        }
    }

    pub fn state(&self) -> &RuleState {
        &self.state
    }
}

impl Agent for RuleBot {
    fn kind(&self) -> &str {
        "rule"
    }

    fn observe(&mut self, event: &Event) {
        if event.agent == self.side {
            return;
        }
        match event.kind {
            EventKind::Utterance => {
                let tokens = tokenize(event.text.as_deref().unwrap_or(""));
                let entities: Vec<EntityId> = event.links.iter().map(|l| l.entity.clone()).collect();
                let acts: BTreeSet<SpeechAct> = event.acts.iter().copied().collect();
                self.state
                    .observe_utterance(&tokens, &entities, &acts, &self.config);
            }
            EventKind::Select => {
                if let Some(item) = &event.item {
                    self.state.observe_partner_selection(&item.values);
                }
            }
            EventKind::Typing => {}
        }
    }

    fn act(&mut self, rng: &mut dyn RngCore) -> Result<Vec<AgentOutput>> {
        let action = self.state.decide(&self.config, rng);
        Ok(vec![render(
            &action,
            &self.state.kb,
            &self.templates,
            &self.resources.schema,
            &self.resources.surface_forms,
            rng,
        )])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kb() -> Kb {
        Kb {
            attributes: vec!["school".into(), "company".into(), "hobby".into()],
            items: vec![
                vec!["columbia-university".into(), "google".into(), "hiking".into()],
                vec!["columbia-university".into(), "intel".into(), "chess".into()],
                vec!["rice-university".into(), "google".into(), "yoga".into()],
            ],
        }
    }

    fn obs(state: &mut RuleState, text: &str, entities: &[&str], acts: &[SpeechAct]) {
        let ents: Vec<EntityId> = entities.iter().map(|s| s.to_string()).collect();
        state.observe_utterance(
            &tokenize(text),
            &ents,
            &acts.iter().copied().collect(),
            &RuleConfig::default(),
        );
    }

    #[test]
    fn initial_weights() {
        let s = RuleState::new(&kb());
        assert_eq!(s.entity_weights["columbia-university"], 2.0);
        assert_eq!(s.entity_weights["yoga"], 1.0);
        assert_eq!(s.item_weights, vec![1.0; 3]);
    }

    #[test]
    fn negative_mention_updates() {
        let mut s = RuleState::new(&kb());
        obs(&mut s, "no google friends", &["google"], &[SpeechAct::Answer]);
        assert_eq!(s.entity_weights["google"], 2.0 - 1.0);
        // row-mates of google
        assert_eq!(s.entity_weights["hiking"], 1.0 - 0.5);
        assert_eq!(s.entity_weights["rice-university"], 1.0 - 0.5);
        assert_eq!(s.entity_weights["columbia-university"], 2.0 - 0.5);
        // column-mate
        assert_eq!(s.entity_weights["intel"], 1.0 - 0.5);
        // item 0: google -1, columbia -0.5, hiking -0.5
        assert_eq!(s.item_weights[0], 1.0 - 2.0);
        // item 1: columbia -0.5, intel -0.5, chess 0
        assert_eq!(s.item_weights[1], 1.0 - 1.0);
    }

    #[test]
    fn positive_mention_and_no_entities() {
        let mut s = RuleState::new(&kb());
        obs(&mut s, "i have 2 columbia friends", &["columbia-university"], &[SpeechAct::Inform]);
        assert_eq!(s.entity_weights["columbia-university"], 3.0);
        let before = s.clone();
        obs(&mut s, "ok", &[], &[]);
        assert_eq!(s.entity_weights, before.entity_weights);
        assert_eq!(s.item_weights, before.item_weights);
    }

    #[test]
    fn never_selects_at_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mut s = RuleState::new(&kb());
            s.greeted = true;
            assert!(!matches!(
                s.decide(&RuleConfig::default(), &mut rng),
                RuleAction::Select(_)
            ));
        }
    }

    #[test]
    fn selection_rate_is_point_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mut selected = 0;
        for _ in 0..n {
            let mut s = RuleState::new(&kb());
            s.greeted = true;
            s.item_weights[1] = 2.0;
            if let RuleAction::Select(i) = s.decide(&RuleConfig::default(), &mut rng) {
                assert_eq!(i, 1);
                selected += 1;
            }
        }
        let rate = selected as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn answers_questions() {
        let schema = Schema::bundled();
        let templates = TemplateTable::bundled();
        let mut s = RuleState::new(&kb());
        s.greeted = true;
        obs(&mut s, "anyone went to columbia ?", &["columbia-university"], &[SpeechAct::Ask]);
        // keep item weights at 1 so no selection can preempt the answer
        s.item_weights = vec![1.0; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let action = s.decide(&RuleConfig::default(), &mut rng);
        assert_eq!(action, RuleAction::Answer(vec!["columbia-university".into()]));
        let texts: BTreeSet<String> = (0..50)
            .map(|_| {
                match render(&action, &s.kb, &templates, &schema, &SurfaceFormStore::new(), &mut rng) {
                    AgentOutput::Utterance(t) => t,
                    other => panic!("{other:?}"),
                }
            })
            .collect();
        assert!(texts.contains("yes , i have 2 friends who went to columbia university"));
    }

    #[test]
    fn render_kinds() {
        let schema = Schema::bundled();
        let templates = TemplateTable::bundled();
        let store = SurfaceFormStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = kb();
        for _ in 0..20 {
            match render(&RuleAction::Greet, &k, &templates, &schema, &store, &mut rng) {
                AgentOutput::Utterance(t) => assert!(templates.greet.contains(&t)),
                other => panic!("{other:?}"),
            }
            match render(&RuleAction::Ask(vec!["google".into()]), &k, &templates, &schema, &store, &mut rng) {
                AgentOutput::Utterance(t) => {
                    assert!(t.contains("work at google"));
                    assert!(t.ends_with('?'));
                }
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(
            render(&RuleAction::Select(2), &k, &templates, &schema, &store, &mut rng),
            AgentOutput::Select(2)
        );
        assert!(templates.greet.len() >= 3 && templates.inform.len() >= 3 && templates.ask.len() >= 3);
    }

    #[test]
    fn partner_selection_is_followed() {
        let mut s = RuleState::new(&kb());
        s.greeted = true;
        s.observe_partner_selection(&kb().item_map(2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(s.decide(&RuleConfig::default(), &mut rng), RuleAction::Select(2));
    }
}
