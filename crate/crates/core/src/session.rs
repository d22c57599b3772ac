//! Running a dialogue between two agents under the game rules: pacing of
//! outgoing messages, the selection throttle, and the turn and time limits.

use std::time::{Duration, Instant};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentOutput, Resources};
use crate::error::{Error, Result};
use crate::lexicon::{classify_utterance, spans, tokenize};
use crate::scenario::Scenario;
use crate::transcript::{Event, EventKind, Outcome, SelectedItem, Side, Transcript};

/// Characters per second of simulated typing.
pub const TYPING_CHARS_PER_SEC: f64 = 7.0;
/// Extra random delay after typing, milliseconds.
pub const TYPING_JITTER_MS: f64 = 1500.0;
/// Pause between two utterances of one burst, milliseconds.
pub const GAP_MS: (f64, f64) = (1000.0, 2000.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub wall_ms: u64,
    pub throttle_ms: u64,
    pub max_turns: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            wall_ms: 300_000,
            throttle_ms: 10_000,
            max_turns: 46,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Simulated,
    Real,
}

/// Dialogue time in milliseconds. Simulated clocks only move when the
/// session advances them; real clocks follow wall time and sleep.
#[derive(Debug, Clone)]
pub struct Clock {
    mode: ClockMode,
    start: Instant,
    now_ms: u64,
}

impl Clock {
    pub fn simulated() -> Self {
        Self {
            mode: ClockMode::Simulated,
            start: Instant::now(),
            now_ms: 0,
        }
    }

    pub fn real() -> Self {
        Self {
            mode: ClockMode::Real,
            start: Instant::now(),
            now_ms: 0,
        }
    }

    pub fn new(mode: ClockMode) -> Self {
        match mode {
            ClockMode::Simulated => Self::simulated(),
            ClockMode::Real => Self::real(),
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn now_ms(&self) -> u64 {
        match self.mode {
            ClockMode::Simulated => self.now_ms,
            ClockMode::Real => self.start.elapsed().as_millis() as u64,
        }
    }

    /// Moves the clock to `t` (never backwards).
    pub fn advance_to(&mut self, t: u64) {
        match self.mode {
            ClockMode::Simulated => self.now_ms = self.now_ms.max(t),
            ClockMode::Real => {
                let now = self.now_ms();
                if t > now {
                    std::thread::sleep(Duration::from_millis(t - now));
                }
            }
        }
    }
}

/// One outgoing message waiting for pacing.
#[derive(Debug, Clone, PartialEq)]
pub enum Pending {
    Utterance { text: String, has_entity: bool },
    Select(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheduled {
    Typing { at_ms: u64 },
    Utterance { at_ms: u64, text: String },
    Select { at_ms: u64, item: usize },
}

impl Scheduled {
    pub fn at_ms(&self) -> u64 {
        match self {
            Scheduled::Typing { at_ms }
            | Scheduled::Utterance { at_ms, .. }
            | Scheduled::Select { at_ms, .. } => *at_ms,
        }
    }
}

pub fn typing_delay_ms(text: &str) -> f64 {
    text.chars().count() as f64 * 1000.0 / TYPING_CHARS_PER_SEC
}

/// Applies the turn-taking rules to one burst: at most one utterance if it
/// mentions an entity, otherwise at most two entity-free utterances, with a
/// 1–2 s pause between them and a typing delay before each send. A
/// selection is only sent as the first output of a burst.
pub fn pace_outgoing<R: Rng + ?Sized>(pending: &[Pending], now_ms: u64, rng: &mut R) -> Vec<Scheduled> {
    let mut out = Vec::new();
    let mut t = now_ms as f64;
    let mut sent = 0usize;
    for p in pending {
        match p {
            Pending::Select(item) => {
                if sent == 0 {
                    out.push(Scheduled::Select {
                        at_ms: now_ms,
                        item: *item,
                    });
                }
                break;
            }
            Pending::Utterance { text, has_entity } => {
                if sent == 2 || (*has_entity && sent > 0) {
                    break;
                }
                if sent > 0 {
                    t += rng.gen_range(GAP_MS.0..=GAP_MS.1);
                }
                let typing_at = t.round();
                out.push(Scheduled::Typing {
                    at_ms: typing_at as u64,
                });
                t = typing_at + typing_delay_ms(text) + rng.gen_range(0.0..=TYPING_JITTER_MS);
                t = t.round();
                out.push(Scheduled::Utterance {
                    at_ms: t as u64,
                    text: text.clone(),
                });
                sent += 1;
                if *has_entity {
                    break;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionResult {
    Accepted,
    Throttled { retry_after_ms: u64 },
}

/// Latest selection and throttle bookkeeping for both sides.
#[derive(Debug, Clone, Default)]
pub struct Selections {
    last_ms: [Option<u64>; 2],
    latest: [Option<usize>; 2],
}

impl Selections {
    pub fn latest(&self, side: Side) -> Option<usize> {
        self.latest[side.index()]
    }

    /// Accepts a selection unless the side selected less than
    /// `throttle_ms` ago. Re-selection replaces the earlier choice.
    pub fn handle(
        &mut self,
        scenario: &Scenario,
        side: Side,
        item: usize,
        now_ms: u64,
        throttle_ms: u64,
    ) -> Result<SelectionResult> {
        if item >= scenario.kb(side).len() {
            return Err(Error::NoSuchItem(item));
        }
        if let Some(prev) = self.last_ms[side.index()] {
            let elapsed = now_ms.saturating_sub(prev);
            if elapsed < throttle_ms {
                return Ok(SelectionResult::Throttled {
                    retry_after_ms: throttle_ms - elapsed,
                });
            }
        }
        self.last_ms[side.index()] = Some(now_ms);
        self.latest[side.index()] = Some(item);
        Ok(SelectionResult::Accepted)
    }

    /// Both sides' latest selections are the shared item.
    pub fn is_success(&self, scenario: &Scenario) -> bool {
        let Some(shared) = scenario.shared_items().pop() else {
            return false;
        };
        [Side::A, Side::B].iter().all(|&s| {
            self.latest(s)
                .is_some_and(|i| scenario.kb(s).items[i] == shared)
        })
    }
}

/// Stand-alone form of [`Selections::handle`].
pub fn handle_selection(
    selections: &mut Selections,
    scenario: &Scenario,
    side: Side,
    item: usize,
    now_ms: u64,
    limits: &Limits,
) -> Result<SelectionResult> {
    selections.handle(scenario, side, item, now_ms, limits.throttle_ms)
}

/// Converts agent outputs to pacing input, marking utterances that mention
/// an entity.
pub fn pending_outputs(
    resources: &Resources,
    scenario: &Scenario,
    side: Side,
    outputs: Vec<AgentOutput>,
) -> Vec<Pending> {
    outputs
        .into_iter()
        .map(|o| match o {
            AgentOutput::Select(i) => Pending::Select(i),
            AgentOutput::Utterance(text) => {
                let tokens = tokenize(&text);
                let has_entity = resources
                    .lexicon
                    .link(&tokens, Some(scenario.kb(side)))
                    .iter()
                    .any(|t| t.entity.is_some());
                Pending::Utterance { text, has_entity }
            }
        })
        .collect()
}

/// Builds a linked, act-tagged utterance event.
pub fn utterance_event(
    resources: &Resources,
    scenario: &Scenario,
    side: Side,
    text: &str,
    time_ms: u64,
) -> Event {
    let tokens = tokenize(text);
    let links = resources.lexicon.link(&tokens, Some(scenario.kb(side)));
    let acts = classify_utterance(&tokens, &links);
    Event {
        time_ms,
        agent: side,
        kind: EventKind::Utterance,
        text: Some(text.to_string()),
        item: None,
        links: spans(&links),
        acts: acts.into_iter().collect(),
    }
}

pub fn select_event(scenario: &Scenario, side: Side, item: usize, time_ms: u64) -> Event {
    Event {
        time_ms,
        agent: side,
        kind: EventKind::Select,
        text: None,
        item: Some(SelectedItem {
            index: item,
            values: scenario.kb(side).item_map(item),
        }),
        links: vec![],
        acts: vec![],
    }
}

pub fn typing_event(side: Side, time_ms: u64) -> Event {
    Event {
        time_ms,
        agent: side,
        kind: EventKind::Typing,
        text: None,
        item: None,
        links: vec![],
        acts: vec![],
    }
}

/// Runs a bot-vs-bot dialogue. Agents are activated alternately (the first
/// speaker is drawn from `rng`); the dialogue ends on success, after
/// `limits.max_turns` activations, or (real clock only) at the wall limit.
pub fn run_dialogue(
    agents: [&mut dyn Agent; 2],
    scenario: &Scenario,
    resources: &Resources,
    limits: &Limits,
    clock: &mut Clock,
    rng: &mut dyn RngCore,
) -> Transcript {
    let [a, b] = agents;
    let mut agents: [&mut dyn Agent; 2] = [a, b];
    let mut transcript = Transcript::new(scenario.id.clone());
    let mut selections = Selections::default();
    let mut side = if rng.gen_bool(0.5) { Side::A } else { Side::B };

    let deliver = |agents: &mut [&mut dyn Agent; 2], transcript: &mut Transcript, event: Event| {
        for agent in agents.iter_mut() {
            agent.observe(&event);
        }
        transcript.events.push(event);
    };

    transcript.outcome = Outcome::Failure;
    'turns: while transcript.turns < limits.max_turns {
        if clock.mode() == ClockMode::Real && clock.now_ms() >= limits.wall_ms {
            transcript.outcome = Outcome::Timeout;
            break;
        }
        transcript.turns += 1;
        let outputs = match agents[side.index()].act(rng) {
            Ok(o) => o,
            Err(e) => {
                transcript.cause = Some(format!("agent {side} failed: {e}"));
                break;
            }
        };
        let pending = pending_outputs(resources, scenario, side, outputs);
        for step in pace_outgoing(&pending, clock.now_ms(), rng) {
            let mut at = step.at_ms();
            if clock.mode() == ClockMode::Real && at >= limits.wall_ms {
                transcript.outcome = Outcome::Timeout;
                break 'turns;
            }
            clock.advance_to(at);
            let event = match step {
                Scheduled::Typing { .. } => typing_event(side, clock.now_ms()),
                Scheduled::Utterance { text, .. } => {
                    utterance_event(resources, scenario, side, &text, clock.now_ms())
                }
                Scheduled::Select { item, .. } => loop {
                    match selections.handle(scenario, side, item, clock.now_ms(), limits.throttle_ms) {
                        Ok(SelectionResult::Accepted) => {
                            break select_event(scenario, side, item, clock.now_ms())
                        }
                        Ok(SelectionResult::Throttled { retry_after_ms }) => {
                            // the bot waits out the throttle
                            at = clock.now_ms() + retry_after_ms;
                            clock.advance_to(at);
                        }
                        Err(e) => {
                            transcript.cause = Some(format!("agent {side} failed: {e}"));
                            break 'turns;
                        }
                    }
                },
            };
            let is_select = event.is_select();
            deliver(&mut agents, &mut transcript, event);
            if is_select && selections.is_success(scenario) {
                transcript.outcome = Outcome::Success;
                break 'turns;
            }
        }
        side = side.other();
    }
    if transcript.outcome == Outcome::Failure && transcript.cause.is_none() {
        transcript.cause = Some("turn limit reached".into());
    }
    transcript
}

/// Post-hoc check of the pacing and throttle rules on a bot transcript.
/// Returns the list of violations (empty when the transcript is valid).
pub fn validate_pacing(transcript: &Transcript, limits: &Limits) -> Vec<String> {
    let mut problems = Vec::new();
    let events = &transcript.events;
    for w in events.windows(2) {
        if w[1].time_ms < w[0].time_ms {
            problems.push(format!("time goes backwards at {}", w[1].time_ms));
        }
    }
    let mut last_select: [Option<u64>; 2] = [None, None];
    for e in events.iter().filter(|e| e.is_select()) {
        if let Some(prev) = last_select[e.agent.index()] {
            if e.time_ms - prev < limits.throttle_ms {
                problems.push(format!(
                    "agent {} selected twice within {} ms",
                    e.agent,
                    e.time_ms - prev
                ));
            }
        }
        last_select[e.agent.index()] = Some(e.time_ms);
    }

    // bursts: maximal runs of events by one agent
    let mut start = 0;
    while start < events.len() {
        let side = events[start].agent;
        let mut end = start;
        while end < events.len() && events[end].agent == side {
            end += 1;
        }
        let burst = &events[start..end];
        let utterances: Vec<&Event> = burst.iter().filter(|e| e.is_utterance()).collect();
        if utterances.len() > 2 {
            problems.push(format!("burst at {} has {} utterances", burst[0].time_ms, utterances.len()));
        }
        if utterances.len() == 2 && utterances.iter().any(|u| !u.links.is_empty()) {
            problems.push(format!("burst at {} sends an entity with a second utterance", burst[0].time_ms));
        }
        for (i, e) in burst.iter().enumerate() {
            if !e.is_utterance() {
                continue;
            }
            let Some(typing) = i.checked_sub(1).map(|j| &burst[j]).filter(|p| p.kind == EventKind::Typing)
            else {
                problems.push(format!("utterance at {} without typing", e.time_ms));
                continue;
            };
            let delay = (e.time_ms - typing.time_ms) as f64;
            let min = typing_delay_ms(e.text.as_deref().unwrap_or(""));
            if delay + 1.0 < min || delay > min + TYPING_JITTER_MS + 1.0 {
                problems.push(format!("typing delay {delay} ms outside [{min}, {}]", min + TYPING_JITTER_MS));
            }
            if let Some(next) = burst.get(i + 1).filter(|n| n.kind == EventKind::Typing) {
                let gap = (next.time_ms - e.time_ms) as f64;
                if gap + 1.0 < GAP_MS.0 || gap > GAP_MS.1 + 1.0 {
                    problems.push(format!("gap {gap} ms between utterances"));
                }
            }
        }
        start = end;
    }
    problems
}
