//! One running dialogue. Each session is a task that owns its state and
//! processes its inputs in arrival order.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use mutualfriends_core::session::{
    pace_outgoing, pending_outputs, select_event, typing_event, utterance_event, Limits, Scheduled, SelectionResult,
    Selections,
};
use mutualfriends_core::transcript::{EventKind, Outcome};
use mutualfriends_core::{Agent, Event, Resources, Scenario, Side, Transcript};
use rand_chacha::ChaCha8Rng;
use tokio::sync::mpsc::{UnboundedReceiver, UnboundedSender};
use tokio::time::{sleep_until, Instant};

use crate::wire::{ClientEvent, PartnerEvent, ScenarioView, ServerEvent};

pub enum SessionInput {
    Client { side: Side, event: ClientEvent },
    Attach { side: Side, tx: UnboundedSender<ServerEvent> },
    Detach { side: Side },
}

pub struct Human {
    pub tx: Option<UnboundedSender<ServerEvent>>,
}

pub struct Bot {
    pub agent: Box<dyn Agent>,
    pub rng: ChaCha8Rng,
}

pub enum Player {
    Human(Human),
    Bot(Bot),
}

struct BotState {
    queue: VecDeque<Scheduled>,
}

pub struct LiveSession {
    pub id: String,
    pub scenario: Scenario,
    pub resources: Arc<Resources>,
    pub players: [Player; 2],
    pub limits: Limits,
    pub abandon_ms: u64,
    pub bot_idle_ms: u64,
    /// The bot, if there is one, speaks first.
    pub bot_starts: bool,
}

/// How a session ended, handed back to the caller for persistence.
pub struct Ended {
    pub transcript: Transcript,
}

struct Run {
    id: String,
    scenario: Scenario,
    resources: Arc<Resources>,
    players: [Player; 2],
    bots: [Option<BotState>; 2],
    limits: Limits,
    abandon_ms: u64,
    bot_idle_ms: u64,
    start: Instant,
    deadline: Instant,
    gone_since: [Option<Instant>; 2],
    last_event: Instant,
    selections: Selections,
    transcript: Transcript,
    outcome: Option<(Outcome, Option<String>)>,
}

impl LiveSession {
    /// Runs until success, timeout, abandonment or a bot failure. Human
    /// players get an `end` event only after `persist` returns, so the
    /// transcript id they see is already stored.
    pub async fn run<F, Fut>(self, mut rx: UnboundedReceiver<SessionInput>, persist: F) -> Ended
    where
        F: FnOnce(Transcript) -> Fut,
        Fut: std::future::Future<Output = String>,
    {
        let start = Instant::now();
        let bots = [0, 1].map(|i| match self.players[i] {
            Player::Bot(_) => Some(BotState { queue: VecDeque::new() }),
            Player::Human(_) => None,
        });
        let mut run = Run {
            transcript: Transcript::new(self.scenario.id.clone()),
            id: self.id,
            scenario: self.scenario,
            resources: self.resources,
            players: self.players,
            bots,
            limits: self.limits,
            abandon_ms: self.abandon_ms,
            bot_idle_ms: self.bot_idle_ms,
            start,
            deadline: start + Duration::from_millis(self.limits.wall_ms),
            gone_since: [None, None],
            last_event: start,
            selections: Selections::default(),
            outcome: None,
        };
        for side in [Side::A, Side::B] {
            if run.human_connected(side) {
                run.send_paired(side);
            }
        }
        if self.bot_starts {
            for side in [Side::A, Side::B] {
                if run.bots[side.index()].is_some() {
                    run.activate_bot(side);
                    break;
                }
            }
        }
        while run.outcome.is_none() {
            let wake = run.next_wake();
            tokio::select! {
                msg = rx.recv() => match msg {
                    Some(input) => run.handle(input),
                    None => run.finish(Outcome::Failure, Some("service shut down".into())),
                },
                _ = sleep_until(wake) => {}
            }
            run.on_timers();
        }
        let (outcome, cause) = run.outcome.take().expect("loop exits with an outcome");
        run.transcript.outcome = outcome;
        run.transcript.cause = cause;
        run.transcript.turns = count_turns(&run.transcript.events);
        let transcript_id = persist(run.transcript.clone()).await;
        let label = match outcome {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
            Outcome::Timeout => "timeout",
        };
        for side in [Side::A, Side::B] {
            run.send(
                side,
                ServerEvent::End {
                    outcome: label.to_string(),
                    transcript_id: transcript_id.clone(),
                },
            );
        }
        Ended {
            transcript: run.transcript,
        }
    }
}

/// Maximal runs of utterances and selections by one side.
fn count_turns(events: &[Event]) -> usize {
    let mut turns = 0;
    let mut prev = None;
    for e in events.iter().filter(|e| e.kind != EventKind::Typing) {
        if prev != Some(e.agent) {
            turns += 1;
            prev = Some(e.agent);
        }
    }
    turns
}

impl Run {
    fn now_ms(&self) -> u64 {
        Instant::now().duration_since(self.start).as_millis() as u64
    }

    fn human_connected(&self, side: Side) -> bool {
        matches!(&self.players[side.index()], Player::Human(Human { tx: Some(_) }))
    }

    fn send(&mut self, side: Side, event: ServerEvent) {
        if let Player::Human(h) = &mut self.players[side.index()] {
            if let Some(tx) = &h.tx {
                if tx.send(event).is_err() {
                    h.tx = None;
                }
            }
        }
    }

    fn send_paired(&mut self, side: Side) {
        let kb = self.scenario.kb(side);
        let rows = (0..kb.len()).map(|i| kb.item_map(i)).collect();
        let left = self.deadline.saturating_duration_since(Instant::now()).as_millis() as u64;
        let event = ServerEvent::Paired {
            session_id: self.id.clone(),
            scenario_view: ScenarioView {
                scenario_id: self.scenario.id.clone(),
                attributes: self.scenario.attribute_names(),
            },
            kb: rows,
            deadline_ms: left,
        };
        self.send(side, event);
    }

    fn finish(&mut self, outcome: Outcome, cause: Option<String>) {
        if self.outcome.is_none() {
            self.outcome = Some((outcome, cause));
        }
    }

    fn next_wake(&self) -> Instant {
        let mut wake = self.deadline;
        for side in [Side::A, Side::B] {
            if let Some(since) = self.gone_since[side.index()] {
                wake = wake.min(since + Duration::from_millis(self.abandon_ms));
            }
            if let Some(bot) = &self.bots[side.index()] {
                let at = match bot.queue.front() {
                    Some(step) => self.start + Duration::from_millis(step.at_ms()),
                    None => self.last_event + Duration::from_millis(self.bot_idle_ms),
                };
                wake = wake.min(at);
            }
        }
        wake
    }

    /// Logs an event, lets bots observe it and tells the other human.
    fn record(&mut self, event: Event) {
        self.last_event = Instant::now();
        let from = event.agent;
        for p in self.players.iter_mut() {
            if let Player::Bot(b) = p {
                b.agent.observe(&event);
            }
        }
        let partner = match event.kind {
            EventKind::Typing => PartnerEvent::Typing,
            EventKind::Select => PartnerEvent::Select,
            EventKind::Utterance => PartnerEvent::Utterance {
                text: event.text.clone().unwrap_or_default(),
            },
        };
        let time_ms = event.time_ms;
        let kind = event.kind;
        self.transcript.events.push(event);
        self.send(
            from.other(),
            ServerEvent::PartnerEvent {
                time_ms,
                event: partner,
            },
        );
        if kind != EventKind::Typing {
            let other = from.other();
            if self.bots[other.index()].as_ref().is_some_and(|b| b.queue.is_empty()) {
                self.activate_bot(other);
            }
        }
    }

    fn activate_bot(&mut self, side: Side) {
        let now = self.now_ms();
        let Player::Bot(bot) = &mut self.players[side.index()] else {
            return;
        };
        let outputs = match bot.agent.act(&mut bot.rng) {
            Ok(o) => o,
            Err(e) => {
                self.finish(Outcome::Failure, Some(format!("agent {side} failed: {e}")));
                return;
            }
        };
        let pending = pending_outputs(&self.resources, &self.scenario, side, outputs);
        let steps = pace_outgoing(&pending, now, &mut bot.rng);
        self.last_event = Instant::now();
        if let Some(state) = &mut self.bots[side.index()] {
            state.queue.extend(steps);
        }
    }

    fn select(&mut self, side: Side, item: usize) -> Result<SelectionResult, String> {
        let now = self.now_ms();
        let result = self
            .selections
            .handle(&self.scenario, side, item, now, self.limits.throttle_ms)
            .map_err(|e| e.to_string())?;
        if result == SelectionResult::Accepted {
            if self.human_connected(side) {
                self.send(side, ServerEvent::SelectAccepted { item_index: item, time_ms: now });
            }
            self.record(select_event(&self.scenario, side, item, now));
            if self.selections.is_success(&self.scenario) {
                self.finish(Outcome::Success, None);
            }
        }
        Ok(result)
    }

    fn handle(&mut self, input: SessionInput) {
        match input {
            SessionInput::Attach { side, tx } => {
                if let Player::Human(h) = &mut self.players[side.index()] {
                    h.tx = Some(tx);
                    self.gone_since[side.index()] = None;
                    self.send_paired(side);
                }
            }
            SessionInput::Detach { side } => {
                if let Player::Human(h) = &mut self.players[side.index()] {
                    h.tx = None;
                    self.gone_since[side.index()] = Some(Instant::now());
                }
            }
            SessionInput::Client { side, event } => self.client_event(side, event),
        }
    }

    fn client_event(&mut self, side: Side, event: ClientEvent) {
        let now = self.now_ms();
        match event {
            ClientEvent::Utterance { text } => {
                let text = text.trim();
                if text.is_empty() {
                    self.send(side, ServerEvent::Error { message: "empty utterance".into() });
                    return;
                }
                let event = utterance_event(&self.resources, &self.scenario, side, text, now);
                self.send(side, ServerEvent::UtteranceAck { time_ms: now });
                self.record(event);
            }
            ClientEvent::Typing => self.record(typing_event(side, now)),
            ClientEvent::Select { item_index } => match self.select(side, item_index) {
                Ok(SelectionResult::Throttled { retry_after_ms }) => {
                    self.send(side, ServerEvent::SelectRejected { retry_after_ms })
                }
                Ok(SelectionResult::Accepted) => {}
                Err(message) => self.send(side, ServerEvent::Error { message }),
            },
            ClientEvent::Join { .. } => self.send(
                side,
                ServerEvent::Error {
                    message: "already in a session".into(),
                },
            ),
            ClientEvent::Rate(_) => self.send(
                side,
                ServerEvent::Error {
                    message: "ratings are accepted after the dialogue ends".into(),
                },
            ),
        }
    }

    fn on_timers(&mut self) {
        if self.outcome.is_some() {
            return;
        }
        let now = Instant::now();
        if now >= self.deadline {
            self.finish(Outcome::Timeout, Some("time limit reached".into()));
            return;
        }
        for side in [Side::A, Side::B] {
            if let Some(since) = self.gone_since[side.index()] {
                if now >= since + Duration::from_millis(self.abandon_ms) {
                    self.finish(Outcome::Failure, Some(format!("abandoned by {side}")));
                    return;
                }
            }
        }
        for side in [Side::A, Side::B] {
            self.run_bot(side);
            if self.outcome.is_some() {
                return;
            }
        }
    }

    /// Sends the bot's due steps; with an empty queue, speaks up after
    /// `bot_idle_ms` of silence.
    fn run_bot(&mut self, side: Side) {
        loop {
            let now_ms = self.now_ms();
            let Some(bot) = &mut self.bots[side.index()] else {
                return;
            };
            let step = match bot.queue.front() {
                Some(step) if step.at_ms() <= now_ms => bot.queue.pop_front().expect("front exists"),
                Some(_) => return,
                None => {
                    if Instant::now() >= self.last_event + Duration::from_millis(self.bot_idle_ms) {
                        self.activate_bot(side);
                    }
                    return;
                }
            };
            match step {
                Scheduled::Typing { .. } => self.record(typing_event(side, now_ms)),
                Scheduled::Utterance { text, .. } => {
                    let event = utterance_event(&self.resources, &self.scenario, side, &text, now_ms);
                    self.record(event);
                }
                Scheduled::Select { item, .. } => match self.select(side, item) {
                    Ok(SelectionResult::Throttled { retry_after_ms }) => {
                        // the bot waits out the throttle
                        if let Some(bot) = &mut self.bots[side.index()] {
                            bot.queue.push_front(Scheduled::Select {
                                at_ms: now_ms + retry_after_ms,
                                item,
                            });
                        }
                        return;
                    }
                    Ok(SelectionResult::Accepted) => {}
                    Err(e) => {
                        self.finish(Outcome::Failure, Some(format!("agent {side} failed: {e}")));
                    }
                },
            }
            if self.outcome.is_some() {
                return;
            }
        }
    }
}
