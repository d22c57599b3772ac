//! Line-based terminal chat against a bot. Lines are utterances;
//! `/select N` picks row N of your table and `/quit` gives up.

use std::io::{BufRead, Write};
use std::sync::Arc;

use mutualfriends_core::scenario::scenario_at;
use mutualfriends_core::session::{
    pace_outgoing, pending_outputs, select_event, typing_delay_ms, typing_event, utterance_event, Clock, ClockMode,
    Limits, Scheduled, SelectionResult, Selections,
};
use mutualfriends_core::transcript::Outcome;
use mutualfriends_core::{Agent, AgentRegistry, AgentSetup, Event, Resources, Scenario, Side, Transcript};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

pub struct ChatOptions {
    pub bot: String,
    pub seed: u64,
    pub scenario_index: usize,
    pub clock: ClockMode,
    pub limits: Limits,
}

struct Game<'a, W: Write> {
    scenario: Scenario,
    resources: &'a Resources,
    human: Side,
    bot: Box<dyn Agent>,
    rng: ChaCha8Rng,
    clock: Clock,
    limits: Limits,
    selections: Selections,
    transcript: Transcript,
    out: W,
}

fn io(e: std::io::Error) -> CliError {
    CliError::Internal(format!("terminal: {e}"))
}

pub fn kb_table(scenario: &Scenario, side: Side) -> String {
    let kb = scenario.kb(side);
    let mut rows = vec![std::iter::once("#".to_string()).chain(kb.attributes.iter().cloned()).collect::<Vec<_>>()];
    for (i, item) in kb.items.iter().enumerate() {
        rows.push(std::iter::once(i.to_string()).chain(item.iter().cloned()).collect());
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        s.push_str(cells.join("  ").trim_end());
        s.push('\n');
    }
    s
}

impl<W: Write> Game<'_, W> {
    fn log(&mut self, event: Event) {
        self.bot.observe(&event);
        self.transcript.events.push(event);
    }

    fn out_of_time(&self) -> bool {
        self.clock.now_ms() >= self.limits.wall_ms
    }

    /// One bot activation; true when the dialogue ended.
    fn bot_turn(&mut self) -> Result<bool> {
        let side = self.human.other();
        self.transcript.turns += 1;
        let outputs = self.bot.act(&mut self.rng)?;
        let pending = pending_outputs(self.resources, &self.scenario, side, outputs);
        for step in pace_outgoing(&pending, self.clock.now_ms(), &mut self.rng) {
            if step.at_ms() >= self.limits.wall_ms {
                return Ok(true);
            }
            self.clock.advance_to(step.at_ms());
            let now = self.clock.now_ms();
            match step {
                Scheduled::Typing { .. } => self.log(typing_event(side, now)),
                Scheduled::Utterance { text, .. } => {
                    writeln!(self.out, "partner: {text}").map_err(io)?;
                    let e = utterance_event(self.resources, &self.scenario, side, &text, now);
                    self.log(e);
                }
                Scheduled::Select { item, .. } => loop {
                    let now = self.clock.now_ms();
                    match self.selections.handle(&self.scenario, side, item, now, self.limits.throttle_ms)? {
                        SelectionResult::Accepted => {
                            writeln!(self.out, "partner selected a friend").map_err(io)?;
                            self.log(select_event(&self.scenario, side, item, now));
                            if self.selections.is_success(&self.scenario) {
                                return Ok(true);
                            }
                            break;
                        }
                        SelectionResult::Throttled { retry_after_ms } => {
                            self.clock.advance_to(now + retry_after_ms);
                            if self.out_of_time() {
                                return Ok(true);
                            }
                        }
                    }
                },
            }
        }
        Ok(false)
    }
}

/// Plays one dialogue reading `input` and writing to `out`; returns the
/// transcript.
pub fn chat<R: BufRead, W: Write>(
    registry: &AgentRegistry,
    resources: &Arc<Resources>,
    options: &ChatOptions,
    input: R,
    out: W,
) -> Result<Transcript> {
    let scenario = scenario_at(&resources.schema, options.seed, options.scenario_index)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(options.scenario_index as u64 + 1);
    let human = if rng.gen_bool(0.5) { Side::A } else { Side::B };
    let setup = AgentSetup {
        resources: Arc::clone(resources),
        scenario: scenario.clone(),
        side: human.other(),
    };
    let bot = registry.create(&options.bot, &setup)?;
    let mut g = Game {
        transcript: Transcript::new(scenario.id.clone()),
        scenario,
        resources,
        human,
        bot,
        rng,
        clock: Clock::new(options.clock),
        limits: options.limits,
        selections: Selections::default(),
        out,
    };
    writeln!(
        g.out,
        "You and your partner each have a list of friends; exactly one is on both lists.\n\
         Chat to find it. `/select N` picks row N, `/quit` gives up. You have {} s.\n",
        g.limits.wall_ms / 1000
    )
    .map_err(io)?;
    write!(g.out, "{}", kb_table(&g.scenario, human)).map_err(io)?;
    g.out.flush().map_err(io)?;

    let mut ended = g.rng.gen_bool(0.5) && g.bot_turn()?;
    let mut quit = false;
    let mut lines = input.lines();
    while !ended && !g.out_of_time() {
        write!(g.out, "> ").map_err(io)?;
        g.out.flush().map_err(io)?;
        let Some(line) = lines.next() else {
            quit = true;
            break;
        };
        let line = line.map_err(io)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "/quit" {
            quit = true;
            break;
        }
        if g.clock.mode() == ClockMode::Simulated {
            let at = g.clock.now_ms() + typing_delay_ms(line) as u64;
            g.clock.advance_to(at);
        }
        if g.out_of_time() {
            break;
        }
        let now = g.clock.now_ms();
        if let Some(arg) = line.strip_prefix("/select") {
            let Ok(item) = arg.trim().parse::<usize>() else {
                writeln!(g.out, "usage: /select N").map_err(io)?;
                continue;
            };
            match g.selections.handle(&g.scenario, human, item, now, g.limits.throttle_ms) {
                Err(e) => {
                    writeln!(g.out, "{e}").map_err(io)?;
                    continue;
                }
                Ok(SelectionResult::Throttled { retry_after_ms }) => {
                    writeln!(g.out, "wait {:.1} s before selecting again", retry_after_ms as f64 / 1000.0).map_err(io)?;
                    continue;
                }
                Ok(SelectionResult::Accepted) => {
                    g.transcript.turns += 1;
                    g.log(select_event(&g.scenario, human, item, now));
                    if g.selections.is_success(&g.scenario) {
                        break;
                    }
                }
            }
        } else {
            g.transcript.turns += 1;
            g.log(typing_event(human, now));
            let e = utterance_event(resources, &g.scenario, human, line, now);
            g.log(e);
        }
        ended = g.bot_turn()?;
    }
    g.transcript.outcome = if g.selections.is_success(&g.scenario) {
        Outcome::Success
    } else if quit {
        g.transcript.cause = Some("quit".into());
        Outcome::Failure
    } else {
        Outcome::Timeout
    };
    let msg = match g.transcript.outcome {
        Outcome::Success => "You found your mutual friend!",
        Outcome::Timeout => "Time is up.",
        Outcome::Failure => "Dialogue ended without a match.",
    };
    writeln!(g.out, "\n{msg}").map_err(io)?;
    Ok(g.transcript)
}
