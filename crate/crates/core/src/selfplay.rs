//! Batch bot-vs-bot dialogues over a list of scenarios.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{AgentRegistry, AgentSetup, Resources};
use crate::error::Result;
use crate::scenario::Scenario;
use crate::session::{run_dialogue, Clock, ClockMode, Limits};
use crate::transcript::{Side, Transcript};

/// Keeps dialogue streams apart from the scenario streams of the same seed.
const DIALOGUE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// RNG for dialogue `index` of a run seeded with `seed`: one ChaCha stream
/// per dialogue so results do not depend on scheduling.
pub fn dialogue_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DIALOGUE_SALT);
    rng.set_stream(index as u64);
    rng
}

fn play_one(
    registry: &AgentRegistry,
    names: [&str; 2],
    scenario: &Scenario,
    resources: &Arc<Resources>,
    limits: &Limits,
    clock: ClockMode,
    seed: u64,
    index: usize,
) -> Result<Transcript> {
    let setup = |side| AgentSetup {
        resources: resources.clone(),
        scenario: scenario.clone(),
        side,
    };
    let mut a = registry.create(names[0], &setup(Side::A))?;
    let mut b = registry.create(names[1], &setup(Side::B))?;
    let mut rng = dialogue_rng(seed, index);
    let mut clock = Clock::new(clock);
    Ok(run_dialogue(
        [a.as_mut(), b.as_mut()],
        scenario,
        resources,
        limits,
        &mut clock,
        &mut rng,
    ))
}

/// Plays `names[0]` (side A) against `names[1]` (side B) on every scenario.
/// Output order follows `scenarios` and is independent of `jobs`.
#[allow(clippy::too_many_arguments)]
pub fn self_play(
    registry: &AgentRegistry,
    names: [&str; 2],
    scenarios: &[Scenario],
    resources: &Arc<Resources>,
    limits: &Limits,
    clock: ClockMode,
    seed: u64,
    jobs: usize,
) -> Result<Vec<Transcript>> {
    let jobs = jobs.max(1).min(scenarios.len().max(1));
    if jobs == 1 {
        return scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| play_one(registry, names, s, resources, limits, clock, seed, i))
            .collect();
    }
    let chunk = scenarios.len().div_ceil(jobs);
    let results: Vec<Result<Vec<Transcript>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, s)| {
                            play_one(registry, names, s, resources, limits, clock, seed, c * chunk + j)
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("self-play worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(scenarios.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
