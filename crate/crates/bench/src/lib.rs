//! Inputs shared by the benchmark targets.

use dropball_core::engine::replay;
use dropball_core::model::{default_plan, SessionHeader};
use dropball_core::simulator::{run_experiment, Part};
use dropball_core::{LevelDefinition, SessionEvent, SessionRecord};

pub fn level() -> LevelDefinition {
    default_plan("bench").game.levels[0].clone()
}

pub fn header() -> SessionHeader {
    SessionHeader { session_id: "bench".into(), patient_id: "bench".into(), plan_id: "bench".into(), level_index: 1, ..Default::default() }
}

/// The last session of the best Part 2 phase, as a tape with its seed.
pub fn tape() -> (u64, Vec<SessionEvent>) {
    let exp = run_experiment(Part::Two, 20, &level(), 7, None).expect("simulation runs");
    let run = exp.phases.last().and_then(|p| p.sessions.last()).expect("at least one session");
    (run.layout_seed, run.events.clone())
}

pub fn record() -> SessionRecord {
    let (seed, events) = tape();
    replay(header(), &level(), seed, &events).expect("tape replays").0
}
