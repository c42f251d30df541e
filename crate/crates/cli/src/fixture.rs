//! Placement fixture: the level plus, for each seed and trial, the layout the
//! shared placement algorithm produces. A client implementation must
//! reproduce every case exactly.

use dropball_core::placement::{place_objects, Layout};
use dropball_core::LevelDefinition;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Fixture {
    pub level: LevelDefinition,
    pub cases: Vec<Case>,
}

#[derive(Debug, Serialize)]
pub struct Case {
    pub seed: u64,
    pub trial_index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn build(level: &LevelDefinition, first_seed: u64, seeds: u64, trials: u32) -> Fixture {
    let cases = (first_seed..first_seed.saturating_add(seeds))
        .flat_map(|seed| (1..=trials).map(move |t| (seed, t)))
        .map(|(seed, trial_index)| match place_objects(level, seed, trial_index) {
            Ok(layout) => Case { seed, trial_index, layout: Some(layout), error: None },
            Err(e) => Case { seed, trial_index, layout: None, error: Some(e.to_string()) },
        })
        .collect();
    Fixture { level: level.clone(), cases }
}
