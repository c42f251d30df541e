//! Level progression from recent performance.

use crate::model::ProgressionRule;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgressionAction {
    Advance,
    Hold,
    Regress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionDecision {
    pub action: ProgressionAction,
    pub previous_level: u32,
    pub new_level: u32,
    /// Mean PI over the sessions considered; absent with no history.
    pub mean_pi: Option<f64>,
    pub sessions_considered: usize,
    /// Held, but within the hold band just under the advance threshold.
    pub near_advance: bool,
}

/// Compares the mean PI of the last `rule.window` sessions (oldest first in
/// `history`) with the rule's thresholds. The new level is clamped to
/// `1..=max_level`; a clamped move is reported as a hold.
pub fn decide_progression(
    current_level: u32,
    max_level: u32,
    history: &[f64],
    rule: &ProgressionRule,
) -> ProgressionDecision {
    let window = (rule.window as usize).min(history.len());
    let recent = &history[history.len() - window..];
    let mean_pi = (!recent.is_empty()).then(|| recent.iter().sum::<f64>() / recent.len() as f64);
    let max_level = max_level.max(1);
    let current = current_level.clamp(1, max_level);

    let (action, new_level) = match mean_pi {
        Some(pi) if pi >= rule.advance_threshold && current < max_level => {
            (ProgressionAction::Advance, current + 1)
        }
        Some(pi) if pi < rule.regress_below && current > 1 => (ProgressionAction::Regress, current - 1),
        _ => (ProgressionAction::Hold, current),
    };
    let near_advance = action == ProgressionAction::Hold
        && mean_pi.is_some_and(|pi| pi < rule.advance_threshold && pi >= rule.advance_threshold - rule.hold_band);

    ProgressionDecision {
        action,
        previous_level: current_level,
        new_level,
        mean_pi,
        sessions_considered: window,
        near_advance,
    }
}
