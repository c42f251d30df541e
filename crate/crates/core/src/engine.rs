//! Trial/session state machine for one game session.
//!
//! The engine runs on a virtual clock measured from the start of the first
//! trial. Internally every time is an integer number of milliseconds, so the
//! trial-window boundary is exact:
//!
//! * a selection at exactly `trial_start + θ` still counts,
//! * any event strictly after `trial_start + θ` first closes the expired
//!   window as an omission (the next trial starts when the window closed),
//! * an explicit `TrialTimeout` is accepted once `trial_start + θ` is reached,
//! * an event past the session cap (ST) ends the session at the cap.
//!
//! There is no gap between trials: the next trial starts when the previous
//! one ends.

use crate::metrics::{compute_report, MetricsReport};
use crate::model::{
    normalize_session, LevelDefinition, ModelError, PatientProfile, Point, SessionHeader,
    SessionRecord, TreatmentPlan, TrialOutcome, TrialRecord,
};
use crate::placement::{place_objects, Layout, PlacementError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    TargetHit {
        at_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<Point>,
    },
    NonTargetHit {
        at_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<Point>,
    },
    TrialTimeout { at_s: f64 },
    PlayerQuit { at_s: f64 },
}

impl SessionEvent {
    pub fn at_s(&self) -> f64 {
        match *self {
            SessionEvent::TargetHit { at_s, .. }
            | SessionEvent::NonTargetHit { at_s, .. }
            | SessionEvent::TrialTimeout { at_s }
            | SessionEvent::PlayerQuit { at_s } => at_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown level {0}")]
    UnknownLevel(u32),
    #[error("patient {patient_id} is assigned to plan {assigned}, not {requested}")]
    PlanMismatch { patient_id: String, assigned: String, requested: String },
    #[error("session has not started its first trial")]
    NotStarted,
    #[error("session has ended")]
    Ended,
    #[error("session has not ended")]
    NotEnded,
    #[error("event at {at_s}s precedes the session clock at {clock_s}s")]
    TimeRegression { at_s: f64, clock_s: f64 },
    #[error("timeout at {at_s}s arrives before the trial window closes at {due_s}s")]
    PrematureTimeout { at_s: f64, due_s: f64 },
    #[error("target selected at {at_s}s, the instant its trial opened")]
    ZeroResponse { at_s: f64 },
    #[error("invalid event time {0}")]
    InvalidTime(f64),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Converts event seconds to whole milliseconds.
pub fn to_ms(at_s: f64) -> Result<u64, EngineError> {
    if !at_s.is_finite() || !(0.0..=1e12).contains(&at_s) {
        return Err(EngineError::InvalidTime(at_s));
    }
    Ok((at_s * 1000.0).round() as u64)
}

fn to_s(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Briefing,
    InTrial { index: u32, trial_start_s: f64 },
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Briefing,
    InTrial { index: u32, start_ms: u64 },
    Ended,
}

/// What the session shows before and at the start of trial 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStart {
    pub briefing: Option<String>,
    pub layout: Layout,
}

/// Trials closed by one event, in order. Usually one; an overdue event can
/// also close expired windows before it, and a quit closes the in-flight
/// trial.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Applied {
    pub closed: Vec<TrialRecord>,
    /// The event arrived after the session cap and was not applied.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct SessionEngine {
    header: SessionHeader,
    level: LevelDefinition,
    layout_seed: u64,
    state: State,
    clock_ms: u64,
    theta_ms: u64,
    cap_ms: u64,
    trials: Vec<TrialRecord>,
}

impl SessionEngine {
    /// A fresh engine in the briefing phase.
    pub fn new(header: SessionHeader, level: LevelDefinition, layout_seed: u64) -> Self {
        let theta_ms = (level.trial_time_s * 1000.0).round() as u64;
        let cap_ms = (level.max_time_s * 1000.0).round() as u64;
        Self {
            header,
            level,
            layout_seed,
            state: State::Briefing,
            clock_ms: 0,
            theta_ms,
            cap_ms,
            trials: Vec::new(),
        }
    }

    /// Ends the briefing and starts trial 1 at virtual time 0.
    pub fn begin(&mut self) -> Result<SessionStart, EngineError> {
        if self.state != State::Briefing {
            return Err(EngineError::Ended);
        }
        let layout = place_objects(&self.level, self.layout_seed, 1)?;
        self.state = State::InTrial { index: 1, start_ms: 0 };
        Ok(SessionStart { briefing: self.level.effects.clone(), layout })
    }

    pub fn phase(&self) -> Phase {
        match self.state {
            State::Briefing => Phase::Briefing,
            State::InTrial { index, start_ms } => Phase::InTrial { index, trial_start_s: to_s(start_ms) },
            State::Ended => Phase::Ended,
        }
    }

    pub fn is_ended(&self) -> bool {
        self.state == State::Ended
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn header_mut(&mut self) -> &mut SessionHeader {
        &mut self.header
    }

    pub fn level(&self) -> &LevelDefinition {
        &self.level
    }

    pub fn layout_seed(&self) -> u64 {
        self.layout_seed
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    /// Last accepted event time.
    pub fn clock_s(&self) -> f64 {
        to_s(self.clock_ms)
    }

    /// When the current trial window closes, if a trial is running.
    pub fn timeout_due_s(&self) -> Option<f64> {
        match self.state {
            State::InTrial { start_ms, .. } => Some(to_s(start_ms + self.theta_ms)),
            _ => None,
        }
    }

    pub fn layout(&self, trial_index: u32) -> Result<Layout, EngineError> {
        Ok(place_objects(&self.level, self.layout_seed, trial_index)?)
    }

    pub fn apply(&mut self, event: SessionEvent) -> Result<Applied, EngineError> {
        let start_ms = match self.state {
            State::Briefing => return Err(EngineError::NotStarted),
            State::Ended => return Err(EngineError::Ended),
            State::InTrial { start_ms, .. } => start_ms,
        };
        let at = to_ms(event.at_s())?;
        if at < self.clock_ms {
            return Err(EngineError::TimeRegression { at_s: event.at_s(), clock_s: self.clock_s() });
        }
        if let SessionEvent::TrialTimeout { .. } = event {
            if at < start_ms + self.theta_ms {
                return Err(EngineError::PrematureTimeout {
                    at_s: event.at_s(),
                    due_s: to_s(start_ms + self.theta_ms),
                });
            }
        }
        if let SessionEvent::TargetHit { .. } = event {
            // A hit at the very instant the trial opens has no response time.
            if at == start_ms {
                return Err(EngineError::ZeroResponse { at_s: event.at_s() });
            }
        }

        let mut applied = Applied::default();
        if at > self.cap_ms {
            self.close_expired(self.cap_ms, &mut applied);
            if let State::InTrial { index, start_ms } = self.state {
                self.quit(index, start_ms, self.cap_ms, &mut applied);
            }
            self.clock_ms = self.cap_ms;
            applied.truncated = true;
            return Ok(applied);
        }

        match event {
            SessionEvent::TrialTimeout { .. } => {
                // Close every window that has fully elapsed by `at`.
                while let State::InTrial { index, start_ms } = self.state {
                    let due = start_ms + self.theta_ms;
                    if at < due {
                        break;
                    }
                    self.close(index, start_ms, due, TrialOutcome::Omission, None, &mut applied);
                }
            }
            SessionEvent::TargetHit { position, .. } | SessionEvent::NonTargetHit { position, .. } => {
                self.close_expired(at, &mut applied);
                if let State::InTrial { index, start_ms } = self.state {
                    let elapsed_s = to_s(at - start_ms);
                    let outcome = if matches!(event, SessionEvent::TargetHit { .. }) {
                        TrialOutcome::Correct { crt_s: elapsed_s }
                    } else {
                        TrialOutcome::Commission { elapsed_s }
                    };
                    self.close(index, start_ms, at, outcome, position, &mut applied);
                }
            }
            SessionEvent::PlayerQuit { .. } => {
                self.close_expired(at, &mut applied);
                if let State::InTrial { index, start_ms } = self.state {
                    self.quit(index, start_ms, at, &mut applied);
                }
            }
        }
        self.clock_ms = at;
        Ok(applied)
    }

    /// Ends the session as if the player quit at the current clock.
    pub fn force_quit(&mut self) -> Result<Applied, EngineError> {
        match self.state {
            State::Ended => Ok(Applied::default()),
            State::Briefing => {
                self.state = State::Ended;
                Ok(Applied::default())
            }
            State::InTrial { .. } => self.apply(SessionEvent::PlayerQuit { at_s: self.clock_s() }),
        }
    }

    pub fn record(&self) -> Result<SessionRecord, EngineError> {
        if self.state != State::Ended {
            return Err(EngineError::NotEnded);
        }
        Ok(normalize_session(self.header.clone(), self.trials.clone(), &self.level)?)
    }

    pub fn finalize(&self) -> Result<(SessionRecord, MetricsReport), EngineError> {
        let record = self.record()?;
        let report = compute_report(&record);
        Ok((record, report))
    }

    fn close_expired(&mut self, at: u64, applied: &mut Applied) {
        while let State::InTrial { index, start_ms } = self.state {
            let due = start_ms + self.theta_ms;
            if at <= due {
                break;
            }
            self.close(index, start_ms, due, TrialOutcome::Omission, None, applied);
        }
    }

    fn quit(&mut self, index: u32, start_ms: u64, at: u64, applied: &mut Applied) {
        let rec = TrialRecord {
            index,
            outcome: TrialOutcome::Uncompleted,
            started_at_s: to_s(start_ms),
            ended_at_s: to_s(at),
            position: None,
        };
        self.trials.push(rec.clone());
        applied.closed.push(rec);
        self.state = State::Ended;
    }

    fn close(
        &mut self,
        index: u32,
        start_ms: u64,
        end_ms: u64,
        outcome: TrialOutcome,
        position: Option<Point>,
        applied: &mut Applied,
    ) {
        let rec = TrialRecord {
            index,
            outcome,
            started_at_s: to_s(start_ms),
            ended_at_s: to_s(end_ms),
            position,
        };
        self.trials.push(rec.clone());
        applied.closed.push(rec);
        self.state = if index >= self.level.trials_per_session {
            State::Ended
        } else {
            State::InTrial { index: index + 1, start_ms: end_ms }
        };
    }
}

/// Opens a session for `patient` at `level_index` of `plan` and starts trial 1.
pub fn start_session(
    plan: &TreatmentPlan,
    patient: &PatientProfile,
    level_index: u32,
    session_id: impl Into<String>,
    layout_seed: u64,
) -> Result<(SessionEngine, SessionStart), EngineError> {
    if let Some(assigned) = &patient.plan_id {
        if assigned != &plan.plan_id {
            return Err(EngineError::PlanMismatch {
                patient_id: patient.patient_id.clone(),
                assigned: assigned.clone(),
                requested: plan.plan_id.clone(),
            });
        }
    }
    let level = plan.game.level(level_index).ok_or(EngineError::UnknownLevel(level_index))?;
    let header = SessionHeader {
        session_id: session_id.into(),
        patient_id: patient.patient_id.clone(),
        plan_id: plan.plan_id.clone(),
        level_index,
        started_at: None,
        ended_at: None,
    };
    let mut engine = SessionEngine::new(header, level.clone(), layout_seed);
    let start = engine.begin()?;
    Ok((engine, start))
}

/// Runs a whole tape through a fresh engine. Events after the session ends
/// are an error; a tape that stops early leaves the in-flight trial and the
/// rest as uncompleted.
pub fn replay(
    header: SessionHeader,
    level: &LevelDefinition,
    layout_seed: u64,
    events: &[SessionEvent],
) -> Result<(SessionRecord, MetricsReport), EngineError> {
    let mut engine = SessionEngine::new(header, level.clone(), layout_seed);
    engine.begin()?;
    for ev in events {
        engine.apply(*ev)?;
    }
    engine.force_quit()?;
    engine.finalize()
}
