//! Scoring, session state machine, patient-behaviour simulator and document
//! store for a drop-the-ball attention therapy game.
//!
//! A session is a fixed run of timed trials. Each trial shows a target and a
//! non-target object; the player's selection (or lack of one) classifies the
//! trial, and the classified session is scored into a [`MetricsReport`].

pub mod engine;
pub mod export;
pub mod metrics;
pub mod model;
pub mod placement;
pub mod progression;
pub mod simulator;
pub mod storage;
pub mod tape;

pub use engine::{start_session, SessionEngine, SessionEvent};
pub use metrics::{compute_report, MetricsReport};
pub use progression::{decide_progression, ProgressionAction, ProgressionDecision};
pub use storage::{Store, StoreError, StoredReport};
pub use model::{
    LevelDefinition, PatientProfile, SessionRecord, TreatmentPlan, TrialOutcome, TrialRecord,
};
