//! Shared service state: the store, the live session table and the session
//! lifecycle (start, apply events, server-side timeouts, finalize).

use crate::config::{ClockMode, ConfigError, ServiceConfig};
use crate::error::ApiError;
use dropball_core::engine::{Phase, SessionEvent};
use dropball_core::model::{default_plan, validate_plan, TrialOutcomeKind};
use dropball_core::placement::{Layout, SplitMix64};
use dropball_core::progression::decide_progression;
use dropball_core::{
    start_session, PatientProfile, SessionEngine, Store, StoreError, StoredReport, TreatmentPlan, TrialRecord,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;
use tokio::time::Instant;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("default plan {path}: {message}")]
    DefaultPlan { path: String, message: String },
}

/// Issued when a session starts; everything a client needs to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTicket {
    pub session_id: String,
    pub patient_id: String,
    pub plan_id: String,
    pub level_index: u32,
    pub theta_s: f64,
    pub trials_per_session: u32,
    pub max_time_s: f64,
    pub layout_seed: u64,
    /// Unix milliseconds.
    pub issued_at: u64,
    pub clock: ClockMode,
    pub skew_cap_s: f64,
    pub briefing: Option<String>,
    /// Layout of trial 1.
    pub layout: Layout,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub c: u32,
    pub oe: u32,
    pub ce: u32,
    pub k: u32,
}

impl Counts {
    fn of(trials: &[TrialRecord]) -> Self {
        let mut n = Counts::default();
        for t in trials {
            match t.outcome.kind() {
                TrialOutcomeKind::Correct => n.c += 1,
                TrialOutcomeKind::Omission => n.oe += 1,
                TrialOutcomeKind::Commission => n.ce += 1,
                TrialOutcomeKind::Uncompleted => n.k += 1,
            }
        }
        n
    }
}

/// Reply to one event: every trial closed since the previous reply,
/// including windows the server timed out on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAck {
    pub session_id: String,
    pub closed: Vec<TrialRecord>,
    pub truncated: bool,
    #[serde(flatten)]
    pub phase: Phase,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub finalized: bool,
    #[serde(flatten)]
    pub phase: Phase,
    pub counts: Counts,
    pub clock_s: f64,
    pub timeout_due_s: Option<f64>,
    pub trials: Vec<TrialRecord>,
}

struct LiveSession {
    engine: SessionEngine,
    plan: TreatmentPlan,
    opened: Instant,
    /// Trials closed but not yet reported in an ack.
    unacked: Vec<TrialRecord>,
    finalized: Option<StoredReport>,
}

type SessionHandle = Arc<tokio::sync::Mutex<LiveSession>>;

#[derive(Default)]
struct SessionTable {
    live: HashMap<String, SessionHandle>,
    /// Patient id to the id of their open session.
    active: HashMap<String, String>,
}

struct Inner {
    config: ServiceConfig,
    store: Store,
    default_plan: TreatmentPlan,
    sessions: Mutex<SessionTable>,
    next_seq: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl AppState {
    /// Opens the store and loads the default plan, storing it if no plan with
    /// its id exists yet.
    pub fn new(config: ServiceConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let store = Store::open(&config.store_root)?;
        let default_plan = match &config.default_plan {
            None => default_plan("default"),
            Some(path) => {
                let fail = |message: String| StartupError::DefaultPlan { path: path.display().to_string(), message };
                let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
                let plan: TreatmentPlan =
                    dropball_core::storage::from_document(&text, path).map_err(|e| fail(e.to_string()))?;
                let violations = validate_plan(&plan);
                if !violations.is_empty() {
                    let list = violations.iter().map(ToString::to_string).collect::<Vec<_>>();
                    return Err(fail(list.join("; ")));
                }
                plan
            }
        };
        if let Err(StoreError::NotFound { .. }) = store.get_plan(&default_plan.plan_id) {
            store.put_plan(&default_plan)?;
        }
        let next_seq = store.index(dropball_core::storage::Collection::Sessions)?.len() as u64 + 1;
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                store,
                default_plan,
                sessions: Mutex::new(SessionTable::default()),
                next_seq: AtomicU64::new(next_seq),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub fn default_plan(&self) -> &TreatmentPlan {
        &self.inner.default_plan
    }

    fn table(&self) -> std::sync::MutexGuard<'_, SessionTable> {
        self.inner.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn handle(&self, session_id: &str) -> Result<SessionHandle, ApiError> {
        if let Some(h) = self.table().live.get(session_id) {
            return Ok(h.clone());
        }
        match self.store().get_session(session_id) {
            Ok(_) => Err(ApiError::conflict(format!("session {session_id} has been finalized"))),
            Err(StoreError::NotFound { .. } | StoreError::BadId(_)) => {
                Err(ApiError::not_found(format!("unknown session {session_id}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn next_session_id(&self) -> (String, u64) {
        loop {
            let seq = self.inner.next_seq.fetch_add(1, Ordering::Relaxed);
            let id = format!("s{seq:08}");
            let taken = self.table().live.contains_key(&id)
                || !matches!(self.store().get_session(&id), Err(StoreError::NotFound { .. }));
            if !taken {
                return (id, seq);
            }
        }
    }

    /// Opens a session for the patient at their current level. The plan
    /// defaults to the patient's assigned plan, then to the default plan. An
    /// unassigned patient is bound to the plan they start under.
    pub async fn start(&self, patient_id: &str, plan_id: Option<&str>) -> Result<SessionTicket, ApiError> {
        let mut patient = self.store().get_patient(patient_id)?;
        let plan_id = plan_id
            .map(str::to_string)
            .or_else(|| patient.plan_id.clone())
            .unwrap_or_else(|| self.default_plan().plan_id.clone());
        let plan = self.store().get_plan(&plan_id)?;
        let level_index = patient.current_level.clamp(1, plan.game.max_level().max(1));
        let (session_id, seq) = self.next_session_id();
        let layout_seed = SplitMix64::new(self.config().layout_seed_base.wrapping_add(seq)).next_u64();

        let (mut engine, start) = start_session(&plan, &patient, level_index, session_id.clone(), layout_seed)?;
        let issued_at = unix_ms();
        engine.header_mut().started_at = Some(issued_at);
        let level = engine.level().clone();

        let handle = {
            let mut table = self.table();
            if let Some(open) = table.active.get(patient_id) {
                return Err(ApiError::conflict(format!("patient {patient_id} already has open session {open}")));
            }
            let handle = Arc::new(tokio::sync::Mutex::new(LiveSession {
                engine,
                plan: plan.clone(),
                opened: Instant::now(),
                unacked: Vec::new(),
                finalized: None,
            }));
            table.active.insert(patient_id.to_string(), session_id.clone());
            table.live.insert(session_id.clone(), handle.clone());
            handle
        };
        if patient.plan_id.is_none() {
            patient.plan_id = Some(plan.plan_id.clone());
            if let Err(e) = self.store().put_patient(&patient) {
                self.release(patient_id, &session_id);
                return Err(e.into());
            }
        }
        if self.config().clock == ClockMode::Wall {
            self.spawn_timer(Arc::downgrade(&handle));
        }
        tracing::info!(%session_id, %patient_id, plan_id = %plan.plan_id, level_index, "session started");

        Ok(SessionTicket {
            session_id,
            patient_id: patient_id.to_string(),
            plan_id: plan.plan_id,
            level_index,
            theta_s: level.trial_time_s,
            trials_per_session: level.trials_per_session,
            max_time_s: level.max_time_s,
            layout_seed,
            issued_at,
            clock: self.config().clock,
            skew_cap_s: self.config().skew_cap_s,
            briefing: start.briefing,
            layout: start.layout,
        })
    }

    fn release(&self, patient_id: &str, session_id: &str) {
        let mut table = self.table();
        table.live.remove(session_id);
        if table.active.get(patient_id).map(String::as_str) == Some(session_id) {
            table.active.remove(patient_id);
        }
    }

    /// Closes every window that has been overdue by more than the skew cap.
    fn catch_up(&self, live: &mut LiveSession) {
        let elapsed = live.opened.elapsed().as_secs_f64();
        let skew = self.config().skew_cap_s;
        while let Some(due) = live.engine.timeout_due_s() {
            if due + skew > elapsed {
                break;
            }
            match live.engine.apply(SessionEvent::TrialTimeout { at_s: due }) {
                Ok(applied) => live.unacked.extend(applied.closed),
                Err(e) => {
                    tracing::error!(error = %e, "server timeout rejected");
                    break;
                }
            }
        }
    }

    fn spawn_timer(&self, session: Weak<tokio::sync::Mutex<LiveSession>>) {
        let state = self.clone();
        tokio::spawn(async move {
            loop {
                let wake = {
                    let Some(handle) = session.upgrade() else { return };
                    let live = handle.lock().await;
                    match live.engine.timeout_due_s() {
                        Some(due) if live.finalized.is_none() => {
                            live.opened + Duration::from_secs_f64(due + state.config().skew_cap_s)
                        }
                        _ => return,
                    }
                };
                tokio::time::sleep_until(wake).await;
                let Some(handle) = session.upgrade() else { return };
                let mut live = handle.lock().await;
                if live.finalized.is_some() {
                    return;
                }
                state.catch_up(&mut live);
            }
        });
    }

    pub async fn post_event(&self, session_id: &str, event: SessionEvent) -> Result<EventAck, ApiError> {
        let handle = self.handle(session_id)?;
        let mut live = handle.lock().await;
        if live.finalized.is_some() {
            return Err(ApiError::conflict(format!("session {session_id} has been finalized")));
        }
        if self.config().clock == ClockMode::Wall {
            self.catch_up(&mut live);
            let elapsed = live.opened.elapsed().as_secs_f64();
            let skew = self.config().skew_cap_s;
            if (event.at_s() - elapsed).abs() > skew {
                return Err(ApiError::unprocessable(format!(
                    "event at {}s is more than {skew}s from the server clock at {elapsed:.3}s",
                    event.at_s()
                )));
            }
        }
        let applied = live.engine.apply(event)?;
        let mut closed = std::mem::take(&mut live.unacked);
        closed.extend(applied.closed);
        Ok(EventAck {
            session_id: session_id.to_string(),
            closed,
            truncated: applied.truncated,
            phase: live.engine.phase(),
            counts: Counts::of(live.engine.trials()),
        })
    }

    pub async fn status(&self, session_id: &str) -> Result<SessionStatus, ApiError> {
        let handle = match self.handle(session_id) {
            Ok(h) => h,
            Err(e) if e.status == axum::http::StatusCode::CONFLICT => {
                let record = self.store().get_session(session_id)?;
                return Ok(SessionStatus {
                    session_id: session_id.to_string(),
                    finalized: true,
                    phase: Phase::Ended,
                    counts: Counts::of(&record.trials),
                    clock_s: record.gt_s,
                    timeout_due_s: None,
                    trials: record.trials,
                });
            }
            Err(e) => return Err(e),
        };
        let mut live = handle.lock().await;
        if self.config().clock == ClockMode::Wall && live.finalized.is_none() {
            self.catch_up(&mut live);
        }
        Ok(SessionStatus {
            session_id: session_id.to_string(),
            finalized: live.finalized.is_some(),
            phase: live.engine.phase(),
            counts: Counts::of(live.engine.trials()),
            clock_s: live.engine.clock_s(),
            timeout_due_s: live.engine.timeout_due_s(),
            trials: live.engine.trials().to_vec(),
        })
    }

    pub async fn layout(&self, session_id: &str, trial: u32) -> Result<Layout, ApiError> {
        let handle = self.handle(session_id)?;
        let live = handle.lock().await;
        if trial == 0 || trial > live.engine.level().trials_per_session {
            return Err(ApiError::not_found(format!("session {session_id} has no trial {trial}")));
        }
        Ok(live.engine.layout(trial)?)
    }

    /// Ends the session if needed, persists it with its report, and moves
    /// the patient per the plan's progression rule. Repeat calls return the
    /// stored report.
    pub async fn finalize(&self, session_id: &str) -> Result<StoredReport, ApiError> {
        let handle = match self.handle(session_id) {
            Ok(h) => h,
            Err(e) if e.status == axum::http::StatusCode::CONFLICT => {
                return Ok(self.store().get_report(session_id)?);
            }
            Err(e) => return Err(e),
        };
        let mut live = handle.lock().await;
        if let Some(done) = &live.finalized {
            return Ok(done.clone());
        }
        if !live.engine.is_ended() {
            if self.config().clock == ClockMode::Wall {
                self.catch_up(&mut live);
                let at_s = live.opened.elapsed().as_secs_f64().max(live.engine.clock_s());
                if !live.engine.is_ended() {
                    live.engine.apply(SessionEvent::PlayerQuit { at_s })?;
                }
            } else {
                live.engine.force_quit()?;
            }
        }
        live.engine.header_mut().ended_at = Some(unix_ms());
        let (record, report) = live.engine.finalize()?;
        let patient_id = record.patient_id.clone();
        let stored = {
            let store = self.store();
            let mut patient: PatientProfile = store.get_patient(&patient_id)?;
            let mut history = store.pi_history(&patient_id, usize::MAX)?;
            history.push(report.pi);
            let decision = decide_progression(
                record.level_index,
                live.plan.game.max_level(),
                &history,
                &live.plan.progression,
            );
            let stored = StoredReport {
                session_id: record.session_id.clone(),
                patient_id: patient_id.clone(),
                plan_id: record.plan_id.clone(),
                level_index: record.level_index,
                report,
                progression: Some(decision.clone()),
            };
            store.put_session(&record)?;
            store.put_report(&stored)?;
            patient.latest_pi = Some(stored.report.pi);
            patient.current_level = decision.new_level;
            store.put_patient(&patient)?;
            stored
        };
        live.finalized = Some(stored.clone());
        drop(live);
        self.release(&patient_id, session_id);
        tracing::info!(%session_id, %patient_id, pi = stored.report.pi, "session finalized");
        Ok(stored)
    }
}
