//! Synthetic patient sessions and the two-part phase experiments.
//!
//! Every synthesized session is an event tape that goes through the real
//! [`SessionEngine`](crate::engine::SessionEngine) and scoring path; nothing
//! here computes a score directly.
//!
//! Correct response times come from a [`CrtSchedule`]. In the default
//! per-session mode each session's correct tries get faster along a linear
//! ramp from `hi_s` to `lo_s`, and the whole ramp is shifted down across the
//! phase by `drift_s`, so later sessions are faster than earlier ones. A
//! phase's `M` and `SD` are the averages of the per-session values.

use crate::engine::{replay, EngineError, SessionEvent};
use crate::metrics::MetricsReport;
use crate::model::{LevelDefinition, SessionHeader, TrialOutcomeKind};
use crate::placement::SplitMix64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fastest correct response the calibrator will schedule.
pub const MIN_CRT_S: f64 = 0.5;
/// Session-to-session improvement across a phase, when there is room for it.
pub const DEFAULT_DRIFT_S: f64 = 3.0;
/// Calibrated phase means must land this close to the target.
pub const MEAN_TOLERANCE_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("phase {label}: {got} outcomes for {planned} trials")]
    InfeasiblePhase { label: String, got: u32, planned: u32 },
    #[error("schedule outside (0, {theta_s}]: {reason}")]
    BadSchedule { theta_s: f64, reason: String },
    #[error("target mean {target_s}s is unreachable: {reason}")]
    Unreachable { target_s: f64, reason: String },
    #[error("behaviour model probabilities are invalid")]
    BadModel,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One block of simulated sessions sharing the same outcome counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub label: String,
    pub sessions: u32,
    pub c: u32,
    pub oe: u32,
    pub ce: u32,
    pub k: u32,
}

impl PhaseConfig {
    pub fn new(label: impl Into<String>, sessions: u32, c: u32, oe: u32, ce: u32, k: u32) -> Self {
        Self { label: label.into(), sessions, c, oe, ce, k }
    }

    pub fn trials(&self) -> u32 {
        self.c + self.oe + self.ce + self.k
    }

    pub fn check(&self, level: &LevelDefinition) -> Result<(), SimError> {
        if self.trials() != level.trials_per_session {
            return Err(SimError::InfeasiblePhase {
                label: self.label.clone(),
                got: self.trials(),
                planned: level.trials_per_session,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampMode {
    /// One ramp spread over every correct try of the phase, in order.
    RampAcrossPhase,
    /// A ramp within each session, shifted down across the phase by `drift_s`.
    RampPerSession,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrtSchedule {
    pub hi_s: f64,
    pub lo_s: f64,
    /// Total downward shift from the first to the last session
    /// (per-session mode only).
    #[serde(default)]
    pub drift_s: f64,
    pub mode: RampMode,
}

impl Default for CrtSchedule {
    fn default() -> Self {
        Self { hi_s: 50.0, lo_s: 0.8, drift_s: 0.0, mode: RampMode::RampAcrossPhase }
    }
}

fn round_ms(s: f64) -> u64 {
    (s * 1000.0).round() as u64
}

impl CrtSchedule {
    fn half_drift(&self) -> f64 {
        match self.mode {
            RampMode::RampPerSession => self.drift_s / 2.0,
            RampMode::RampAcrossPhase => 0.0,
        }
    }

    pub fn check(&self, theta_s: f64) -> Result<(), SimError> {
        let bad = |reason: &str| Err(SimError::BadSchedule { theta_s, reason: reason.into() });
        if !(self.lo_s > 0.0 && self.lo_s <= self.hi_s && self.hi_s <= theta_s) {
            return bad("need 0 < lo <= hi <= theta");
        }
        if self.drift_s < 0.0 {
            return bad("negative drift");
        }
        if self.lo_s - self.half_drift() < 0.001 || self.hi_s + self.half_drift() > theta_s {
            return bad("drift pushes responses out of the trial window");
        }
        Ok(())
    }

    /// Response time, in milliseconds, of correct try `j` (0-based) in
    /// session `session` of `phase`.
    pub fn crt_ms(&self, phase: &PhaseConfig, session: u32, j: u32) -> u64 {
        let lerp = |pos: u32, n: u32| {
            if n <= 1 {
                (self.hi_s + self.lo_s) / 2.0
            } else {
                self.hi_s - (self.hi_s - self.lo_s) * f64::from(pos) / f64::from(n - 1)
            }
        };
        let s = match self.mode {
            RampMode::RampPerSession => {
                let offset = if phase.sessions <= 1 {
                    0.0
                } else {
                    self.drift_s * (0.5 - f64::from(session) / f64::from(phase.sessions - 1))
                };
                lerp(j, phase.c) + offset
            }
            RampMode::RampAcrossPhase => lerp(session * phase.c + j, phase.sessions * phase.c),
        };
        round_ms(s).max(1)
    }

    /// Phase `M` and `SD` this schedule produces: averages over sessions of
    /// each session's mean and sample SD. `None` without correct tries.
    pub fn realized_moments(&self, phase: &PhaseConfig) -> Option<(f64, f64)> {
        if phase.c == 0 || phase.sessions == 0 {
            return None;
        }
        let (mut m_sum, mut sd_sum) = (0.0, 0.0);
        for s in 0..phase.sessions {
            let crts: Vec<f64> = (0..phase.c).map(|j| self.crt_ms(phase, s, j) as f64 / 1000.0).collect();
            m_sum += crate::metrics::mean_crt(&crts).ok()?;
            sd_sum += crate::metrics::sd_crt(&crts).ok()?;
        }
        let n = f64::from(phase.sessions);
        Some((m_sum / n, sd_sum / n))
    }
}

/// What a calibrated schedule should reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub mean_s: f64,
    /// Per-session SD to match; when absent the widest ramp that fits is used.
    pub sd_s: Option<f64>,
}

/// Fits a per-session ramp so that the phase mean `M` lands on the target
/// (and, when given, the per-session SD too).
pub fn calibrate_schedule(
    target: CalibrationTarget,
    phase: &PhaseConfig,
    theta_s: f64,
) -> Result<CrtSchedule, SimError> {
    let m = target.mean_s;
    let unreachable = |reason: &str| SimError::Unreachable { target_s: m, reason: reason.into() };
    if !(m > MIN_CRT_S && m < theta_s) {
        return Err(unreachable("mean must lie strictly inside the trial window"));
    }
    // Sample SD of c evenly spaced values with spacing d is d * sqrt(c(c+1)/12).
    let c = f64::from(phase.c);
    let half_width = match target.sd_s {
        Some(sd) if phase.c >= 2 => sd * (c - 1.0) / (2.0 * (c * (c + 1.0) / 12.0).sqrt()),
        Some(_) => 0.0,
        None => 0.5 * (m - MIN_CRT_S).min(theta_s - m),
    };
    let (mut hi, mut lo) = (m + half_width, m - half_width);
    let drift = DEFAULT_DRIFT_S.min(2.0 * (lo - MIN_CRT_S)).min(2.0 * (theta_s - hi));
    if drift <= 0.0 {
        return Err(unreachable("no room for sessions to improve inside the trial window"));
    }
    let mut schedule = CrtSchedule { hi_s: hi, lo_s: lo, drift_s: drift, mode: RampMode::RampPerSession };

    // Millisecond rounding moves the realized mean slightly; re-centre on it.
    for _ in 0..8 {
        let Some((realized, _)) = schedule.realized_moments(phase) else { break };
        let err = m - realized;
        if err.abs() < 1e-4 {
            break;
        }
        hi += err;
        lo += err;
        schedule.hi_s = hi;
        schedule.lo_s = lo;
    }
    schedule.check(theta_s).map_err(|_| unreachable("ramp does not fit the trial window"))?;
    if let Some((realized, _)) = schedule.realized_moments(phase) {
        if (realized - m).abs() > MEAN_TOLERANCE_S {
            return Err(unreachable("realized mean drifted off target"));
        }
    }
    Ok(schedule)
}

/// Seed for session `session` of a phase whose runs are seeded with `seed`.
pub fn session_seed(seed: u64, session: u32) -> u64 {
    let mut mix = SplitMix64::new(seed ^ (u64::from(session) << 32));
    mix.next_u64()
}

/// Interleaves the phase's outcomes round-robin over the attempted trials;
/// uncompleted trials always form the tail.
pub fn outcome_order(phase: &PhaseConfig) -> Vec<TrialOutcomeKind> {
    let mut left = [
        (TrialOutcomeKind::Correct, phase.c),
        (TrialOutcomeKind::Omission, phase.oe),
        (TrialOutcomeKind::Commission, phase.ce),
    ];
    let mut order = Vec::with_capacity(phase.trials() as usize);
    while left.iter().any(|(_, n)| *n > 0) {
        for (kind, n) in left.iter_mut() {
            if *n > 0 {
                order.push(*kind);
                *n -= 1;
            }
        }
    }
    order.extend(std::iter::repeat_n(TrialOutcomeKind::Uncompleted, phase.k as usize));
    order
}

/// A synthesized session tape plus the layout seed it was drawn against.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub session: u32,
    pub layout_seed: u64,
    pub events: Vec<SessionEvent>,
}

pub fn synth_session(
    phase: &PhaseConfig,
    schedule: &CrtSchedule,
    level: &LevelDefinition,
    session: u32,
    seed: u64,
) -> Result<SynthSession, SimError> {
    phase.check(level)?;
    schedule.check(level.trial_time_s)?;
    let theta_ms = round_ms(level.trial_time_s);
    let layout_seed = session_seed(seed, session);
    let mut rng = ChaCha8Rng::seed_from_u64(layout_seed);
    let mut clock_ms = 0u64;
    let mut correct = 0u32;
    let mut events = Vec::with_capacity(phase.trials() as usize);
    let at = |ms: u64| ms as f64 / 1000.0;

    for (n, kind) in outcome_order(phase).into_iter().enumerate() {
        let trial = n as u32 + 1;
        match kind {
            TrialOutcomeKind::Correct => {
                let layout = crate::placement::place_objects(level, layout_seed, trial)
                    .map_err(EngineError::from)?;
                clock_ms += schedule.crt_ms(phase, session, correct).min(theta_ms);
                correct += 1;
                let position = layout.target().map(|o| o.position);
                events.push(SessionEvent::TargetHit { at_s: at(clock_ms), position });
            }
            TrialOutcomeKind::Commission => {
                let layout = crate::placement::place_objects(level, layout_seed, trial)
                    .map_err(EngineError::from)?;
                clock_ms += rng.random_range(1..=theta_ms);
                let position = layout.first_non_target().map(|o| o.position);
                events.push(SessionEvent::NonTargetHit { at_s: at(clock_ms), position });
            }
            TrialOutcomeKind::Omission => {
                clock_ms += theta_ms;
                events.push(SessionEvent::TrialTimeout { at_s: at(clock_ms) });
            }
            TrialOutcomeKind::Uncompleted => {
                events.push(SessionEvent::PlayerQuit { at_s: at(clock_ms) });
                break;
            }
        }
    }
    Ok(SynthSession { session, layout_seed, events })
}

/// Stochastic generalisation of a phase: each trial independently ends in a
/// quit, a correct hit, a commission or (for the remaining probability) an
/// omission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorModel {
    pub p_correct: f64,
    pub p_commission: f64,
    pub p_omission: f64,
    pub quit_hazard: f64,
    /// Correct response times are drawn uniformly between `lo_s` and `hi_s`.
    pub crt: CrtSchedule,
}

impl BehaviorModel {
    pub fn check(&self, theta_s: f64) -> Result<(), SimError> {
        let ps = [self.p_correct, self.p_commission, self.p_omission, self.quit_hazard];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || ps.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(SimError::BadModel);
        }
        self.crt.check(theta_s)
    }

    pub fn synth(&self, level: &LevelDefinition, seed: u64) -> Result<Vec<SessionEvent>, SimError> {
        self.check(level.trial_time_s)?;
        let theta_ms = round_ms(level.trial_time_s);
        let (lo, hi) = (round_ms(self.crt.lo_s).max(1), round_ms(self.crt.hi_s).min(theta_ms));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut clock = 0u64;
        let mut events = Vec::new();
        let at = |ms: u64| ms as f64 / 1000.0;
        for _ in 0..level.trials_per_session {
            let u: f64 = rng.random();
            if u < self.quit_hazard {
                events.push(SessionEvent::PlayerQuit { at_s: at(clock) });
                break;
            } else if u < self.quit_hazard + self.p_correct {
                clock += rng.random_range(lo..=hi);
                events.push(SessionEvent::TargetHit { at_s: at(clock), position: None });
            } else if u < self.quit_hazard + self.p_correct + self.p_commission {
                clock += rng.random_range(1..=theta_ms);
                events.push(SessionEvent::NonTargetHit { at_s: at(clock), position: None });
            } else {
                clock += theta_ms;
                events.push(SessionEvent::TrialTimeout { at_s: at(clock) });
            }
        }
        Ok(events)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRun {
    pub session: u32,
    pub layout_seed: u64,
    pub events: Vec<SessionEvent>,
    pub report: MetricsReport,
}

/// Averages over a phase's sessions; `None` when nothing was averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub label: String,
    pub sessions: u32,
    pub c: u32,
    pub oe: u32,
    pub ce: u32,
    pub k: u32,
    pub iaf: Option<f64>,
    pub imf: Option<f64>,
    pub ef: Option<f64>,
    pub gf: Option<f64>,
    pub m_s: Option<f64>,
    pub sd_s: Option<f64>,
    pub pi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRun {
    pub config: PhaseConfig,
    pub schedule: CrtSchedule,
    pub sessions: Vec<SessionRun>,
    pub summary: PhaseSummary,
}

fn average(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0u32), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / f64::from(n))
}

pub fn session_id(label: &str, session: u32) -> String {
    format!("{label}-s{:02}", session + 1)
}

pub fn run_phase(
    phase: &PhaseConfig,
    schedule: &CrtSchedule,
    level: &LevelDefinition,
    seed: u64,
) -> Result<PhaseRun, SimError> {
    phase.check(level)?;
    let mut sessions = Vec::with_capacity(phase.sessions as usize);
    for s in 0..phase.sessions {
        let synth = synth_session(phase, schedule, level, s, seed)?;
        let header = SessionHeader {
            session_id: session_id(&phase.label, s),
            patient_id: "simulated".into(),
            plan_id: "simulated".into(),
            level_index: level.index,
            ..Default::default()
        };
        let (_, report) = replay(header, level, synth.layout_seed, &synth.events)?;
        sessions.push(SessionRun { session: s, layout_seed: synth.layout_seed, events: synth.events, report });
    }
    let reports = || sessions.iter().map(|r| &r.report);
    let summary = PhaseSummary {
        label: phase.label.clone(),
        sessions: phase.sessions,
        c: phase.c,
        oe: phase.oe,
        ce: phase.ce,
        k: phase.k,
        iaf: average(reports().map(|r| r.iaf)),
        imf: average(reports().map(|r| r.imf)),
        ef: average(reports().map(|r| r.ef)),
        gf: average(reports().map(|r| r.gf)),
        m_s: average(reports().filter_map(|r| r.m_s)),
        sd_s: average(reports().filter_map(|r| r.sd_s)),
        pi: average(reports().map(|r| r.pi)),
    };
    Ok(PhaseRun { config: phase.clone(), schedule: *schedule, sessions, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    /// Errors versus correct tries, always fully engaged.
    One,
    /// Engagement versus correct tries, never in error.
    Two,
}

impl Part {
    pub fn number(self) -> u8 {
        match self {
            Part::One => 1,
            Part::Two => 2,
        }
    }

    /// Phase configurations with the per-phase response-time targets the
    /// schedules are calibrated to.
    pub fn phases(self, sessions: u32) -> Vec<(PhaseConfig, CalibrationTarget)> {
        let rows: &[(u32, u32, u32, u32, f64, f64)] = match self {
            Part::One => &[
                (3, 3, 4, 0, 25.13, 14.46),
                (5, 3, 2, 0, 23.71, 14.17),
                (8, 1, 1, 0, 21.81, 13.58),
            ],
            Part::Two => &[
                (3, 0, 0, 7, 25.13, 14.46),
                (5, 0, 0, 5, 23.93, 14.13),
                (7, 0, 0, 3, 22.94, 13.80),
                (10, 0, 0, 0, 21.62, 13.18),
            ],
        };
        rows.iter()
            .enumerate()
            .map(|(n, &(c, oe, ce, k, mean_s, sd_s))| {
                (
                    PhaseConfig::new(format!("phase{}", n + 1), sessions, c, oe, ce, k),
                    CalibrationTarget { mean_s, sd_s: Some(sd_s) },
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub part: Part,
    pub phases: Vec<PhaseRun>,
}

/// One point of a PI-versus-session curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiPoint {
    pub session: u32,
    pub phase: String,
    pub pi: f64,
}

impl Experiment {
    pub fn pi_series(&self) -> Vec<PiPoint> {
        self.phases
            .iter()
            .flat_map(|p| {
                p.sessions.iter().map(move |s| PiPoint {
                    session: s.session + 1,
                    phase: p.config.label.clone(),
                    pi: s.report.pi,
                })
            })
            .collect()
    }
}

/// Runs every phase of `part`. Each phase gets its own seed stream and, unless
/// `schedule` overrides it, a schedule calibrated to that phase's targets.
/// Phases run on separate threads; results keep phase order.
pub fn run_experiment(
    part: Part,
    sessions: u32,
    level: &LevelDefinition,
    seed: u64,
    schedule: Option<CrtSchedule>,
) -> Result<Experiment, SimError> {
    let plans = part
        .phases(sessions)
        .into_iter()
        .enumerate()
        .map(|(n, (config, target))| {
            let schedule = match schedule {
                Some(s) => s,
                None => calibrate_schedule(target, &config, level.trial_time_s)?,
            };
            let phase_seed = SplitMix64::new(seed ^ ((n as u64 + 1) << 48)).next_u64();
            Ok((config, schedule, phase_seed))
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let phases = std::thread::scope(|scope| {
        let handles: Vec<_> = plans
            .iter()
            .map(|(config, schedule, phase_seed)| {
                scope.spawn(move || run_phase(config, schedule, level, *phase_seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("phase worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(Experiment { part, phases })
}
