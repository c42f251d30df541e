//! Domain profiles (patient, doctor, game, level, object, plan) and the
//! per-session trial records every score is computed from.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Version stamped into every persisted document.
pub const SCHEMA_VERSION: u32 = 1;

/// Inclusive range of doctor experience tiers.
pub const EXPERIENCE_MIN: u8 = 1;
pub const EXPERIENCE_MAX: u8 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: String,
    /// Plan the patient is assigned to. Unassigned patients are bound to the
    /// first plan they start a session under.
    #[serde(default)]
    pub plan_id: Option<String>,
    pub current_level: u32,
    #[serde(default)]
    pub latest_pi: Option<f64>,
    /// Stored verbatim; nothing interprets these yet.
    #[serde(default)]
    pub preferences: Vec<String>,
}

impl PatientProfile {
    pub fn new(patient_id: impl Into<String>) -> Self {
        Self {
            patient_id: patient_id.into(),
            plan_id: None,
            current_level: 1,
            latest_pi: None,
            preferences: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Involvement {
    ReportsOnly,
    CanConfigure,
    CanIntervene,
}

impl Involvement {
    pub fn can_configure(self) -> bool {
        !matches!(self, Involvement::ReportsOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoctorProfile {
    pub doctor_id: String,
    pub experience: u8,
    pub involvement: Involvement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameType {
    DropTheBall,
    DragAndDrop,
    MultipleChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDefinition {
    pub game_type: GameType,
    pub levels: Vec<LevelDefinition>,
}

impl GameDefinition {
    /// Level by its 1-based index.
    pub fn level(&self, index: u32) -> Option<&LevelDefinition> {
        let pos = usize::try_from(index).ok()?.checked_sub(1)?;
        self.levels.get(pos)
    }

    pub fn max_level(&self) -> u32 {
        self.levels.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDefinition {
    /// 1-based position of this level within its game.
    pub index: u32,
    pub objects: Vec<ObjectSpec>,
    /// Session cap (ST).
    pub max_time_s: f64,
    /// Window for one try (θ).
    pub trial_time_s: f64,
    pub trials_per_session: u32,
    /// Minimum centre-to-centre distance between placed objects.
    #[serde(default)]
    pub min_separation: f64,
    /// Guidance cue shown during the briefing. Carried as data only.
    #[serde(default)]
    pub effects: Option<String>,
}

impl LevelDefinition {
    pub fn target(&self) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.is_target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Sphere,
    Cube,
    CustomTag(String),
}

/// Rendered radius is `base_radius + distance_scale * d`, where `d` is the
/// object's distance from the centre of the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRule {
    pub base_radius: f64,
    pub distance_scale: f64,
}

impl SizeRule {
    pub fn radius_at(&self, distance: f64) -> f64 {
        self.base_radius + self.distance_scale * distance
    }
}

/// Axis-aligned rectangle in integer field units, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl Rect {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn width(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i64 {
        self.y_max - self.y_min
    }

    pub fn has_positive_area(&self) -> bool {
        self.width() > 0 && self.height() > 0
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.x_min..=self.x_max).contains(&p.x) && (self.y_min..=self.y_max).contains(&p.y)
    }

    pub fn diagonal(&self) -> f64 {
        (self.width() as f64).hypot(self.height() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: Point) -> f64 {
        ((self.x - other.x) as f64).hypot((self.y - other.y) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub size_rule: SizeRule,
    pub placement_bounds: Rect,
    pub is_target: bool,
    #[serde(default)]
    pub visibility_order: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentPlan {
    pub plan_id: String,
    pub game: GameDefinition,
    /// Total allotted budget for the whole programme, in minutes.
    pub program_duration_min: f64,
    #[serde(default)]
    pub progression: ProgressionRule,
}

/// Thresholds the context agent uses to move a patient between levels.
///
/// The mean PI of the last `window` sessions decides: at or above
/// `advance_threshold` advances, below `regress_below` regresses, anything
/// in between holds. `hold_band` marks the top slice of the hold zone,
/// `[advance_threshold - hold_band, advance_threshold)`, as "near advance".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressionRule {
    pub window: u32,
    pub advance_threshold: f64,
    pub hold_band: f64,
    pub regress_below: f64,
}

impl Default for ProgressionRule {
    fn default() -> Self {
        Self {
            window: 3,
            advance_threshold: 0.70,
            hold_band: 0.10,
            regress_below: 0.30,
        }
    }
}

/// Classification of one try.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialOutcome {
    Correct { crt_s: f64 },
    Commission { elapsed_s: f64 },
    Omission,
    Uncompleted,
}

/// Outcome class without its timing payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcomeKind {
    Correct,
    Commission,
    Omission,
    Uncompleted,
}

impl TrialOutcome {
    pub fn kind(&self) -> TrialOutcomeKind {
        match self {
            TrialOutcome::Correct { .. } => TrialOutcomeKind::Correct,
            TrialOutcome::Commission { .. } => TrialOutcomeKind::Commission,
            TrialOutcome::Omission => TrialOutcomeKind::Omission,
            TrialOutcome::Uncompleted => TrialOutcomeKind::Uncompleted,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TrialOutcome::Correct { .. } => "correct",
            TrialOutcome::Commission { .. } => "commission",
            TrialOutcome::Omission => "omission",
            TrialOutcome::Uncompleted => "uncompleted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based trial number within the session.
    pub index: u32,
    pub outcome: TrialOutcome,
    pub started_at_s: f64,
    pub ended_at_s: f64,
    /// Selection coordinate, when the trial ended on a selection.
    #[serde(default)]
    pub position: Option<Point>,
}

impl TrialRecord {
    pub fn elapsed_s(&self) -> f64 {
        self.ended_at_s - self.started_at_s
    }
}

/// Identity of a session, independent of its trials.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub patient_id: String,
    pub plan_id: String,
    pub level_index: u32,
    /// Wall-clock bounds in unix milliseconds, stamped by the service.
    #[serde(default)]
    pub started_at: Option<u64>,
    #[serde(default)]
    pub ended_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub patient_id: String,
    pub plan_id: String,
    pub level_index: u32,
    pub theta_s: f64,
    pub trials: Vec<TrialRecord>,
    pub gt_s: f64,
    pub st_s: f64,
    #[serde(default)]
    pub started_at: Option<u64>,
    #[serde(default)]
    pub ended_at: Option<u64>,
}

impl SessionRecord {
    pub fn header(&self) -> SessionHeader {
        SessionHeader {
            session_id: self.session_id.clone(),
            patient_id: self.patient_id.clone(),
            plan_id: self.plan_id.clone(),
            level_index: self.level_index,
            started_at: self.started_at,
            ended_at: self.ended_at,
        }
    }

    /// Correct response times in trial order.
    pub fn crts(&self) -> Vec<f64> {
        self.trials
            .iter()
            .filter_map(|t| match t.outcome {
                TrialOutcome::Correct { crt_s } => Some(crt_s),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{got} trials recorded but the level allows {max}")]
    TooManyTrials { got: usize, max: u32 },
    #[error("trial indices must run 1, 2, 3, ...: expected {expected}, found {found}")]
    TrialIndex { expected: u32, found: u32 },
    #[error("trial {index}: correct response time {crt_s}s is outside (0, {theta_s}]")]
    CrtOutOfWindow { index: u32, crt_s: f64, theta_s: f64 },
    #[error("trial {index}: ends before it starts")]
    NegativeDuration { index: u32 },
}

/// One invariant violation, addressed by a dotted path into the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Violations(Vec<Violation>);

impl Violations {
    fn check(&mut self, ok: bool, path: impl Into<String>, message: &str) {
        if !ok {
            self.0.push(Violation { path: path.into(), message: message.to_string() });
        }
    }
}

fn fraction(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Every invariant violation in the plan tree. Empty means the plan is valid.
pub fn validate_plan(plan: &TreatmentPlan) -> Vec<Violation> {
    let mut v = Violations::default();
    v.check(!plan.plan_id.trim().is_empty(), "plan_id", "empty identifier");
    v.check(
        plan.program_duration_min > 0.0,
        "program_duration_min",
        "non-positive program duration",
    );

    let rule = &plan.progression;
    v.check(rule.window >= 1, "progression.window", "window must be at least 1");
    v.check(
        fraction(rule.regress_below) && fraction(rule.advance_threshold),
        "progression",
        "thresholds must lie in [0, 1]",
    );
    v.check(
        rule.regress_below < rule.advance_threshold,
        "progression",
        "regress_below must be below advance_threshold",
    );
    v.check(
        rule.hold_band >= 0.0 && rule.hold_band <= rule.advance_threshold - rule.regress_below,
        "progression.hold_band",
        "hold band must fit between the thresholds",
    );

    v.check(!plan.game.levels.is_empty(), "game.levels", "no levels");
    for (pos, level) in plan.game.levels.iter().enumerate() {
        let base = format!("game.levels[{pos}]");
        v.check(
            level.index as usize == pos + 1,
            format!("{base}.index"),
            "level indices must be contiguous from 1",
        );
        validate_level(level, &base, &mut v);
    }
    v.0
}

fn validate_level(level: &LevelDefinition, base: &str, v: &mut Violations) {
    v.check(level.trial_time_s > 0.0, format!("{base}.trial_time_s"), "non-positive trial time");
    v.check(level.max_time_s > 0.0, format!("{base}.max_time_s"), "non-positive session time");
    v.check(
        level.max_time_s >= level.trial_time_s,
        format!("{base}.max_time_s"),
        "session time shorter than one trial",
    );
    v.check(
        level.trials_per_session >= 1,
        format!("{base}.trials_per_session"),
        "no trials per session",
    );
    v.check(
        level.min_separation >= 0.0,
        format!("{base}.min_separation"),
        "negative separation",
    );
    v.check(!level.objects.is_empty(), format!("{base}.objects"), "no objects");
    let targets = level.objects.iter().filter(|o| o.is_target).count();
    v.check(targets <= 1, format!("{base}.objects"), "multiple targets");
    v.check(targets >= 1 || level.objects.is_empty(), format!("{base}.objects"), "no target");
    for (j, obj) in level.objects.iter().enumerate() {
        v.check(
            obj.placement_bounds.has_positive_area(),
            format!("{base}.objects[{j}].placement_bounds"),
            "placement bounds have no area",
        );
        v.check(
            obj.size_rule.base_radius > 0.0,
            format!("{base}.objects[{j}].size_rule.base_radius"),
            "non-positive radius",
        );
    }
}

pub fn validate_patient(patient: &PatientProfile, plan: Option<&TreatmentPlan>) -> Vec<Violation> {
    let mut v = Violations::default();
    v.check(!patient.patient_id.trim().is_empty(), "patient_id", "empty identifier");
    v.check(patient.current_level >= 1, "current_level", "level must be at least 1");
    if let Some(plan) = plan {
        v.check(
            patient.current_level <= plan.game.max_level(),
            "current_level",
            "level beyond the assigned plan's game",
        );
    }
    if let Some(pi) = patient.latest_pi {
        v.check(fraction(pi), "latest_pi", "performance index outside [0, 1]");
    }
    v.0
}

pub fn validate_doctor(doctor: &DoctorProfile) -> Vec<Violation> {
    let mut v = Violations::default();
    v.check(!doctor.doctor_id.trim().is_empty(), "doctor_id", "empty identifier");
    v.check(
        (EXPERIENCE_MIN..=EXPERIENCE_MAX).contains(&doctor.experience),
        "experience",
        "experience tier out of range",
    );
    v.0
}

/// Builds the canonical record for a session from its recorded trials.
///
/// Missing tail trials (after a quit) are filled in as `Uncompleted`, so the
/// record always holds exactly `trials_per_session` entries. `gt_s` is the sum
/// of per-trial elapsed times; `st_s` comes from the level.
pub fn normalize_session(
    header: SessionHeader,
    mut trials: Vec<TrialRecord>,
    level: &LevelDefinition,
) -> Result<SessionRecord, ModelError> {
    let planned = level.trials_per_session;
    if trials.len() > planned as usize {
        return Err(ModelError::TooManyTrials { got: trials.len(), max: planned });
    }
    let theta_s = level.trial_time_s;
    for (pos, trial) in trials.iter().enumerate() {
        let expected = pos as u32 + 1;
        if trial.index != expected {
            return Err(ModelError::TrialIndex { expected, found: trial.index });
        }
        if trial.ended_at_s < trial.started_at_s {
            return Err(ModelError::NegativeDuration { index: trial.index });
        }
        if let TrialOutcome::Correct { crt_s } = trial.outcome {
            if !(crt_s > 0.0 && crt_s <= theta_s) {
                return Err(ModelError::CrtOutOfWindow { index: trial.index, crt_s, theta_s });
            }
        }
    }

    let tail_at = trials.last().map_or(0.0, |t| t.ended_at_s);
    for index in trials.len() as u32 + 1..=planned {
        trials.push(TrialRecord {
            index,
            outcome: TrialOutcome::Uncompleted,
            started_at_s: tail_at,
            ended_at_s: tail_at,
            position: None,
        });
    }
    // Summed in whole milliseconds so a session that runs to its cap has
    // gt_s == st_s exactly.
    let gt_ms: f64 = trials.iter().map(|t| (t.elapsed_s() * 1000.0).round()).sum();
    let gt_s = gt_ms / 1000.0;

    Ok(SessionRecord {
        session_id: header.session_id,
        patient_id: header.patient_id,
        plan_id: header.plan_id,
        level_index: header.level_index,
        theta_s,
        trials,
        gt_s,
        st_s: level.max_time_s,
        started_at: header.started_at,
        ended_at: header.ended_at,
    })
}

/// The single-level drop-the-ball plan: one target and one non-target ball,
/// ten one-minute trials.
pub fn default_plan(plan_id: impl Into<String>) -> TreatmentPlan {
    let ball = |is_target, bounds| ObjectSpec {
        shape: Shape::Sphere,
        size_rule: SizeRule { base_radius: 4.0, distance_scale: 0.05 },
        placement_bounds: bounds,
        is_target,
        visibility_order: 0,
    };
    let field = Rect::new(0, 0, 100, 100);
    TreatmentPlan {
        plan_id: plan_id.into(),
        game: GameDefinition {
            game_type: GameType::DropTheBall,
            levels: vec![LevelDefinition {
                index: 1,
                objects: vec![ball(true, field), ball(false, field)],
                max_time_s: 600.0,
                trial_time_s: 60.0,
                trials_per_session: 10,
                min_separation: 15.0,
                effects: Some("Select the red ball as quickly as you can.".to_string()),
            }],
        },
        program_duration_min: 20.0 * 10.0,
        progression: ProgressionRule::default(),
    }
}
