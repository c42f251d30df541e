//! File-per-document store.
//!
//! Layout under the root directory:
//!
//! ```text
//! patients/<id>.json   doctors/<id>.json   plans/<id>.json
//! sessions/<id>.json   reports/<session id>.json
//! <collection>/index.json
//! ```
//!
//! Every document is pretty-printed JSON carrying a `schema_version`. Each
//! collection's `index.json` lists `{id, seq, patient_id}` entries in creation
//! order; `seq` is a per-collection counter. Sessions and reports are
//! append-only. Writes go through one lock per store and land via
//! write-to-temp-then-rename, so readers never see partial files.

use crate::metrics::MetricsReport;
use crate::model::{
    validate_doctor, validate_patient, validate_plan, DoctorProfile, PatientProfile, SessionRecord,
    TreatmentPlan, Violation, SCHEMA_VERSION,
};
use crate::progression::{decide_progression, ProgressionDecision};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{collection}/{id} not found")]
    NotFound { collection: &'static str, id: String },
    #[error("{collection}/{id} already exists and is immutable")]
    Immutable { collection: &'static str, id: String },
    #[error("{what} references unknown {collection}/{id}")]
    Referential { what: String, collection: &'static str, id: String },
    #[error("document failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{path}: schema_version {found}, expected {expected}")]
    SchemaVersion { path: PathBuf, found: u32, expected: u32 },
    #[error("invalid document id {0:?}")]
    BadId(String),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collection {
    Patients,
    Doctors,
    Plans,
    Sessions,
    Reports,
}

impl Collection {
    pub const ALL: [Collection; 5] =
        [Collection::Patients, Collection::Doctors, Collection::Plans, Collection::Sessions, Collection::Reports];

    pub fn dir(self) -> &'static str {
        match self {
            Collection::Patients => "patients",
            Collection::Doctors => "doctors",
            Collection::Plans => "plans",
            Collection::Sessions => "sessions",
            Collection::Reports => "reports",
        }
    }
}

/// A finalized session's report, keyed by session id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReport {
    pub session_id: String,
    pub patient_id: String,
    pub plan_id: String,
    pub level_index: u32,
    pub report: MetricsReport,
    #[serde(default)]
    pub progression: Option<ProgressionDecision>,
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    schema_version: u32,
    entries: Vec<IndexEntry>,
}

/// Serializes a document the way the store writes it.
pub fn to_document<T: Serialize>(body: &T) -> String {
    let env = Envelope { schema_version: SCHEMA_VERSION, body };
    let mut s = serde_json::to_string_pretty(&env).expect("documents serialize");
    s.push('\n');
    s
}

/// Parses a stored document, checking its schema version.
pub fn from_document<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, StoreError> {
    let env: Envelope<T> =
        serde_json::from_str(text).map_err(|source| StoreError::Json { path: path.to_owned(), source })?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(StoreError::SchemaVersion {
            path: path.to_owned(),
            found: env.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(env.body)
}

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && id != "index";
    if ok {
        Ok(())
    } else {
        Err(StoreError::BadId(id.to_string()))
    }
}

fn invalid(v: Vec<Violation>) -> Result<(), StoreError> {
    if v.is_empty() {
        Ok(())
    } else {
        Err(StoreError::Invalid(v))
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    writer: Mutex<()>,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for c in Collection::ALL {
            fs::create_dir_all(root.join(c.dir()))?;
        }
        Ok(Self { root, writer: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, c: Collection, id: &str) -> PathBuf {
        self.root.join(c.dir()).join(format!("{id}.json"))
    }

    fn index_path(&self, c: Collection) -> PathBuf {
        self.root.join(c.dir()).join("index.json")
    }

    fn read_index(&self, c: Collection) -> Result<Index, StoreError> {
        let path = self.index_path(c);
        match fs::read_to_string(&path) {
            Ok(text) => {
                let index: Index =
                    serde_json::from_str(&text).map_err(|source| StoreError::Json { path: path.clone(), source })?;
                if index.schema_version != SCHEMA_VERSION {
                    return Err(StoreError::SchemaVersion {
                        path,
                        found: index.schema_version,
                        expected: SCHEMA_VERSION,
                    });
                }
                Ok(index)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Ok(Index { schema_version: SCHEMA_VERSION, entries: Vec::new() })
            }
            Err(e) => Err(e.into()),
        }
    }

    fn write_atomic(path: &Path, contents: &str) -> Result<(), StoreError> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, contents)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn exists(&self, c: Collection, id: &str) -> bool {
        check_id(id).is_ok() && self.path(c, id).is_file()
    }

    fn get<T: DeserializeOwned>(&self, c: Collection, id: &str) -> Result<T, StoreError> {
        check_id(id)?;
        let path = self.path(c, id);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound { collection: c.dir(), id: id.to_string() },
            _ => e.into(),
        })?;
        from_document(&text, &path)
    }

    /// Writes a document; the caller holds the writer lock.
    fn write<T: Serialize>(
        &self,
        c: Collection,
        id: &str,
        body: &T,
        patient_id: Option<&str>,
        append_only: bool,
    ) -> Result<(), StoreError> {
        check_id(id)?;
        let path = self.path(c, id);
        let exists = path.is_file();
        if exists && append_only {
            return Err(StoreError::Immutable { collection: c.dir(), id: id.to_string() });
        }
        Self::write_atomic(&path, &to_document(body))?;
        if !exists {
            let mut index = self.read_index(c)?;
            let seq = index.entries.last().map_or(1, |e| e.seq + 1);
            index.entries.push(IndexEntry {
                id: id.to_string(),
                seq,
                patient_id: patient_id.map(str::to_string),
            });
            index.schema_version = SCHEMA_VERSION;
            let text = serde_json::to_string_pretty(&index).expect("index serializes") + "\n";
            Self::write_atomic(&self.index_path(c), &text)?;
        }
        Ok(())
    }

    fn list<T: DeserializeOwned>(&self, c: Collection, patient: Option<&str>) -> Result<Vec<T>, StoreError> {
        self.read_index(c)?
            .entries
            .into_iter()
            .filter(|e| patient.is_none_or(|p| e.patient_id.as_deref() == Some(p)))
            .map(|e| self.get(c, &e.id))
            .collect()
    }

    pub fn index(&self, c: Collection) -> Result<Vec<IndexEntry>, StoreError> {
        Ok(self.read_index(c)?.entries)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ()> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    // Patients

    pub fn put_patient(&self, patient: &PatientProfile) -> Result<(), StoreError> {
        let _guard = self.lock();
        let plan = match &patient.plan_id {
            Some(plan_id) => Some(self.get_plan(plan_id).map_err(|_| StoreError::Referential {
                what: format!("patient {}", patient.patient_id),
                collection: "plans",
                id: plan_id.clone(),
            })?),
            None => None,
        };
        invalid(validate_patient(patient, plan.as_ref()))?;
        self.write(Collection::Patients, &patient.patient_id, patient, None, false)
    }

    pub fn get_patient(&self, id: &str) -> Result<PatientProfile, StoreError> {
        self.get(Collection::Patients, id)
    }

    pub fn list_patients(&self) -> Result<Vec<PatientProfile>, StoreError> {
        self.list(Collection::Patients, None)
    }

    // Doctors

    pub fn put_doctor(&self, doctor: &DoctorProfile) -> Result<(), StoreError> {
        let _guard = self.lock();
        invalid(validate_doctor(doctor))?;
        self.write(Collection::Doctors, &doctor.doctor_id, doctor, None, false)
    }

    pub fn get_doctor(&self, id: &str) -> Result<DoctorProfile, StoreError> {
        self.get(Collection::Doctors, id)
    }

    pub fn list_doctors(&self) -> Result<Vec<DoctorProfile>, StoreError> {
        self.list(Collection::Doctors, None)
    }

    // Plans

    pub fn put_plan(&self, plan: &TreatmentPlan) -> Result<(), StoreError> {
        let _guard = self.lock();
        invalid(validate_plan(plan))?;
        self.write(Collection::Plans, &plan.plan_id, plan, None, false)
    }

    pub fn get_plan(&self, id: &str) -> Result<TreatmentPlan, StoreError> {
        self.get(Collection::Plans, id)
    }

    pub fn list_plans(&self) -> Result<Vec<TreatmentPlan>, StoreError> {
        self.list(Collection::Plans, None)
    }

    // Sessions

    /// Appends a finalized session. The patient and plan must exist and the
    /// record must hold exactly the level's planned number of trials.
    pub fn put_session(&self, session: &SessionRecord) -> Result<(), StoreError> {
        let _guard = self.lock();
        let what = || format!("session {}", session.session_id);
        if !self.exists(Collection::Patients, &session.patient_id) {
            return Err(StoreError::Referential {
                what: what(),
                collection: "patients",
                id: session.patient_id.clone(),
            });
        }
        let plan = self.get_plan(&session.plan_id).map_err(|_| StoreError::Referential {
            what: what(),
            collection: "plans",
            id: session.plan_id.clone(),
        })?;
        let mut v = Vec::new();
        match plan.game.level(session.level_index) {
            None => v.push(Violation { path: "level_index".into(), message: "unknown level".into() }),
            Some(level) if session.trials.len() != level.trials_per_session as usize => v.push(Violation {
                path: "trials".into(),
                message: "trial count differs from the level's trials per session".into(),
            }),
            Some(_) => {}
        }
        if session.gt_s > session.st_s {
            v.push(Violation { path: "gt_s".into(), message: "game time exceeds session cap".into() });
        }
        invalid(v)?;
        self.write(Collection::Sessions, &session.session_id, session, Some(&session.patient_id), true)
    }

    pub fn get_session(&self, id: &str) -> Result<SessionRecord, StoreError> {
        self.get(Collection::Sessions, id)
    }

    /// Sessions in creation order, optionally for one patient.
    pub fn list_sessions(&self, patient: Option<&str>) -> Result<Vec<SessionRecord>, StoreError> {
        self.list(Collection::Sessions, patient)
    }

    // Reports

    pub fn put_report(&self, report: &StoredReport) -> Result<(), StoreError> {
        let _guard = self.lock();
        if !self.exists(Collection::Sessions, &report.session_id) {
            return Err(StoreError::Referential {
                what: format!("report for {}", report.session_id),
                collection: "sessions",
                id: report.session_id.clone(),
            });
        }
        self.write(Collection::Reports, &report.session_id, report, Some(&report.patient_id), true)
    }

    pub fn get_report(&self, session_id: &str) -> Result<StoredReport, StoreError> {
        self.get(Collection::Reports, session_id)
    }

    pub fn list_reports(&self, patient: Option<&str>) -> Result<Vec<StoredReport>, StoreError> {
        self.list(Collection::Reports, patient)
    }

    /// PI of the patient's last `window` reported sessions, oldest first.
    pub fn pi_history(&self, patient_id: &str, window: usize) -> Result<Vec<f64>, StoreError> {
        self.get_patient(patient_id)?;
        let all: Vec<f64> = self.list_reports(Some(patient_id))?.iter().map(|r| r.report.pi).collect();
        Ok(all[all.len().saturating_sub(window)..].to_vec())
    }

    /// Level decision for the patient under `plan` from stored history.
    pub fn decide_progression(
        &self,
        patient: &PatientProfile,
        plan: &TreatmentPlan,
    ) -> Result<ProgressionDecision, StoreError> {
        let history = self.pi_history(&patient.patient_id, plan.progression.window as usize)?;
        Ok(decide_progression(patient.current_level, plan.game.max_level(), &history, &plan.progression))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{start_session, SessionEvent};
    use crate::model::{default_plan, Involvement};

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        (dir, store)
    }

    fn finished_session(plan: &TreatmentPlan, patient: &PatientProfile, id: &str, hits: usize) -> SessionRecord {
        let (mut engine, _) = start_session(plan, patient, 1, id, 1).unwrap();
        for n in 0..hits {
            engine.apply(SessionEvent::TargetHit { at_s: (n + 1) as f64 * 10.0, position: None }).unwrap();
        }
        engine.force_quit().unwrap();
        engine.record().unwrap()
    }

    #[test]
    fn patient_round_trip() {
        let (_d, s) = store();
        let mut p = PatientProfile::new("p1");
        p.preferences = vec!["football".into()];
        s.put_patient(&p).unwrap();
        assert_eq!(s.get_patient("p1").unwrap(), p);
        assert!(matches!(s.get_patient("nobody"), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn doctor_and_plan_round_trip() {
        let (_d, s) = store();
        let d = DoctorProfile { doctor_id: "d1".into(), experience: 2, involvement: Involvement::ReportsOnly };
        s.put_doctor(&d).unwrap();
        assert_eq!(s.get_doctor("d1").unwrap(), d);
        let plan = default_plan("plan-a");
        s.put_plan(&plan).unwrap();
        assert_eq!(s.get_plan("plan-a").unwrap(), plan);
        let mut bad = default_plan("plan-b");
        bad.game.levels[0].objects[1].is_target = true;
        assert!(matches!(s.put_plan(&bad), Err(StoreError::Invalid(_))));
        assert!(matches!(s.get_plan("plan-b"), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn session_requires_known_patient_and_plan() {
        let (_d, s) = store();
        let plan = default_plan("plan");
        let patient = PatientProfile::new("p1");
        let rec = finished_session(&plan, &patient, "s1", 3);
        assert!(matches!(s.put_session(&rec), Err(StoreError::Referential { collection: "patients", .. })));
        s.put_patient(&patient).unwrap();
        assert!(matches!(s.put_session(&rec), Err(StoreError::Referential { collection: "plans", .. })));
        s.put_plan(&plan).unwrap();
        s.put_session(&rec).unwrap();
        assert!(matches!(s.put_session(&rec), Err(StoreError::Immutable { .. })));
        assert!(s.index(Collection::Sessions).unwrap().len() == 1);
    }

    #[test]
    fn lists_in_creation_order_per_patient() {
        let (_d, s) = store();
        let plan = default_plan("plan");
        s.put_plan(&plan).unwrap();
        for p in ["x", "y"] {
            s.put_patient(&PatientProfile::new(p)).unwrap();
        }
        for (n, p) in ["x", "y", "x", "x"].iter().enumerate() {
            let rec = finished_session(&plan, &PatientProfile::new(*p), &format!("s{n}"), n);
            s.put_session(&rec).unwrap();
        }
        let ids: Vec<_> = s.list_sessions(Some("x")).unwrap().into_iter().map(|r| r.session_id).collect();
        assert_eq!(ids, ["s0", "s2", "s3"]);
        assert_eq!(s.list_sessions(None).unwrap().len(), 4);
    }

    #[test]
    fn pi_history_windows() {
        let (_d, s) = store();
        let plan = default_plan("plan");
        s.put_plan(&plan).unwrap();
        let patient = PatientProfile::new("p");
        s.put_patient(&patient).unwrap();
        assert!(s.pi_history("p", 5).unwrap().is_empty());
        assert!(matches!(s.pi_history("q", 5), Err(StoreError::NotFound { .. })));
        for n in 0..4 {
            let rec = finished_session(&plan, &patient, &format!("s{n}"), n + 2);
            s.put_session(&rec).unwrap();
            let report = crate::metrics::compute_report(&rec);
            s.put_report(&StoredReport {
                session_id: rec.session_id.clone(),
                patient_id: "p".into(),
                plan_id: "plan".into(),
                level_index: 1,
                report,
                progression: None,
            })
            .unwrap();
        }
        let all = s.pi_history("p", 10).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(s.pi_history("p", 2).unwrap(), all[2..].to_vec());
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let (d, s) = store();
        s.put_patient(&PatientProfile::new("p")).unwrap();
        let path = d.path().join("patients/p.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 7");
        fs::write(&path, text).unwrap();
        assert!(matches!(s.get_patient("p"), Err(StoreError::SchemaVersion { found: 7, .. })));
    }

    #[test]
    fn rejects_path_like_ids() {
        let (_d, s) = store();
        assert!(matches!(s.put_patient(&PatientProfile::new("../etc")), Err(StoreError::BadId(_))));
        assert!(matches!(s.get_patient("a/b"), Err(StoreError::BadId(_))));
    }
}
