//! `/v1` routes.
//!
//! | method | path | auth |
//! |---|---|---|
//! | GET | `/v1/health` | none |
//! | POST | `/v1/patients` | doctor |
//! | GET, PUT | `/v1/patients/{id}` | doctor |
//! | GET | `/v1/patients/{id}/report` | doctor |
//! | POST | `/v1/doctors` | doctor |
//! | GET | `/v1/doctors/{id}` | doctor |
//! | GET, POST | `/v1/plans` | doctor, configure rights to write |
//! | GET | `/v1/plans/default` | none |
//! | GET | `/v1/plans/{id}` | none |
//! | PUT | `/v1/plans/{id}` | doctor with configure rights |
//! | POST | `/v1/sessions` | none |
//! | GET | `/v1/sessions/{id}` | none |
//! | POST | `/v1/sessions/{id}/events` | none |
//! | GET | `/v1/sessions/{id}/layouts/{trial}` | none |
//! | POST | `/v1/sessions/{id}/finalize` | none |
//!
//! Documents travel in the store's document form: the body fields plus
//! `schema_version`, which is optional on input.

use crate::error::ApiError;
use crate::state::{AppState, EventAck, SessionStatus, SessionTicket};
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use dropball_core::engine::SessionEvent;
use dropball_core::model::{DoctorProfile, Involvement, PatientProfile, TreatmentPlan, SCHEMA_VERSION};
use dropball_core::placement::Layout;
use dropball_core::{StoreError, StoredReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { "ok" }))
        .route("/v1/patients", post(create_patient))
        .route("/v1/patients/{id}", get(get_patient).put(replace_patient))
        .route("/v1/patients/{id}/report", get(patient_report))
        .route("/v1/doctors", post(create_doctor))
        .route("/v1/doctors/{id}", get(get_doctor))
        .route("/v1/plans", get(list_plans).post(create_plan))
        .route("/v1/plans/default", get(get_default_plan))
        .route("/v1/plans/{id}", get(get_plan).put(replace_plan))
        .route("/v1/sessions", post(start_session))
        .route("/v1/sessions/{id}", get(session_status))
        .route("/v1/sessions/{id}/events", post(post_event))
        .route("/v1/sessions/{id}/layouts/{trial}", get(session_layout))
        .route("/v1/sessions/{id}/finalize", post(finalize_session))
        .with_state(state)
}

/// A document as returned by the API.
#[derive(Debug, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

fn doc<T>(body: T) -> Json<Versioned<T>> {
    Json(Versioned { schema_version: SCHEMA_VERSION, body })
}

#[derive(Deserialize)]
struct Incoming<T> {
    #[serde(default)]
    schema_version: Option<u32>,
    #[serde(flatten)]
    body: T,
}

/// JSON body extractor that reports malformed input as 400 and checks the
/// schema version when one is given.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(incoming): Json<Incoming<T>> =
            Json::from_request(req, state).await.map_err(|e: JsonRejection| ApiError::bad_request(e.body_text()))?;
        match incoming.schema_version {
            Some(v) if v != SCHEMA_VERSION => {
                Err(ApiError::bad_request(format!("schema_version {v} is not supported, expected {SCHEMA_VERSION}")))
            }
            _ => Ok(Body(incoming.body)),
        }
    }
}

/// A caller authenticated by bearer token.
#[derive(Debug, Clone)]
pub struct Doctor {
    pub doctor_id: String,
    /// `None` when the doctor has no stored profile yet.
    pub involvement: Option<Involvement>,
}

impl Doctor {
    /// A token whose doctor has no profile acts with configure rights, so the
    /// first profiles can be created.
    fn require_configure(&self) -> Result<(), ApiError> {
        if self.involvement.is_none_or(Involvement::can_configure) {
            Ok(())
        } else {
            Err(ApiError::new(
                StatusCode::FORBIDDEN,
                format!("doctor {} may only read reports", self.doctor_id),
            ))
        }
    }
}

impl FromRequestParts<AppState> for Doctor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let unauthorized = |m: &str| ApiError::new(StatusCode::UNAUTHORIZED, m);
        let value = parts
            .headers
            .get(header::AUTHORIZATION)
            .ok_or_else(|| unauthorized("missing bearer token"))?
            .to_str()
            .map_err(|_| unauthorized("malformed authorization header"))?;
        let token = value.strip_prefix("Bearer ").ok_or_else(|| unauthorized("expected a bearer token"))?;
        let doctor_id = state.config().tokens.get(token.trim()).ok_or_else(|| unauthorized("unknown token"))?;
        let involvement = match state.store().get_doctor(doctor_id) {
            Ok(d) => Some(d.involvement),
            Err(StoreError::NotFound { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Doctor { doctor_id: doctor_id.clone(), involvement })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

type ApiResult<T> = Result<T, ApiError>;

fn ensure_path_id(path: &str, body: &str) -> ApiResult<()> {
    if path == body {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("path id {path:?} differs from document id {body:?}")))
    }
}

fn ensure_absent<T>(found: Result<T, StoreError>, what: &str, id: &str) -> ApiResult<()> {
    match found {
        Ok(_) => Err(ApiError::conflict(format!("{what} {id} already exists"))),
        Err(StoreError::NotFound { .. }) => Ok(()),
        Err(e) => Err(e.into()),
    }
}

async fn create_patient(
    State(state): State<AppState>,
    doctor: Doctor,
    Body(patient): Body<PatientProfile>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    doctor.require_configure()?;
    ensure_absent(state.store().get_patient(&patient.patient_id), "patient", &patient.patient_id)?;
    state.store().put_patient(&patient)?;
    Ok((StatusCode::CREATED, Json(Created { id: patient.patient_id })))
}

async fn replace_patient(
    State(state): State<AppState>,
    doctor: Doctor,
    Path(id): Path<String>,
    Body(patient): Body<PatientProfile>,
) -> ApiResult<Json<Created>> {
    doctor.require_configure()?;
    ensure_path_id(&id, &patient.patient_id)?;
    state.store().get_patient(&id)?;
    state.store().put_patient(&patient)?;
    Ok(Json(Created { id }))
}

async fn get_patient(
    State(state): State<AppState>,
    _doctor: Doctor,
    Path(id): Path<String>,
) -> ApiResult<Json<Versioned<PatientProfile>>> {
    Ok(doc(state.store().get_patient(&id)?))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    window: Option<usize>,
}

/// Per-session series for one patient, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientReport {
    pub patient_id: String,
    pub current_level: u32,
    pub latest_pi: Option<f64>,
    pub sessions: Vec<String>,
    pub levels: Vec<u32>,
    pub pi: Vec<f64>,
    pub iaf: Vec<f64>,
    pub imf: Vec<f64>,
    pub ef: Vec<f64>,
    pub gf: Vec<f64>,
    pub mean_pi: Option<f64>,
}

async fn patient_report(
    State(state): State<AppState>,
    _doctor: Doctor,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Json<PatientReport>> {
    let patient = state.store().get_patient(&id)?;
    let reports = state.store().list_reports(Some(&id))?;
    let window = q.window.unwrap_or(usize::MAX);
    let recent = &reports[reports.len().saturating_sub(window)..];
    let series = |f: fn(&StoredReport) -> f64| recent.iter().map(f).collect::<Vec<_>>();
    let pi = series(|r| r.report.pi);
    let mean_pi = (!pi.is_empty()).then(|| pi.iter().sum::<f64>() / pi.len() as f64);
    Ok(Json(PatientReport {
        patient_id: patient.patient_id,
        current_level: patient.current_level,
        latest_pi: patient.latest_pi,
        sessions: recent.iter().map(|r| r.session_id.clone()).collect(),
        levels: recent.iter().map(|r| r.level_index).collect(),
        iaf: series(|r| r.report.iaf),
        imf: series(|r| r.report.imf),
        ef: series(|r| r.report.ef),
        gf: series(|r| r.report.gf),
        pi,
        mean_pi,
    }))
}

async fn create_doctor(
    State(state): State<AppState>,
    doctor: Doctor,
    Body(profile): Body<DoctorProfile>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    doctor.require_configure()?;
    ensure_absent(state.store().get_doctor(&profile.doctor_id), "doctor", &profile.doctor_id)?;
    state.store().put_doctor(&profile)?;
    Ok((StatusCode::CREATED, Json(Created { id: profile.doctor_id })))
}

async fn get_doctor(
    State(state): State<AppState>,
    _doctor: Doctor,
    Path(id): Path<String>,
) -> ApiResult<Json<Versioned<DoctorProfile>>> {
    Ok(doc(state.store().get_doctor(&id)?))
}

async fn list_plans(State(state): State<AppState>, _doctor: Doctor) -> ApiResult<Json<Vec<Versioned<TreatmentPlan>>>> {
    let plans = state.store().list_plans()?;
    Ok(Json(plans.into_iter().map(|body| Versioned { schema_version: SCHEMA_VERSION, body }).collect()))
}

async fn create_plan(
    State(state): State<AppState>,
    doctor: Doctor,
    Body(plan): Body<TreatmentPlan>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    doctor.require_configure()?;
    ensure_absent(state.store().get_plan(&plan.plan_id), "plan", &plan.plan_id)?;
    state.store().put_plan(&plan)?;
    tracing::info!(plan_id = %plan.plan_id, doctor_id = %doctor.doctor_id, "plan created");
    Ok((StatusCode::CREATED, Json(Created { id: plan.plan_id })))
}

async fn replace_plan(
    State(state): State<AppState>,
    doctor: Doctor,
    Path(id): Path<String>,
    Body(plan): Body<TreatmentPlan>,
) -> ApiResult<Json<Created>> {
    doctor.require_configure()?;
    ensure_path_id(&id, &plan.plan_id)?;
    state.store().get_plan(&id)?;
    state.store().put_plan(&plan)?;
    Ok(Json(Created { id }))
}

async fn get_plan(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Versioned<TreatmentPlan>>> {
    Ok(doc(state.store().get_plan(&id)?))
}

/// Plan suggested for a patient with no history.
async fn get_default_plan(State(state): State<AppState>) -> Json<Versioned<TreatmentPlan>> {
    doc(state.default_plan().clone())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartRequest {
    pub patient_id: String,
    #[serde(default)]
    pub plan_id: Option<String>,
}

async fn start_session(
    State(state): State<AppState>,
    Body(req): Body<StartRequest>,
) -> ApiResult<(StatusCode, Json<SessionTicket>)> {
    let ticket = state.start(&req.patient_id, req.plan_id.as_deref()).await?;
    Ok((StatusCode::CREATED, Json(ticket)))
}

async fn session_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionStatus>> {
    Ok(Json(state.status(&id).await?))
}

async fn post_event(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(event): Body<SessionEvent>,
) -> ApiResult<Json<EventAck>> {
    Ok(Json(state.post_event(&id, event).await?))
}

async fn session_layout(
    State(state): State<AppState>,
    Path((id, trial)): Path<(String, u32)>,
) -> ApiResult<Json<Layout>> {
    Ok(Json(state.layout(&id, trial).await?))
}

async fn finalize_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Versioned<StoredReport>>> {
    Ok(doc(state.finalize(&id).await?))
}
