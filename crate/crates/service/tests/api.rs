use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dropball_core::model::{default_plan, DoctorProfile, Involvement, PatientProfile};
use dropball_service::{router, AppState, ClockMode, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "tok-admin";
const READER: &str = "tok-reader";

fn app(clock: ClockMode) -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig { store_root: dir.path().to_owned(), clock, ..Default::default() };
    config.tokens.insert(TOKEN.into(), "dr-admin".into());
    config.tokens.insert(READER.into(), "dr-reader".into());
    let state = AppState::new(config).unwrap();
    (dir, router(state))
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn seed_patient(app: &Router, id: &str) {
    let (status, _) = call(app, "POST", "/v1/patients", Some(TOKEN), Some(json!(PatientProfile::new(id)))).await;
    assert_eq!(status, StatusCode::CREATED);
}

fn hit(at_s: f64) -> Value {
    json!({"kind": "target_hit", "at_s": at_s})
}

#[tokio::test]
async fn plan_writes_need_a_configuring_doctor() {
    let (_d, app) = app(ClockMode::Client);
    let plan = json!(default_plan("p-1"));
    let (status, _) = call(&app, "POST", "/v1/plans", None, Some(plan.clone())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&app, "POST", "/v1/plans", Some("nope"), Some(plan.clone())).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let reader = DoctorProfile { doctor_id: "dr-reader".into(), experience: 1, involvement: Involvement::ReportsOnly };
    let (status, _) = call(&app, "POST", "/v1/doctors", Some(TOKEN), Some(json!(reader))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = call(&app, "POST", "/v1/plans", Some(READER), Some(plan.clone())).await;
    assert_eq!(status, StatusCode::FORBIDDEN);

    let (status, body) = call(&app, "POST", "/v1/plans", Some(TOKEN), Some(plan.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["id"], "p-1");
    let (status, _) = call(&app, "POST", "/v1/plans", Some(TOKEN), Some(plan)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = call(&app, "GET", "/v1/plans/p-1", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["schema_version"], 1);
    assert_eq!(body["game"]["levels"][0]["trials_per_session"], 10);
}

#[tokio::test]
async fn invalid_plan_reports_field_paths() {
    let (_d, app) = app(ClockMode::Client);
    let mut plan = default_plan("two-targets");
    plan.game.levels[0].objects[1].is_target = true;
    let (status, body) = call(&app, "POST", "/v1/plans", Some(TOKEN), Some(json!(plan))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("multiple targets"));
    assert_eq!(body["violations"][0]["path"], "game.levels[0].objects");

    let (status, _) = call(&app, "POST", "/v1/plans", Some(TOKEN), Some(json!({"plan_id": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut versioned = json!(default_plan("future"));
    versioned["schema_version"] = json!(9);
    let (status, _) = call(&app, "POST", "/v1/plans", Some(TOKEN), Some(versioned)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let (_d, app) = app(ClockMode::Client);
    assert_eq!(call(&app, "GET", "/v1/patients/ghost", Some(TOKEN), None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/v1/plans/ghost", None, None).await.0, StatusCode::NOT_FOUND);
    let start = json!({"patient_id": "ghost"});
    assert_eq!(call(&app, "POST", "/v1/sessions", None, Some(start)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "POST", "/v1/sessions/s9/events", None, Some(hit(1.0))).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "POST", "/v1/sessions/s9/finalize", None, None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn default_plan_serves_cold_start() {
    let (_d, app) = app(ClockMode::Client);
    let (status, body) = call(&app, "GET", "/v1/plans/default", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["plan_id"], "default");
    seed_patient(&app, "newcomer").await;
    let (status, ticket) = call(&app, "POST", "/v1/sessions", None, Some(json!({"patient_id": "newcomer"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ticket["plan_id"], "default");
    let (_, patient) = call(&app, "GET", "/v1/patients/newcomer", Some(TOKEN), None).await;
    assert_eq!(patient["plan_id"], "default");
}

#[tokio::test]
async fn session_lifecycle() {
    let (_d, app) = app(ClockMode::Client);
    seed_patient(&app, "kid").await;
    let start = json!({"patient_id": "kid", "plan_id": "default"});
    let (status, ticket) = call(&app, "POST", "/v1/sessions", None, Some(start.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ticket["level_index"], 1);
    assert_eq!(ticket["theta_s"], 60.0);
    assert_eq!(ticket["trials_per_session"], 10);
    assert_eq!(ticket["layout"]["trial_index"], 1);
    let id = ticket["session_id"].as_str().unwrap().to_string();

    assert_eq!(call(&app, "POST", "/v1/sessions", None, Some(start.clone())).await.0, StatusCode::CONFLICT);

    let events = format!("/v1/sessions/{id}/events");
    let (status, ack) = call(&app, "POST", &events, None, Some(hit(12.0))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["closed"][0]["outcome"], json!({"kind": "correct", "crt_s": 12.0}));
    assert_eq!(ack["phase"], "in_trial");
    assert_eq!(ack["index"], 2);
    assert_eq!(ack["counts"]["c"], 1);

    // The trial that opened at 12 s expires at 72 s; a hit at 80 s first closes it.
    let (_, ack) = call(&app, "POST", &events, None, Some(hit(80.0))).await;
    assert_eq!(ack["closed"].as_array().unwrap().len(), 2);
    assert_eq!(ack["closed"][0]["outcome"]["kind"], "omission");
    assert_eq!(ack["counts"], json!({"c": 2, "oe": 1, "ce": 0, "k": 0}));

    let (status, body) = call(&app, "POST", &events, None, Some(hit(50.0))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("precedes"));

    let (_, ack) = call(&app, "POST", &events, None, Some(json!({"kind": "player_quit", "at_s": 81.0}))).await;
    assert_eq!(ack["phase"], "ended");
    assert_eq!(call(&app, "POST", &events, None, Some(hit(82.0))).await.0, StatusCode::CONFLICT);
    // Still open until finalized.
    assert_eq!(call(&app, "POST", "/v1/sessions", None, Some(start.clone())).await.0, StatusCode::CONFLICT);

    let finalize = format!("/v1/sessions/{id}/finalize");
    let (status, first) = call(&app, "POST", &finalize, None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["report"]["c"], 2);
    assert_eq!(first["report"]["k"], 7);
    assert_eq!(first["report"]["t"], 10);
    let (_, second) = call(&app, "POST", &finalize, None, None).await;
    assert_eq!(first, second);
    assert_eq!(call(&app, "POST", &events, None, Some(hit(90.0))).await.0, StatusCode::CONFLICT);

    let (status, status_body) = call(&app, "GET", &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(status_body["finalized"], true);

    let (status, next) = call(&app, "POST", "/v1/sessions", None, Some(start)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_ne!(next["session_id"], ticket["session_id"]);
    assert_ne!(next["layout_seed"], ticket["layout_seed"]);
}

#[tokio::test]
async fn finalize_without_events_scores_zero() {
    let (_d, app) = app(ClockMode::Client);
    seed_patient(&app, "kid").await;
    let (_, ticket) = call(&app, "POST", "/v1/sessions", None, Some(json!({"patient_id": "kid"}))).await;
    let id = ticket["session_id"].as_str().unwrap();
    let (status, body) = call(&app, "POST", &format!("/v1/sessions/{id}/finalize"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["report"]["pi"], 0.0);
    assert_eq!(body["report"]["k"], 10);
    assert_eq!(body["progression"]["action"], "hold");
}

#[tokio::test]
async fn layouts_follow_the_ticket_seed() {
    let (_d, app) = app(ClockMode::Client);
    seed_patient(&app, "kid").await;
    let (_, ticket) = call(&app, "POST", "/v1/sessions", None, Some(json!({"patient_id": "kid"}))).await;
    let id = ticket["session_id"].as_str().unwrap();
    let seed = ticket["layout_seed"].as_u64().unwrap();
    let level = default_plan("default").game.levels[0].clone();
    for trial in [1, 5, 10] {
        let (status, layout) = call(&app, "GET", &format!("/v1/sessions/{id}/layouts/{trial}"), None, None).await;
        assert_eq!(status, StatusCode::OK);
        let expected = dropball_core::placement::place_objects(&level, seed, trial).unwrap();
        assert_eq!(layout, json!(expected));
    }
    let (status, _) = call(&app, "GET", &format!("/v1/sessions/{id}/layouts/11"), None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn report_needs_credentials_and_starts_empty() {
    let (_d, app) = app(ClockMode::Client);
    seed_patient(&app, "kid").await;
    assert_eq!(call(&app, "GET", "/v1/patients/kid/report", None, None).await.0, StatusCode::UNAUTHORIZED);
    let (status, body) = call(&app, "GET", "/v1/patients/kid/report", Some(READER), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["pi"], json!([]));
    assert_eq!(body["mean_pi"], Value::Null);
}

#[tokio::test]
async fn progression_advances_after_strong_sessions() {
    let (_d, app) = app(ClockMode::Client);
    let mut plan = default_plan("two-level");
    let mut second = plan.game.levels[0].clone();
    second.index = 2;
    second.trial_time_s = 45.0;
    plan.game.levels.push(second);
    assert_eq!(call(&app, "POST", "/v1/plans", Some(TOKEN), Some(json!(plan))).await.0, StatusCode::CREATED);
    seed_patient(&app, "kid").await;

    let mut levels = Vec::new();
    for _ in 0..3 {
        let start = json!({"patient_id": "kid", "plan_id": "two-level"});
        let (_, ticket) = call(&app, "POST", "/v1/sessions", None, Some(start)).await;
        levels.push(ticket["level_index"].as_u64().unwrap());
        let id = ticket["session_id"].as_str().unwrap();
        for n in 1..=10 {
            let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/events"), None, Some(hit(n as f64))).await;
            assert_eq!(status, StatusCode::OK);
        }
        let (_, fin) = call(&app, "POST", &format!("/v1/sessions/{id}/finalize"), None, None).await;
        assert!(fin["report"]["pi"].as_f64().unwrap() > 0.9);
    }
    // Level 1 is advanced after the first strong session; level 2 is the top.
    assert_eq!(levels, [1, 2, 2]);
    let (_, report) = call(&app, "GET", "/v1/patients/kid/report", Some(TOKEN), None).await;
    assert_eq!(report["pi"].as_array().unwrap().len(), 3);
    assert_eq!(report["levels"], json!([1, 2, 2]));
    assert_eq!(report["current_level"], 2);
    let (_, windowed) = call(&app, "GET", "/v1/patients/kid/report?window=2", Some(TOKEN), None).await;
    assert_eq!(windowed["pi"].as_array().unwrap().len(), 2);
}

#[tokio::test(start_paused = true)]
async fn wall_clock_injects_timeouts_and_caps_skew() {
    let (_d, app) = app(ClockMode::Wall);
    seed_patient(&app, "kid").await;
    let (_, ticket) = call(&app, "POST", "/v1/sessions", None, Some(json!({"patient_id": "kid"}))).await;
    let id = ticket["session_id"].as_str().unwrap().to_string();
    let events = format!("/v1/sessions/{id}/events");

    // Client says 30 s while the server has seen almost none.
    let (status, body) = call(&app, "POST", &events, None, Some(hit(30.0))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("server clock"));

    // Nobody plays for θ + skew: the server closes trial 1 itself.
    tokio::time::sleep(std::time::Duration::from_secs_f64(62.5)).await;
    let (_, status_body) = call(&app, "GET", &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(status_body["counts"]["oe"], 1);
    assert_eq!(status_body["index"], 2);

    let (status, ack) = call(&app, "POST", &events, None, Some(hit(63.0))).await;
    assert_eq!(status, StatusCode::OK);
    let kinds: Vec<_> = ack["closed"].as_array().unwrap().iter().map(|t| t["outcome"]["kind"].clone()).collect();
    assert_eq!(kinds, [json!("omission"), json!("correct")]);
    assert_eq!(ack["closed"][1]["outcome"]["crt_s"], 3.0);
}
