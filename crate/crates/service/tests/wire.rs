//! The HTTP path over a real socket, checked against the library.

use dropball_core::engine::replay;
use dropball_core::model::{default_plan, PatientProfile, SessionHeader};
use dropball_core::simulator::{run_experiment, Part};
use dropball_core::{MetricsReport, SessionEvent, StoredReport};
use dropball_service::api::Versioned;
use dropball_service::{serve, ClockMode, ServiceConfig, SessionTicket};
use std::net::SocketAddr;

const TOKEN: &str = "wire-token";

struct Server {
    base: String,
    http: reqwest::Client,
    _stop: tokio::sync::oneshot::Sender<()>,
    _dir: tempfile::TempDir,
}

async fn server() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig {
        listen: SocketAddr::from(([127, 0, 0, 1], 0)),
        store_root: dir.path().to_owned(),
        clock: ClockMode::Client,
        ..Default::default()
    };
    config.tokens.insert(TOKEN.into(), "dr-wire".into());
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let (addr_tx, addr_rx) = tokio::sync::oneshot::channel();
    tokio::spawn(async move {
        serve(config, |addr| addr_tx.send(addr).unwrap(), async {
            let _ = stop_rx.await;
        })
        .await
        .unwrap();
    });
    let addr: SocketAddr = addr_rx.await.unwrap();
    Server { base: format!("http://{addr}"), http: reqwest::Client::new(), _stop: stop_tx, _dir: dir }
}

impl Server {
    async fn add_patient(&self, id: &str) {
        let resp = self
            .http
            .post(format!("{}/v1/patients", self.base))
            .bearer_auth(TOKEN)
            .json(&PatientProfile::new(id))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201);
    }

    /// Plays one tape and returns the ticket and finalized report.
    async fn play(&self, patient: &str, events: &[SessionEvent]) -> (SessionTicket, StoredReport) {
        let ticket: SessionTicket = self
            .http
            .post(format!("{}/v1/sessions", self.base))
            .json(&serde_json::json!({ "patient_id": patient }))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        for ev in events {
            let resp = self
                .http
                .post(format!("{}/v1/sessions/{}/events", self.base, ticket.session_id))
                .json(ev)
                .send()
                .await
                .unwrap();
            assert_eq!(resp.status(), 200, "{ev:?}");
        }
        let report: Versioned<StoredReport> = self
            .http
            .post(format!("{}/v1/sessions/{}/finalize", self.base, ticket.session_id))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        (ticket, report.body)
    }
}

fn library_report(ticket: &SessionTicket, events: &[SessionEvent]) -> MetricsReport {
    let level = default_plan("default").game.levels[0].clone();
    let header = SessionHeader {
        session_id: ticket.session_id.clone(),
        patient_id: ticket.patient_id.clone(),
        plan_id: ticket.plan_id.clone(),
        level_index: ticket.level_index,
        ..Default::default()
    };
    replay(header, &level, ticket.layout_seed, events).unwrap().1
}

async fn phase_over_wire(server: &Server, part: Part, phase: usize, patient: &str) -> Vec<f64> {
    let level = default_plan("default").game.levels[0].clone();
    let exp = run_experiment(part, 20, &level, 7, None).unwrap();
    server.add_patient(patient).await;
    let mut pis = Vec::new();
    for run in &exp.phases[phase].sessions {
        let (ticket, stored) = server.play(patient, &run.events).await;
        let lib = library_report(&ticket, &run.events);
        assert_eq!(serde_json::to_string(&stored.report).unwrap(), serde_json::to_string(&lib).unwrap());
        assert_eq!(stored.report, run.report);
        pis.push(stored.report.pi);
    }
    pis
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[tokio::test]
async fn first_phase_of_part_one_over_the_wire() {
    let server = server().await;
    let pis = phase_over_wire(&server, Part::One, 0, "errors-kid").await;
    assert!((mean(&pis) - 0.44).abs() < 0.015, "{}", mean(&pis));
}

#[tokio::test]
async fn last_phase_of_part_two_over_the_wire() {
    let server = server().await;
    let pis = phase_over_wire(&server, Part::Two, 3, "engaged-kid").await;
    assert!((mean(&pis) - 0.82).abs() < 0.015, "{}", mean(&pis));

    let report: serde_json::Value = server
        .http
        .get(format!("{}/v1/patients/engaged-kid/report", server.base))
        .bearer_auth(TOKEN)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(report["pi"].as_array().unwrap().len(), 20);
    assert!((report["mean_pi"].as_f64().unwrap() - 0.82).abs() < 0.015);
    assert_eq!(report["gf"][0], 1.0);
}

#[tokio::test]
async fn concurrent_starts_leave_one_active_session() {
    let server = server().await;
    server.add_patient("racer").await;
    let attempts = (0..16).map(|_| {
        let http = server.http.clone();
        let url = format!("{}/v1/sessions", server.base);
        tokio::spawn(async move {
            http.post(url).json(&serde_json::json!({"patient_id": "racer"})).send().await.unwrap().status()
        })
    });
    let mut created = 0;
    for a in attempts {
        match a.await.unwrap().as_u16() {
            201 => created += 1,
            409 => {}
            other => panic!("unexpected status {other}"),
        }
    }
    assert_eq!(created, 1);
}
