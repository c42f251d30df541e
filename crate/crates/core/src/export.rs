//! CSV forms.
//!
//! * Session rows: `session_id,patient_id,plan_id,level_index` followed by
//!   [`MetricsReport::CSV_HEADER`], one finalized session per row.
//! * Experiment table: one row per measure (`C, OE, CE, K, IAF, IMF, EF, GF,
//!   M, SD, PI`), one column per phase, matching the layout of the published
//!   result tables. Ratios are percentages rounded to whole numbers; M and SD
//!   are seconds with two decimals.
//! * PI series: `session,phase,pi`, session indices 1-based within a phase.

use crate::metrics::MetricsReport;
use crate::simulator::{Experiment, PhaseSummary, PiPoint};
use crate::storage::StoredReport;
use sha2::{Digest, Sha256};

const SESSION_KEYS: [&str; 4] = ["session_id", "patient_id", "plan_id", "level_index"];

/// Stable pseudonym for a patient id: `anon-` plus 16 hex digits of
/// SHA-256 over `salt` and the id.
pub fn pseudonymize(patient_id: &str, salt: &str) -> String {
    let digest = Sha256::new().chain_update(salt).chain_update([0u8]).chain_update(patient_id).finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("anon-{hex}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV is UTF-8")
}

/// Session rows for `reports`, in the given order. With `salt`, patient ids
/// are replaced by their pseudonyms.
pub fn sessions_csv(reports: &[StoredReport], salt: Option<&str>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = SESSION_KEYS.iter().chain(MetricsReport::CSV_HEADER.iter());
    w.write_record(header).expect("in-memory write");
    for r in reports {
        let patient = match salt {
            Some(salt) => pseudonymize(&r.patient_id, salt),
            None => r.patient_id.clone(),
        };
        let mut row = vec![r.session_id.clone(), patient, r.plan_id.clone(), r.level_index.to_string()];
        row.extend(r.report.csv_fields());
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.0}", v * 100.0)).unwrap_or_default()
}

fn secs(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2}")).unwrap_or_default()
}

/// Measure-by-phase table of phase averages.
pub fn experiment_table_csv(summaries: &[PhaseSummary]) -> String {
    type Cell = fn(&PhaseSummary) -> String;
    let rows: [(&str, Cell); 11] = [
        ("C", |s| s.c.to_string()),
        ("OE", |s| s.oe.to_string()),
        ("CE", |s| s.ce.to_string()),
        ("K", |s| s.k.to_string()),
        ("IAF", |s| pct(s.iaf)),
        ("IMF", |s| pct(s.imf)),
        ("EF", |s| pct(s.ef)),
        ("GF", |s| pct(s.gf)),
        ("M", |s| secs(s.m_s)),
        ("SD", |s| secs(s.sd_s)),
        ("PI", |s| pct(s.pi)),
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("measure").chain(summaries.iter().map(|s| s.label.as_str()));
    w.write_record(header).expect("in-memory write");
    for (name, cell) in rows {
        let row = std::iter::once(name.to_string()).chain(summaries.iter().map(cell));
        w.write_record(row).expect("in-memory write");
    }
    finish(w)
}

pub fn pi_series_csv(points: &[PiPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["session", "phase", "pi"]).expect("in-memory write");
    for p in points {
        w.write_record([p.session.to_string(), p.phase.clone(), p.pi.to_string()]).expect("in-memory write");
    }
    finish(w)
}

/// Every simulated session's report, in phase then session order.
pub fn experiment_sessions_csv(exp: &Experiment, level_index: u32) -> String {
    let rows: Vec<StoredReport> = exp
        .phases
        .iter()
        .flat_map(|p| {
            p.sessions.iter().map(move |s| StoredReport {
                session_id: crate::simulator::session_id(&p.config.label, s.session),
                patient_id: "simulated".into(),
                plan_id: "simulated".into(),
                level_index,
                report: s.report.clone(),
                progression: None,
            })
        })
        .collect();
    sessions_csv(&rows, None)
}

/// Human-readable summary in the published table layout.
pub fn experiment_summary(exp: &Experiment) -> String {
    let mut out = format!("Part {}\n", exp.part.number());
    let width = 10;
    out.push_str(&format!("{:<14}", ""));
    for p in &exp.phases {
        out.push_str(&format!("{:>width$}", p.summary.label));
    }
    out.push('\n');
    type Row = (&'static str, fn(&PhaseSummary) -> String);
    let lines: [Row; 11] = [
        ("Correct tries", |s| s.c.to_string()),
        ("Omission", |s| s.oe.to_string()),
        ("Commission", |s| s.ce.to_string()),
        ("Uncompleted", |s| s.k.to_string()),
        ("IAF %", |s| pct(s.iaf)),
        ("IMF %", |s| pct(s.imf)),
        ("EF %", |s| pct(s.ef)),
        ("GF %", |s| pct(s.gf)),
        ("M (s)", |s| secs(s.m_s)),
        ("SD (s)", |s| secs(s.sd_s)),
        ("Average PI %", |s| pct(s.pi)),
    ];
    for (name, cell) in lines {
        out.push_str(&format!("{name:<14}"));
        for p in &exp.phases {
            out.push_str(&format!("{:>width$}", cell(&p.summary)));
        }
        out.push('\n');
    }
    out
}
