//! Session scoring: outcome tallies, correct-response-time statistics and the
//! composite factors (GF, IAF, IMF, EF, CRF) that feed the performance index.
//!
//! All factors are fractions in `[0, 1]`. When a session has no attempted
//! trials (`C + I = 0`) every factor is 0 and so is PI. When it has no correct
//! trials, `M` and `SD` are absent and CRF is 0.

use crate::model::{SessionRecord, TrialOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("mean of an empty response-time list is undefined")]
    UndefinedMean,
    #[error("standard deviation of an empty response-time list is undefined")]
    UndefinedSd,
}

/// Outcome counts for one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub t: u32,
    pub c: u32,
    pub oe: u32,
    pub ce: u32,
    pub i: u32,
    pub k: u32,
}

/// Every measure for one session. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub t: u32,
    pub c: u32,
    pub i: u32,
    pub k: u32,
    pub oe: u32,
    pub ce: u32,
    pub m_s: Option<f64>,
    pub sd_s: Option<f64>,
    pub gf: f64,
    pub iaf: f64,
    pub imf: f64,
    pub ef: f64,
    pub crf: f64,
    pub pi: f64,
    pub theta_s: f64,
    pub gt_s: f64,
    pub st_s: f64,
    /// GT / ST. Reported alongside PI, not folded into it.
    pub gt_st_ratio: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: [&'static str; 18] = [
        "t", "c", "i", "k", "oe", "ce", "m_s", "sd_s", "gf", "iaf", "imf", "ef", "crf", "pi",
        "theta_s", "gt_s", "st_s", "gt_st_ratio",
    ];

    /// Field values in `CSV_HEADER` order; absent statistics are empty cells.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.t.to_string(),
            self.c.to_string(),
            self.i.to_string(),
            self.k.to_string(),
            self.oe.to_string(),
            self.ce.to_string(),
            opt(self.m_s),
            opt(self.sd_s),
            self.gf.to_string(),
            self.iaf.to_string(),
            self.imf.to_string(),
            self.ef.to_string(),
            self.crf.to_string(),
            self.pi.to_string(),
            self.theta_s.to_string(),
            self.gt_s.to_string(),
            self.st_s.to_string(),
            self.gt_st_ratio.to_string(),
        ]
    }
}

pub fn tally(session: &SessionRecord) -> Tally {
    let mut t = Tally::default();
    for trial in &session.trials {
        t.t += 1;
        match trial.outcome {
            TrialOutcome::Correct { .. } => t.c += 1,
            TrialOutcome::Omission => t.oe += 1,
            TrialOutcome::Commission { .. } => t.ce += 1,
            TrialOutcome::Uncompleted => t.k += 1,
        }
    }
    t.i = t.oe + t.ce;
    t
}

pub fn mean_crt(crts: &[f64]) -> Result<f64, MetricsError> {
    if crts.is_empty() {
        return Err(MetricsError::UndefinedMean);
    }
    Ok(crts.iter().sum::<f64>() / crts.len() as f64)
}

/// Sample standard deviation (divisor `C - 1`); 0 for a single value.
pub fn sd_crt(crts: &[f64]) -> Result<f64, MetricsError> {
    let mean = mean_crt(crts).map_err(|_| MetricsError::UndefinedSd)?;
    if crts.len() == 1 {
        return Ok(0.0);
    }
    let ss: f64 = crts.iter().map(|x| (x - mean).powi(2)).sum();
    Ok((ss / (crts.len() - 1) as f64).sqrt())
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        f64::from(num) / f64::from(den)
    }
}

/// GF = (C + I) / T.
pub fn engagement_factor(c: u32, i: u32, t: u32) -> f64 {
    ratio(c + i, t)
}

/// IAF = OE / (C + I).
pub fn inattention_factor(oe: u32, c: u32, i: u32) -> f64 {
    ratio(oe, c + i)
}

/// IMF = CE / (C + I).
pub fn impulsivity_factor(ce: u32, c: u32, i: u32) -> f64 {
    ratio(ce, c + i)
}

/// EF = (OE + CE) / (C + I).
pub fn error_factor(oe: u32, ce: u32, c: u32, i: u32) -> f64 {
    ratio(oe + ce, c + i)
}

/// CRF = ΣCRT / (C × θ), the mean correct response time as a fraction of the
/// trial window.
pub fn correct_response_factor(crts: &[f64], c: u32, theta_s: f64) -> f64 {
    if c == 0 || theta_s <= 0.0 {
        return 0.0;
    }
    crts.iter().sum::<f64>() / (f64::from(c) * theta_s)
}

/// PI = [((1 - CRF) + (1 - EF)) / 2] × GF.
pub fn performance_index(crf: f64, ef: f64, gf: f64) -> f64 {
    ((1.0 - crf) + (1.0 - ef)) / 2.0 * gf
}

pub fn compute_report(session: &SessionRecord) -> MetricsReport {
    let Tally { t, c, oe, ce, i, k } = tally(session);
    let crts = session.crts();
    let gf = engagement_factor(c, i, t);
    let iaf = inattention_factor(oe, c, i);
    let imf = impulsivity_factor(ce, c, i);
    let ef = error_factor(oe, ce, c, i);
    let crf = correct_response_factor(&crts, c, session.theta_s);
    let pi = if c + i == 0 { 0.0 } else { performance_index(crf, ef, gf) };
    MetricsReport {
        t,
        c,
        i,
        k,
        oe,
        ce,
        m_s: mean_crt(&crts).ok(),
        sd_s: sd_crt(&crts).ok(),
        gf,
        iaf,
        imf,
        ef,
        crf,
        pi,
        theta_s: session.theta_s,
        gt_s: session.gt_s,
        st_s: session.st_s,
        gt_st_ratio: if session.st_s > 0.0 { session.gt_s / session.st_s } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_plan, normalize_session, SessionHeader, TrialRecord};

    fn session_from(outcomes: &[TrialOutcome]) -> SessionRecord {
        let level = &default_plan("p").game.levels[0];
        let mut clock = 0.0;
        let trials = outcomes
            .iter()
            .enumerate()
            .map(|(n, &outcome)| {
                let dur = match outcome {
                    TrialOutcome::Correct { crt_s } => crt_s,
                    TrialOutcome::Commission { elapsed_s } => elapsed_s,
                    TrialOutcome::Omission => 60.0,
                    TrialOutcome::Uncompleted => 0.0,
                };
                let rec = TrialRecord {
                    index: n as u32 + 1,
                    outcome,
                    started_at_s: clock,
                    ended_at_s: clock + dur,
                    position: None,
                };
                clock += dur;
                rec
            })
            .collect();
        normalize_session(SessionHeader::default(), trials, level).unwrap()
    }

    fn counts(c: usize, oe: usize, ce: usize, crt: f64) -> Vec<TrialOutcome> {
        let mut v = vec![TrialOutcome::Correct { crt_s: crt }; c];
        v.extend(vec![TrialOutcome::Omission; oe]);
        v.extend(vec![TrialOutcome::Commission { elapsed_s: 3.0 }; ce]);
        v
    }

    #[test]
    fn tally_table1_phase1() {
        let t = tally(&session_from(&counts(3, 3, 4, 20.0)));
        assert_eq!(t, Tally { t: 10, c: 3, oe: 3, ce: 4, i: 7, k: 0 });
    }

    #[test]
    fn tally_all_correct_and_all_uncompleted() {
        let t = tally(&session_from(&counts(10, 0, 0, 20.0)));
        assert_eq!((t.t, t.c, t.i, t.k), (10, 10, 0, 0));
        let t = tally(&session_from(&[]));
        assert_eq!((t.t, t.c, t.i, t.k), (10, 0, 0, 10));
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_crt(&[10.0]), Ok(10.0));
        assert_eq!(mean_crt(&[10.0, 20.0, 30.0]), Ok(20.0));
        assert_eq!(mean_crt(&[]), Err(MetricsError::UndefinedMean));
        // Any eight values summing to 174.48.
        let v = [30.0, 25.0, 24.0, 22.0, 21.0, 20.0, 18.0, 14.48];
        assert!((mean_crt(&v).unwrap() - 21.81).abs() < 1e-12);
    }

    #[test]
    fn sd_examples() {
        assert_eq!(sd_crt(&[15.0, 15.0, 15.0]), Ok(0.0));
        assert_eq!(sd_crt(&[7.0]), Ok(0.0));
        assert_eq!(sd_crt(&[]), Err(MetricsError::UndefinedSd));
        // sqrt((100 + 0 + 100) / 2)
        assert!((sd_crt(&[10.0, 20.0, 30.0]).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sd_of_linear_ramp() {
        // 60 evenly spaced values from 50 down to 0.8; brute-force sample SD
        // is 14.563407804599843.
        let v: Vec<f64> = (0..60).map(|k| 50.0 - f64::from(k) * 49.2 / 59.0).collect();
        let sd = sd_crt(&v).unwrap();
        assert!((sd - 14.563407804599843).abs() < 1e-9);
        assert!((sd - 14.46).abs() < 0.5);
    }

    #[test]
    fn factor_examples() {
        assert!((engagement_factor(3, 0, 10) - 0.30).abs() < 1e-12);
        assert_eq!(engagement_factor(4, 6, 10), 1.0);
        assert_eq!(engagement_factor(0, 0, 10), 0.0);

        assert!((inattention_factor(3, 3, 7) - 0.30).abs() < 1e-12);
        assert_eq!(inattention_factor(0, 10, 0), 0.0);
        assert_eq!(inattention_factor(0, 0, 0), 0.0);

        assert!((impulsivity_factor(4, 3, 7) - 0.40).abs() < 1e-12);
        assert!((impulsivity_factor(2, 5, 5) - 0.20).abs() < 1e-12);
        assert_eq!(impulsivity_factor(0, 5, 5), 0.0);

        assert!((error_factor(3, 4, 3, 7) - 0.70).abs() < 1e-12);
        assert!((error_factor(1, 1, 8, 2) - 0.20).abs() < 1e-12);
        assert_eq!(error_factor(0, 0, 10, 0), 0.0);
    }

    #[test]
    fn crf_examples() {
        assert_eq!(correct_response_factor(&[60.0, 60.0], 2, 60.0), 1.0);
        let crf = correct_response_factor(&[25.13], 1, 60.0);
        assert!((crf - 0.418_833_333_333).abs() < 1e-9);
        assert_eq!(correct_response_factor(&[], 0, 60.0), 0.0);
    }

    #[test]
    fn pi_examples() {
        assert!((performance_index(0.4188, 0.70, 1.0) - 0.4406).abs() < 1e-4);
        assert!((performance_index(0.3603, 0.0, 1.0) - 0.81985).abs() < 1e-4);
        assert_eq!(performance_index(0.2, 0.1, 0.0), 0.0);
    }

    #[test]
    fn report_table1_phase1() {
        let r = compute_report(&session_from(&counts(3, 3, 4, 25.13)));
        assert!((r.iaf - 0.3).abs() < 1e-12);
        assert!((r.imf - 0.4).abs() < 1e-12);
        assert!((r.ef - 0.7).abs() < 1e-12);
        assert!((r.pi - 0.44058333).abs() < 1e-6);
        assert_eq!(r.gf, 1.0);
    }

    #[test]
    fn report_table2_phase1() {
        let r = compute_report(&session_from(&counts(3, 0, 0, 25.13)));
        assert!((r.gf - 0.30).abs() < 1e-12);
        assert!((r.pi - 0.237175).abs() < 1e-6);
        assert_eq!(r.k, 7);
    }

    #[test]
    fn report_all_uncompleted() {
        let r = compute_report(&session_from(&[]));
        assert_eq!(r.pi, 0.0);
        assert_eq!(r.m_s, None);
        assert_eq!(r.sd_s, None);
        assert_eq!(r.gt_st_ratio, 0.0);
    }

    #[test]
    fn csv_fields_match_header() {
        let r = compute_report(&session_from(&counts(2, 1, 1, 10.0)));
        assert_eq!(r.csv_fields().len(), MetricsReport::CSV_HEADER.len());
    }
}
