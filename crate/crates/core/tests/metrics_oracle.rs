//! Scoring checked against a direct recount of each trial list, and
//! structural properties of reports for arbitrary outcome sequences.

use dropball_core::model::{default_plan, normalize_session, SessionHeader};
use dropball_core::{compute_report, SessionEngine, SessionEvent, TrialOutcome, TrialRecord};
use proptest::prelude::*;

const THETA: f64 = 60.0;

fn outcome() -> impl Strategy<Value = TrialOutcome> {
    prop_oneof![
        (1u32..=60_000).prop_map(|ms| TrialOutcome::Correct { crt_s: f64::from(ms) / 1000.0 }),
        (0u32..60_000).prop_map(|ms| TrialOutcome::Commission { elapsed_s: f64::from(ms) / 1000.0 }),
        Just(TrialOutcome::Omission),
    ]
}

fn session(outcomes: &[TrialOutcome]) -> dropball_core::SessionRecord {
    let level = &default_plan("p").game.levels[0];
    let mut clock = 0.0;
    let trials = outcomes
        .iter()
        .enumerate()
        .map(|(n, &outcome)| {
            let dur = match outcome {
                TrialOutcome::Correct { crt_s } => crt_s,
                TrialOutcome::Commission { elapsed_s } => elapsed_s,
                _ => THETA,
            };
            let rec = TrialRecord { index: n as u32 + 1, outcome, started_at_s: clock, ended_at_s: clock + dur, position: None };
            clock += dur;
            rec
        })
        .collect();
    normalize_session(SessionHeader::default(), trials, level).unwrap()
}

struct Expected {
    c: f64,
    oe: f64,
    ce: f64,
    k: f64,
    crt_sum: f64,
}

fn recount(outcomes: &[TrialOutcome]) -> Expected {
    let mut e = Expected { c: 0.0, oe: 0.0, ce: 0.0, k: 10.0 - outcomes.len() as f64, crt_sum: 0.0 };
    for o in outcomes {
        match o {
            TrialOutcome::Correct { crt_s } => {
                e.c += 1.0;
                e.crt_sum += crt_s;
            }
            TrialOutcome::Omission => e.oe += 1.0,
            TrialOutcome::Commission { .. } => e.ce += 1.0,
            TrialOutcome::Uncompleted => e.k += 1.0,
        }
    }
    e
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn report_matches_recount(outcomes in prop::collection::vec(outcome(), 0..=10)) {
        let r = compute_report(&session(&outcomes));
        let e = recount(&outcomes);
        let attempted = e.c + e.oe + e.ce;
        prop_assert_eq!(f64::from(r.c), e.c);
        prop_assert_eq!(f64::from(r.oe), e.oe);
        prop_assert_eq!(f64::from(r.ce), e.ce);
        prop_assert_eq!(f64::from(r.k), e.k);
        prop_assert_eq!(r.t, 10);
        prop_assert!(close(r.gf, attempted / 10.0));
        if attempted == 0.0 {
            prop_assert_eq!((r.iaf, r.imf, r.ef, r.crf, r.pi), (0.0, 0.0, 0.0, 0.0, 0.0));
        } else {
            prop_assert!(close(r.iaf, e.oe / attempted));
            prop_assert!(close(r.imf, e.ce / attempted));
            prop_assert!(close(r.ef, (e.oe + e.ce) / attempted));
            let crf = if e.c == 0.0 { 0.0 } else { e.crt_sum / (e.c * THETA) };
            prop_assert!(close(r.crf, crf));
            prop_assert!(close(r.pi, ((1.0 - crf) + (1.0 - r.ef)) / 2.0 * r.gf));
        }
        prop_assert_eq!(r.m_s.is_some(), e.c > 0.0);
        prop_assert_eq!(r.sd_s.is_some(), e.c > 0.0);
    }

    #[test]
    fn report_identities(outcomes in prop::collection::vec(outcome(), 0..=10)) {
        let r = compute_report(&session(&outcomes));
        prop_assert_eq!(r.t, r.c + r.i + r.k);
        prop_assert_eq!(r.i, r.oe + r.ce);
        for f in [r.gf, r.iaf, r.imf, r.ef, r.crf, r.pi, r.gt_st_ratio] {
            prop_assert!((0.0..=1.0).contains(&f), "{} out of range", f);
        }
        prop_assert!(r.pi <= r.gf);
        if r.c + r.i > 0 {
            prop_assert!(close(r.iaf + r.imf, r.ef));
        }
        if let (Some(m), Some(sd)) = (r.m_s, r.sd_s) {
            prop_assert!(m > 0.0 && m <= THETA);
            prop_assert!(sd >= 0.0);
            prop_assert!(close(r.crf, m / THETA));
        }
    }

    #[test]
    fn engine_sessions_keep_identities(
        steps in prop::collection::vec((0u8..4, 1u32..90_000), 0..16),
    ) {
        let level = default_plan("p").game.levels[0].clone();
        let mut engine = SessionEngine::new(SessionHeader::default(), level, 1);
        engine.begin().unwrap();
        let mut at = 0u64;
        for (kind, gap) in steps {
            if engine.is_ended() {
                break;
            }
            at += u64::from(gap);
            let at_s = at as f64 / 1000.0;
            let event = match kind {
                0 => SessionEvent::TargetHit { at_s, position: None },
                1 => SessionEvent::NonTargetHit { at_s, position: None },
                2 => SessionEvent::PlayerQuit { at_s },
                _ => match engine.timeout_due_s() {
                    Some(due) if due <= at_s => SessionEvent::TrialTimeout { at_s },
                    _ => continue,
                },
            };
            engine.apply(event).unwrap();
        }
        if !engine.is_ended() {
            engine.force_quit().unwrap();
        }
        let (record, r) = engine.finalize().unwrap();
        prop_assert_eq!(record.trials.len(), 10);
        prop_assert_eq!(r.t, r.c + r.i + r.k);
        prop_assert!(r.gt_s <= r.st_s);
        prop_assert_eq!(compute_report(&record), r);
    }
}

#[test]
fn every_hit_at_the_limit() {
    let r = compute_report(&session(&[TrialOutcome::Correct { crt_s: THETA }; 10]));
    assert_eq!((r.c, r.gf, r.crf, r.ef), (10, 1.0, 1.0, 0.0));
    assert_eq!(r.pi, 0.5);
}
