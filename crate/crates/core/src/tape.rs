//! Line-delimited event tapes.
//!
//! One event per line: `<kind> <at_s> [<x> <y>]`, where `kind` is one of
//! `target_hit`, `non_target_hit`, `trial_timeout`, `player_quit`, `at_s` is
//! seconds since the session started (written with millisecond precision) and
//! the optional integer pair is the selection position. Blank lines and lines
//! starting with `#` are ignored.

use crate::engine::SessionEvent;
use crate::model::Point;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct TapeError {
    pub line: usize,
    pub message: String,
}

fn kind(ev: &SessionEvent) -> &'static str {
    match ev {
        SessionEvent::TargetHit { .. } => "target_hit",
        SessionEvent::NonTargetHit { .. } => "non_target_hit",
        SessionEvent::TrialTimeout { .. } => "trial_timeout",
        SessionEvent::PlayerQuit { .. } => "player_quit",
    }
}

pub fn write_event(out: &mut String, ev: &SessionEvent) {
    let _ = write!(out, "{} {:.3}", kind(ev), ev.at_s());
    if let SessionEvent::TargetHit { position: Some(p), .. }
    | SessionEvent::NonTargetHit { position: Some(p), .. } = ev
    {
        let _ = write!(out, " {} {}", p.x, p.y);
    }
    out.push('\n');
}

pub fn to_string(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        write_event(&mut out, ev);
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<SessionEvent>, TapeError> {
    let mut events = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| TapeError { line: n + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let at_s: f64 = fields
            .get(1)
            .ok_or_else(|| err("missing time".into()))?
            .parse()
            .map_err(|_| err(format!("bad time {:?}", fields[1])))?;
        if !at_s.is_finite() || at_s < 0.0 {
            return Err(err(format!("bad time {:?}", fields[1])));
        }
        let position = match fields.len() {
            2 => None,
            4 => {
                let coord = |s: &str| s.parse::<i64>().map_err(|_| err(format!("bad coordinate {s:?}")));
                Some(Point::new(coord(fields[2])?, coord(fields[3])?))
            }
            _ => return Err(err(format!("expected 2 or 4 fields, found {}", fields.len()))),
        };
        let ev = match (fields[0], position) {
            ("target_hit", position) => SessionEvent::TargetHit { at_s, position },
            ("non_target_hit", position) => SessionEvent::NonTargetHit { at_s, position },
            ("trial_timeout", None) => SessionEvent::TrialTimeout { at_s },
            ("player_quit", None) => SessionEvent::PlayerQuit { at_s },
            ("trial_timeout" | "player_quit", Some(_)) => {
                return Err(err(format!("{} takes no position", fields[0])))
            }
            (other, _) => return Err(err(format!("unknown event kind {other:?}"))),
        };
        events.push(ev);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_all_kinds() {
        let tape = "# warm-up\n\ntarget_hit 12.000 40 50\nnon_target_hit 13.5\ntrial_timeout 73.500\nplayer_quit 80\n";
        let evs = parse(tape).unwrap();
        assert_eq!(
            evs,
            vec![
                SessionEvent::TargetHit { at_s: 12.0, position: Some(Point::new(40, 50)) },
                SessionEvent::NonTargetHit { at_s: 13.5, position: None },
                SessionEvent::TrialTimeout { at_s: 73.5 },
                SessionEvent::PlayerQuit { at_s: 80.0 },
            ]
        );
    }

    #[test]
    fn reports_line_numbers() {
        let tape = "target_hit 1.0\ntarget_hit 2.0\nbogus 3.0\n";
        assert_eq!(parse(tape).unwrap_err().line, 3);
        assert!(parse("target_hit x").unwrap_err().message.contains("bad time"));
        assert!(parse("player_quit 3 1 2").is_err());
        assert!(parse("target_hit 3 1").is_err());
        assert!(parse("target_hit -1").is_err());
    }

    fn event() -> impl Strategy<Value = SessionEvent> {
        let ms = 0u64..10_000_000;
        let pos = proptest::option::of((-500i64..500, -500i64..500).prop_map(|(x, y)| Point::new(x, y)));
        (0u8..4, ms, pos).prop_map(|(k, ms, position)| {
            let at_s = ms as f64 / 1000.0;
            match k {
                0 => SessionEvent::TargetHit { at_s, position },
                1 => SessionEvent::NonTargetHit { at_s, position },
                2 => SessionEvent::TrialTimeout { at_s },
                _ => SessionEvent::PlayerQuit { at_s },
            }
        })
    }

    proptest! {
        #[test]
        fn millisecond_tapes_round_trip(events in proptest::collection::vec(event(), 0..30)) {
            let text = to_string(&events);
            prop_assert_eq!(parse(&text).unwrap(), events.clone());
            prop_assert_eq!(to_string(&parse(&text).unwrap()), text);
        }
    }
}
