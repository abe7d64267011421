//! JSON Lines encoding of runs and traces.
//!
//! ```text
//! {"n":2,"m":2,"v":1}
//! {"internal":"ACKX","params":[1,1]}
//! {"op":"W","proc":1,"loc":1,"data":1}
//! ```
//!
//! The header line carries the parameters; every following non-blank line
//! is one event.

use std::borrow::Cow;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::events::{Event, EventError, InternalEvent, MemoryEvent, Params, Run, Trace};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing header line {{\"n\":..,\"m\":..,\"v\":..}}")]
    MissingHeader,
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: EventError },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InternalLine<'a> {
    internal: Cow<'a, str>,
    params: SmallVec<[u32; 4]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line<'a> {
    #[serde(borrow)]
    Internal(InternalLine<'a>),
    Memory(MemoryEvent),
}

pub fn event_to_json(event: &Event) -> serde_json::Value {
    match event {
        Event::Memory(e) => serde_json::to_value(e).expect("memory event serializes"),
        Event::Internal(e) => {
            serde_json::to_value(InternalLine { internal: Cow::Borrowed(&e.label), params: e.params.clone() })
                .expect("internal event serializes")
        }
    }
}

fn write_lines(params: Params, events: impl Iterator<Item = Event>) -> String {
    let mut out = serde_json::to_string(&params).expect("params serialize");
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{}", event_to_json(&e));
    }
    out
}

pub fn write_run(run: &Run) -> String {
    write_lines(run.params(), run.events().iter().cloned())
}

pub fn write_trace(trace: &Trace) -> String {
    write_lines(trace.params(), trace.events().iter().map(|e| Event::Memory(*e)))
}

/// Parses a run; internal events are kept.
pub fn parse_run(text: &str) -> Result<Run, ParseError> {
    let mut params = None;
    let mut events = Vec::new();
    let mut header_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if params.is_none() {
            let p: Params = serde_json::from_str(raw)
                .map_err(|e| ParseError::Syntax { line, message: format!("expected header: {e}") })?;
            let p = Params::new(p.n, p.m, p.v).map_err(|source| ParseError::Invalid { line, source })?;
            params = Some(p);
            header_line = line;
            continue;
        }
        let parsed: Line<'_> = serde_json::from_str(raw)
            .map_err(|e| ParseError::Syntax { line, message: format!("not an event: {e}") })?;
        let event = match parsed {
            Line::Memory(e) => {
                params.unwrap().check_event(&e).map_err(|source| ParseError::Invalid { line, source })?;
                Event::Memory(e)
            }
            Line::Internal(e) => {
                Event::Internal(InternalEvent { label: Cow::Owned(e.internal.into_owned()), params: e.params })
            }
        };
        events.push(event);
    }
    let params = params.ok_or(ParseError::MissingHeader)?;
    Run::new(params, events).map_err(|source| ParseError::Invalid { line: header_line, source })
}

/// Parses a trace. Internal events, if present, are dropped.
pub fn parse_trace(text: &str) -> Result<Trace, ParseError> {
    parse_run(text).map(|run| crate::events::project_trace(&run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_header_and_events() {
        let text = r#"{"n":2,"m":2,"v":1}
{"internal":"ACKX","params":[1,1]}
{"op":"W","proc":1,"loc":1,"data":1}

{"op":"R","proc":2,"loc":1,"data":0}
"#;
        let run = parse_run(text).unwrap();
        assert_eq!(run.params(), Params::new(2, 2, 1).unwrap());
        assert_eq!(run.len(), 3);
        assert_eq!(run.events()[0], Event::Internal(InternalEvent::new("ACKX", &[1, 1])));
        assert_eq!(parse_trace(text).unwrap().len(), 2);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "{\"n\":1,\"m\":1,\"v\":1}\n{\"op\":\"W\",\"proc\":1,\"loc\":1,\"data\":1}\n{\"op\":\"X\"}\n";
        match parse_run(text) {
            Err(ParseError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "{\"n\":1,\"m\":1,\"v\":1}\n{\"op\":\"W\",\"proc\":2,\"loc\":1,\"data\":1}\n";
        match parse_run(text) {
            Err(ParseError::Invalid { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_run(""), Err(ParseError::MissingHeader)));
    }

    #[test]
    fn header_only_is_empty_trace() {
        let t = parse_trace("{\"n\":2,\"m\":2,\"v\":1}\n").unwrap();
        assert!(t.is_empty());
    }

    fn arb_event() -> impl Strategy<Value = Event> {
        prop_oneof![
            (any::<bool>(), 1u32..=3, 1u32..=3, 0u32..=3).prop_map(|(w, p, l, d)| {
                Event::Memory(if w { MemoryEvent::write(p, l, d) } else { MemoryEvent::read(p, l, d) })
            }),
            (prop_oneof![Just("ACKX"), Just("ACKS"), Just("UPD")], proptest::collection::vec(1u32..=3, 0..3))
                .prop_map(|(l, ps)| Event::Internal(InternalEvent::new(l, &ps))),
        ]
    }

    proptest! {
        #[test]
        fn run_round_trips(events in proptest::collection::vec(arb_event(), 0..12)) {
            let run = Run::new(Params::new(3, 3, 3).unwrap(), events).unwrap();
            prop_assert_eq!(parse_run(&write_run(&run)).unwrap(), run);
        }
    }
}
