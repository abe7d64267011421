//! Generators for small test corpora: synthetic unambiguous causal traces and
//! unambiguous traces of random protocol walks.
//!
//! Randomness is supplied by the caller as `pick(k)`, which must return a
//! value in `0..k`. This keeps the generators deterministic for a given
//! choice sequence and free of any particular RNG.

use crate::events::{Event, MemoryEvent, Params, Run, Trace};
use crate::protocol::{replay_unambiguous, ProtocolSpec};

/// A trace of `len` events over `n` processors and `m` locations where every
/// write carries a fresh per-location value and every read returns 0 or the
/// value of some write to its location anywhere in the trace.
pub fn synthetic_trace(n: u32, m: u32, len: usize, pick: &mut impl FnMut(usize) -> usize) -> Trace {
    let mut shape = Vec::with_capacity(len);
    let mut writes = vec![0u32; m as usize];
    for _ in 0..len {
        let is_write = pick(2) == 0;
        let proc = pick(n as usize) as u32 + 1;
        let loc = pick(m as usize) as u32 + 1;
        let data = if is_write {
            writes[loc as usize - 1] += 1;
            writes[loc as usize - 1]
        } else {
            0
        };
        shape.push((is_write, proc, loc, data));
    }
    let events = shape
        .into_iter()
        .map(|(is_write, proc, loc, data)| {
            if is_write {
                MemoryEvent::write(proc, loc, data)
            } else {
                let written = writes[loc as usize - 1] as usize;
                MemoryEvent::read(proc, loc, pick(written + 1) as u32)
            }
        })
        .collect();
    let v = writes.iter().copied().max().unwrap_or(0).max(1);
    Trace::new(Params::new(n, m, v).expect("positive parameters"), events).expect("events within parameters")
}

/// Walks `protocol` randomly from a random initial state until the run has
/// `len` memory events or `max_steps` events, then returns the unambiguous
/// trace of that run together with the run itself.
pub fn protocol_trace<P: ProtocolSpec>(
    protocol: &P,
    len: usize,
    max_steps: usize,
    pick: &mut impl FnMut(usize) -> usize,
) -> (Trace, Run) {
    let mut initial = protocol.initial_states();
    let start = initial.swap_remove(pick(initial.len()));
    let mut state = start.clone();
    let mut events = Vec::new();
    let mut memory = 0;
    while memory < len && events.len() < max_steps {
        let mut enabled = protocol.enabled(&state);
        if enabled.is_empty() {
            break;
        }
        let e = enabled.swap_remove(pick(enabled.len()));
        state = protocol.step(&state, &e).expect("enabled events step");
        if matches!(e, Event::Memory(_)) {
            memory += 1;
        }
        events.push(e);
    }
    let run = Run::new(protocol.params(), events).expect("protocol events within parameters");
    let replayed = replay_unambiguous(protocol, &run, &start).expect("protocol runs replay");
    (replayed.trace, run)
}
