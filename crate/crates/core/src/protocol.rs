//! Finite transition systems over memory and internal events, replay of runs,
//! and the built-in Piranha-style cache-coherence protocol.

use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

use crate::events::{
    permute_event, DataValue, Event, EventError, InternalEvent, MemoryEvent, Params, Permutation, PermutationKind, Run,
    Trace,
};

mod piranha;

pub use piranha::{CacheEntry, CacheStatus, Msg, MsgKind, Piranha, PiranhaState, ACKS, ACKX, DEFAULT_QUEUE_BOUND, UPD};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("event {event} is not enabled")]
    Disabled { event: Event },
    /// `index` is the 1-based position of the first disabled event.
    #[error("replay failed at event {index} ({event}): not enabled")]
    Replay { index: usize, event: Event },
    #[error("unknown protocol {0:?} (expected \"piranha\" or \"piranha-buggy\")")]
    UnknownProtocol(String),
    #[error("run parameters {run} do not match protocol parameters {protocol}")]
    ParamMismatch { run: Params, protocol: Params },
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("{0}")]
    Config(String),
}

/// What an internal event parameter denotes, so that processor and location
/// permutations can be pushed through internal events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Proc,
    Loc,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionDecl {
    pub label: &'static str,
    pub roles: &'static [ParamRole],
}

/// A memory system given as guarded commands over an explicit state.
///
/// Implementations are pure: states are passed in and returned, so one
/// protocol value can be shared across exploring threads.
pub trait ProtocolSpec: Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;

    fn name(&self) -> &str;

    fn params(&self) -> Params;

    /// The internal actions, with the role of each parameter.
    fn internal_actions(&self) -> &[ActionDecl];

    /// Initial states in a fixed order.
    fn initial_states(&self) -> Vec<Self::State>;

    /// Enabled events in a fixed order.
    fn enabled(&self, state: &Self::State) -> Vec<Event>;

    fn is_enabled(&self, state: &Self::State, event: &Event) -> bool;

    /// Executes `event`, which must be enabled.
    fn step(&self, state: &Self::State, event: &Event) -> Result<Self::State, ProtocolError>;

    /// Appends a canonical byte encoding of `state`.
    fn encode_state(&self, state: &Self::State, out: &mut Vec<u8>);

    /// The same protocol over data values `0..=v`.
    fn with_data_bound(&self, v: DataValue) -> Self
    where
        Self: Sized;
}

/// Executes `run` from `initial`, failing at the first disabled event.
pub fn replay<P: ProtocolSpec>(protocol: &P, run: &Run, initial: &P::State) -> Result<P::State, ProtocolError> {
    check_run_params(protocol, run)?;
    let mut state = initial.clone();
    for (idx, event) in run.events().iter().enumerate() {
        if !protocol.is_enabled(&state, event) {
            return Err(ProtocolError::Replay { index: idx + 1, event: event.clone() });
        }
        state = protocol.step(&state, event)?;
    }
    Ok(state)
}

fn check_run_params<P: ProtocolSpec>(protocol: &P, run: &Run) -> Result<(), ProtocolError> {
    let (rp, pp) = (run.params(), protocol.params());
    if rp.n != pp.n || rp.m != pp.m || rp.v > pp.v {
        return Err(ProtocolError::ParamMismatch { run: rp, protocol: pp });
    }
    Ok(())
}

/// Output of [`replay_unambiguous`].
#[derive(Debug, Clone)]
pub struct UnambiguousReplay {
    /// The trace of the shadow run, with fresh write values.
    pub trace: Trace,
    /// Maps every fresh value back to the value the original run wrote.
    pub renaming: crate::events::RenamingFunction,
}

/// Re-executes the control path of `run` with every write carrying a fresh
/// per-location value (`1, 2, 3, …`) and reads returning whatever the shadow
/// state holds.
///
/// Renaming the resulting trace with the returned function gives back the
/// memory projection of `run`.
pub fn replay_unambiguous<P: ProtocolSpec>(
    protocol: &P,
    run: &Run,
    initial: &P::State,
) -> Result<UnambiguousReplay, ProtocolError> {
    check_run_params(protocol, run)?;
    let params = protocol.params();
    let mut writes_per_loc = vec![0u32; params.m as usize];
    for e in run.events().iter().filter_map(Event::as_memory) {
        if e.is_write() {
            writes_per_loc[e.loc as usize - 1] += 1;
        }
    }
    let shadow_v = writes_per_loc.iter().copied().max().unwrap_or(0).max(params.v);
    let shadow = protocol.with_data_bound(shadow_v);

    let mut renaming = crate::events::RenamingFunction::new(params.v);
    let mut next_fresh = vec![0u32; params.m as usize];
    let mut state = initial.clone();
    let mut shadow_state = initial.clone();
    let mut trace_events = Vec::new();
    for (idx, event) in run.events().iter().enumerate() {
        let fail = || ProtocolError::Replay { index: idx + 1, event: event.clone() };
        if !protocol.is_enabled(&state, event) {
            return Err(fail());
        }
        let shadow_event = match event {
            Event::Internal(_) => event.clone(),
            Event::Memory(e) if e.is_write() => {
                let slot = &mut next_fresh[e.loc as usize - 1];
                *slot += 1;
                renaming.insert(e.loc, *slot, e.data)?;
                Event::Memory(MemoryEvent { data: *slot, ..*e })
            }
            Event::Memory(e) => shadow
                .enabled(&shadow_state)
                .into_iter()
                .find(|cand| match cand {
                    Event::Memory(r) => {
                        r.is_read()
                            && r.proc == e.proc
                            && r.loc == e.loc
                            && renaming.apply(r.loc, r.data) == Some(e.data)
                    }
                    Event::Internal(_) => false,
                })
                .ok_or_else(fail)?,
        };
        if !shadow.is_enabled(&shadow_state, &shadow_event) {
            return Err(fail());
        }
        state = protocol.step(&state, event)?;
        shadow_state = shadow.step(&shadow_state, &shadow_event)?;
        if let Event::Memory(e) = shadow_event {
            trace_events.push(e);
        }
    }
    let trace_params = Params { v: shadow_v.max(1), ..params };
    Ok(UnambiguousReplay { trace: Trace::new(trace_params, trace_events)?, renaming })
}

/// Pushes a processor or location permutation through an event, using the
/// protocol's parameter roles for internal events.
pub fn permute_run_event(decls: &[ActionDecl], event: &Event, kind: PermutationKind, perm: &Permutation) -> Event {
    match event {
        Event::Memory(e) => Event::Memory(permute_event(e, kind, perm)),
        Event::Internal(ie) => {
            let roles = decls.iter().find(|d| d.label == ie.label).map(|d| d.roles).unwrap_or(&[]);
            let params = ie
                .params
                .iter()
                .enumerate()
                .map(|(i, &p)| match (roles.get(i), kind) {
                    (Some(ParamRole::Proc), PermutationKind::Processor)
                    | (Some(ParamRole::Loc), PermutationKind::Location) => perm.apply(p),
                    _ => p,
                })
                .collect();
            Event::Internal(InternalEvent { label: ie.label.clone(), params })
        }
    }
}

pub fn permute_run(
    decls: &[ActionDecl],
    run: &Run,
    kind: PermutationKind,
    perm: &Permutation,
) -> Result<Run, EventError> {
    let events = run.events().iter().map(|e| permute_run_event(decls, e, kind, perm)).collect();
    Run::new(run.params(), events)
}
