//! A simplified single-node Piranha coherence protocol.
//!
//! State: a cache line per (processor, location), an input message queue per
//! processor, and the current owner of each location (0 while an ownership
//! transfer is in flight). Events:
//!
//! - `R(i,j,k)`: line valid and holding `k`.
//! - `W(i,j,k)`: line exclusive; stores `k`.
//! - `ACKX(i,j)`: line not exclusive and `owner[j] ≠ 0`; the owner's line is
//!   invalidated (unless the owner is `i`), ownership is suspended, `i` is sent
//!   the owner's data and every other valid sharer an `INVAL`.
//! - `ACKS(i,j)`: line invalid and `owner[j] ≠ 0`; the owner drops to shared,
//!   ownership is suspended and `i` is sent the owner's data.
//! - `UPD(i)`: `i` consumes the head of its queue.
//!
//! Queues are bounded: an event whose body would append to a full queue is
//! not enabled. The buggy variant leaves `owner[j]` set in `ACKS`.

use std::borrow::Cow;
use std::collections::VecDeque;

use serde::Serialize;

use super::{ActionDecl, ParamRole, ProtocolError, ProtocolSpec};
use crate::events::{DataValue, Event, InternalEvent, LocId, MemoryEvent, Op, Params, ProcId};

pub const ACKX: &str = "ACKX";
pub const ACKS: &str = "ACKS";
pub const UPD: &str = "UPD";

const ACTIONS: &[ActionDecl] = &[
    ActionDecl { label: ACKX, roles: &[ParamRole::Proc, ParamRole::Loc] },
    ActionDecl { label: ACKS, roles: &[ParamRole::Proc, ParamRole::Loc] },
    ActionDecl { label: UPD, roles: &[ParamRole::Proc] },
];

pub const DEFAULT_QUEUE_BOUND: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CacheStatus {
    #[serde(rename = "INV")]
    Inv,
    #[serde(rename = "SHD")]
    Shd,
    #[serde(rename = "EXC")]
    Exc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CacheEntry {
    pub data: DataValue,
    pub status: CacheStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MsgKind {
    #[serde(rename = "ACKS")]
    Acks,
    #[serde(rename = "ACKX")]
    Ackx,
    #[serde(rename = "INVAL")]
    Inval,
}

/// A queued message; `data` is `None` exactly for `INVAL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Msg {
    pub kind: MsgKind,
    pub addr: LocId,
    pub data: Option<DataValue>,
}

impl Msg {
    fn ack(kind: MsgKind, addr: LocId, data: DataValue) -> Self {
        Msg { kind, addr, data: Some(data) }
    }

    fn inval(addr: LocId) -> Self {
        Msg { kind: MsgKind::Inval, addr, data: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PiranhaState {
    n: u32,
    m: u32,
    cache: Vec<CacheEntry>,
    in_q: Vec<VecDeque<Msg>>,
    owner: Vec<ProcId>,
}

impl PiranhaState {
    fn slot(&self, i: ProcId, j: LocId) -> usize {
        (i as usize - 1) * self.m as usize + (j as usize - 1)
    }

    pub fn cache(&self, i: ProcId, j: LocId) -> CacheEntry {
        self.cache[self.slot(i, j)]
    }

    fn cache_mut(&mut self, i: ProcId, j: LocId) -> &mut CacheEntry {
        let s = self.slot(i, j);
        &mut self.cache[s]
    }

    pub fn queue(&self, i: ProcId) -> &VecDeque<Msg> {
        &self.in_q[i as usize - 1]
    }

    /// `0` while ownership of `j` is in transfer.
    pub fn owner(&self, j: LocId) -> ProcId {
        self.owner[j as usize - 1]
    }

    pub fn owners(&self) -> &[ProcId] {
        &self.owner
    }

    /// Number of processors holding `j` exclusively.
    pub fn exclusive_holders(&self, j: LocId) -> usize {
        (1..=self.n).filter(|&i| self.cache(i, j).status == CacheStatus::Exc).count()
    }
}

#[derive(Debug, Clone)]
pub struct Piranha {
    params: Params,
    queue_bound: usize,
    buggy: bool,
}

impl Piranha {
    pub fn new(params: Params, queue_bound: usize) -> Result<Self, ProtocolError> {
        Self::build(params, queue_bound, false)
    }

    /// The variant whose `ACKS` forgets to clear `owner[j]`.
    pub fn buggy(params: Params, queue_bound: usize) -> Result<Self, ProtocolError> {
        Self::build(params, queue_bound, true)
    }

    /// `"piranha"` or `"piranha-buggy"`.
    pub fn by_name(name: &str, params: Params, queue_bound: usize) -> Result<Self, ProtocolError> {
        match name {
            "piranha" => Self::new(params, queue_bound),
            "piranha-buggy" => Self::buggy(params, queue_bound),
            other => Err(ProtocolError::UnknownProtocol(other.to_string())),
        }
    }

    fn build(params: Params, queue_bound: usize, buggy: bool) -> Result<Self, ProtocolError> {
        if queue_bound == 0 {
            return Err(ProtocolError::Config("queue bound must be at least 1".into()));
        }
        if params.n > 255 || params.m > 255 {
            return Err(ProtocolError::Config("at most 255 processors and locations are supported".into()));
        }
        Ok(Piranha { params, queue_bound, buggy })
    }

    pub fn queue_bound(&self) -> usize {
        self.queue_bound
    }

    pub fn is_buggy(&self) -> bool {
        self.buggy
    }

    /// The initial state with the given owner per location.
    pub fn initial_state_with_owners(&self, owners: &[ProcId]) -> Result<PiranhaState, ProtocolError> {
        if owners.len() != self.params.m as usize {
            return Err(ProtocolError::Config(format!("expected {} owners, got {}", self.params.m, owners.len())));
        }
        for &o in owners {
            self.params.check_proc(o)?;
        }
        let (n, m) = (self.params.n, self.params.m);
        Ok(PiranhaState {
            n,
            m,
            cache: vec![CacheEntry { data: 0, status: CacheStatus::Shd }; (n * m) as usize],
            in_q: vec![VecDeque::new(); n as usize],
            owner: owners.to_vec(),
        })
    }

    fn has_room(&self, s: &PiranhaState, i: ProcId) -> bool {
        s.queue(i).len() < self.queue_bound
    }

    fn ackx_targets(&self, s: &PiranhaState, i: ProcId, j: LocId) -> impl Iterator<Item = ProcId> + '_ {
        let owner = s.owner(j);
        let n = self.params.n;
        let holders: Vec<ProcId> =
            (1..=n).filter(|&p| p == i || (p != owner && s.cache(p, j).status != CacheStatus::Inv)).collect();
        holders.into_iter()
    }

    fn ackx_enabled(&self, s: &PiranhaState, i: ProcId, j: LocId) -> bool {
        s.cache(i, j).status != CacheStatus::Exc
            && s.owner(j) != 0
            && self.ackx_targets(s, i, j).all(|p| self.has_room(s, p))
    }

    fn acks_enabled(&self, s: &PiranhaState, i: ProcId, j: LocId) -> bool {
        s.cache(i, j).status == CacheStatus::Inv && s.owner(j) != 0 && self.has_room(s, i)
    }

    fn in_range(&self, i: ProcId, j: Option<LocId>) -> bool {
        i >= 1 && i <= self.params.n && j.is_none_or(|j| j >= 1 && j <= self.params.m)
    }

    fn internal(label: &'static str, params: &[u32]) -> Event {
        Event::Internal(InternalEvent::new(Cow::Borrowed(label), params))
    }
}

impl ProtocolSpec for Piranha {
    type State = PiranhaState;

    fn name(&self) -> &str {
        if self.buggy {
            "piranha-buggy"
        } else {
            "piranha"
        }
    }

    fn params(&self) -> Params {
        self.params
    }

    fn internal_actions(&self) -> &[ActionDecl] {
        ACTIONS
    }

    /// One state per owner assignment in `(1..=n)^m`, lexicographic.
    fn initial_states(&self) -> Vec<PiranhaState> {
        let (n, m) = (self.params.n, self.params.m as usize);
        let mut out = Vec::new();
        let mut owners = vec![1; m];
        loop {
            out.push(self.initial_state_with_owners(&owners).expect("owners in range"));
            let mut pos = m;
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                if owners[pos] < n {
                    owners[pos] += 1;
                    for o in &mut owners[pos + 1..] {
                        *o = 1;
                    }
                    break;
                }
            }
        }
    }

    fn enabled(&self, s: &PiranhaState) -> Vec<Event> {
        let mut out = Vec::new();
        for i in 1..=self.params.n {
            for j in 1..=self.params.m {
                let line = s.cache(i, j);
                if line.status != CacheStatus::Inv {
                    out.push(Event::Memory(MemoryEvent::read(i, j, line.data)));
                }
                if line.status == CacheStatus::Exc {
                    for k in 0..=self.params.v {
                        out.push(Event::Memory(MemoryEvent::write(i, j, k)));
                    }
                }
                if self.ackx_enabled(s, i, j) {
                    out.push(Self::internal(ACKX, &[i, j]));
                }
                if self.acks_enabled(s, i, j) {
                    out.push(Self::internal(ACKS, &[i, j]));
                }
            }
            if !s.queue(i).is_empty() {
                out.push(Self::internal(UPD, &[i]));
            }
        }
        out
    }

    fn is_enabled(&self, s: &PiranhaState, event: &Event) -> bool {
        match event {
            Event::Memory(e) => {
                if !self.in_range(e.proc, Some(e.loc)) || e.data > self.params.v {
                    return false;
                }
                let line = s.cache(e.proc, e.loc);
                match e.op {
                    Op::Read => line.status != CacheStatus::Inv && line.data == e.data,
                    Op::Write => line.status == CacheStatus::Exc,
                }
            }
            Event::Internal(ie) => match (ie.label.as_ref(), ie.params.as_slice()) {
                (ACKX, &[i, j]) => self.in_range(i, Some(j)) && self.ackx_enabled(s, i, j),
                (ACKS, &[i, j]) => self.in_range(i, Some(j)) && self.acks_enabled(s, i, j),
                (UPD, &[i]) => self.in_range(i, None) && !s.queue(i).is_empty(),
                _ => false,
            },
        }
    }

    fn step(&self, s: &PiranhaState, event: &Event) -> Result<PiranhaState, ProtocolError> {
        if !self.is_enabled(s, event) {
            return Err(ProtocolError::Disabled { event: event.clone() });
        }
        let mut t = s.clone();
        match event {
            Event::Memory(e) => {
                if e.is_write() {
                    t.cache_mut(e.proc, e.loc).data = e.data;
                }
            }
            Event::Internal(ie) => match (ie.label.as_ref(), ie.params.as_slice()) {
                (ACKX, &[i, j]) => {
                    let owner = s.owner(j);
                    // Captured before ownership is cleared; indexing by the
                    // cleared owner would be out of range.
                    let data = s.cache(owner, j).data;
                    let targets: Vec<ProcId> = self.ackx_targets(s, i, j).collect();
                    if owner != i {
                        t.cache_mut(owner, j).status = CacheStatus::Inv;
                    }
                    t.owner[j as usize - 1] = 0;
                    for p in targets {
                        let msg = if p == i { Msg::ack(MsgKind::Ackx, j, data) } else { Msg::inval(j) };
                        t.in_q[p as usize - 1].push_back(msg);
                    }
                }
                (ACKS, &[i, j]) => {
                    let owner = s.owner(j);
                    let data = s.cache(owner, j).data;
                    t.cache_mut(owner, j).status = CacheStatus::Shd;
                    if !self.buggy {
                        t.owner[j as usize - 1] = 0;
                    }
                    t.in_q[i as usize - 1].push_back(Msg::ack(MsgKind::Acks, j, data));
                }
                (UPD, &[i]) => {
                    let msg = t.in_q[i as usize - 1].pop_front().expect("guard: queue not empty");
                    match msg.kind {
                        MsgKind::Inval => t.cache_mut(i, msg.addr).status = CacheStatus::Inv,
                        MsgKind::Acks | MsgKind::Ackx => {
                            let status = if msg.kind == MsgKind::Acks { CacheStatus::Shd } else { CacheStatus::Exc };
                            *t.cache_mut(i, msg.addr) =
                                CacheEntry { data: msg.data.expect("ack carries data"), status };
                            t.owner[msg.addr as usize - 1] = i;
                        }
                    }
                }
                _ => unreachable!("guard rejects unknown internal events"),
            },
        }
        Ok(t)
    }

    fn encode_state(&self, s: &PiranhaState, out: &mut Vec<u8>) {
        for line in &s.cache {
            out.extend_from_slice(&(line.data as u16).to_le_bytes());
            out.push(line.status as u8);
        }
        for &o in &s.owner {
            out.push(o as u8);
        }
        for q in &s.in_q {
            out.push(q.len() as u8);
            for msg in q {
                out.push(msg.kind as u8);
                out.push(msg.addr as u8);
                out.extend_from_slice(&(msg.data.unwrap_or(0) as u16).to_le_bytes());
            }
        }
    }

    fn with_data_bound(&self, v: DataValue) -> Self {
        Piranha { params: Params { v, ..self.params }, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{project_trace, Run};
    use crate::protocol::{replay, replay_unambiguous, ProtocolError};

    fn params(n: u32, m: u32, v: u32) -> Params {
        Params::new(n, m, v).unwrap()
    }

    fn ie(label: &'static str, ps: &[u32]) -> Event {
        Piranha::internal(label, ps)
    }

    fn r(i: u32, j: u32, k: u32) -> Event {
        MemoryEvent::read(i, j, k).into()
    }

    fn w(i: u32, j: u32, k: u32) -> Event {
        MemoryEvent::write(i, j, k).into()
    }

    pub(crate) fn example_run() -> Run {
        Run::new(
            params(2, 2, 2),
            vec![
                ie(ACKX, &[1, 1]),
                ie(UPD, &[1]),
                w(1, 1, 1),
                r(2, 1, 0),
                ie(UPD, &[2]),
                ie(ACKS, &[2, 1]),
                ie(UPD, &[2]),
                r(2, 1, 1),
            ],
        )
        .unwrap()
    }

    pub(crate) fn bug_run() -> Run {
        Run::new(
            params(2, 2, 2),
            vec![
                ie(ACKX, &[2, 2]),
                ie(UPD, &[2]),
                ie(ACKS, &[1, 2]),
                ie(ACKX, &[2, 2]),
                ie(ACKX, &[1, 1]),
                ie(UPD, &[1]),
                ie(UPD, &[1]),
                w(1, 1, 1),
                r(1, 2, 0),
                ie(UPD, &[2]),
                w(2, 2, 1),
                r(2, 1, 0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn initial_state_counts() {
        assert_eq!(Piranha::new(params(2, 2, 2), 3).unwrap().initial_states().len(), 4);
        assert_eq!(Piranha::new(params(1, 1, 2), 3).unwrap().initial_states().len(), 1);
        assert_eq!(Piranha::new(params(2, 1, 2), 3).unwrap().initial_states().len(), 2);
        assert_eq!(Piranha::new(params(3, 2, 2), 3).unwrap().initial_states().len(), 9);
        let p = Piranha::new(params(2, 2, 2), 3).unwrap();
        let owners: Vec<Vec<u32>> = p.initial_states().iter().map(|s| s.owners().to_vec()).collect();
        assert_eq!(owners, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
        for s in p.initial_states() {
            assert!(s.cache.iter().all(|c| *c == CacheEntry { data: 0, status: CacheStatus::Shd }));
            assert!(s.in_q.iter().all(VecDeque::is_empty));
        }
    }

    #[test]
    fn example_run_replays() {
        let p = Piranha::new(params(2, 2, 2), 3).unwrap();
        let init = p.initial_state_with_owners(&[1, 1]).unwrap();
        let end = replay(&p, &example_run(), &init).unwrap();
        assert_eq!(end.cache(2, 1), CacheEntry { data: 1, status: CacheStatus::Shd });
    }

    #[test]
    fn writes_need_exclusive_lines() {
        let p = Piranha::new(params(2, 2, 2), 3).unwrap();
        for s in p.initial_states() {
            for e in p.enabled(&s) {
                assert!(!matches!(e, Event::Memory(MemoryEvent { op: Op::Write, .. })));
            }
            assert!(!p.is_enabled(&s, &w(1, 1, 1)));
            assert!(matches!(p.step(&s, &w(1, 1, 1)), Err(ProtocolError::Disabled { .. })));
        }
    }

    #[test]
    fn bug_run_needs_the_bug() {
        let buggy = Piranha::buggy(params(2, 2, 2), 3).unwrap();
        let init = buggy.initial_state_with_owners(&[1, 1]).unwrap();
        replay(&buggy, &bug_run(), &init).unwrap();

        let correct = Piranha::new(params(2, 2, 2), 3).unwrap();
        match replay(&correct, &bug_run(), &init) {
            Err(ProtocolError::Replay { index, .. }) => assert_eq!(index, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bug_run_needs_two_queue_slots() {
        let buggy = Piranha::buggy(params(2, 2, 2), 1).unwrap();
        let init = buggy.initial_state_with_owners(&[1, 1]).unwrap();
        assert!(replay(&buggy, &bug_run(), &init).is_err());
        let buggy = Piranha::buggy(params(2, 2, 2), 2).unwrap();
        replay(&buggy, &bug_run(), &init).unwrap();
    }

    #[test]
    fn bug_run_intermediate_states() {
        let buggy = Piranha::buggy(params(2, 2, 2), 3).unwrap();
        let mut s = buggy.initial_state_with_owners(&[1, 1]).unwrap();
        let events = bug_run().events().to_vec();
        for e in &events[..2] {
            s = buggy.step(&s, e).unwrap();
        }
        assert_eq!(s.owner(2), 2);
        assert_eq!(s.cache(1, 2).status, CacheStatus::Inv);
        assert_eq!(s.cache(2, 2).status, CacheStatus::Exc);
        s = buggy.step(&s, &events[2]).unwrap();
        assert_eq!(s.owner(2), 2);
        assert_eq!(s.cache(2, 2).status, CacheStatus::Shd);
        for e in &events[3..5] {
            s = buggy.step(&s, e).unwrap();
        }
        assert_eq!(s.queue(2).iter().copied().collect::<Vec<_>>(), vec![Msg::ack(MsgKind::Ackx, 2, 0), Msg::inval(1)]);
        for e in &events[5..7] {
            s = buggy.step(&s, e).unwrap();
        }
        assert_eq!(s.cache(1, 1).status, CacheStatus::Exc);
        assert_eq!(s.cache(1, 2).status, CacheStatus::Shd);
        for e in &events[7..10] {
            s = buggy.step(&s, e).unwrap();
        }
        assert_eq!(s.cache(2, 1).status, CacheStatus::Shd);
        assert_eq!(s.cache(2, 2).status, CacheStatus::Exc);
        // Both caches hold a location exclusively while the other still
        // reads the stale initial value.
        assert_eq!(s.exclusive_holders(1), 1);
    }

    #[test]
    fn replay_reports_first_disabled_event() {
        let p = Piranha::new(params(2, 2, 2), 3).unwrap();
        let init = p.initial_state_with_owners(&[1, 1]).unwrap();
        let run = Run::new(params(2, 2, 2), vec![r(1, 1, 0), w(1, 1, 1)]).unwrap();
        match replay(&p, &run, &init) {
            Err(ProtocolError::Replay { index, event }) => {
                assert_eq!(index, 2);
                assert_eq!(event, w(1, 1, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        let empty = Run::new(params(2, 2, 2), vec![]).unwrap();
        assert_eq!(replay(&p, &empty, &init).unwrap(), init);
    }

    #[test]
    fn unambiguous_replay_of_bug_run() {
        let buggy = Piranha::buggy(params(2, 2, 2), 3).unwrap();
        let init = buggy.initial_state_with_owners(&[1, 1]).unwrap();
        let out = replay_unambiguous(&buggy, &bug_run(), &init).unwrap();
        assert_eq!(
            out.trace.events(),
            &[
                MemoryEvent::write(1, 1, 1),
                MemoryEvent::read(1, 2, 0),
                MemoryEvent::write(2, 2, 1),
                MemoryEvent::read(2, 1, 0)
            ]
        );
        let back = crate::events::rename_data(&out.trace, &out.renaming).unwrap();
        assert_eq!(back, project_trace(&bug_run()));
    }

    #[test]
    fn unambiguous_replay_of_example_is_identity() {
        let p = Piranha::new(params(2, 2, 2), 3).unwrap();
        let init = p.initial_state_with_owners(&[1, 1]).unwrap();
        let out = replay_unambiguous(&p, &example_run(), &init).unwrap();
        assert_eq!(out.trace.events(), project_trace(&example_run()).events());
    }

    #[test]
    fn unambiguous_replay_freshens_repeated_values() {
        let p = Piranha::new(params(1, 1, 1), 3).unwrap();
        let init = p.initial_state_with_owners(&[1]).unwrap();
        let run = Run::new(
            params(1, 1, 1),
            vec![ie(ACKX, &[1, 1]), ie(UPD, &[1]), w(1, 1, 1), r(1, 1, 1), w(1, 1, 1), r(1, 1, 1)],
        )
        .unwrap();
        let out = replay_unambiguous(&p, &run, &init).unwrap();
        assert_eq!(
            out.trace.events(),
            &[
                MemoryEvent::write(1, 1, 1),
                MemoryEvent::read(1, 1, 1),
                MemoryEvent::write(1, 1, 2),
                MemoryEvent::read(1, 1, 2)
            ]
        );
        assert!(crate::analysis::is_unambiguous(&out.trace));
        assert_eq!(crate::events::rename_data(&out.trace, &out.renaming).unwrap(), project_trace(&run));
    }

    #[test]
    fn queue_bound_disables_producers() {
        let p = Piranha::new(params(2, 1, 1), 1).unwrap();
        let s = p.initial_state_with_owners(&[1]).unwrap();
        // ACKX(1,1) with owner 1: queues ACKX for 1 and INVAL for 2.
        let s = p.step(&s, &ie(ACKX, &[1, 1])).unwrap();
        assert_eq!(s.queue(1).len(), 1);
        assert_eq!(s.queue(2).len(), 1);
        let s = p.step(&s, &ie(UPD, &[1])).unwrap();
        // Processor 2 is still shared (INVAL pending) and owner is 1.
        assert!(!p.is_enabled(&s, &ie(ACKX, &[2, 1])), "queue of 2 is full");
        let s = p.step(&s, &ie(UPD, &[2])).unwrap();
        assert!(p.is_enabled(&s, &ie(ACKS, &[2, 1])));
    }

    #[test]
    fn unknown_protocol_name() {
        assert!(matches!(Piranha::by_name("mesi", params(1, 1, 1), 3), Err(ProtocolError::UnknownProtocol(_))));
        assert!(Piranha::new(params(1, 1, 1), 0).is_err());
    }

    #[test]
    fn enabled_matches_guards() {
        let p = Piranha::buggy(params(2, 2, 2), 2).unwrap();
        let init = p.initial_state_with_owners(&[1, 1]).unwrap();
        let mut s = init;
        for e in bug_run().events() {
            let enabled = p.enabled(&s);
            assert!(enabled.contains(e));
            for cand in &enabled {
                assert!(p.is_enabled(&s, cand));
            }
            s = p.step(&s, e).unwrap();
        }
    }
}
