//! The two monitor automaton families composed with a protocol when looking
//! for canonical k-nice cycles. Both read memory events over data `{0,1,2}`.
//!
//! `Constrain_k(j)` restricts the data written to location `j`: for `j ≤ k`
//! some 0-writes, then exactly one 1-write, then 2-writes; for `j > k` only
//! 0-writes. It blocks events it has no transition for.
//!
//! `Check_k(i)` observes processor `i`: an access to location `i` with value
//! 1 or 2 followed by an access to location `i ⊕ 1` that reads or writes 0, or
//! writes 1. It accepts in `Err`, which is absorbing.

use serde::Serialize;

use crate::events::{LocId, MemoryEvent, Op, ProcId, Trace};

/// `x ⊕ 1` in the cyclic group on `1..=k` with identity `k`.
pub fn cyclic_succ(x: u32, k: u32) -> u32 {
    x % k + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConstrainPhase {
    A,
    /// The single 1-valued write has happened.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CheckPhase {
    A,
    B,
    Err,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConstrainState {
    pub loc: LocId,
    pub k: u32,
    pub phase: ConstrainPhase,
}

impl ConstrainState {
    pub fn initial(k: u32, loc: LocId) -> Self {
        ConstrainState { loc, k, phase: ConstrainPhase::A }
    }

    /// The automaton's state set: `{A, B}` for `loc ≤ k`, `{A}` otherwise.
    pub fn states(k: u32, loc: LocId) -> &'static [ConstrainPhase] {
        if loc <= k {
            &[ConstrainPhase::A, ConstrainPhase::B]
        } else {
            &[ConstrainPhase::A]
        }
    }

    /// `None` when the automaton has no transition: the event is blocked.
    pub fn step(&self, e: &MemoryEvent) -> Option<Self> {
        if !(e.op == Op::Write && e.loc == self.loc) {
            return Some(*self);
        }
        let next = if self.loc > self.k {
            (e.data == 0).then_some(ConstrainPhase::A)?
        } else {
            match (self.phase, e.data) {
                (ConstrainPhase::A, 0) => ConstrainPhase::A,
                (ConstrainPhase::A, 1) => ConstrainPhase::B,
                (ConstrainPhase::B, 2) => ConstrainPhase::B,
                _ => return None,
            }
        };
        Some(ConstrainState { phase: next, ..*self })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CheckState {
    pub proc: ProcId,
    pub k: u32,
    pub phase: CheckPhase,
}

impl CheckState {
    pub fn initial(k: u32, proc: ProcId) -> Self {
        CheckState { proc, k, phase: CheckPhase::A }
    }

    pub fn states() -> &'static [CheckPhase] {
        &[CheckPhase::A, CheckPhase::B, CheckPhase::Err]
    }

    pub fn step(&self, e: &MemoryEvent) -> Self {
        let i = self.proc;
        let next = match self.phase {
            CheckPhase::A if e.proc == i && e.loc == i && (e.data == 1 || e.data == 2) => CheckPhase::B,
            CheckPhase::B
                if e.proc == i
                    && e.loc == cyclic_succ(i, self.k)
                    && (e.data == 0 || (e.op == Op::Write && e.data == 1)) =>
            {
                CheckPhase::Err
            }
            phase => phase,
        };
        CheckState { phase: next, ..*self }
    }

    pub fn is_accepting(&self) -> bool {
        self.phase == CheckPhase::Err
    }
}

pub fn constrain_step(s: &ConstrainState, e: &MemoryEvent) -> Option<ConstrainState> {
    s.step(e)
}

pub fn check_step(s: &CheckState, e: &MemoryEvent) -> CheckState {
    s.step(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Automaton {
    Constrain { k: u32, loc: LocId },
    Check { k: u32, proc: ProcId },
}

/// Runs the automaton over `trace` from its initial state.
///
/// `Constrain` accepts iff every event had a transition; `Check` accepts iff
/// it ends in `Err`.
pub fn accepts(trace: &Trace, automaton: Automaton) -> bool {
    match automaton {
        Automaton::Constrain { k, loc } => {
            trace.events().iter().try_fold(ConstrainState::initial(k, loc), |s, e| s.step(e)).is_some()
        }
        Automaton::Check { k, proc } => {
            trace.events().iter().fold(CheckState::initial(k, proc), |s, e| s.step(e)).is_accepting()
        }
    }
}

/// All `m` Constrain automata and `k` Check automata, stepped together.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonitorBank {
    k: u32,
    constrain: Vec<ConstrainPhase>,
    check: Vec<CheckPhase>,
}

impl MonitorBank {
    pub fn new(k: u32, m: u32) -> Self {
        MonitorBank { k, constrain: vec![ConstrainPhase::A; m as usize], check: vec![CheckPhase::A; k as usize] }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// `None` if some Constrain automaton blocks `e`; blocking leaves `self`
    /// untouched.
    pub fn step(&self, e: &MemoryEvent) -> Option<Self> {
        let mut next = self.clone();
        let j = e.loc as usize;
        if e.op == Op::Write && j >= 1 && j <= self.constrain.len() {
            let s = ConstrainState { loc: e.loc, k: self.k, phase: self.constrain[j - 1] };
            next.constrain[j - 1] = s.step(e)?.phase;
        }
        if e.proc >= 1 && e.proc <= self.k {
            let i = e.proc as usize;
            let s = CheckState { proc: e.proc, k: self.k, phase: self.check[i - 1] };
            next.check[i - 1] = s.step(e).phase;
        }
        Some(next)
    }

    pub fn all_checks_accepting(&self) -> bool {
        self.check.iter().all(|&p| p == CheckPhase::Err)
    }

    pub fn constrain_phase(&self, loc: LocId) -> ConstrainPhase {
        self.constrain[loc as usize - 1]
    }

    pub fn check_phase(&self, proc: ProcId) -> CheckPhase {
        self.check[proc as usize - 1]
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend(self.constrain.iter().map(|&p| p as u8));
        out.extend(self.check.iter().map(|&p| p as u8));
    }
}
