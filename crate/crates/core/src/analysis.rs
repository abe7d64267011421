//! Trace-level semantic checks and a brute-force sequential-consistency oracle.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::events::{DataValue, LocId, MemoryEvent, Trace};

pub const DEFAULT_ORACLE_BOUND: usize = 10;
/// Largest trace the permutation engine accepts.
pub const PERMUTATION_ENGINE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("trace has {len} events but the oracle bound is {bound}")]
    Capacity { len: usize, bound: usize },
}

/// True iff, per location, writes carry pairwise-distinct nonzero values.
pub fn is_unambiguous(trace: &Trace) -> bool {
    let mut seen = HashSet::new();
    trace.events().iter().filter(|e| e.is_write()).all(|e| e.data != 0 && seen.insert((e.loc, e.data)))
}

/// True iff every read returns 0 or a value written somewhere in the trace to
/// the same location.
pub fn is_causal(trace: &Trace) -> bool {
    let written: HashSet<(LocId, DataValue)> =
        trace.events().iter().filter(|e| e.is_write()).map(|e| (e.loc, e.data)).collect();
    trace.events().iter().filter(|e| e.is_read()).all(|e| e.data == 0 || written.contains(&(e.loc, e.data)))
}

/// True iff every event carries the value of the latest write to its
/// location at or before it (0 when there is none).
pub fn is_serial(seq: &Trace) -> bool {
    is_serial_events(seq.events().iter())
}

fn is_serial_events<'a>(events: impl Iterator<Item = &'a MemoryEvent>) -> bool {
    let mut memory: HashMap<LocId, DataValue> = HashMap::new();
    for e in events {
        if e.is_write() {
            memory.insert(e.loc, e.data);
        } else if memory.get(&e.loc).copied().unwrap_or(0) != e.data {
            return false;
        }
    }
    true
}

/// A permutation `f` of trace positions: event `u` moves to position `f(u)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SerialWitness {
    f: Vec<usize>,
}

impl SerialWitness {
    pub fn new(f: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; f.len()];
        for &y in &f {
            if y == 0 || y > f.len() || seen[y - 1] {
                return None;
            }
            seen[y - 1] = true;
        }
        Some(SerialWitness { f })
    }

    pub fn identity(len: usize) -> Self {
        SerialWitness { f: (1..=len).collect() }
    }

    /// `f(u)` for 1-based `u`.
    pub fn image(&self, u: usize) -> usize {
        self.f[u - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.f
    }

    /// The permuted sequence `τ_{f⁻¹(1)} … τ_{f⁻¹(|τ|)}`.
    pub fn apply(&self, trace: &Trace) -> Trace {
        let mut events = vec![MemoryEvent::read(1, 1, 0); trace.len()];
        for (u, &target) in self.f.iter().enumerate() {
            events[target - 1] = trace.events()[u];
        }
        Trace::new(trace.params(), events).expect("permuted trace keeps parameters")
    }

    /// Program order is preserved: same-processor `u < v` implies `f(u) < f(v)`.
    pub fn respects_program_order(&self, trace: &Trace) -> bool {
        let mut last: HashMap<u32, usize> = HashMap::new();
        for (u, e) in trace.events().iter().enumerate() {
            if let Some(&prev) = last.get(&e.proc) {
                if prev >= self.f[u] {
                    return false;
                }
            }
            last.insert(e.proc, self.f[u]);
        }
        true
    }

    /// Both conditions of the sequential-consistency definition.
    pub fn certifies(&self, trace: &Trace) -> bool {
        self.f.len() == trace.len() && self.respects_program_order(trace) && is_serial(&self.apply(trace))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OracleEngine {
    /// Depth-first search over interleavings, memoized on
    /// (per-processor cursors, memory valuation).
    #[default]
    Interleaving,
    /// Literal enumeration of all permutations in lexicographic order;
    /// returns the lexicographically least witness.
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    pub bound: usize,
    pub engine: OracleEngine,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { bound: DEFAULT_ORACLE_BOUND, engine: OracleEngine::Interleaving }
    }
}

/// Searches for a serial reordering of `trace` that respects program order.
pub fn check_sc_oracle(trace: &Trace) -> Result<Option<SerialWitness>, OracleError> {
    check_sc_oracle_with(trace, OracleOptions::default())
}

pub fn check_sc_oracle_with(trace: &Trace, options: OracleOptions) -> Result<Option<SerialWitness>, OracleError> {
    let bound = match options.engine {
        OracleEngine::Interleaving => options.bound,
        OracleEngine::Permutation => options.bound.min(PERMUTATION_ENGINE_LIMIT),
    };
    if trace.len() > bound {
        return Err(OracleError::Capacity { len: trace.len(), bound });
    }
    Ok(match options.engine {
        OracleEngine::Interleaving => interleaving_search(trace),
        OracleEngine::Permutation => permutation_search(trace),
    })
}

struct InterleavingSearch<'a> {
    trace: &'a Trace,
    /// Trace positions (0-based) issued by each processor, in program order.
    per_proc: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    memory: BTreeMap<LocId, DataValue>,
    order: Vec<usize>,
    dead: HashSet<(Vec<usize>, BTreeMap<LocId, DataValue>)>,
}

impl InterleavingSearch<'_> {
    fn search(&mut self) -> bool {
        if self.order.len() == self.trace.len() {
            return true;
        }
        let key = (self.cursors.clone(), self.memory.clone());
        if self.dead.contains(&key) {
            return false;
        }
        for p in 0..self.per_proc.len() {
            let Some(&pos) = self.per_proc[p].get(self.cursors[p]) else {
                continue;
            };
            let e = self.trace.events()[pos];
            let previous = self.memory.get(&e.loc).copied();
            if e.is_write() {
                self.memory.insert(e.loc, e.data);
            } else if previous.unwrap_or(0) != e.data {
                continue;
            }
            self.cursors[p] += 1;
            self.order.push(pos);
            if self.search() {
                return true;
            }
            self.order.pop();
            self.cursors[p] -= 1;
            match previous {
                Some(d) => self.memory.insert(e.loc, d),
                None => self.memory.remove(&e.loc),
            };
        }
        self.dead.insert(key);
        false
    }
}

fn interleaving_search(trace: &Trace) -> Option<SerialWitness> {
    let n = trace.params().n as usize;
    let mut per_proc = vec![Vec::new(); n];
    for (pos, e) in trace.events().iter().enumerate() {
        per_proc[e.proc as usize - 1].push(pos);
    }
    let mut search = InterleavingSearch {
        trace,
        per_proc,
        cursors: vec![0; n],
        memory: BTreeMap::new(),
        order: Vec::with_capacity(trace.len()),
        dead: HashSet::new(),
    };
    if !search.search() {
        return None;
    }
    let mut f = vec![0; trace.len()];
    for (slot, &pos) in search.order.iter().enumerate() {
        f[pos] = slot + 1;
    }
    SerialWitness::new(f)
}

fn permutation_search(trace: &Trace) -> Option<SerialWitness> {
    let mut f: Vec<usize> = (1..=trace.len()).collect();
    loop {
        let candidate = SerialWitness { f: f.clone() };
        if candidate.certifies(trace) {
            return Some(candidate);
        }
        if !crate::events::next_permutation(&mut f) {
            return None;
        }
    }
}
