//! Memory events, runs, traces and the renaming families that act on them.
//!
//! Indices handed out by this module are 1-based: position `1` is the first
//! event of a trace.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub type ProcId = u32;
pub type LocId = u32;
pub type DataValue = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("renaming function has no entry for location {loc}, value {data}")]
    MissingRenaming { loc: LocId, data: DataValue },
    #[error("renaming function must map value 0 to 0 (location {loc})")]
    RenamingOfInitialValue { loc: LocId },
    #[error("traces with parameters {left} and {right} cannot be combined")]
    ParamMismatch { left: Params, right: Params },
}

/// System parameters: `n` processors, `m` locations, data values `0..=v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Params {
    pub n: u32,
    pub m: u32,
    pub v: u32,
}

impl Params {
    pub fn new(n: u32, m: u32, v: u32) -> Result<Self, EventError> {
        if n == 0 || m == 0 || v == 0 {
            return Err(EventError::Parameter(format!("n, m and v must be at least 1 (got n={n}, m={m}, v={v})")));
        }
        Ok(Params { n, m, v })
    }

    pub fn min_nm(&self) -> u32 {
        self.n.min(self.m)
    }

    pub fn check_proc(&self, proc: ProcId) -> Result<(), EventError> {
        if proc == 0 || proc > self.n {
            return Err(EventError::Parameter(format!("processor {proc} outside 1..={}", self.n)));
        }
        Ok(())
    }

    pub fn check_loc(&self, loc: LocId) -> Result<(), EventError> {
        if loc == 0 || loc > self.m {
            return Err(EventError::Parameter(format!("location {loc} outside 1..={}", self.m)));
        }
        Ok(())
    }

    pub fn check_event(&self, e: &MemoryEvent) -> Result<(), EventError> {
        self.check_proc(e.proc)?;
        self.check_loc(e.loc)?;
        if e.data > self.v {
            return Err(EventError::Parameter(format!("data value {} outside 0..={} in {e}", e.data, self.v)));
        }
        Ok(())
    }
}

impl fmt::Display for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(n={}, m={}, v={})", self.n, self.m, self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "R")]
    Read,
    #[serde(rename = "W")]
    Write,
}

/// A read or write `⟨op, proc, loc, data⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemoryEvent {
    pub op: Op,
    pub proc: ProcId,
    pub loc: LocId,
    pub data: DataValue,
}

impl MemoryEvent {
    pub const fn read(proc: ProcId, loc: LocId, data: DataValue) -> Self {
        MemoryEvent { op: Op::Read, proc, loc, data }
    }

    pub const fn write(proc: ProcId, loc: LocId, data: DataValue) -> Self {
        MemoryEvent { op: Op::Write, proc, loc, data }
    }

    pub fn is_write(&self) -> bool {
        self.op == Op::Write
    }

    pub fn is_read(&self) -> bool {
        self.op == Op::Read
    }
}

impl fmt::Display for MemoryEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            Op::Read => 'R',
            Op::Write => 'W',
        };
        write!(f, "{op}({},{},{})", self.proc, self.loc, self.data)
    }
}

/// A protocol-internal action such as `ACKX(2,1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InternalEvent {
    pub label: Cow<'static, str>,
    pub params: SmallVec<[u32; 4]>,
}

impl InternalEvent {
    pub fn new(label: impl Into<Cow<'static, str>>, params: &[u32]) -> Self {
        InternalEvent { label: label.into(), params: SmallVec::from_slice(params) }
    }
}

impl fmt::Display for InternalEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.label)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    Memory(MemoryEvent),
    Internal(InternalEvent),
}

impl Event {
    pub fn as_memory(&self) -> Option<&MemoryEvent> {
        match self {
            Event::Memory(e) => Some(e),
            Event::Internal(_) => None,
        }
    }
}

impl From<MemoryEvent> for Event {
    fn from(e: MemoryEvent) -> Self {
        Event::Memory(e)
    }
}

impl From<InternalEvent> for Event {
    fn from(e: InternalEvent) -> Self {
        Event::Internal(e)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Memory(e) => e.fmt(f),
            Event::Internal(e) => e.fmt(f),
        }
    }
}

/// A finite sequence of memory events over fixed parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trace {
    params: Params,
    events: Vec<MemoryEvent>,
}

impl Trace {
    pub fn new(params: Params, events: Vec<MemoryEvent>) -> Result<Self, EventError> {
        for e in &events {
            params.check_event(e)?;
        }
        Ok(Trace { params, events })
    }

    pub fn empty(params: Params) -> Self {
        Trace { params, events: Vec::new() }
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn events(&self) -> &[MemoryEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The event at 1-based position `idx`.
    pub fn get(&self, idx: usize) -> &MemoryEvent {
        &self.events[idx - 1]
    }

    /// 1-based indices `1..=len`.
    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.events.len()
    }

    /// Same events, reinterpreted over wider (or narrower) parameters.
    pub fn with_params(&self, params: Params) -> Result<Trace, EventError> {
        Trace::new(params, self.events.clone())
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

/// A finite sequence of memory and internal events.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Run {
    params: Params,
    events: Vec<Event>,
}

impl Run {
    pub fn new(params: Params, events: Vec<Event>) -> Result<Self, EventError> {
        for e in events.iter().filter_map(Event::as_memory) {
            params.check_event(e)?;
        }
        Ok(Run { params, events })
    }

    pub fn params(&self) -> Params {
        self.params
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

impl fmt::Display for Run {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

/// Drops internal events, keeping memory events in order.
pub fn project_trace(run: &Run) -> Trace {
    Trace { params: run.params, events: run.events.iter().filter_map(Event::as_memory).copied().collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    ByProc(ProcId),
    ByLoc(LocId),
    WritesToLoc(LocId),
    ReadsToLoc(LocId),
}

/// Ascending 1-based indices of the events picked by `selector`.
pub fn project_indices(trace: &Trace, selector: Selector) -> Result<Vec<usize>, EventError> {
    let params = trace.params();
    let keep: Box<dyn Fn(&MemoryEvent) -> bool> = match selector {
        Selector::ByProc(i) => {
            params.check_proc(i)?;
            Box::new(move |e| e.proc == i)
        }
        Selector::ByLoc(j) => {
            params.check_loc(j)?;
            Box::new(move |e| e.loc == j)
        }
        Selector::WritesToLoc(j) => {
            params.check_loc(j)?;
            Box::new(move |e| e.loc == j && e.is_write())
        }
        Selector::ReadsToLoc(j) => {
            params.check_loc(j)?;
            Box::new(move |e| e.loc == j && e.is_read())
        }
    };
    Ok(trace.events().iter().enumerate().filter(|(_, e)| keep(e)).map(|(i, _)| i + 1).collect())
}

/// A per-location data renaming `λ(loc, data)` with `λ(j, 0) = 0`.
///
/// Values map into `0..=bound`. The entry for value `0` is implicit and can
/// not be overridden.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenamingFunction {
    bound: DataValue,
    map: BTreeMap<(LocId, DataValue), DataValue>,
}

impl RenamingFunction {
    pub fn new(bound: DataValue) -> Self {
        RenamingFunction { bound, map: BTreeMap::new() }
    }

    /// The identity on `(1..=m) × (0..=v)`.
    pub fn identity(params: Params) -> Self {
        let mut map = BTreeMap::new();
        for j in 1..=params.m {
            for d in 1..=params.v {
                map.insert((j, d), d);
            }
        }
        RenamingFunction { bound: params.v, map }
    }

    pub fn insert(&mut self, loc: LocId, from: DataValue, to: DataValue) -> Result<(), EventError> {
        if from == 0 {
            if to != 0 {
                return Err(EventError::RenamingOfInitialValue { loc });
            }
            return Ok(());
        }
        if to > self.bound {
            return Err(EventError::Parameter(format!("renamed value {to} exceeds bound {}", self.bound)));
        }
        self.map.insert((loc, from), to);
        Ok(())
    }

    pub fn bound(&self) -> DataValue {
        self.bound
    }

    pub fn apply(&self, loc: LocId, data: DataValue) -> Option<DataValue> {
        if data == 0 {
            Some(0)
        } else {
            self.map.get(&(loc, data)).copied()
        }
    }

    /// Explicit entries, excluding the fixed `λ(j, 0) = 0`.
    pub fn entries(&self) -> impl Iterator<Item = ((LocId, DataValue), DataValue)> + '_ {
        self.map.iter().map(|(k, v)| (*k, *v))
    }
}

/// Applies `λ` to the data field of every event. The result ranges over
/// `0..=λ.bound()`.
pub fn rename_data(trace: &Trace, renaming: &RenamingFunction) -> Result<Trace, EventError> {
    let params = Params { v: renaming.bound().max(1), ..trace.params() };
    let events = trace
        .events()
        .iter()
        .map(|e| {
            renaming
                .apply(e.loc, e.data)
                .map(|data| MemoryEvent { data, ..*e })
                .ok_or(EventError::MissingRenaming { loc: e.loc, data: e.data })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Trace::new(params, events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationKind {
    Processor,
    Location,
}

/// A bijection on `1..=size`, stored as its image vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Permutation {
    images: Vec<u32>,
}

impl Permutation {
    /// `images[x - 1]` is the image of `x`.
    pub fn new(images: Vec<u32>) -> Result<Self, EventError> {
        let size = images.len();
        let mut seen = vec![false; size];
        for &y in &images {
            let ok = y >= 1 && (y as usize) <= size && !seen[y as usize - 1];
            if !ok {
                return Err(EventError::Parameter(format!("{images:?} is not a bijection on 1..={size}")));
            }
            seen[y as usize - 1] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(size: u32) -> Self {
        Permutation { images: (1..=size).collect() }
    }

    /// The transposition swapping `a` and `b`.
    pub fn swap(size: u32, a: u32, b: u32) -> Result<Self, EventError> {
        let mut images: Vec<u32> = (1..=size).collect();
        if a == 0 || b == 0 || a > size || b > size {
            return Err(EventError::Parameter(format!("swap ({a} {b}) outside 1..={size}")));
        }
        images.swap(a as usize - 1, b as usize - 1);
        Ok(Permutation { images })
    }

    pub fn size(&self) -> u32 {
        self.images.len() as u32
    }

    pub fn apply(&self, x: u32) -> u32 {
        self.images[x as usize - 1]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.images.len()];
        for (x, &y) in self.images.iter().enumerate() {
            inv[y as usize - 1] = x as u32 + 1;
        }
        Permutation { images: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(x, &y)| y as usize == x + 1)
    }

    pub fn images(&self) -> &[u32] {
        &self.images
    }

    /// Every permutation of `1..=size` in lexicographic order of images.
    pub fn all(size: u32) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<u32> = (1..=size).collect();
        loop {
            out.push(Permutation { images: cur.clone() });
            if !next_permutation(&mut cur) {
                break;
            }
        }
        out
    }
}

/// Advances `items` to its lexicographic successor; false when it was last.
pub(crate) fn next_permutation<T: Ord>(items: &mut [T]) -> bool {
    if items.len() < 2 {
        return false;
    }
    let mut i = items.len() - 1;
    while i > 0 && items[i - 1] >= items[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = items.len() - 1;
    while items[j] <= items[i - 1] {
        j -= 1;
    }
    items.swap(i - 1, j);
    items[i..].reverse();
    true
}

/// Maps the processor (or location) field of every event through `perm`.
pub fn permute(trace: &Trace, kind: PermutationKind, perm: &Permutation) -> Result<Trace, EventError> {
    let params = trace.params();
    let expected = match kind {
        PermutationKind::Processor => params.n,
        PermutationKind::Location => params.m,
    };
    if perm.size() != expected {
        return Err(EventError::Parameter(format!(
            "{kind:?} permutation has size {} but the trace has {expected}",
            perm.size()
        )));
    }
    let events = trace.events().iter().map(|e| permute_event(e, kind, perm)).collect();
    Ok(Trace { params, events })
}

pub fn permute_event(e: &MemoryEvent, kind: PermutationKind, perm: &Permutation) -> MemoryEvent {
    match kind {
        PermutationKind::Processor => MemoryEvent { proc: perm.apply(e.proc), ..*e },
        PermutationKind::Location => MemoryEvent { loc: perm.apply(e.loc), ..*e },
    }
}
