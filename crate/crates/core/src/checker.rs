//! Explicit-state search of protocol × Constrain monitors × Check monitors
//! for a run accepted by every Check automaton, and bounded empirical
//! validation of the causality and symmetry assumptions.

use std::collections::{HashMap, HashSet, VecDeque};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::is_causal;
use crate::events::{permute, project_trace, Event, EventError, MemoryEvent, Permutation, PermutationKind, Run, Trace};
use crate::jsonl::event_to_json;
use crate::monitors::{accepts, Automaton, CheckPhase, CheckState, ConstrainState, MonitorBank};
use crate::protocol::{permute_run, replay, replay_unambiguous, ProtocolError, ProtocolSpec};
use crate::witness::{build_constraint_graph, verify_nice_cycle, NiceCycle, WitnessError};

pub const DEFAULT_MAX_STATES: usize = 50_000_000;
/// Data values the monitors understand: `0..=2`.
pub const MONITOR_DATA_BOUND: u32 = 2;
const REALIZE_STATE_CAP: usize = 2_000_000;
/// Frontier states expanded per batch in breadth-first search.
const BATCH: usize = 8192;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("k = {k} is outside 1..={max}")]
    KOutOfRange { k: u32, max: u32 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// An extracted certificate failed verification; this indicates a bug.
    #[error("internal soundness error: {0}")]
    Soundness(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Witness(#[from] WitnessError),
    #[error(transparent)]
    Event(#[from] EventError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchOrder {
    #[default]
    Bfs,
    Dfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub max_states: usize,
    pub search: SearchOrder,
    /// Worker threads for breadth-first expansion; 1 is fully sequential.
    pub threads: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { max_states: DEFAULT_MAX_STATES, search: SearchOrder::Bfs, threads: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Stats {
    pub states: u64,
    pub transitions: u64,
    pub max_depth: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample<S> {
    pub k: u32,
    pub initial_state: S,
    pub run: Run,
    pub cycle: NiceCycle,
    pub unambiguous_trace: Trace,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<S> {
    NoViolation {
        k: u32,
        stats: Stats,
    },
    Counterexample(Box<Counterexample<S>>),
    /// The state limit was reached before the product was exhausted.
    Inconclusive {
        k: u32,
        stats: Stats,
    },
}

impl<S> Verdict<S> {
    pub fn k(&self) -> u32 {
        match self {
            Verdict::NoViolation { k, .. } | Verdict::Inconclusive { k, .. } => *k,
            Verdict::Counterexample(c) => c.k,
        }
    }

    pub fn stats(&self) -> Stats {
        match self {
            Verdict::NoViolation { stats, .. } | Verdict::Inconclusive { stats, .. } => *stats,
            Verdict::Counterexample(c) => c.stats,
        }
    }

    pub fn result_name(&self) -> &'static str {
        match self {
            Verdict::NoViolation { .. } => "no_violation",
            Verdict::Counterexample(_) => "counterexample",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }

    pub fn is_counterexample(&self) -> bool {
        matches!(self, Verdict::Counterexample(_))
    }
}

impl<S: Serialize> Verdict<S> {
    /// `{"k", "result", "states", "transitions", "max_depth", …}`; counterexamples
    /// add `"run"`, `"cycle"`, `"unambiguous_trace"` and `"initial_state"`.
    pub fn to_json(&self) -> serde_json::Value {
        let stats = self.stats();
        let mut obj = serde_json::Map::new();
        obj.insert("k".into(), self.k().into());
        obj.insert("result".into(), self.result_name().into());
        obj.insert("states".into(), stats.states.into());
        obj.insert("transitions".into(), stats.transitions.into());
        obj.insert("max_depth".into(), stats.max_depth.into());
        if let Verdict::Counterexample(c) = self {
            obj.insert("run".into(), c.run.events().iter().map(event_to_json).collect());
            obj.insert("cycle".into(), serde_json::to_value(&c.cycle).expect("cycle serializes"));
            obj.insert(
                "unambiguous_trace".into(),
                serde_json::to_value(c.unambiguous_trace.events()).expect("trace serializes"),
            );
            obj.insert("initial_state".into(), serde_json::to_value(&c.initial_state).expect("state serializes"));
        }
        serde_json::Value::Object(obj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProductState<S> {
    pub protocol: S,
    pub monitors: MonitorBank,
}

struct Node {
    parent: u32,
    /// Index into the parent's enabled-event list, or into the initial
    /// states for roots.
    via: u32,
}

const ROOT: u32 = u32::MAX;

struct Search<'a, P: ProtocolSpec> {
    protocol: &'a P,
    k: u32,
    visited: HashMap<Box<[u8]>, u32>,
    nodes: Vec<Node>,
    stats: Stats,
    scratch: Vec<u8>,
}

enum Insert {
    Seen,
    New(u32),
}

impl<'a, P: ProtocolSpec> Search<'a, P> {
    fn encode(&mut self, s: &ProductState<P::State>) -> Box<[u8]> {
        self.scratch.clear();
        self.protocol.encode_state(&s.protocol, &mut self.scratch);
        s.monitors.encode(&mut self.scratch);
        self.scratch.as_slice().into()
    }

    fn insert(&mut self, s: &ProductState<P::State>, parent: u32, via: u32) -> Insert {
        let key = self.encode(s);
        if self.visited.contains_key(&key) {
            return Insert::Seen;
        }
        let id = self.nodes.len() as u32;
        self.visited.insert(key, id);
        self.nodes.push(Node { parent, via });
        self.stats.states += 1;
        Insert::New(id)
    }

    fn successors(protocol: &P, s: &ProductState<P::State>) -> Vec<(u32, ProductState<P::State>)> {
        let mut out = Vec::new();
        for (idx, e) in protocol.enabled(&s.protocol).iter().enumerate() {
            let monitors = match e {
                Event::Memory(me) => match s.monitors.step(me) {
                    Some(b) => b,
                    None => continue,
                },
                Event::Internal(_) => s.monitors.clone(),
            };
            let next = protocol.step(&s.protocol, e).expect("enabled events step");
            out.push((idx as u32, ProductState { protocol: next, monitors }));
        }
        out
    }

    fn path_to(&self, id: u32) -> (usize, Vec<u32>) {
        let mut vias = Vec::new();
        let mut cur = id;
        loop {
            let node = &self.nodes[cur as usize];
            if node.parent == ROOT {
                vias.reverse();
                return (node.via as usize, vias);
            }
            vias.push(node.via);
            cur = node.parent;
        }
    }

    fn counterexample(&self, id: u32) -> Result<Verdict<P::State>, CheckError> {
        let (init_idx, vias) = self.path_to(id);
        let initial = self.protocol.initial_states().swap_remove(init_idx);
        let mut state = initial.clone();
        let mut events = Vec::with_capacity(vias.len());
        for via in vias {
            let e = self.protocol.enabled(&state).swap_remove(via as usize);
            state = self.protocol.step(&state, &e)?;
            events.push(e);
        }
        let run = Run::new(self.protocol.params(), events)?;
        let (unambiguous_trace, cycle) = extract_cycle(self.protocol, &run, &initial, self.k)?;
        Ok(Verdict::Counterexample(Box::new(Counterexample {
            k: self.k,
            initial_state: initial,
            run,
            cycle,
            unambiguous_trace,
            stats: self.stats,
        })))
    }
}

fn check_k<P: ProtocolSpec>(protocol: &P, k: u32) -> Result<(), CheckError> {
    let max = protocol.params().min_nm();
    if k == 0 || k > max {
        return Err(CheckError::KOutOfRange { k, max });
    }
    Ok(())
}

/// Searches the product of `protocol` with `Constrain_k(1..=m)` and
/// `Check_k(1..=k)` for a state where every Check automaton accepts.
///
/// The protocol must range over data values `0..=2`.
pub fn model_check<P: ProtocolSpec>(
    protocol: &P,
    k: u32,
    options: CheckOptions,
) -> Result<Verdict<P::State>, CheckError> {
    check_k(protocol, k)?;
    let params = protocol.params();
    if params.v != MONITOR_DATA_BOUND {
        return Err(CheckError::Config(format!(
            "monitors need data values 0..={MONITOR_DATA_BOUND}, protocol has v = {}",
            params.v
        )));
    }
    if options.threads == 0 {
        return Err(CheckError::Config("threads must be at least 1".into()));
    }
    let mut search = Search {
        protocol,
        k,
        visited: HashMap::new(),
        nodes: Vec::new(),
        stats: Stats::default(),
        scratch: Vec::new(),
    };
    let mut roots = Vec::new();
    for (idx, s) in protocol.initial_states().into_iter().enumerate() {
        let ps = ProductState { protocol: s, monitors: MonitorBank::new(k, params.m) };
        if let Insert::New(id) = search.insert(&ps, ROOT, idx as u32) {
            roots.push((id, ps));
        }
    }
    match options.search {
        SearchOrder::Bfs => bfs(&mut search, roots, options),
        SearchOrder::Dfs => dfs(&mut search, roots, options),
    }
}

fn bfs<P: ProtocolSpec>(
    search: &mut Search<'_, P>,
    roots: Vec<(u32, ProductState<P::State>)>,
    options: CheckOptions,
) -> Result<Verdict<P::State>, CheckError> {
    let pool = if options.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.threads)
                .build()
                .map_err(|e| CheckError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let protocol = search.protocol;
    let k = search.k;
    let mut frontier = roots;
    let mut depth = 0;
    while !frontier.is_empty() {
        search.stats.max_depth = depth;
        let mut next = Vec::new();
        for batch in frontier.chunks(BATCH) {
            let expand = |item: &(u32, ProductState<P::State>)| Search::successors(protocol, &item.1);
            let expanded: Vec<_> = match &pool {
                Some(pool) => pool.install(|| batch.par_iter().map(expand).collect()),
                None => batch.iter().map(expand).collect(),
            };
            // Sequential merge keeps the result independent of scheduling.
            for ((parent, _), succs) in batch.iter().zip(expanded) {
                for (via, s) in succs {
                    search.stats.transitions += 1;
                    if let Insert::New(id) = search.insert(&s, *parent, via) {
                        if s.monitors.all_checks_accepting() {
                            search.stats.max_depth = depth + 1;
                            return search.counterexample(id);
                        }
                        if search.nodes.len() > options.max_states {
                            return Ok(Verdict::Inconclusive { k, stats: search.stats });
                        }
                        next.push((id, s));
                    }
                }
            }
        }
        frontier = next;
        depth += 1;
    }
    Ok(Verdict::NoViolation { k, stats: search.stats })
}

fn dfs<P: ProtocolSpec>(
    search: &mut Search<'_, P>,
    roots: Vec<(u32, ProductState<P::State>)>,
    options: CheckOptions,
) -> Result<Verdict<P::State>, CheckError> {
    let protocol = search.protocol;
    let k = search.k;
    let mut stack: Vec<(u32, u32, ProductState<P::State>)> =
        roots.into_iter().rev().map(|(id, s)| (id, 0, s)).collect();
    while let Some((id, depth, s)) = stack.pop() {
        search.stats.max_depth = search.stats.max_depth.max(depth);
        let succs = Search::successors(protocol, &s);
        for (via, t) in succs.into_iter().rev() {
            search.stats.transitions += 1;
            if let Insert::New(child) = search.insert(&t, id, via) {
                if t.monitors.all_checks_accepting() {
                    search.stats.max_depth = search.stats.max_depth.max(depth + 1);
                    return search.counterexample(child);
                }
                if search.nodes.len() > options.max_states {
                    return Ok(Verdict::Inconclusive { k, stats: search.stats });
                }
                stack.push((child, depth + 1, t));
            }
        }
    }
    Ok(Verdict::NoViolation { k, stats: search.stats })
}

/// Runs [`model_check`] for every `k` in `1..=min(n, m)`.
pub fn check_all_k<P: ProtocolSpec>(protocol: &P, options: CheckOptions) -> Result<Vec<Verdict<P::State>>, CheckError> {
    (1..=protocol.params().min_nm()).map(|k| model_check(protocol, k, options)).collect()
}

/// Turns a run accepted by every monitor into an unambiguous trace and the
/// canonical k-nice cycle in its constraint graph.
///
/// `u_i` is where `Check_k(i)` first enters `B`, `v_i` where it first enters
/// `Err`. The cycle is verified against the graph before it is returned.
pub fn extract_cycle<P: ProtocolSpec>(
    protocol: &P,
    run: &Run,
    initial: &P::State,
    k: u32,
) -> Result<(Trace, NiceCycle), CheckError> {
    check_k(protocol, k)?;
    let observed = project_trace(run);
    if let Some(bad) = observed.events().iter().find(|e| e.data > MONITOR_DATA_BOUND) {
        return Err(CheckError::Precondition(format!("{bad} is outside data values 0..=2")));
    }
    for loc in 1..=protocol.params().m {
        if !accepts(&observed, Automaton::Constrain { k, loc }) {
            return Err(CheckError::Precondition(format!("run is not accepted by Constrain_{k}({loc})")));
        }
    }
    let mut vertices = Vec::with_capacity(2 * k as usize);
    for proc in 1..=k {
        if !accepts(&observed, Automaton::Check { k, proc }) {
            return Err(CheckError::Precondition(format!("run is not accepted by Check_{k}({proc})")));
        }
        let mut s = CheckState::initial(k, proc);
        let (mut u, mut v) = (None, None);
        for (idx, e) in observed.events().iter().enumerate() {
            let t = s.step(e);
            if s.phase == CheckPhase::A && t.phase == CheckPhase::B {
                u = Some(idx + 1);
            }
            if s.phase == CheckPhase::B && t.phase == CheckPhase::Err {
                v = Some(idx + 1);
                break;
            }
            s = t;
        }
        vertices.push(u.expect("accepted Check passes through B"));
        vertices.push(v.expect("accepted Check reaches Err"));
    }
    let replayed = replay_unambiguous(protocol, run, initial)?;
    let cycle = NiceCycle { k, vertices, procs: (1..=k).collect(), locs: (1..=k).collect(), canonical: true };
    let graph = build_constraint_graph(&replayed.trace)?;
    if !verify_nice_cycle(&graph, &cycle) {
        return Err(CheckError::Soundness(format!(
            "cycle {:?} is not a canonical {k}-nice cycle of {}",
            cycle.vertices, replayed.trace
        )));
    }
    Ok((replayed.trace, cycle))
}

/// Number of reachable protocol states, or `None` past `max_states`.
pub fn count_reachable_states<P: ProtocolSpec>(protocol: &P, max_states: usize) -> Option<usize> {
    let mut seen: HashSet<Box<[u8]>> = HashSet::new();
    let mut queue = VecDeque::new();
    let mut buf = Vec::new();
    for s in protocol.initial_states() {
        buf.clear();
        protocol.encode_state(&s, &mut buf);
        if seen.insert(buf.as_slice().into()) {
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        for e in protocol.enabled(&s) {
            let t = protocol.step(&s, &e).expect("enabled events step");
            buf.clear();
            protocol.encode_state(&t, &mut buf);
            if seen.insert(buf.as_slice().into()) {
                if seen.len() > max_states {
                    return None;
                }
                queue.push_back(t);
            }
        }
    }
    Some(seen.len())
}

/// Structural upper bound on live monitor states: `2^k · 3^k`.
pub fn monitor_state_bound(k: u32, m: u32) -> u64 {
    let constrain: u64 = (1..=m).map(|j| ConstrainState::states(k, j).len() as u64).product();
    let check = (CheckState::states().len() as u64).pow(k);
    constrain * check
}

#[derive(Debug, Clone, Serialize)]
pub struct CausalityViolation {
    pub trace: Vec<MemoryEvent>,
    pub run: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryViolation {
    pub kind: PermutationKind,
    pub permutation: Vec<u32>,
    pub trace: Vec<MemoryEvent>,
    pub permuted_trace: Vec<MemoryEvent>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AssumptionReport {
    pub depth: usize,
    /// Distinct (state, trace) pairs visited.
    pub nodes: usize,
    pub distinct_traces: usize,
    pub permutations_checked: usize,
    pub causality_violations: Vec<CausalityViolation>,
    pub symmetry_violations: Vec<SymmetryViolation>,
    pub elapsed_ms: u128,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.causality_violations.is_empty() && self.symmetry_violations.is_empty()
    }
}

fn sampled_permutations(size: u32) -> Vec<Permutation> {
    if size <= 4 {
        Permutation::all(size).into_iter().filter(|p| !p.is_identity()).collect()
    } else {
        // Transpositions (1 x) generate the symmetric group.
        (2..=size).map(|x| Permutation::swap(size, 1, x).expect("in range")).collect()
    }
}

struct RunEnumeration<'a, P: ProtocolSpec> {
    protocol: &'a P,
    /// Best remaining depth seen per (state, trace).
    memo: HashMap<(Box<[u8]>, Vec<MemoryEvent>), usize>,
    traces: HashMap<Vec<MemoryEvent>, (usize, Vec<Event>)>,
    run: Vec<Event>,
    trace: Vec<MemoryEvent>,
}

impl<P: ProtocolSpec> RunEnumeration<'_, P> {
    fn explore(&mut self, init: usize, state: &P::State, left: usize) {
        if !self.traces.contains_key(&self.trace) {
            self.traces.insert(self.trace.clone(), (init, self.run.clone()));
        }
        if left == 0 {
            return;
        }
        let mut buf = Vec::new();
        self.protocol.encode_state(state, &mut buf);
        let key = (buf.into_boxed_slice(), self.trace.clone());
        match self.memo.get(&key) {
            Some(&seen) if seen >= left => return,
            _ => {
                self.memo.insert(key, left);
            }
        }
        for e in self.protocol.enabled(state) {
            let next = self.protocol.step(state, &e).expect("enabled events step");
            let is_mem = if let Event::Memory(me) = &e {
                self.trace.push(*me);
                true
            } else {
                false
            };
            self.run.push(e);
            self.explore(init, &next, left - 1);
            self.run.pop();
            if is_mem {
                self.trace.pop();
            }
        }
    }
}

/// Whether some run of `protocol` has exactly `target` as its trace.
fn realizable<P: ProtocolSpec>(protocol: &P, target: &[MemoryEvent]) -> Option<bool> {
    let mut seen: HashSet<(Box<[u8]>, usize)> = HashSet::new();
    let mut queue = VecDeque::new();
    let mut buf = Vec::new();
    for s in protocol.initial_states() {
        buf.clear();
        protocol.encode_state(&s, &mut buf);
        if seen.insert((buf.as_slice().into(), 0)) {
            queue.push_back((s, 0usize));
        }
    }
    while let Some((s, pos)) = queue.pop_front() {
        if pos == target.len() {
            return Some(true);
        }
        for e in protocol.enabled(&s) {
            let next_pos = match &e {
                Event::Memory(me) if *me == target[pos] => pos + 1,
                Event::Memory(_) => continue,
                Event::Internal(_) => pos,
            };
            let t = protocol.step(&s, &e).expect("enabled events step");
            buf.clear();
            protocol.encode_state(&t, &mut buf);
            if seen.insert((buf.as_slice().into(), next_pos)) {
                if seen.len() > REALIZE_STATE_CAP {
                    return None;
                }
                queue.push_back((t, next_pos));
            }
        }
    }
    Some(false)
}

/// Enumerates every run of length at most `depth` and checks that each trace
/// is causal and that its processor and location permutations are traces too.
///
/// A permuted trace counts as realized if it was itself enumerated, if the
/// permuted run replays from some initial state, or if a trace-guided search
/// of the state space finds a run producing it.
pub fn validate_assumptions<P: ProtocolSpec>(protocol: &P, depth: usize) -> AssumptionReport {
    let start = Instant::now();
    let mut walk =
        RunEnumeration { protocol, memo: HashMap::new(), traces: HashMap::new(), run: Vec::new(), trace: Vec::new() };
    let initial = protocol.initial_states();
    for (idx, s) in initial.iter().enumerate() {
        walk.explore(idx, s, depth);
    }
    let params = protocol.params();
    let mut report =
        AssumptionReport { depth, nodes: walk.memo.len(), distinct_traces: walk.traces.len(), ..Default::default() };

    let mut traces: Vec<_> = walk.traces.iter().collect();
    traces.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(b.0)));
    let perms: Vec<(PermutationKind, Permutation)> = sampled_permutations(params.n)
        .into_iter()
        .map(|p| (PermutationKind::Processor, p))
        .chain(sampled_permutations(params.m).into_iter().map(|p| (PermutationKind::Location, p)))
        .collect();

    for (events, (init_idx, run_events)) in traces {
        let trace = Trace::new(params, events.clone()).expect("protocol traces respect parameters");
        let run = Run::new(params, run_events.clone()).expect("protocol runs respect parameters");
        if !is_causal(&trace) {
            report.causality_violations.push(CausalityViolation {
                trace: events.clone(),
                run: run_events.iter().map(event_to_json).collect(),
            });
        }
        debug_assert!(replay(protocol, &run, &initial[*init_idx]).is_ok());
        for (kind, perm) in &perms {
            report.permutations_checked += 1;
            let permuted = permute(&trace, *kind, perm).expect("permutation sized to parameters");
            if walk.traces.contains_key(permuted.events()) {
                continue;
            }
            let permuted_run = permute_run(protocol.internal_actions(), &run, *kind, perm).expect("same parameters");
            if initial.iter().any(|s| replay(protocol, &permuted_run, s).is_ok()) {
                continue;
            }
            if realizable(protocol, permuted.events()) != Some(false) {
                continue;
            }
            report.symmetry_violations.push(SymmetryViolation {
                kind: *kind,
                permutation: perm.images().to_vec(),
                trace: events.clone(),
                permuted_trace: permuted.events().to_vec(),
            });
        }
    }
    report.elapsed_ms = start.elapsed().as_millis();
    report
}
