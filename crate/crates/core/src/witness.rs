//! Write-order witnesses, the expanded per-location order, the constraint
//! graph over a trace, and cycle search (plain, k-nice and canonical k-nice).
//!
//! Only the simple witness ships: writes to a location are ordered by their
//! position in the trace. Other witnesses can implement [`Witness`].

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{is_causal, is_unambiguous};
use crate::events::{LocId, ProcId, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WitnessError {
    #[error("trace is not unambiguous; the expanded order is undefined")]
    Ambiguous,
    #[error("trace is not causal; the expanded order is undefined")]
    NonCausal,
    #[error("location {0} is out of range")]
    Location(LocId),
    #[error("k = {k} is outside 1..={max}")]
    KOutOfRange { k: u32, max: u32 },
}

/// A total order on the writes to each location.
pub trait Witness {
    /// Whether write `a` precedes write `b` (both 1-based positions writing
    /// to `loc`).
    fn write_before(&self, trace: &Trace, loc: LocId, a: usize, b: usize) -> bool;
}

/// Orders writes to a location by trace position.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleWitness;

impl Witness for SimpleWitness {
    fn write_before(&self, _trace: &Trace, _loc: LocId, a: usize, b: usize) -> bool {
        a < b
    }
}

fn check_preconditions(trace: &Trace) -> Result<(), WitnessError> {
    if !is_unambiguous(trace) {
        return Err(WitnessError::Ambiguous);
    }
    if !is_causal(trace) {
        return Err(WitnessError::NonCausal);
    }
    Ok(())
}

/// The expanded order at `loc` under the simple witness.
pub fn expanded_order(trace: &Trace, loc: LocId) -> Result<BTreeSet<(usize, usize)>, WitnessError> {
    expanded_order_with(trace, loc, &SimpleWitness)
}

pub fn expanded_order_with<W: Witness>(
    trace: &Trace,
    loc: LocId,
    witness: &W,
) -> Result<BTreeSet<(usize, usize)>, WitnessError> {
    if loc == 0 || loc > trace.params().m {
        return Err(WitnessError::Location(loc));
    }
    check_preconditions(trace)?;
    Ok(expanded_order_unchecked(trace, loc, witness))
}

fn expanded_order_unchecked<W: Witness>(trace: &Trace, loc: LocId, witness: &W) -> BTreeSet<(usize, usize)> {
    let at_loc: Vec<usize> = trace.indices().filter(|&x| trace.get(x).loc == loc).collect();
    // Unambiguity makes the source write of a nonzero value unique.
    let source_write = |x: usize| {
        let d = trace.get(x).data;
        at_loc.iter().copied().find(|&w| trace.get(w).is_write() && trace.get(w).data == d && d != 0)
    };
    let sources: Vec<Option<usize>> = at_loc.iter().map(|&x| source_write(x)).collect();

    let mut pairs = BTreeSet::new();
    for (xi, &x) in at_loc.iter().enumerate() {
        let ex = trace.get(x);
        for (yi, &y) in at_loc.iter().enumerate() {
            let ey = trace.get(y);
            let same_value_write_read = ex.data == ey.data && ex.is_write() && ey.is_read();
            let initial_before_written = ex.data == 0 && ey.data != 0;
            let ordered_sources = match (sources[xi], sources[yi]) {
                (Some(a), Some(b)) => a != b && witness.write_before(trace, loc, a, b),
                _ => false,
            };
            if same_value_write_read || initial_before_written || ordered_sources {
                pairs.insert((x, y));
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeLabel {
    Processor(ProcId),
    Location(LocId),
}

/// The union of per-processor program order and per-location expanded order
/// over the positions of one trace.
///
/// Program-order edges are not materialized: `⟨u,v⟩` is a `Processor(i)`
/// edge iff both events belong to `i` and `u < v`.
#[derive(Debug, Clone)]
pub struct ConstraintGraph {
    trace: Trace,
    /// `loc_edges[j - 1]`: expanded order at location `j`.
    loc_edges: Vec<BTreeSet<(usize, usize)>>,
    /// `loc_succ[u - 1]`: location successors of `u`.
    loc_succ: Vec<Vec<usize>>,
    /// Next position of the same processor, if any.
    proc_next: Vec<Option<usize>>,
}

/// Builds the constraint graph under the simple witness.
pub fn build_constraint_graph(trace: &Trace) -> Result<ConstraintGraph, WitnessError> {
    build_constraint_graph_with(trace, &SimpleWitness)
}

pub fn build_constraint_graph_with<W: Witness>(trace: &Trace, witness: &W) -> Result<ConstraintGraph, WitnessError> {
    check_preconditions(trace)?;
    let m = trace.params().m;
    let loc_edges: Vec<_> = (1..=m).map(|j| expanded_order_unchecked(trace, j, witness)).collect();
    let mut loc_succ = vec![Vec::new(); trace.len()];
    for edges in &loc_edges {
        for &(x, y) in edges {
            loc_succ[x - 1].push(y);
        }
    }
    let mut proc_next = vec![None; trace.len()];
    let mut last: Vec<Option<usize>> = vec![None; trace.params().n as usize];
    for u in trace.indices() {
        let p = trace.get(u).proc as usize - 1;
        if let Some(prev) = last[p] {
            proc_next[prev - 1] = Some(u);
        }
        last[p] = Some(u);
    }
    Ok(ConstraintGraph { trace: trace.clone(), loc_edges, loc_succ, proc_next })
}

impl ConstraintGraph {
    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn vertex_count(&self) -> usize {
        self.trace.len()
    }

    /// The processor labelling `⟨u,v⟩`, if it is a program-order edge.
    pub fn processor_edge(&self, u: usize, v: usize) -> Option<ProcId> {
        let (eu, ev) = (self.trace.get(u), self.trace.get(v));
        (u < v && eu.proc == ev.proc).then_some(eu.proc)
    }

    pub fn has_location_edge(&self, u: usize, v: usize, loc: LocId) -> bool {
        loc >= 1 && loc as usize <= self.loc_edges.len() && self.loc_edges[loc as usize - 1].contains(&(u, v))
    }

    pub fn location_edges(&self, loc: LocId) -> &BTreeSet<(usize, usize)> {
        &self.loc_edges[loc as usize - 1]
    }

    /// Whether `⟨u,v⟩` is an edge with the given label.
    pub fn has_edge(&self, u: usize, v: usize, label: EdgeLabel) -> bool {
        match label {
            EdgeLabel::Processor(i) => self.processor_edge(u, v) == Some(i),
            EdgeLabel::Location(j) => self.has_location_edge(u, v, j),
        }
    }

    /// Every labelled edge, program order fully expanded.
    pub fn edges(&self) -> Vec<(usize, usize, EdgeLabel)> {
        let mut out = Vec::new();
        for u in self.trace.indices() {
            for v in u + 1..=self.trace.len() {
                if let Some(i) = self.processor_edge(u, v) {
                    out.push((u, v, EdgeLabel::Processor(i)));
                }
            }
        }
        for (j, edges) in self.loc_edges.iter().enumerate() {
            out.extend(edges.iter().map(|&(x, y)| (x, y, EdgeLabel::Location(j as u32 + 1))));
        }
        out
    }

    /// Successors sufficient for reachability: the next event of the same
    /// processor plus all location successors.
    fn successors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.proc_next[u - 1].into_iter().chain(self.loc_succ[u - 1].iter().copied())
    }
}

/// Some cycle of the graph as a vertex sequence, or `None` iff acyclic.
pub fn find_cycle(g: &ConstraintGraph) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }
    let n = g.vertex_count();
    let mut color = vec![Color::White; n + 1];
    let mut path: Vec<usize> = Vec::new();
    for root in 1..=n {
        if color[root] != Color::White {
            continue;
        }
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(root, g.successors(root).collect(), 0)];
        color[root] = Color::Grey;
        path.push(root);
        while let Some((u, succ, next)) = stack.last_mut() {
            if *next == succ.len() {
                color[*u] = Color::Black;
                path.pop();
                stack.pop();
                continue;
            }
            let v = succ[*next];
            *next += 1;
            match color[v] {
                Color::Grey => {
                    let start = path.iter().position(|&x| x == v).expect("grey vertex is on path");
                    return Some(path[start..].to_vec());
                }
                Color::White => {
                    color[v] = Color::Grey;
                    path.push(v);
                    let s = g.successors(v).collect();
                    stack.push((v, s, 0));
                }
                Color::Black => {}
            }
        }
    }
    None
}

/// A k-nice cycle `u_1, v_1, …, u_k, v_k`.
///
/// `⟨u_x, v_x⟩` is a `Processor(procs[x])` edge and the edge entering `u_x`
/// (from `v_{x-1}`, cyclically) is a `Location(locs[x])` edge; indices here
/// are 0-based into the label vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NiceCycle {
    pub k: u32,
    pub vertices: Vec<usize>,
    pub procs: Vec<ProcId>,
    pub locs: Vec<LocId>,
    pub canonical: bool,
}

impl NiceCycle {
    pub fn u(&self, x: usize) -> usize {
        self.vertices[2 * (x - 1)]
    }

    pub fn v(&self, x: usize) -> usize {
        self.vertices[2 * (x - 1) + 1]
    }

    /// Whether the labels are the canonical ones: processor `x` and location
    /// `x` at step `x`.
    pub fn has_canonical_labels(&self) -> bool {
        (1..=self.k).all(|x| self.procs[x as usize - 1] == x && self.locs[x as usize - 1] == x)
    }
}

/// Checks every k-nice (and, if flagged, canonical) condition against `g`.
pub fn verify_nice_cycle(g: &ConstraintGraph, c: &NiceCycle) -> bool {
    let k = c.k as usize;
    if k == 0 || c.vertices.len() != 2 * k || c.procs.len() != k || c.locs.len() != k {
        return false;
    }
    if c.vertices.iter().any(|&x| x == 0 || x > g.vertex_count()) {
        return false;
    }
    let distinct = |xs: &[u32]| xs.iter().collect::<BTreeSet<_>>().len() == xs.len();
    if c.vertices.iter().collect::<BTreeSet<_>>().len() != 2 * k || !distinct(&c.procs) || !distinct(&c.locs) {
        return false;
    }
    for x in 1..=k {
        let next = x % k + 1;
        if !g.has_edge(c.u(x), c.v(x), EdgeLabel::Processor(c.procs[x - 1])) {
            return false;
        }
        if !g.has_edge(c.v(x), c.u(next), EdgeLabel::Location(c.locs[next - 1])) {
            return false;
        }
    }
    !c.canonical || c.has_canonical_labels()
}

struct NiceSearch<'a> {
    g: &'a ConstraintGraph,
    k: u32,
    canonical: bool,
    vertices: Vec<usize>,
    procs: Vec<ProcId>,
    locs: Vec<LocId>,
}

impl NiceSearch<'_> {
    fn event(&self, x: usize) -> &crate::events::MemoryEvent {
        self.g.trace.get(x)
    }

    /// Chooses `u_x` given that `vertices` holds `u_1, v_1, …, v_{x-1}`.
    fn choose_u(&mut self, x: u32) -> bool {
        let n = self.g.vertex_count();
        for u in 1..=n {
            let e = *self.event(u);
            if self.vertices.contains(&u) || self.procs.contains(&e.proc) || self.locs.contains(&e.loc) {
                continue;
            }
            if self.canonical && (e.proc != x || e.loc != x) {
                continue;
            }
            if let Some(&prev_v) = self.vertices.last() {
                if !self.g.has_location_edge(prev_v, u, e.loc) {
                    continue;
                }
            }
            self.vertices.push(u);
            self.procs.push(e.proc);
            self.locs.push(e.loc);
            if self.choose_v(x) {
                return true;
            }
            self.vertices.pop();
            self.procs.pop();
            self.locs.pop();
        }
        false
    }

    fn choose_v(&mut self, x: u32) -> bool {
        let u = *self.vertices.last().unwrap();
        let proc = self.event(u).proc;
        let want_loc = if x == self.k { self.locs[0] } else { 0 };
        for v in u + 1..=self.g.vertex_count() {
            let e = *self.event(v);
            if e.proc != proc || self.vertices.contains(&v) {
                continue;
            }
            if self.canonical && e.loc != x % self.k + 1 {
                continue;
            }
            if x == self.k {
                // Close the cycle back into u_1.
                if e.loc != want_loc || !self.g.has_location_edge(v, self.vertices[0], want_loc) {
                    continue;
                }
                self.vertices.push(v);
                return true;
            }
            if self.locs.contains(&e.loc) {
                continue;
            }
            self.vertices.push(v);
            if self.choose_u(x + 1) {
                return true;
            }
            self.vertices.pop();
        }
        false
    }
}

/// Looks for a k-nice cycle; with `canonical_only`, only for a canonical one.
///
/// Candidates are tried in lexicographic order of their vertex tuples, so
/// the result is deterministic.
pub fn find_nice_cycle(g: &ConstraintGraph, k: u32, canonical_only: bool) -> Result<Option<NiceCycle>, WitnessError> {
    let max = g.trace.params().min_nm();
    if k == 0 || k > max {
        return Err(WitnessError::KOutOfRange { k, max });
    }
    let mut search = NiceSearch {
        g,
        k,
        canonical: canonical_only,
        vertices: Vec::with_capacity(2 * k as usize),
        procs: Vec::with_capacity(k as usize),
        locs: Vec::with_capacity(k as usize),
    };
    if !search.choose_u(1) {
        return Ok(None);
    }
    let mut cycle =
        NiceCycle { k, vertices: search.vertices, procs: search.procs, locs: search.locs, canonical: false };
    cycle.canonical = cycle.has_canonical_labels();
    debug_assert!(verify_nice_cycle(g, &cycle));
    Ok(Some(cycle))
}

/// The smallest k with a k-nice cycle, searching k = 1..=min(n, m).
pub fn find_min_nice_cycle(g: &ConstraintGraph, canonical_only: bool) -> Option<NiceCycle> {
    (1..=g.trace.params().min_nm()).find_map(|k| find_nice_cycle(g, k, canonical_only).expect("k in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{MemoryEvent as E, Params};

    fn trace(n: u32, m: u32, v: u32, events: Vec<E>) -> Trace {
        Trace::new(Params::new(n, m, v).unwrap(), events).unwrap()
    }

    fn example() -> Trace {
        trace(2, 2, 1, vec![E::write(1, 1, 1), E::read(2, 1, 0), E::read(2, 1, 1)])
    }

    fn violation() -> Trace {
        trace(2, 2, 1, vec![E::write(1, 1, 1), E::read(1, 2, 0), E::write(2, 2, 1), E::read(2, 1, 0)])
    }

    fn set(pairs: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn expanded_order_examples() {
        assert_eq!(expanded_order(&example(), 1).unwrap(), set(&[(2, 1), (2, 3), (1, 3)]));
        assert!(expanded_order(&example(), 2).unwrap().is_empty());
        assert!(expanded_order(&trace(1, 1, 1, vec![E::read(1, 1, 0)]), 1).unwrap().is_empty());
        let two_writes = trace(2, 1, 2, vec![E::write(1, 1, 1), E::write(2, 1, 2)]);
        assert_eq!(expanded_order(&two_writes, 1).unwrap(), set(&[(1, 2)]));
    }

    #[test]
    fn reads_only_location_has_empty_order() {
        let t = trace(2, 2, 1, vec![E::read(1, 2, 0), E::read(2, 2, 0), E::write(1, 1, 1)]);
        assert!(expanded_order(&t, 2).unwrap().is_empty());
    }

    #[test]
    fn expanded_order_preconditions() {
        let ambiguous = trace(2, 1, 1, vec![E::write(1, 1, 1), E::write(2, 1, 1)]);
        assert_eq!(expanded_order(&ambiguous, 1), Err(WitnessError::Ambiguous));
        let conjured = trace(1, 1, 3, vec![E::read(1, 1, 3)]);
        assert_eq!(expanded_order(&conjured, 1), Err(WitnessError::NonCausal));
        assert_eq!(build_constraint_graph(&conjured).err(), Some(WitnessError::NonCausal));
        assert_eq!(expanded_order(&example(), 3), Err(WitnessError::Location(3)));
    }

    #[test]
    fn example_graph_is_acyclic() {
        let g = build_constraint_graph(&example()).unwrap();
        assert_eq!(g.processor_edge(2, 3), Some(2));
        assert_eq!(g.processor_edge(1, 2), None);
        assert_eq!(g.location_edges(1), &set(&[(2, 1), (2, 3), (1, 3)]));
        assert_eq!(find_cycle(&g), None);
        for k in 1..=2 {
            assert_eq!(find_nice_cycle(&g, k, false).unwrap(), None);
        }
    }

    #[test]
    fn violation_graph_has_canonical_two_cycle() {
        let g = build_constraint_graph(&violation()).unwrap();
        assert_eq!(g.processor_edge(1, 2), Some(1));
        assert!(g.has_location_edge(2, 3, 2));
        assert_eq!(g.processor_edge(3, 4), Some(2));
        assert!(g.has_location_edge(4, 1, 1));
        assert_eq!(find_cycle(&g), Some(vec![1, 2, 3, 4]));

        assert_eq!(find_nice_cycle(&g, 1, false).unwrap(), None);
        let c = find_nice_cycle(&g, 2, true).unwrap().unwrap();
        assert_eq!(c.vertices, vec![1, 2, 3, 4]);
        assert_eq!(c.procs, vec![1, 2]);
        assert_eq!(c.locs, vec![1, 2]);
        assert!(c.canonical);
        assert!(verify_nice_cycle(&g, &c));
    }

    #[test]
    fn one_nice_cycle_from_stale_own_read() {
        let t = trace(1, 1, 1, vec![E::write(1, 1, 1), E::read(1, 1, 0)]);
        let g = build_constraint_graph(&t).unwrap();
        let c = find_nice_cycle(&g, 1, true).unwrap().unwrap();
        assert_eq!(c.vertices, vec![1, 2]);
        assert!(c.canonical);
    }

    #[test]
    fn non_canonical_cycle_needs_relabelling() {
        // Same shape as the violation with processors swapped.
        let t = trace(2, 2, 1, vec![E::write(2, 1, 1), E::read(2, 2, 0), E::write(1, 2, 1), E::read(1, 1, 0)]);
        let g = build_constraint_graph(&t).unwrap();
        assert_eq!(find_nice_cycle(&g, 2, true).unwrap(), None);
        let c = find_nice_cycle(&g, 2, false).unwrap().unwrap();
        assert!(!c.canonical);
        assert!(verify_nice_cycle(&g, &c));
    }

    #[test]
    fn k_range_is_checked() {
        let g = build_constraint_graph(&example()).unwrap();
        assert!(matches!(find_nice_cycle(&g, 0, false), Err(WitnessError::KOutOfRange { .. })));
        assert!(matches!(find_nice_cycle(&g, 3, false), Err(WitnessError::KOutOfRange { .. })));
    }

    #[test]
    fn empty_graph() {
        let g = build_constraint_graph(&trace(2, 2, 1, vec![])).unwrap();
        assert_eq!(g.vertex_count(), 0);
        assert_eq!(find_cycle(&g), None);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn tampered_cycles_fail_verification() {
        let g = build_constraint_graph(&violation()).unwrap();
        let good = find_nice_cycle(&g, 2, true).unwrap().unwrap();
        let mut bad = good.clone();
        bad.vertices.swap(0, 1);
        assert!(!verify_nice_cycle(&g, &bad));
        let mut bad = good.clone();
        bad.locs = vec![2, 1];
        assert!(!verify_nice_cycle(&g, &bad));
        let mut bad = good;
        bad.procs = vec![1, 1];
        assert!(!verify_nice_cycle(&g, &bad));
    }
}
