//! Sequential-consistency analysis of memory traces and explicit-state model
//! checking of cache-coherence protocols against SC.
//!
//! Traces are checked directly through constraint graphs built from a
//! witness ordering of writes, or against a brute-force oracle. Protocols are
//! checked by composing them with small monitor automata that detect
//! canonical k-nice cycles.

pub mod analysis;
pub mod checker;
pub mod corpus;
pub mod events;
pub mod jsonl;
pub mod monitors;
pub mod protocol;
pub mod witness;

pub use analysis::{
    check_sc_oracle, check_sc_oracle_with, is_causal, is_serial, is_unambiguous, OracleEngine, OracleError,
    OracleOptions, SerialWitness,
};
pub use checker::{
    check_all_k, extract_cycle, model_check, validate_assumptions, AssumptionReport, CheckError, CheckOptions,
    Counterexample, SearchOrder, Stats, Verdict,
};
pub use events::{
    permute, project_indices, project_trace, rename_data, DataValue, Event, EventError, InternalEvent, LocId,
    MemoryEvent, Op, Params, Permutation, PermutationKind, ProcId, RenamingFunction, Run, Selector, Trace,
};
pub use monitors::{accepts, Automaton, CheckState, ConstrainState, MonitorBank};
pub use protocol::{replay, replay_unambiguous, Piranha, PiranhaState, ProtocolError, ProtocolSpec};
pub use witness::{
    build_constraint_graph, expanded_order, find_cycle, find_min_nice_cycle, find_nice_cycle, verify_nice_cycle,
    ConstraintGraph, EdgeLabel, NiceCycle, SimpleWitness, Witness, WitnessError,
};
