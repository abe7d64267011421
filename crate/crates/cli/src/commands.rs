use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use scmc_core::analysis::{check_sc_oracle_with, OracleEngine, OracleError, OracleOptions};
use scmc_core::checker::{check_all_k, model_check, validate_assumptions, CheckOptions, SearchOrder, Verdict};
use scmc_core::events::{Params, Run, Trace};
use scmc_core::jsonl::{event_to_json, parse_run};
use scmc_core::protocol::{replay, replay_unambiguous, Piranha, ProtocolError, ProtocolSpec};
use scmc_core::{build_constraint_graph, find_cycle, find_min_nice_cycle, find_nice_cycle, is_causal, is_unambiguous};

use crate::args::{CheckArgs, Engine, KSpec, OracleArgs, ProtocolArgs, ReplayArgs, Search, TraceArgs, ValidateArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_INCONCLUSIVE: u8 = 2;
pub const EXIT_USAGE: u8 = 3;

/// A finished command: its exit status and a JSON report.
pub struct Outcome {
    pub code: u8,
    pub report: Value,
}

/// Failures that map to the usage exit status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

fn build_protocol(args: &ProtocolArgs) -> Result<Piranha, UsageError> {
    let params = Params::new(args.n, args.m, 2)?;
    Ok(Piranha::by_name(&args.protocol, params, args.queue_bound)?)
}

fn read_run(path: &Path) -> Result<Run, UsageError> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    parse_run(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

fn read_trace(path: &Path) -> Result<Trace, UsageError> {
    Ok(scmc_core::project_trace(&read_run(path)?))
}

fn trace_json(t: &Trace) -> Value {
    serde_json::to_value(t.events()).expect("events serialize")
}

pub fn check(args: &CheckArgs) -> Result<Outcome, UsageError> {
    let protocol = build_protocol(&args.protocol)?;
    let options = CheckOptions {
        max_states: args.max_states,
        search: match args.search {
            Search::Bfs => SearchOrder::Bfs,
            Search::Dfs => SearchOrder::Dfs,
        },
        threads: args.threads,
    };
    let start = Instant::now();
    let verdicts = match args.k {
        KSpec::All => check_all_k(&protocol, options)?,
        KSpec::One(k) => vec![model_check(&protocol, k, options)?],
    };
    let code = if verdicts.iter().any(Verdict::is_counterexample) {
        EXIT_VIOLATION
    } else if verdicts.iter().any(|v| matches!(v, Verdict::Inconclusive { .. })) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    };
    let report = json!({
        "command": "check",
        "protocol": protocol.name(),
        "n": args.protocol.n,
        "m": args.protocol.m,
        "queue_bound": args.protocol.queue_bound,
        "verdicts": verdicts.iter().map(Verdict::to_json).collect::<Vec<_>>(),
        "elapsed_ms": start.elapsed().as_millis() as u64,
    });
    Ok(Outcome { code, report })
}

pub fn analyze(args: &TraceArgs) -> Result<Outcome, UsageError> {
    let trace = read_trace(&args.file)?;
    let unambiguous = is_unambiguous(&trace);
    let causal = is_causal(&trace);
    let mut report = json!({
        "command": "analyze",
        "events": trace.len(),
        "unambiguous": unambiguous,
        "causal": causal,
    });
    let (code, verdict) = if !causal {
        (EXIT_VIOLATION, "not causal: some read returns a value never written; not sequentially consistent".to_string())
    } else if !unambiguous {
        (EXIT_INCONCLUSIVE, "ambiguous: constraint graph analysis needs distinct write values".to_string())
    } else {
        let g = build_constraint_graph(&trace)?;
        let cycle = find_cycle(&g);
        report["acyclic"] = json!(cycle.is_none());
        report["cycle"] = json!(cycle);
        match find_min_nice_cycle(&g, false) {
            None => (EXIT_OK, "acyclic; SC-consistent under simple witness".to_string()),
            Some(nice) => {
                let k = nice.k;
                let canonical = find_nice_cycle(&g, k, true)?;
                let text = match &canonical {
                    Some(_) => format!("cyclic; canonical {k}-nice cycle found"),
                    None => format!("cyclic; {k}-nice cycle found"),
                };
                report["nice_cycle"] = json!(canonical.unwrap_or(nice));
                (EXIT_VIOLATION, text)
            }
        }
    };
    report["verdict"] = json!(verdict);
    Ok(Outcome { code, report })
}

pub fn oracle(args: &OracleArgs) -> Result<Outcome, UsageError> {
    let trace = read_trace(&args.trace.file)?;
    let engine = match args.engine {
        Engine::Interleaving => OracleEngine::Interleaving,
        Engine::Permutation => OracleEngine::Permutation,
    };
    let mut report = json!({ "command": "oracle", "events": trace.len() });
    let code = match check_sc_oracle_with(&trace, OracleOptions { bound: args.bound, engine }) {
        Err(e @ OracleError::Capacity { .. }) => {
            report["error"] = json!(e.to_string());
            EXIT_INCONCLUSIVE
        }
        Ok(None) => {
            report["sequentially_consistent"] = json!(false);
            EXIT_VIOLATION
        }
        Ok(Some(w)) => {
            report["sequentially_consistent"] = json!(true);
            report["witness"] = json!(w.as_slice());
            report["serial"] = trace_json(&w.apply(&trace));
            EXIT_OK
        }
    };
    Ok(Outcome { code, report })
}

pub fn replay_cmd(args: &ReplayArgs) -> Result<Outcome, UsageError> {
    let run = read_run(&args.file)?;
    let params = run.params();
    let protocol = Piranha::by_name(&args.protocol, params, args.queue_bound)?;
    let owners = args.owners.clone().unwrap_or_else(|| vec![1; params.m as usize]);
    let initial = protocol.initial_state_with_owners(&owners)?;
    let mut report = json!({
        "command": "replay",
        "protocol": protocol.name(),
        "owners": owners,
        "events": run.len(),
    });
    let code = match replay(&protocol, &run, &initial) {
        Ok(state) => {
            report["ok"] = json!(true);
            report["final_state"] = json!(state);
            if args.unambiguous {
                let u = replay_unambiguous(&protocol, &run, &initial)?;
                report["unambiguous_trace"] = trace_json(&u.trace);
            }
            EXIT_OK
        }
        Err(ProtocolError::Replay { index, event }) => {
            report["ok"] = json!(false);
            report["failed_at"] = json!(index);
            report["failed_event"] = event_to_json(&event);
            EXIT_VIOLATION
        }
        Err(e) => return Err(e.into()),
    };
    Ok(Outcome { code, report })
}

pub fn validate(args: &ValidateArgs) -> Result<Outcome, UsageError> {
    let protocol = build_protocol(&args.protocol)?;
    let report = validate_assumptions(&protocol, args.depth);
    let code = if report.is_clean() { EXIT_OK } else { EXIT_VIOLATION };
    let mut json = serde_json::to_value(&report)?;
    json["command"] = json!("validate-assumptions");
    json["protocol"] = json!(protocol.name());
    Ok(Outcome { code, report: json })
}
