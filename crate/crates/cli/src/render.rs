//! Plain-text rendering of the JSON reports.

use std::fmt::Write;

use serde_json::Value;

fn event(e: &Value) -> String {
    if let Some(label) = e.get("internal").and_then(Value::as_str) {
        let params: Vec<String> = e["params"].as_array().into_iter().flatten().map(|p| p.to_string()).collect();
        return format!("{label}({})", params.join(","));
    }
    format!("{}({},{},{})", e["op"].as_str().unwrap_or("?"), e["proc"], e["loc"], e["data"])
}

fn events(list: &Value) -> String {
    let items: Vec<String> = list.as_array().into_iter().flatten().map(event).collect();
    format!("[{}]", items.join(", "))
}

fn numbers(list: &Value) -> String {
    let items: Vec<String> = list.as_array().into_iter().flatten().map(|x| x.to_string()).collect();
    format!("({})", items.join(","))
}

pub fn text(report: &Value) -> String {
    let mut out = String::new();
    match report["command"].as_str() {
        Some("check") => {
            let _ = writeln!(
                out,
                "{} n={} m={} queue-bound={} ({} ms)",
                report["protocol"].as_str().unwrap_or("?"),
                report["n"],
                report["m"],
                report["queue_bound"],
                report["elapsed_ms"]
            );
            for v in report["verdicts"].as_array().into_iter().flatten() {
                let _ = writeln!(
                    out,
                    "k={}: {} (states {}, transitions {}, depth {})",
                    v["k"],
                    v["result"].as_str().unwrap_or("?").replace('_', " "),
                    v["states"],
                    v["transitions"],
                    v["max_depth"]
                );
                if v["result"] == "counterexample" {
                    let _ = writeln!(out, "  initial owners: {}", numbers(&v["initial_state"]["owner"]));
                    for (i, e) in v["run"].as_array().into_iter().flatten().enumerate() {
                        let _ = writeln!(out, "  {:>3}. {}", i + 1, event(e));
                    }
                    let _ = writeln!(out, "  unambiguous trace: {}", events(&v["unambiguous_trace"]));
                    let _ = writeln!(out, "  canonical {}-nice cycle: {}", v["k"], numbers(&v["cycle"]["vertices"]));
                }
            }
        }
        Some("analyze") => {
            let _ = writeln!(
                out,
                "{} events; unambiguous: {}; causal: {}",
                report["events"], report["unambiguous"], report["causal"]
            );
            if let Some(c) = report.get("nice_cycle") {
                let _ = writeln!(out, "cycle vertices: {}", numbers(&c["vertices"]));
            }
            let _ = writeln!(out, "{}", report["verdict"].as_str().unwrap_or(""));
        }
        Some("oracle") => {
            if let Some(e) = report.get("error").and_then(Value::as_str) {
                let _ = writeln!(out, "inconclusive: {e}");
            } else if report["sequentially_consistent"] == true {
                let _ = writeln!(out, "sequentially consistent; witness f = {}", numbers(&report["witness"]));
                let _ = writeln!(out, "serial order: {}", events(&report["serial"]));
            } else {
                let _ = writeln!(out, "not sequentially consistent");
            }
        }
        Some("replay") => {
            if report["ok"] == true {
                let _ = writeln!(
                    out,
                    "replayed {} events on {}",
                    report["events"],
                    report["protocol"].as_str().unwrap_or("?")
                );
                if let Some(t) = report.get("unambiguous_trace") {
                    let _ = writeln!(out, "unambiguous trace: {}", events(t));
                }
            } else {
                let _ = writeln!(
                    out,
                    "replay failed at event {} ({}): not enabled",
                    report["failed_at"],
                    event(&report["failed_event"])
                );
            }
        }
        Some("validate-assumptions") => {
            let _ = writeln!(
                out,
                "depth {}: {} distinct traces, {} permutations checked ({} ms)",
                report["depth"], report["distinct_traces"], report["permutations_checked"], report["elapsed_ms"]
            );
            let causality = report["causality_violations"].as_array().map_or(0, Vec::len);
            let symmetry = report["symmetry_violations"].as_array().map_or(0, Vec::len);
            let _ = writeln!(out, "causality violations: {causality}");
            let _ = writeln!(out, "symmetry violations: {symmetry}");
            for v in report["symmetry_violations"].as_array().into_iter().flatten().take(10) {
                let _ = writeln!(
                    out,
                    "  {} {}: {} -> {}",
                    v["kind"].as_str().unwrap_or("?"),
                    numbers(&v["permutation"]),
                    events(&v["trace"]),
                    events(&v["permuted_trace"])
                );
            }
        }
        _ => {
            let _ = writeln!(out, "{report}");
        }
    }
    out
}
