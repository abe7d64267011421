//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use scmc_core::checker::{count_reachable_states, extract_cycle, monitor_state_bound, validate_assumptions};
use scmc_core::corpus::{protocol_trace, synthetic_trace};
use scmc_core::events::{project_indices, Selector};
use scmc_core::monitors::{CheckPhase, ConstrainPhase};
use scmc_core::protocol::{ActionDecl, ProtocolError};
use scmc_core::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn scmc(args: &[&str]) -> (i32, Value) {
    let out =
        Command::new(env!("CARGO_BIN_EXE_scmc")).args(args).args(["--format", "json"]).output().expect("scmc runs");
    let code = out.status.code().expect("exit status");
    let report = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad JSON from {args:?}: {e}: {}", String::from_utf8_lossy(&out.stderr)));
    (code, report)
}

fn picker(seed: u64) -> impl FnMut(usize) -> usize {
    let mut rng = StdRng::seed_from_u64(seed);
    move |k| rng.gen_range(0..k)
}

/// Unambiguous causal traces of at most 8 events over at most 3 processors
/// and 3 locations, half from random protocol walks and half synthetic.
fn corpus() -> Vec<Trace> {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut out = Vec::new();
    for seed in 0..5_000u64 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let len = rng.gen_range(1..=8);
        let params = Params::new(n, m, 2).unwrap();
        let proto = if seed % 2 == 0 { Piranha::new(params, 2) } else { Piranha::buggy(params, 2) }.unwrap();
        out.push(protocol_trace(&proto, len, 300, &mut picker(seed)).0);
    }
    for seed in 0..6_000u64 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=3);
        let len = rng.gen_range(0..=8);
        out.push(synthetic_trace(n, m, len, &mut picker(seed ^ 0xabcdef)));
    }
    out
}

fn bug_run() -> Run {
    jsonl::parse_run(&std::fs::read_to_string(data("bug_run.jsonl")).unwrap()).unwrap()
}

fn criterion_1() -> String {
    let start = Instant::now();
    let (code, report) =
        scmc(&["check", "--protocol", "piranha-buggy", "--n", "2", "--m", "2", "--k", "2", "--queue-bound", "3"]);
    assert_eq!(code, 1);
    let verdict = &report["verdicts"][0];
    assert_eq!(verdict["result"], "counterexample");
    let found_len = verdict["run"].as_array().unwrap().len();

    let path = data("bug_run.jsonl");
    let (code, replayed) = scmc(&["replay", path.to_str().unwrap(), "--protocol", "piranha-buggy", "--owners", "1,1"]);
    assert_eq!((code, &replayed["ok"]), (0, &Value::Bool(true)));

    let proto = Piranha::buggy(Params::new(2, 2, 2).unwrap(), 3).unwrap();
    let run = bug_run();
    let initial = proto.initial_state_with_owners(&[1, 1]).unwrap();
    replay(&proto, &run, &initial).unwrap();
    let observed = project_trace(&run);
    for j in 1..=2 {
        assert!(accepts(&observed, Automaton::Constrain { k: 2, loc: j }));
    }
    for i in 1..=2 {
        assert!(accepts(&observed, Automaton::Check { k: 2, proc: i }));
    }
    let (trace, cycle) = extract_cycle(&proto, &run, &initial, 2).unwrap();
    let g = build_constraint_graph(&trace).unwrap();
    assert!(verify_nice_cycle(&g, &cycle) && cycle.has_canonical_labels());
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60);
    format!("counterexample of {found_len} events; reference run replays, cycle {:?} ({elapsed:.2?})", cycle.vertices)
}

fn criterion_2() -> String {
    let start = Instant::now();
    let (code, report) =
        scmc(&["check", "--protocol", "piranha", "--n", "2", "--m", "2", "--k", "all", "--queue-bound", "3"]);
    let elapsed = start.elapsed();
    assert_eq!(code, 0);
    let verdicts = report["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 2);
    let mut states = Vec::new();
    for (k, v) in verdicts.iter().enumerate() {
        assert_eq!(v["k"], k + 1);
        assert_eq!(v["result"], "no_violation");
        let s = v["states"].as_u64().unwrap();
        assert!(s < 50_000_000);
        states.push(s);
    }
    assert!(elapsed.as_secs() < 600);
    format!("no violation for k=1,2; states {states:?} ({elapsed:.2?})")
}

fn criterion_3(corpus: &[Trace]) -> String {
    let mut acyclic = 0;
    let mut cyclic_sc = 0;
    for t in corpus {
        assert!(is_unambiguous(t) && is_causal(t) && t.len() <= 8);
        let g = build_constraint_graph(t).unwrap();
        let sc = check_sc_oracle(t).unwrap();
        if find_cycle(&g).is_none() {
            acyclic += 1;
            assert!(sc.is_some_and(|w| w.certifies(t)), "acyclic but not SC: {t}");
        } else if sc.is_some() {
            cyclic_sc += 1;
        }
    }
    format!("{} traces, {acyclic} acyclic, all SC ({cyclic_sc} cyclic traces are SC anyway)", corpus.len())
}

fn criterion_4(corpus: &[Trace]) -> String {
    let mut cyclic = 0;
    for t in corpus {
        let g = build_constraint_graph(t).unwrap();
        let has_cycle = find_cycle(&g).is_some();
        let nice = (1..=t.params().min_nm()).any(|k| find_nice_cycle(&g, k, false).unwrap().is_some());
        assert_eq!(has_cycle, nice, "{t}");
        cyclic += usize::from(has_cycle);
    }
    format!("{} traces agree, {cyclic} cyclic", corpus.len())
}

fn criterion_5(corpus: &[Trace]) -> String {
    let mut pairs = 0usize;
    for t in corpus {
        for j in 1..=t.params().m {
            let order = expanded_order(t, j).unwrap();
            let at_loc = project_indices(t, Selector::ByLoc(j)).unwrap();
            for &(x, y) in &order {
                pairs += 1;
                assert!(x != y && !order.contains(&(y, x)), "{t}");
                for &(_, z) in order.range((y, 0)..(y + 1, 0)) {
                    assert!(order.contains(&(x, z)), "not transitive: {t}");
                }
                for &mid in &at_loc {
                    assert!(order.contains(&(x, mid)) || order.contains(&(mid, y)), "almost-ord fails: {t}");
                }
            }
        }
    }
    format!("{pairs} ordered pairs checked")
}

fn program_order(t: &Trace, proc: ProcId) -> BTreeSet<(usize, usize)> {
    let idx = project_indices(t, Selector::ByProc(proc)).unwrap();
    let mut out = BTreeSet::new();
    for (a, &x) in idx.iter().enumerate() {
        for &y in &idx[a + 1..] {
            out.insert((x, y));
        }
    }
    out
}

fn criterion_6(corpus: &[Trace]) -> String {
    let mut rng = StdRng::seed_from_u64(6);
    for kind in [PermutationKind::Processor, PermutationKind::Location] {
        for _ in 0..100 {
            let t = &corpus[rng.gen_range(0..corpus.len())];
            let p = t.params();
            let size = if kind == PermutationKind::Processor { p.n } else { p.m };
            let all = Permutation::all(size);
            let perm = &all[rng.gen_range(0..all.len())];
            let u = permute(t, kind, perm).unwrap();
            for i in 1..=p.n {
                let image = if kind == PermutationKind::Processor { perm.apply(i) } else { i };
                assert_eq!(program_order(t, i), program_order(&u, image));
            }
            for j in 1..=p.m {
                let image = if kind == PermutationKind::Location { perm.apply(j) } else { j };
                assert_eq!(expanded_order(t, j).unwrap(), expanded_order(&u, image).unwrap());
            }
        }
    }
    "100 processor and 100 location permutations match".into()
}

/// Flat memory where only processor 1 may write.
struct Privileged {
    params: Params,
}

impl ProtocolSpec for Privileged {
    type State = Vec<u32>;

    fn name(&self) -> &str {
        "privileged"
    }

    fn params(&self) -> Params {
        self.params
    }

    fn internal_actions(&self) -> &[ActionDecl] {
        &[]
    }

    fn initial_states(&self) -> Vec<Vec<u32>> {
        vec![vec![0; self.params.m as usize]]
    }

    fn enabled(&self, s: &Vec<u32>) -> Vec<Event> {
        let mut out = Vec::new();
        for i in 1..=self.params.n {
            for j in 1..=self.params.m {
                out.push(Event::Memory(MemoryEvent::read(i, j, s[j as usize - 1])));
                if i == 1 {
                    out.extend((1..=self.params.v).map(|d| Event::Memory(MemoryEvent::write(i, j, d))));
                }
            }
        }
        out
    }

    fn is_enabled(&self, s: &Vec<u32>, e: &Event) -> bool {
        self.enabled(s).contains(e)
    }

    fn step(&self, s: &Vec<u32>, e: &Event) -> Result<Vec<u32>, ProtocolError> {
        if !self.is_enabled(s, e) {
            return Err(ProtocolError::Disabled { event: e.clone() });
        }
        let mut t = s.clone();
        if let Event::Memory(me) = e {
            if me.is_write() {
                t[me.loc as usize - 1] = me.data;
            }
        }
        Ok(t)
    }

    fn encode_state(&self, s: &Vec<u32>, out: &mut Vec<u8>) {
        out.extend(s.iter().map(|&d| d as u8));
    }

    fn with_data_bound(&self, v: u32) -> Self {
        Privileged { params: Params { v, ..self.params } }
    }
}

fn criterion_7() -> String {
    let (code, report) =
        scmc(&["validate-assumptions", "--protocol", "piranha", "--n", "2", "--m", "2", "--depth", "6"]);
    assert_eq!(code, 0);
    assert_eq!(report["causality_violations"].as_array().unwrap().len(), 0);
    assert_eq!(report["symmetry_violations"].as_array().unwrap().len(), 0);
    let fixture = validate_assumptions(&Privileged { params: Params::new(2, 2, 2).unwrap() }, 4);
    let flagged = fixture.symmetry_violations.iter().filter(|v| v.kind == PermutationKind::Processor).count();
    assert!(flagged >= 1);
    format!(
        "piranha depth 6 clean over {} traces; privileged fixture has {flagged} processor-symmetry violations",
        report["distinct_traces"]
    )
}

fn criterion_8() -> String {
    for k in 1..=4 {
        for j in 1..=6 {
            assert_eq!(
                ConstrainState::states(k, j),
                if j <= k { &[ConstrainPhase::A, ConstrainPhase::B][..] } else { &[ConstrainPhase::A][..] }
            );
        }
    }
    assert_eq!(CheckState::states(), &[CheckPhase::A, CheckPhase::B, CheckPhase::Err]);
    let proto = Piranha::new(Params::new(2, 2, 2).unwrap(), 3).unwrap();
    let reachable = count_reachable_states(&proto, 10_000_000).unwrap() as u64;
    for k in 1..=2 {
        assert_eq!(monitor_state_bound(k, 2), 2u64.pow(k) * 3u64.pow(k));
        let verdict = model_check(&proto, k, CheckOptions::default()).unwrap();
        assert!(verdict.stats().states <= reachable * monitor_state_bound(k, 2));
    }
    format!("2/1/3 states; product within {reachable} x 2^k x 3^k")
}

fn criterion_9() -> String {
    let path = data("worked_example.jsonl");
    let (code, report) = scmc(&["oracle", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["witness"], serde_json::json!([2, 1, 3]));
    let (code, report) = scmc(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["acyclic"], true);
    "witness (2,1,3); graph acyclic".into()
}

type Criterion<'a> = Box<dyn Fn() -> String + 'a>;

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|_| {}));
    let corpus = corpus();
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("bug reproduction", Box::new(criterion_1)),
        ("correct variant verified", Box::new(criterion_2)),
        ("acyclic implies SC", Box::new(|| criterion_3(&corpus))),
        ("cycle iff nice cycle", Box::new(|| criterion_4(&corpus))),
        ("expanded order is a partial order", Box::new(|| criterion_5(&corpus))),
        ("permutation invariance", Box::new(|| criterion_6(&corpus))),
        ("assumption validation", Box::new(criterion_7)),
        ("monitor state counts", Box::new(criterion_8)),
        ("worked example", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {}: {name}: {msg}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
