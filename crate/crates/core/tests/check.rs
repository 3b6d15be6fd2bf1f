use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::PathBuf;

use coda::check::{explore, CheckConfig, CheckResult, Property, Verdict};
use coda::kernel::{self, KernelConfig, NamedChoice, RuntimeState};
use coda::ValidModel;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn load(name: &str) -> ValidModel {
    coda::load_file(&models().join(name)).unwrap()
}

fn cfg(max_time: u64) -> CheckConfig {
    CheckConfig {
        max_time,
        ..CheckConfig::default()
    }
}

fn covered(r: &CheckResult) -> BTreeSet<String> {
    r.coverage
        .transitions
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(t, _)| t.clone())
        .collect()
}

fn verdict_kind(v: &Verdict) -> &'static str {
    match v {
        Verdict::Holds => "holds",
        Verdict::Violated { .. } => "violated",
        Verdict::BoundExhausted => "exhausted",
        Verdict::Skipped => "skipped",
    }
}

/// Replays the counterexample's events through the kernel and returns the
/// state it ends in.
fn replay(vm: &ValidModel, choices: &[NamedChoice], kcfg: &KernelConfig) -> RuntimeState {
    let prog = &*vm.program;
    let mut s = kernel::init(prog, kcfg).unwrap();
    for c in choices {
        let choice = c.resolve(prog, Some(&s), kcfg).unwrap();
        s = kernel::fire(prog, &s, &choice, kcfg).unwrap().0;
    }
    s
}

#[test]
fn flawed_door_lets_the_user_reopen_before_the_lock() {
    let vm = load("wm2-flawed.coda");
    let c = CheckConfig {
        deadlock: false,
        ..cfg(12)
    };
    let r = explore(&vm, &c).unwrap();
    let Verdict::Violated { counterexamples } = r.verdict(Property::Invariants) else {
        panic!("{}", r.report());
    };
    let cx = &counterexamples[0];
    let end = replay(&vm, &cx.choices(), &c.kernel);
    assert!(!kernel::violated_invariants(&vm.program, &end, c.kernel.int_bound).is_empty());
    assert_eq!(kernel::StateView::new(&vm.program, &end), cx.state);
    assert!(cx.description.contains("DOORLOCKED"), "{}", cx.description);
    // The door is opened and closed again within a single cycle.
    let door_events: Vec<(u64, &str)> = cx
        .records
        .iter()
        .filter(|r| r.choice.event == "DOOR.openDoor" || r.choice.event == "DOOR.closeDoor")
        .map(|r| (r.time, r.choice.event.as_str()))
        .collect();
    assert!(
        door_events.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 != w[1].1),
        "{door_events:?}"
    );
}

#[test]
fn latency_on_close_removes_the_violation() {
    let r = explore(&load("wm2.coda"), &cfg(12)).unwrap();
    assert!(matches!(r.verdict(Property::Invariants), Verdict::Holds), "{}", r.report());
    assert!(matches!(r.verdict(Property::Deadlock), Verdict::Holds), "{}", r.report());
}

const SLEEPER: &str = r#"
model sleeper
component A {
  var armed: BOOL = FALSE
  operation arm kind T {
    guard not armed
    action armed := TRUE
    action self_wake(delay 1)
  }
}
"#;

/// Every state reachable without canonicalisation, by plain breadth-first
/// search over the kernel.
fn brute_force(vm: &ValidModel, max_time: u64) -> Vec<RuntimeState> {
    let prog = &*vm.program;
    let kcfg = KernelConfig {
        prune: false,
        ..KernelConfig::default()
    };
    let init = kernel::init(prog, &kcfg).unwrap();
    let mut seen = HashSet::from([init.clone()]);
    let mut queue = VecDeque::from([init]);
    let mut all = Vec::new();
    while let Some(s) = queue.pop_front() {
        all.push(s.clone());
        if s.time >= max_time {
            continue;
        }
        for c in kernel::enabled(prog, &s, &kcfg) {
            let next = kernel::fire(prog, &s, &c, &kcfg).unwrap().0;
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    all
}

#[test]
fn unanswered_self_wake_deadlocks_at_the_wake_time() {
    let vm = coda::load_str(SLEEPER).unwrap();
    let max_time = 2;
    let graph = brute_force(&vm, max_time);
    assert!(graph.len() <= 10, "{} states", graph.len());
    let kcfg = KernelConfig::default();
    let dead: Vec<&RuntimeState> = graph
        .iter()
        .filter(|s| s.time < max_time && kernel::enabled(&vm.program, s, &kcfg).is_empty())
        .collect();
    let earliest = dead.iter().map(|s| s.time).min().expect("the brute force finds a deadlock");

    let r = explore(&vm, &cfg(max_time)).unwrap();
    let Verdict::Violated { counterexamples } = r.verdict(Property::Deadlock) else {
        panic!("{}", r.report());
    };
    let cx = &counterexamples[0];
    assert_eq!(cx.state.time, earliest);
    let end = replay(&vm, &cx.choices(), &kcfg);
    assert!(kernel::enabled(&vm.program, &end, &kcfg).is_empty());
    assert!(dead.contains(&&end));
}

#[test]
fn level_one_covers_every_transition_within_twenty_cycles() {
    let src = std::fs::read_to_string(models().join("wm1.coda")).unwrap();
    let declared = src
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("transition ") || l.starts_with("initial ->"))
        .count();
    let r = explore(&load("wm1.coda"), &cfg(20)).unwrap();
    assert_eq!(r.coverage.transitions.len(), declared);
    assert_eq!(declared, 8);
    assert!(r.coverage.complete(), "{}", r.report());
    assert!(r.report().contains("(100.0%), complete"));
}

#[test]
fn guard_false_transition_is_reported_uncovered() {
    let text = std::fs::read_to_string(models().join("wm0.coda")).unwrap().replace(
        "transition rinseAgain: RINSING -> WASHING links rinseAgain",
        "transition rinseAgain: RINSING -> WASHING links rinseAgain { guard FALSE }",
    );
    let vm = coda::load_str(&text).unwrap();
    let r = explore(&vm, &cfg(10)).unwrap();
    assert_eq!(r.coverage.uncovered_transitions(), ["wmsm.rinseAgain"]);
    assert!(!r.report().contains("complete"));
}

#[test]
fn canonical_and_plain_exploration_agree() {
    let sleeper = coda::load_str(SLEEPER).unwrap();
    for (name, max_time) in [("wm0.coda", 6), ("wm1.coda", 2), ("sleeper", 4), ("io0.coda", 8)] {
        let vm = if name == "sleeper" { sleeper.clone() } else { load(name) };
        let mut on = cfg(max_time);
        on.all_violations = false;
        let off = CheckConfig {
            canonical: false,
            kernel: KernelConfig {
                prune: false,
                ..KernelConfig::default()
            },
            ..on.clone()
        };
        let a = explore(&vm, &on).unwrap();
        let b = explore(&vm, &off).unwrap();
        assert!(b.stats.states <= 10_000, "{name}: {}", b.stats.states);
        for p in [Property::Invariants, Property::Deadlock, Property::Runtime] {
            assert_eq!(verdict_kind(a.verdict(p)), verdict_kind(b.verdict(p)), "{name} {p:?}");
        }
        assert_eq!(covered(&a), covered(&b), "{name}");
        assert!(a.stats.states <= b.stats.states);
    }
}

#[test]
fn exploration_is_deterministic_and_independent_of_workers() {
    let vm = load("wm1.coda");
    let serial = explore(&vm, &cfg(10)).unwrap();
    let again = explore(&vm, &cfg(10)).unwrap();
    let parallel = explore(&vm, &CheckConfig { parallel: true, ..cfg(10) }).unwrap();
    let strip = |r: &CheckResult| {
        let mut v = serde_json::to_value(r).unwrap();
        v["stats"]["wall_ms"] = 0.into();
        v
    };
    assert_eq!(strip(&serial), strip(&again));
    assert_eq!(strip(&serial), strip(&parallel));
}

#[test]
fn state_budget_gives_bound_exhausted() {
    let r = explore(&load("wm1.coda"), &CheckConfig { max_states: 50, ..cfg(20) }).unwrap();
    assert!(matches!(r.verdict(Property::Deadlock), Verdict::BoundExhausted));
}
