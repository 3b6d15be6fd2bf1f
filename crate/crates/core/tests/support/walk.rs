use std::collections::HashMap;

use coda::kernel::{self, Choice, KernelConfig, RuntimeState};
use coda::model::{MachineMode, OperationKind};
use coda::program::Program;
use coda::{ValidModel, Value};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

/// Groups whose members may fire at most once per cycle, derived from the
/// operation declarations rather than the compiled flags.
fn exclusive_groups(prog: &Program, choice: &Choice) -> Vec<String> {
    let Choice::Op { op, transitions, .. } = choice else {
        return vec![];
    };
    let info = &prog.ops[*op];
    let comp = &prog.components[info.comp].name;
    let mut out = Vec::new();
    match info.kind {
        OperationKind::P => {
            let mut wakes: Vec<&str> = info.wakes.iter().map(|c| prog.connectors[*c].name.as_str()).collect();
            wakes.sort();
            out.push(format!("port {comp} {wakes:?}"));
        }
        OperationKind::S => out.push(format!("wake {comp}")),
        _ => {}
    }
    for (m, _) in transitions {
        if prog.machines[*m].mode == MachineMode::Synchronous {
            out.push(format!("machine {m}"));
        }
    }
    out
}

fn brute_recv(state: &RuntimeState, c: usize) -> Option<Value> {
    let mut best: Option<(u64, Value)> = None;
    for (t, v) in &state.channels[c] {
        if *t <= state.time && best.is_none_or(|(b, _)| *t > b) {
            best = Some((*t, *v));
        }
    }
    best.map(|(_, v)| v)
}

pub fn models() -> Vec<ValidModel> {
    vec![
        super::formulas::pipe(),
        super::load("wm2.coda"),
        super::load("io1.coda"),
        super::load("wm4.coda"),
    ]
}

/// Walks the model along the given choice indices, checking kernel
/// properties at every step against a pruned and an unpruned copy.
pub fn walk(vm: &ValidModel, picks: &[u16]) -> Result<(), TestCaseError> {
    let prog = &*vm.program;
    let pruned = KernelConfig {
        prune: true,
        ..KernelConfig::default()
    };
    let full = KernelConfig {
        prune: false,
        ..KernelConfig::default()
    };
    let mut a = kernel::init(prog, &pruned).unwrap();
    let mut b = kernel::init(prog, &full).unwrap();
    let mut cycle: HashMap<String, usize> = HashMap::new();
    for &pick in picks {
        let en_a = kernel::enabled(prog, &a, &pruned);
        let en_b = kernel::enabled(prog, &b, &full);
        prop_assert_eq!(&en_a, &en_b);
        if en_a.is_empty() {
            break;
        }
        for c in 0..prog.connectors.len() {
            prop_assert_eq!(kernel::recv_value(&a, c), brute_recv(&b, c));
            prop_assert_eq!(kernel::recv_value(&b, c), brute_recv(&b, c));
        }
        let choice = &en_a[pick as usize % en_a.len()];
        if *choice == Choice::Tick {
            prop_assert!(a.pending.is_empty());
            cycle.clear();
        }
        for g in exclusive_groups(prog, choice) {
            let n = cycle.entry(g.clone()).or_default();
            *n += 1;
            prop_assert!(*n <= 1, "group {} fired twice in cycle {}", g, a.time);
        }
        let before = a.time;
        let (na, ra) = kernel::fire(prog, &a, choice, &pruned).unwrap();
        let (nb, rb) = kernel::fire(prog, &b, choice, &full).unwrap();
        let expected_time = if *choice == Choice::Tick { before + 1 } else { before };
        prop_assert_eq!(na.time, expected_time);
        prop_assert_eq!(ra.time, before);
        prop_assert_eq!(&na.vars, &nb.vars);
        prop_assert_eq!(&na.config, &nb.config);
        prop_assert_eq!(&na.flags, &nb.flags);
        prop_assert_eq!(&na.pending, &nb.pending);
        prop_assert_eq!(&ra.deltas, &rb.deltas);
        a = na;
        b = nb;
    }
    Ok(())
}

/// Runs `cases` random walks over the test models; returns the first
/// failure with its shrunk input.
pub fn run(cases: u32) -> Result<(), String> {
    let models = models();
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (0..models.len(), prop::collection::vec(any::<u16>(), 1..60));
    runner
        .run(&strategy, |(m, picks)| walk(&models[m], &picks))
        .map_err(|e| e.to_string())
}
