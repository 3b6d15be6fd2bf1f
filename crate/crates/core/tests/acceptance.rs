//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use coda::check::{explore, CheckConfig, Property, Verdict};
use coda::kernel::{self, KernelConfig};
use coda::oracle::{compare_refinement, record, ProjectionOptions};
use coda::refine::{check_refinement, load_pair, RefineConfig, RefinementSpec, RefinementVerdict};
use coda::run::{run, RunOptions, Scenario};
use support::{load, models_dir, read, shipped};

fn criterion(name: &str, limit: Option<Duration>, f: impl FnOnce() -> String) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (ok, detail) = match result {
        Ok(detail) => match limit {
            Some(l) if elapsed > l => (false, format!("{detail}; took {elapsed:.1?}, limit {l:?}")),
            _ => (true, detail),
        },
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, msg.lines().next().unwrap_or("").to_string())
        }
    };
    println!("{} {name} ({elapsed:.1?}): {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn semantics_formulas() -> String {
    for (_, f) in support::formulas::ALL {
        f();
    }
    format!("{} formula checks", support::formulas::ALL.len())
}

fn washing_machine_chain() -> String {
    let levels = ["wm0.coda", "wm1.coda", "wm2.coda", "wm3.coda", "wm4.coda"];
    for l in levels {
        load(l);
    }

    let flawed = load("wm2-flawed.coda");
    let cfg = CheckConfig {
        max_time: 30,
        ..CheckConfig::default()
    };
    let start = Instant::now();
    let r = explore(&flawed, &cfg).unwrap();
    let flawed_time = start.elapsed();
    assert!(flawed_time < Duration::from_secs(60), "flawed model took {flawed_time:?}");
    let Verdict::Violated { counterexamples } = r.verdict(Property::Invariants) else {
        panic!("no invariant violation in the flawed model");
    };
    let cx = &counterexamples[0];
    assert!(cx.description.contains("DOORLOCKED"), "{}", cx.description);
    let prog = &*flawed.program;
    let mut s = kernel::init(prog, &cfg.kernel).unwrap();
    for c in cx.choices() {
        let choice = c.resolve(prog, Some(&s), &cfg.kernel).unwrap();
        s = kernel::fire(prog, &s, &choice, &cfg.kernel).unwrap().0;
    }
    assert!(
        !kernel::violated_invariants(prog, &s, cfg.kernel.int_bound).is_empty(),
        "counterexample does not replay"
    );
    let door: Vec<(u64, &str)> = cx
        .records
        .iter()
        .filter(|r| r.choice.event == "DOOR.openDoor" || r.choice.event == "DOOR.closeDoor")
        .map(|r| (r.time, r.choice.event.as_str()))
        .collect();
    let same_cycle = door
        .windows(2)
        .find(|w| w[0].0 == w[1].0 && w[0].1 != w[1].1)
        .expect("door moves twice in one cycle");

    let fixed = explore(&load("wm2.coda"), &cfg).unwrap();
    assert!(matches!(fixed.verdict(Property::Invariants), Verdict::Holds), "{}", fixed.report());
    assert!(matches!(fixed.verdict(Property::Deadlock), Verdict::Holds), "{}", fixed.report());
    assert!(fixed.coverage.complete(), "{}", fixed.report());
    assert!(fixed.report().contains("(100.0%), complete"));
    format!(
        "5 levels valid; flawed: {} then {} at time {} ({} events, {:.1?}); fixed: holds, {} transitions covered",
        same_cycle[0].1,
        same_cycle[1].1,
        same_cycle[0].0,
        cx.records.len(),
        flawed_time,
        fixed.coverage.transitions.len()
    )
}

fn io_refinement() -> String {
    let vm = load("io1.coda");
    let sc = Scenario::parse(&read("io1.scn")).unwrap();
    let trace = run(&vm, &sc, &RunOptions::default()).unwrap();
    let sends_on_a: Vec<&str> = trace
        .records
        .iter()
        .flat_map(|r| r.sends.iter())
        .filter(|s| s.connector == "A")
        .map(|s| s.value.as_str())
        .collect();
    let set = sends_on_a.iter().filter(|v| **v == "1").count();
    let reset = sends_on_a.iter().filter(|v| **v == "0").count();
    assert_eq!((set, reset), (16, 16), "A sends {sends_on_a:?}");

    // One synchronous transition per cycle from the first to the last.
    let io_times: Vec<u64> = trace
        .records
        .iter()
        .filter(|r| r.choice.transitions.iter().any(|t| t.starts_with("IO.")))
        .map(|r| r.time)
        .collect();
    let (first, last) = (io_times[0], *io_times.last().unwrap());
    for t in first..=last {
        let n = io_times.iter().filter(|x| **x == t).count();
        assert_eq!(n, 1, "{n} IO transitions at time {t}");
    }

    let bit16 = trace
        .records
        .iter()
        .filter(|r| r.choice.event == "Controller.ResetB")
        .nth(15)
        .expect("sixteen rounds complete")
        .time;
    let enable = trace
        .records
        .iter()
        .find(|r| r.choice.event == "Device.Enable")
        .expect("Enable fires")
        .time;
    assert_eq!(enable, bit16);
    format!("16 rounds on A, one IO transition per cycle over {first}..={last}, Enable and 16th bit at {enable}")
}

fn refinement_checks() -> String {
    let quick = RefineConfig {
        max_time: 6,
        coverage_diff: false,
        ..RefineConfig::default()
    };
    let models = shipped("coda");
    for name in &models {
        let spec = RefinementSpec::identity(&load(name)).unwrap();
        let r = check_refinement(&spec, &quick);
        assert!(r.holds(), "identity {name}: {}", r.report());
    }
    let chain = [("wm1.coda", 20), ("wm2.coda", 10), ("wm3.coda", 10), ("wm4.coda", 8)];
    for (name, max_time) in chain {
        let spec = load_pair(&models_dir().join(name), None).unwrap();
        let r = check_refinement(
            &spec,
            &RefineConfig {
                max_time,
                ..RefineConfig::default()
            },
        );
        assert!(r.holds(), "{name}: {}", r.report());
    }

    let text = read("wm1.coda").replace(
        "gluing WM.pid = abs.WM.pid",
        "gluing WM.pid = abs.WM.pid\n  gluing abs.WM.pid = COTTON",
    );
    let concrete = coda::load_str(&text).unwrap();
    let decls = concrete.model.refines.as_ref().unwrap().decls.clone();
    let spec = RefinementSpec::new(concrete, load("wm0.coda"), &decls).unwrap();
    let r = check_refinement(&spec, &RefineConfig::default());
    let RefinementVerdict::Violated(cx) = &r.verdict else {
        panic!("broken gluing accepted");
    };
    let prog = &*spec.concrete.program;
    let kcfg = KernelConfig::default();
    let mut s = kernel::init(prog, &kcfg).unwrap();
    for rec in &cx.records {
        let c = rec.choice.resolve(prog, Some(&s), &kcfg).unwrap();
        s = kernel::fire(prog, &s, &c, &kcfg).unwrap().0;
    }
    let step = cx.records.last().unwrap();
    format!(
        "{} identities, 4 chain steps hold; broken gluing fails at {}@{} and replays",
        models.len(),
        step.choice.event,
        step.time
    )
}

fn emitter_structure() -> String {
    let models = shipped("coda");
    for name in &models {
        support::emit::structural(name);
    }
    format!("{} models", models.len())
}

fn oracle_properties() -> String {
    let mut mutants = 0;
    let scenarios = shipped("scn");
    for scn in &scenarios {
        mutants += support::oracle::every_mutation_is_found(&scn.replace(".scn", ".coda"), scn);
    }
    let abs = load("wm1.coda");
    let golden = record(&abs, &Scenario::parse(&read("wm1.scn")).unwrap(), &RunOptions::default()).unwrap();
    let spec = load_pair(&models_dir().join("wm2.coda"), None).unwrap();
    let sc = Scenario::parse(&read("wm2.scn")).unwrap();
    let res = compare_refinement(&spec, &sc, &golden, &RunOptions::default(), &ProjectionOptions::default()).unwrap();
    assert!(res.passed(), "{res:?}");
    format!(
        "{} goldens reproduce, {mutants} mutants caught at their index, level 2 projects onto level 1",
        scenarios.len()
    )
}

fn kernel_properties() -> String {
    let cases = 10_000;
    support::walk::run(cases).unwrap();
    format!("{cases} random walks")
}

fn main() {
    let results = [
        criterion("semantics formula suite", Some(Duration::from_secs(5)), semantics_formulas),
        criterion("washing-machine chain", None, washing_machine_chain),
        criterion("I/O refinement trace", Some(Duration::from_secs(5)), io_refinement),
        criterion("refinement checks", Some(Duration::from_secs(120)), refinement_checks),
        criterion("emitter structure", None, emitter_structure),
        criterion("oracle properties", None, oracle_properties),
        criterion("kernel properties", None, kernel_properties),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
