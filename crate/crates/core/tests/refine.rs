use std::path::PathBuf;

use coda::kernel::{self, KernelConfig};
use coda::refine::{check_refinement, derive_state_gluing, load_pair, RefineConfig, RefineError, RefinementSpec, RefinementVerdict};
use coda::ValidModel;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(models().join(name)).unwrap()
}

fn load(name: &str) -> ValidModel {
    coda::load_file(&models().join(name)).unwrap()
}

/// A modified concrete model checked against a shipped abstraction, using
/// the concrete model's own inline declarations.
fn spec_from(text: &str, abs: &str) -> Result<RefinementSpec, RefineError> {
    let concrete = coda::load_str(text).unwrap();
    let decls = concrete.model.refines.as_ref().map(|r| r.decls.clone()).unwrap_or_default();
    RefinementSpec::new(concrete, load(abs), &decls)
}

fn bounded(max_time: u64) -> RefineConfig {
    RefineConfig {
        max_time,
        ..RefineConfig::default()
    }
}

#[test]
fn every_shipped_model_refines_itself() {
    for entry in std::fs::read_dir(models()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("coda") {
            continue;
        }
        let vm = coda::load_file(&path).unwrap();
        let spec = RefinementSpec::identity(&vm).unwrap();
        let cfg = RefineConfig {
            coverage_diff: false,
            ..bounded(6)
        };
        let r = check_refinement(&spec, &cfg);
        assert!(r.holds(), "{}", r.report());
    }
}

#[test]
fn control_panel_level_refines_the_single_component() {
    let r = check_refinement(&load_pair(&models().join("wm1.coda"), None).unwrap(), &bounded(20));
    assert!(r.holds(), "{}", r.report());
    assert!(r.report().contains("this is not a proof"));
    assert!(r.strengthened.is_empty(), "{}", r.report());
}

#[test]
fn door_level_refines_the_control_panel_level() {
    let r = check_refinement(&load_pair(&models().join("wm2.coda"), None).unwrap(), &bounded(10));
    assert!(r.holds(), "{}", r.report());
}

#[test]
fn handshake_refines_the_bare_protocol() {
    let r = check_refinement(&load_pair(&models().join("io1.coda"), None).unwrap(), &bounded(20));
    assert!(r.holds(), "{}", r.report());
}

#[test]
fn false_gluing_fails_before_any_event() {
    let text = read("wm1.coda").replace("gluing WM.pid = abs.WM.pid", "gluing FALSE");
    let r = check_refinement(&spec_from(&text, "wm0.coda").unwrap(), &bounded(5));
    match &r.verdict {
        RefinementVerdict::Violated(cx) => assert!(cx.records.is_empty(), "{}", r.report()),
        _ => panic!("{}", r.report()),
    }
}

#[test]
fn pinned_abstract_value_breaks_when_another_programme_starts() {
    let text = read("wm1.coda").replace(
        "gluing WM.pid = abs.WM.pid",
        "gluing WM.pid = abs.WM.pid\n  gluing abs.WM.pid = COTTON",
    );
    let spec = spec_from(&text, "wm0.coda").unwrap();
    let r = check_refinement(&spec, &bounded(6));
    let RefinementVerdict::Violated(cx) = &r.verdict else {
        panic!("{}", r.report());
    };
    let last = cx.records.last().unwrap();
    assert_eq!(last.choice.event, "WM.start");
    assert!(cx
        .records
        .iter()
        .any(|r| r.choice.event == "CP.UserStart" && r.choice.params["p"] != "COTTON"));
    // The trace replays on the concrete model alone.
    let prog = &*spec.concrete.program;
    let kcfg = KernelConfig::default();
    let mut s = kernel::init(prog, &kcfg).unwrap();
    for r in &cx.records {
        let c = r.choice.resolve(prog, Some(&s), &kcfg).unwrap();
        s = kernel::fire(prog, &s, &c, &kcfg).unwrap().0;
    }
    let chosen = &cx
        .records
        .iter()
        .rev()
        .find(|r| r.choice.event == "CP.UserStart")
        .unwrap()
        .choice
        .params["p"];
    assert_eq!(&prog.show(s.vars[prog.var_by_name("WM", "pid").unwrap()]), chosen);
}

#[test]
fn undeclared_concrete_event_is_rejected() {
    let text = read("wm1.coda").replace("new WM.ignoreStart, WM.sendWaiting", "new WM.ignoreStart");
    match spec_from(&text, "wm0.coda") {
        Err(RefineError::UnmappedEvent(e)) => assert_eq!(e, "WM.sendWaiting"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn strengthened_guard_shows_in_the_coverage_diff() {
    let text = read("wm1.coda").replace("  operation abort kind E {\n", "  operation abort kind E {\n    guard FALSE\n");
    let r = check_refinement(&spec_from(&text, "wm0.coda").unwrap(), &bounded(8));
    assert!(r.holds(), "{}", r.report());
    assert_eq!(r.strengthened, ["WM.abort"]);
}

#[test]
fn nested_washing_states_give_four_gluing_conjuncts() {
    let c = load("wm2.coda");
    let a = load("wm1.coda");
    let cm = c.program.machine_by_name("WM", "wmsm").unwrap();
    let am = a.program.machine_by_name("WM", "wmsm").unwrap();
    let g = derive_state_gluing(&c.program, cm, &a.program, am, &[]).unwrap();
    let mut parts: Vec<&str> = g.split(" and ").collect();
    parts.sort();
    assert_eq!(
        parts,
        [
            "in(IDLEWAITING) => in(abs.IDLE)",
            "in(INPROGRESS) => in(abs.WASHING)",
            "in(LOCKINGDOOR) => in(abs.WASHING)",
            "in(UNLOCKINGDOOR) => in(abs.IDLE)",
        ]
    );
    let same = derive_state_gluing(&a.program, am, &a.program, am, &[]).unwrap();
    assert_eq!(same, "TRUE");
}

#[test]
fn state_without_abstract_home_is_reported() {
    let text = read("wm1.coda").replace("    state SPINNING\n", "    state SPINNING\n    state PAUSED\n");
    match spec_from(&text, "wm0.coda") {
        Err(RefineError::UnmappedState { state, .. }) => assert_eq!(state, "PAUSED"),
        other => panic!("{other:?}"),
    }
}
