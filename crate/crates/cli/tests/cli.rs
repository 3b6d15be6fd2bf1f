use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use coda::kernel::{self, EventRecord, KernelConfig};

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).display().to_string()
}

fn coda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coda"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_reports_valid_and_invalid_models() {
    let dir = tempfile::tempdir().unwrap();
    let ok = coda(dir.path(), &["validate", &model("wm1.coda")]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("model wm1 is valid"));

    let bad = dir.path().join("bad.coda");
    std::fs::write(&bad, "model bad\ncomponent A {\n  var x: NAT = TRUE\n}\n").unwrap();
    let o = coda(dir.path(), &["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error["), "{}", stderr(&o));
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(coda(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(coda(dir.path(), &["check"]).status.code(), Some(2));
    assert_eq!(
        coda(dir.path(), &["check", &model("wm1.coda"), "--max-time", "soon"]).status.code(),
        Some(2)
    );
    let o = coda(dir.path(), &["simulate", &model("wm1.coda"), "missing.scn"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.scn"));
    let o = coda(
        dir.path(),
        &["simulate", &model("wm1.coda"), &model("wm1.scn"), "--policy", "random"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(coda(dir.path(), &["--help"]).status.success());
}

fn read_trace(path: &Path) -> (serde_json::Value, Vec<EventRecord>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = serde_json::from_str(lines.next().unwrap()).unwrap();
    (header, lines.map(|l| serde_json::from_str(l).unwrap()).collect())
}

#[test]
fn check_of_the_flawed_door_writes_a_replayable_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let o = coda(dir.path(), &["check", &model("wm2-flawed.coda"), "--max-time", "30"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("DOORLOCKED"), "{}", stdout(&o));
    let cex = dir.path().join("wm2-flawed.cex.jsonl");
    let (header, records) = read_trace(&cex);
    assert_eq!(header["format"], "coda-trace/1");
    assert_eq!(header["model"], "wm2_flawed");

    let vm = coda::load_file(&models().join("wm2-flawed.coda")).unwrap();
    assert_eq!(header["model_hash"], vm.hash());
    let prog = &*vm.program;
    let cfg = KernelConfig::default();
    let mut s = kernel::init(prog, &cfg).unwrap();
    for r in &records {
        let c = r.choice.resolve(prog, Some(&s), &cfg).unwrap();
        s = kernel::fire(prog, &s, &c, &cfg).unwrap().0;
    }
    assert!(!kernel::violated_invariants(prog, &s, cfg.int_bound).is_empty());
}

#[test]
fn check_of_a_sound_model_exits_zero_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = coda(dir.path(), &["check", &model("wm1.coda"), "--max-time", "12", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdicts"]["invariants"]["verdict"], "holds");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn emit_writes_context_and_machine() {
    let dir = tempfile::tempdir().unwrap();
    let o = coda(dir.path(), &["emit", &model("wm1.coda"), "-o", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut files: Vec<String> = std::fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files, ["wm1.ctx.eventb", "wm1.mch.eventb"]);

    let spec = coda::refine::load_pair(&models().join("wm1.coda"), None).unwrap();
    let e = coda::emit::emit_refinement(&spec);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/wm1.mch.eventb")).unwrap(), e.machine);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/wm1.ctx.eventb")).unwrap(), e.context);

    let plain = coda(dir.path(), &["emit", &model("wm1.coda"), "--plain"]);
    assert!(!stdout(&plain).contains("refines"));
    assert!(stdout(&plain).contains("machine wm1"));
}

#[test]
fn simulate_prints_and_saves_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = coda(dir.path(), &["simulate", &model("wm1.coda"), &model("wm1.scn"), "-o", "t.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("CP.UserStart(p=COTTON)"));
    let (header, records) = read_trace(&dir.path().join("t.jsonl"));
    assert_eq!(header["format"], "coda-trace/1");
    assert_eq!(records.len(), stdout(&o).lines().count());
    let sc = coda::run::Scenario::parse(&std::fs::read_to_string(models().join("wm1.scn")).unwrap()).unwrap();
    assert!(records.last().unwrap().time <= sc.max_time.unwrap());
    assert_eq!(
        records.iter().filter(|r| r.choice.event == "tick").count() as u64,
        sc.max_time.unwrap()
    );
}

#[test]
fn record_then_compare_passes_and_a_tampered_golden_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let rec = coda(dir.path(), &["record", &model("wm1.coda"), &model("wm1.scn"), "-o", "g.jsonl"]);
    assert_eq!(rec.status.code(), Some(0), "{}", stderr(&rec));
    let o = coda(dir.path(), &["compare", &model("wm1.coda"), &model("wm1.scn"), "g.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("pass"));

    let text = std::fs::read_to_string(dir.path().join("g.jsonl")).unwrap();
    let tampered = text.replacen("\"WM.start\"", "\"WM.abort\"", 1);
    assert_ne!(tampered, text);
    std::fs::write(dir.path().join("bad.jsonl"), tampered).unwrap();
    let o = coda(dir.path(), &["compare", &model("wm1.coda"), &model("wm1.scn"), "bad.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("divergence at step"), "{}", stdout(&o));

    std::fs::write(dir.path().join("junk.jsonl"), "not a golden\n").unwrap();
    let o = coda(dir.path(), &["compare", &model("wm1.coda"), &model("wm1.scn"), "junk.jsonl"]);
    assert_eq!(o.status.code(), Some(2));

    let o = coda(
        dir.path(),
        &["compare", &model("wm2.coda"), &model("wm2.scn"), "g.jsonl", "--project"],
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn refine_reports_the_verdict_in_the_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = coda(dir.path(), &["refine", &model("wm1.coda"), "--max-time", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("this is not a proof"));

    let text = std::fs::read_to_string(models().join("wm1.coda")).unwrap().replace(
        "gluing WM.pid = abs.WM.pid",
        "gluing WM.pid = abs.WM.pid\n  gluing abs.WM.pid = COTTON",
    );
    std::fs::copy(models().join("wm0.coda"), dir.path().join("wm0.coda")).unwrap();
    std::fs::write(dir.path().join("wm1.coda"), text).unwrap();
    let o = coda(dir.path(), &["refine", "wm1.coda", "--max-time", "6", "-o", "cex.jsonl"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let (_, records) = read_trace(&dir.path().join("cex.jsonl"));
    assert_eq!(records.last().unwrap().choice.event, "WM.start");
}

#[test]
fn serve_binds_loopback_on_the_port_from_the_environment() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_coda"))
        .arg("serve")
        .env("CODA_PORT", "0")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("{line}"))
        .to_string();
    assert!(addr.starts_with("127.0.0.1:"), "{addr}");

    let body = serde_json::json!({ "model": std::fs::read_to_string(models().join("wm0.coda")).unwrap() }).to_string();
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /v1/sessions HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 201"), "{resp}");
    assert!(resp.contains("\"id\""), "{resp}");
}
