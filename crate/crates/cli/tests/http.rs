use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use coda::kernel::{self, EventRecord, KernelConfig};
use coda::oracle::record;
use coda::run::{run, RunOptions, Scenario};
use coda_cli::server::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(models().join(name)).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn session(app: &Router, model: &str) -> String {
    let (st, v) = call(app, "POST", "/v1/sessions", Some(json!({ "model": read(model) }))).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn fire(app: &Router, id: &str, event: &str, bindings: Value) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        &format!("/v1/sessions/{id}/fire"),
        Some(json!({ "event": event, "bindings": bindings })),
    )
    .await
}

async fn enabled(app: &Router, id: &str) -> Vec<Value> {
    let (st, v) = call(app, "GET", &format!("/v1/sessions/{id}/enabled"), None).await;
    assert_eq!(st, StatusCode::OK);
    v["events"].as_array().unwrap().clone()
}

#[tokio::test]
async fn new_session_starts_at_time_zero() {
    let app = router();
    let (st, v) = call(&app, "POST", "/v1/sessions", Some(json!({ "model": read("wm1.coda") }))).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(v["model"], "wm1");
    assert_eq!(v["state"]["time"], 0);
    assert_eq!(v["state"]["machines"]["WM.wmsm"], "IDLE");
    let id = v["id"].as_str().unwrap();
    let (st, s) = call(&app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(s, v["state"]);
    for key in ["variables", "machines", "channels", "wakes"] {
        assert!(s[key].is_object(), "{key}");
    }
}

#[tokio::test]
async fn errors_carry_structured_codes() {
    let app = router();
    let (st, v) = call(&app, "GET", "/v1/sessions/nope/state", None).await;
    assert_eq!((st, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));

    let req = Request::post("/v1/sessions")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(v["error"]["code"], "malformed_body");

    let (st, v) = call(&app, "POST", "/v1/sessions", Some(json!({ "model": "model broken\ncomponent {" }))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "invalid_model");
    assert!(!v["error"]["diagnostics"].as_array().unwrap().is_empty());

    let id = session(&app, "wm1.coda").await;
    let (st, v) = fire(&app, &id, "CP.noSuchOp", json!({})).await;
    assert_eq!((st, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("unknown_event")));
    let (st, v) = call(&app, "POST", &format!("/v1/sessions/{id}/undo"), None).await;
    assert_eq!((st, v["error"]["code"].as_str()), (StatusCode::CONFLICT, Some("nothing_to_undo")));
    let (st, v) = call(&app, "GET", "/v2/sessions", None).await;
    assert_eq!((st, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_route")));
}

#[tokio::test]
async fn disabled_event_is_rejected_naming_the_guard() {
    let app = router();
    let id = session(&app, "wm2.coda").await;
    let (st, _) = fire(&app, &id, "DOOR.openDoor", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert!(!enabled(&app, &id).await.iter().any(|e| e["event"] == "DOOR.closeDoor"));
    let (st, v) = fire(&app, &id, "DOOR.closeDoor", json!({})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "not_enabled");
    assert_eq!(v["error"]["guard"], "DOOR.closeDoor: canClose");
    assert!(v["error"]["message"].as_str().unwrap().contains("guard 1 is false"));
}

/// Fires the first enabled internal event, or ticks when only the tick is left.
async fn step(app: &Router, id: &str) -> Value {
    let events = enabled(app, id).await;
    let next = events.iter().find(|e| e["kind"] != "E" && e["kind"] != "tick");
    let (st, v) = match next {
        Some(e) => {
            let body = json!({ "event": e["event"], "bindings": e.get("params").cloned().unwrap_or(json!({})), "transitions": e.get("transitions").cloned().unwrap_or(json!([])) });
            call(app, "POST", &format!("/v1/sessions/{id}/fire"), Some(body)).await
        }
        None => call(app, "POST", &format!("/v1/sessions/{id}/tick"), None).await,
    };
    assert_eq!(st, StatusCode::OK, "{v}");
    v
}

#[tokio::test]
async fn starting_a_wash_with_the_door_shut_asks_the_door_to_lock() {
    let app = router();
    let id = session(&app, "wm2.coda").await;
    // Open and shut the door, then start a programme.
    fire(&app, &id, "DOOR.openDoor", json!({})).await;
    while !enabled(&app, &id).await.iter().any(|e| e["event"] == "DOOR.closeDoor") {
        step(&app, &id).await;
    }
    let (st, _) = fire(&app, &id, "DOOR.closeDoor", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    let (st, _) = fire(&app, &id, "CP.UserStart", json!({ "p": "COTTON" })).await;
    assert_eq!(st, StatusCode::OK);
    let mut found = None;
    for _ in 0..40 {
        if let Some(e) = enabled(&app, &id).await.into_iter().find(|e| e["event"] == "DOOR.lockDoor") {
            found = Some(e);
            break;
        }
        step(&app, &id).await;
    }
    let lock = found.expect("lockDoor becomes enabled");
    assert_eq!(lock["kind"], "P");
    assert!(lock["witness"].as_str().unwrap().contains("lock=TRUE"), "{lock}");
}

#[tokio::test]
async fn undo_after_tick_restores_the_exact_state() {
    let app = router();
    let id = session(&app, "wm2.coda").await;
    fire(&app, &id, "DOOR.openDoor", json!({})).await;
    let (_, before) = call(&app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    let (_, trace_before) = call(&app, "GET", &format!("/v1/sessions/{id}/trace"), None).await;
    let (st, after) = call(&app, "POST", &format!("/v1/sessions/{id}/tick"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(after["record"]["event"], "tick");
    assert_ne!(after["state"], before);
    let (st, undone) = call(&app, "POST", &format!("/v1/sessions/{id}/undo"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(undone, before);
    let (_, trace_after) = call(&app, "GET", &format!("/v1/sessions/{id}/trace"), None).await;
    assert_eq!(trace_after, trace_before);
}

#[test]
fn undo_restores_the_runtime_state_and_respects_its_depth() {
    use coda_cli::session::{Session, SessionOptions};
    let opts = SessionOptions {
        undo_depth: Some(2),
        ..SessionOptions::default()
    };
    let mut s = Session::new(&read("wm1.coda"), &opts).unwrap();
    s.fire(&kernel::NamedChoice {
        event: "CP.UserStart".into(),
        params: [("p".to_string(), "WOOL".to_string())].into(),
        ..Default::default()
    })
    .unwrap();
    let before = s.current_state().clone();
    s.tick().unwrap();
    s.undo().unwrap();
    assert_eq!(s.current_state(), &before);
    s.reset();
    for _ in 0..3 {
        s.tick().unwrap();
    }
    s.undo().unwrap();
    s.undo().unwrap();
    assert_eq!(s.current_state().time, 1);
    assert_eq!(s.undo().unwrap_err().code, "nothing_to_undo");
    s.reset();
    assert_eq!(s.current_state().time, 0);
    assert!(s.trace().records.is_empty());
}

#[tokio::test]
async fn session_trace_replays_identically_through_the_kernel() {
    let app = router();
    let id = session(&app, "wm2.coda").await;
    let (st, _) = fire(&app, &id, "CP.UserStart", json!({ "p": "SYNTHETIC" })).await;
    assert_eq!(st, StatusCode::OK);
    for _ in 0..30 {
        step(&app, &id).await;
    }
    let (_, t) = call(&app, "GET", &format!("/v1/sessions/{id}/trace"), None).await;
    let records: Vec<EventRecord> = serde_json::from_value(t["records"].clone()).unwrap();
    assert_eq!(records.len(), 31);
    let vm = coda::load_str(&read("wm2.coda")).unwrap();
    let prog = &*vm.program;
    let cfg = KernelConfig::default();
    let mut s = kernel::init(prog, &cfg).unwrap();
    for r in &records {
        let c = r.choice.resolve(prog, Some(&s), &cfg).unwrap();
        let (next, again) = kernel::fire(prog, &s, &c, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(r).unwrap());
        s = next;
    }
    let (_, state) = call(&app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
    assert_eq!(state, serde_json::to_value(kernel::StateView::new(prog, &s)).unwrap());
}

#[tokio::test]
async fn interleaved_sessions_do_not_share_state() {
    let app = router();
    let a = session(&app, "wm1.coda").await;
    let b = session(&app, "wm1.coda").await;
    assert_ne!(a, b);
    fire(&app, &a, "CP.UserStart", json!({ "p": "COTTON" })).await;
    call(&app, "POST", &format!("/v1/sessions/{b}/tick"), None).await;
    fire(&app, &b, "CP.UserStart", json!({ "p": "WOOL" })).await;
    call(&app, "POST", &format!("/v1/sessions/{a}/tick"), None).await;
    let (_, ta) = call(&app, "GET", &format!("/v1/sessions/{a}/trace"), None).await;
    let (_, tb) = call(&app, "GET", &format!("/v1/sessions/{b}/trace"), None).await;
    let events = |t: &Value| {
        t["records"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["event"].as_str().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(events(&ta), ["CP.UserStart", "tick"]);
    assert_eq!(events(&tb), ["tick", "CP.UserStart"]);
    assert_eq!(ta["records"][0]["params"]["p"], "COTTON");
    assert_eq!(tb["records"][1]["params"]["p"], "WOOL");

    let (st, _) = call(&app, "DELETE", &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(st, StatusCode::NO_CONTENT);
    let (st, _) = call(&app, "GET", &format!("/v1/sessions/{a}/state"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "GET", &format!("/v1/sessions/{b}/state"), None).await;
    assert_eq!(st, StatusCode::OK);
}

#[tokio::test]
async fn manual_replay_exports_the_recorded_golden() {
    let vm = coda::load_str(&read("wm1.coda")).unwrap();
    let sc = Scenario::parse(&read("wm1.scn")).unwrap();
    let trace = run(&vm, &sc, &RunOptions::default()).unwrap();
    let app = router();
    let id = session(&app, "wm1.coda").await;
    for r in &trace.records {
        let body = json!({ "event": r.choice.event, "bindings": r.choice.params, "transitions": r.choice.transitions });
        let (st, v) = call(&app, "POST", &format!("/v1/sessions/{id}/fire"), Some(body)).await;
        assert_eq!(st, StatusCode::OK, "{v}");
    }
    let (st, v) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/golden"),
        Some(json!({ "observe": sc.observe, "max_time": sc.max_time })),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{v}");
    let expected = record(&vm, &sc, &RunOptions::default()).unwrap().to_text();
    assert_eq!(v["golden"].as_str().unwrap(), expected);
    let rebuilt = Scenario::parse(v["scenario"].as_str().unwrap()).unwrap();
    assert_eq!(rebuilt.hash(), sc.hash());

    let (st, v) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/golden"),
        Some(json!({ "observe": ["WM.nothing"] })),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert!(v["error"]["message"].as_str().unwrap().contains("WM.nothing"));
}
