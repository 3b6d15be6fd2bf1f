//! Scenario-driven deterministic runs.
//!
//! A scenario schedules environment operations at given times. A run fires
//! the due scheduled events in file order, then repeatedly fires the first
//! enabled internal event under the ordering policy until only the tick is
//! left, then ticks.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kernel::{self, Choice, EventRecord, KernelConfig, KernelError, NamedChoice, RuntimeState, StateView};
use crate::model::OperationKind;
use crate::program::Program;
use crate::validate::ValidModel;

/// Changes whenever a kernel change could alter a recorded trace.
pub const SEMANTICS_VERSION: &str = "coda-kernel/1";
pub const DEFAULT_MAX_TIME: u64 = 30;
pub const DEFAULT_CYCLE_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduledEvent {
    pub time: u64,
    pub event: NamedChoice,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scenario {
    /// Observed variables (`C.v`) and machines (`C.m`).
    pub observe: Vec<String>,
    pub max_time: Option<u64>,
    pub expect_deadlock: bool,
    pub events: Vec<ScheduledEvent>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("scenario line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| ScenarioError { line, message };
            let body = raw.split("//").next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (head, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let rest = rest.trim();
            match head {
                "observe" => {
                    for name in rest.split(',').map(str::trim) {
                        if name.split('.').count() != 2 || name.split('.').any(str::is_empty) {
                            return Err(err(format!("observation `{name}` must have the form Component.name")));
                        }
                        sc.observe.push(name.to_string());
                    }
                }
                "max_time" => {
                    sc.max_time = Some(rest.parse().map_err(|_| err(format!("`{rest}` is not a time")))?);
                }
                "expect" if rest == "deadlock" => sc.expect_deadlock = true,
                "at" => {
                    let mut words = rest.splitn(3, char::is_whitespace);
                    let time: u64 = words
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("expected a time after `at`".into()))?;
                    if words.next() != Some("fire") {
                        return Err(err("expected `fire` after the time".into()));
                    }
                    let spec = words.next().unwrap_or("").trim();
                    let (event, bindings) = match spec.split_once(" with ") {
                        Some((e, b)) => (e.trim(), Some(b)),
                        None => (spec, None),
                    };
                    if event.split('.').count() != 2 {
                        return Err(err(format!("event `{event}` must have the form Component.operation")));
                    }
                    let mut named = NamedChoice {
                        event: event.to_string(),
                        ..NamedChoice::default()
                    };
                    for b in bindings.into_iter().flat_map(|b| b.split(',')) {
                        let (k, v) = b.split_once('=').ok_or_else(|| err(format!("binding `{}` lacks `=`", b.trim())))?;
                        named.params.insert(k.trim().to_string(), v.trim().to_string());
                    }
                    if sc.events.last().is_some_and(|e| e.time > time) {
                        return Err(err("scheduled times must not decrease".into()));
                    }
                    sc.events.push(ScheduledEvent { time, event: named, line });
                }
                _ => return Err(err(format!("unknown directive `{head}`"))),
            }
        }
        Ok(sc)
    }

    /// Normalised text; its hash identifies the scenario in trace headers.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        if !self.observe.is_empty() {
            out.push_str(&format!("observe {}\n", self.observe.join(", ")));
        }
        if let Some(t) = self.max_time {
            out.push_str(&format!("max_time {t}\n"));
        }
        if self.expect_deadlock {
            out.push_str("expect deadlock\n");
        }
        for e in &self.events {
            out.push_str(&format!("at {} fire {}", e.time, e.event.event));
            if !e.event.params.is_empty() {
                let bs: Vec<String> = e.event.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!(" with {}", bs.join(", ")));
            }
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    /// The environment events of an interactively built trace as a schedule,
    /// so that a run of the result replays them at the same times.
    pub fn from_records(prog: &Program, records: &[EventRecord]) -> Scenario {
        let events = records
            .iter()
            .filter(|r| {
                crate::model::QualName::parse(&r.choice.event)
                    .and_then(|q| prog.op_by_name(&q.component, &q.name))
                    .is_some_and(|op| prog.ops[op].kind == OperationKind::E)
            })
            .enumerate()
            .map(|(i, r)| ScheduledEvent {
                time: r.time,
                event: NamedChoice {
                    event: r.choice.event.clone(),
                    params: r.choice.params.clone(),
                    transitions: vec![],
                },
                line: i + 1,
            })
            .collect();
        Scenario {
            events,
            ..Scenario::default()
        }
    }
}

/// Within-cycle ordering of simultaneously enabled internal events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Policy {
    /// Component name, then operation name, then transition.
    #[default]
    ByName,
    /// Declaration order in the model text.
    Declaration,
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "name" | "by-name" => Ok(Policy::ByName),
            "declaration" | "decl" => Ok(Policy::Declaration),
            _ => Err(format!("unknown policy `{s}` (expected `name` or `declaration`)")),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::ByName => "name",
            Policy::Declaration => "declaration",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub policy: Policy,
    /// Overrides the scenario's `max_time`.
    pub max_time: Option<u64>,
    pub kernel: KernelConfig,
    /// Most internal events one cycle may fire before the run gives up.
    pub cycle_cap: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: Policy::ByName,
            max_time: None,
            kernel: KernelConfig::default(),
            cycle_cap: DEFAULT_CYCLE_CAP,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceHeader {
    pub format: String,
    pub semantics: String,
    pub model: String,
    pub model_hash: String,
    pub scenario_hash: String,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<EventRecord>,
    /// `states[0]` is the initial state; `states[i + 1]` follows `records[i]`.
    pub states: Vec<RuntimeState>,
    /// Set when the run ended in an expected deadlock.
    pub deadlock: Option<String>,
}

impl Trace {
    pub fn final_state(&self) -> &RuntimeState {
        self.states.last().expect("a trace holds at least its initial state")
    }

    /// One JSON object per line: the header, then each event record.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serialises");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("deadlock at time {time}: {reason}\n{state}")]
    DeadlockReached {
        time: u64,
        reason: String,
        state: Box<StateView>,
        trace: Box<Trace>,
    },
    #[error("scenario line {line}: `{event}` cannot fire at time {time}: {reason}")]
    ScheduleUnsatisfiable {
        line: usize,
        time: u64,
        event: String,
        reason: String,
    },
    #[error("more than {cap} events fired in cycle {time} without a tick")]
    Livelock { time: u64, cap: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn policy_order(prog: &Program, policy: Policy) -> Vec<usize> {
    let order = match policy {
        Policy::ByName => prog.ops_by_name(),
        Policy::Declaration => (0..prog.ops.len()).collect(),
    };
    let mut rank = vec![0; prog.ops.len()];
    for (i, op) in order.into_iter().enumerate() {
        rank[op] = i;
    }
    rank
}

/// The event the policy picks among enabled internal (non-environment,
/// non-tick) events, if any.
pub fn next_internal(prog: &Program, state: &RuntimeState, cfg: &KernelConfig, policy: Policy) -> Option<Choice> {
    let rank = policy_order(prog, policy);
    kernel::enabled(prog, state, cfg)
        .into_iter()
        .filter(|c| c.op_id().is_some_and(|op| prog.ops[op].kind != OperationKind::E))
        .min_by_key(|c| (rank[c.op_id().unwrap()], c.clone()))
}

pub fn run(vm: &ValidModel, scenario: &Scenario, opts: &RunOptions) -> Result<Trace, RunError> {
    let prog = &*vm.program;
    let cfg = &opts.kernel;
    let max_time = opts.max_time.or(scenario.max_time).unwrap_or(DEFAULT_MAX_TIME);
    let mut trace = Trace {
        header: TraceHeader {
            format: "coda-trace/1".into(),
            semantics: SEMANTICS_VERSION.into(),
            model: prog.name.clone(),
            model_hash: vm.hash(),
            scenario_hash: scenario.hash(),
        },
        records: Vec::new(),
        states: vec![kernel::init(prog, cfg)?],
        deadlock: None,
    };
    if let Some(late) = scenario.events.iter().find(|e| e.time > max_time) {
        return Err(RunError::ScheduleUnsatisfiable {
            line: late.line,
            time: late.time,
            event: late.event.event.clone(),
            reason: format!("the run stops at time {max_time}"),
        });
    }
    let mut pending = scenario.events.iter().peekable();
    loop {
        let now = trace.final_state().time;
        while let Some(ev) = pending.next_if(|e| e.time == now) {
            let unsat = |reason: String| RunError::ScheduleUnsatisfiable {
                line: ev.line,
                time: now,
                event: ev.event.event.clone(),
                reason,
            };
            let state = trace.final_state();
            let choice = ev.event.resolve(prog, Some(state), cfg).map_err(unsat)?;
            if choice.op_id().is_none_or(|op| prog.ops[op].kind != OperationKind::E) {
                return Err(unsat("only environment operations can be scheduled".into()));
            }
            kernel::check(prog, state, &choice, cfg).map_err(|b| unsat(b.describe(prog)))?;
            step(prog, &mut trace, &choice, cfg)?;
        }
        let mut fired = 0;
        while let Some(choice) = next_internal(prog, trace.final_state(), cfg, opts.policy) {
            if fired == opts.cycle_cap {
                return Err(RunError::Livelock {
                    time: now,
                    cap: opts.cycle_cap,
                });
            }
            step(prog, &mut trace, &choice, cfg)?;
            fired += 1;
        }
        if now >= max_time {
            return Ok(trace);
        }
        if let Err(b) = kernel::tick_ready(prog, trace.final_state()) {
            let reason = b.describe(prog);
            if scenario.expect_deadlock {
                trace.deadlock = Some(reason);
                return Ok(trace);
            }
            return Err(RunError::DeadlockReached {
                time: now,
                reason,
                state: Box::new(StateView::new(prog, trace.final_state())),
                trace: Box::new(trace),
            });
        }
        step(prog, &mut trace, &Choice::Tick, cfg)?;
    }
}

fn step(prog: &Program, trace: &mut Trace, choice: &Choice, cfg: &KernelConfig) -> Result<(), KernelError> {
    let (next, rec) = kernel::fire(prog, trace.final_state(), choice, cfg)?;
    trace.records.push(rec);
    trace.states.push(next);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_directives_and_comments() {
        let sc = Scenario::parse(
            "// demo\nobserve WM.pid, CP.display\nmax_time 12\nat 1 fire CP.UserStart with p=COTTON\nat 3 fire WM.abort // late\n",
        )
        .unwrap();
        assert_eq!(sc.observe, ["WM.pid", "CP.display"]);
        assert_eq!(sc.max_time, Some(12));
        assert_eq!(sc.events.len(), 2);
        assert_eq!(sc.events[0].event.params["p"], "COTTON");
        assert_eq!(sc.events[1].line, 5);
        assert_eq!(Scenario::parse(&sc.canonical_text()).unwrap().canonical_text(), sc.canonical_text());
    }

    #[test]
    fn rejects_decreasing_times() {
        let e = Scenario::parse("at 4 fire A.x\nat 2 fire A.y").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn empty_scenario_on_minimal_model_ticks() {
        let vm = crate::load_str("model m component C { var x: NAT = 0 }").unwrap();
        let sc = Scenario::parse("max_time 10").unwrap();
        let t = run(&vm, &sc, &RunOptions::default()).unwrap();
        assert_eq!(t.records.len(), 10);
        assert!(t.records.iter().all(|r| r.choice.event == "tick"));
        assert_eq!(t.final_state().time, 10);
    }
}
