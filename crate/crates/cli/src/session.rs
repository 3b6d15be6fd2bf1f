//! Interactive sessions: a loaded model, the current state, an undo stack
//! and the trace built so far. Every step goes through the kernel.

use std::collections::BTreeMap;

use coda::kernel::{self, Blocked, Choice, EventRecord, KernelConfig, NamedChoice, RuntimeState, StateView};
use coda::oracle::record_trace;
use coda::parser::print_expr;
use coda::run::{Scenario, Trace, TraceHeader, SEMANTICS_VERSION};
use coda::{Diagnostic, Program, ValidModel};
use serde::{Deserialize, Serialize};

pub const DEFAULT_UNDO_DEPTH: usize = 1000;

/// A failed session request, mapped to an HTTP status by the server.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            guard: None,
            diagnostics: vec![],
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(400, "bad_request", message)
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOptions {
    pub env_bound: Option<u32>,
    #[serde(default)]
    pub strict_collisions: bool,
    pub undo_depth: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnabledEvent {
    pub event: String,
    /// Operation kind letter, or `tick`.
    pub kind: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<String>,
    pub label: String,
    pub witness: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Step {
    pub state: StateView,
    pub record: EventRecord,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoldenExport {
    pub golden: String,
    /// Scenario that reproduces the session's environment inputs.
    pub scenario: String,
}

pub struct Session {
    vm: ValidModel,
    cfg: KernelConfig,
    undo_depth: usize,
    /// `states[0]` is the initial state; `states[i + 1]` follows `records[i]`.
    states: Vec<RuntimeState>,
    records: Vec<EventRecord>,
    undoable: usize,
}

impl Session {
    pub fn new(source: &str, opts: &SessionOptions) -> Result<Session, ApiError> {
        let vm = coda::load_str(source).map_err(|diagnostics| ApiError {
            diagnostics,
            ..ApiError::new(400, "invalid_model", "the model does not parse or validate")
        })?;
        let mut cfg = KernelConfig {
            strict_collisions: opts.strict_collisions,
            ..KernelConfig::default()
        };
        if let Some(b) = opts.env_bound {
            cfg.env_bound = b;
        }
        let init = kernel::init(&vm.program, &cfg).map_err(|e| ApiError::new(400, "invalid_model", e.to_string()))?;
        Ok(Session {
            vm,
            cfg,
            undo_depth: opts.undo_depth.unwrap_or(DEFAULT_UNDO_DEPTH),
            states: vec![init],
            records: vec![],
            undoable: 0,
        })
    }

    pub fn model_name(&self) -> &str {
        &self.vm.program.name
    }

    fn prog(&self) -> &Program {
        &self.vm.program
    }

    fn current(&self) -> &RuntimeState {
        self.states.last().expect("a session holds at least its initial state")
    }

    pub fn current_state(&self) -> &RuntimeState {
        self.current()
    }

    pub fn state(&self) -> StateView {
        StateView::new(self.prog(), self.current())
    }

    pub fn enabled(&self) -> Vec<EnabledEvent> {
        let prog = self.prog();
        let s = self.current();
        kernel::enabled(prog, s, &self.cfg)
            .into_iter()
            .map(|c| {
                let named = c.to_named(prog);
                let kind = match c.op_id() {
                    Some(op) => format!("{:?}", prog.ops[op].kind),
                    None => "tick".into(),
                };
                EnabledEvent {
                    event: named.event,
                    kind,
                    params: named.params,
                    transitions: named.transitions,
                    label: c.label(prog),
                    witness: kernel::witness(prog, s, &c),
                }
            })
            .collect()
    }

    pub fn fire(&mut self, named: &NamedChoice) -> Result<Step, ApiError> {
        let prog = &*self.vm.program;
        let state = self.states.last().expect("initial state");
        let choice = named
            .resolve(prog, Some(state), &self.cfg)
            .map_err(|m| ApiError::new(400, "unknown_event", m))?;
        if let Err(b) = kernel::check(prog, state, &choice, &self.cfg) {
            return Err(ApiError {
                guard: self.guard_text(&choice, &b),
                ..ApiError::new(
                    409,
                    "not_enabled",
                    format!("{} is not enabled: {}", choice.label(prog), b.describe(prog)),
                )
            });
        }
        let (next, record) =
            kernel::fire(prog, state, &choice, &self.cfg).map_err(|e| ApiError::new(422, "runtime_error", e.to_string()))?;
        self.states.push(next);
        self.records.push(record.clone());
        self.undoable = (self.undoable + 1).min(self.undo_depth);
        Ok(Step {
            state: self.state(),
            record,
        })
    }

    pub fn tick(&mut self) -> Result<Step, ApiError> {
        self.fire(&NamedChoice {
            event: "tick".into(),
            ..NamedChoice::default()
        })
    }

    pub fn undo(&mut self) -> Result<StateView, ApiError> {
        if self.undoable == 0 {
            return Err(ApiError::new(409, "nothing_to_undo", "no step left to undo"));
        }
        self.undoable -= 1;
        self.states.pop();
        self.records.pop();
        Ok(self.state())
    }

    pub fn reset(&mut self) -> StateView {
        self.states.truncate(1);
        self.records.clear();
        self.undoable = 0;
        self.state()
    }

    pub fn trace(&self) -> Trace {
        Trace {
            header: TraceHeader {
                format: "coda-trace/1".into(),
                semantics: SEMANTICS_VERSION.into(),
                model: self.prog().name.clone(),
                model_hash: self.vm.hash(),
                scenario_hash: String::new(),
            },
            records: self.records.clone(),
            states: self.states.clone(),
            deadlock: None,
        }
    }

    /// Golden file of the session so far. The scenario rebuilt from the
    /// environment events, with the given observations and end time, runs
    /// to the same golden when the session followed the run policy.
    pub fn golden(&self, observe: Vec<String>, max_time: Option<u64>) -> Result<GoldenExport, ApiError> {
        let scenario = Scenario {
            observe,
            max_time: max_time.or(Some(self.current().time)),
            ..Scenario::from_records(self.prog(), &self.records)
        };
        let golden = record_trace(&self.vm, &self.trace(), &scenario).map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(GoldenExport {
            golden: golden.to_text(),
            scenario: scenario.canonical_text(),
        })
    }

    /// Source text of the guard that blocked an event, when one did.
    fn guard_text(&self, choice: &Choice, b: &Blocked) -> Option<String> {
        let prog = self.prog();
        let Choice::Op { op, .. } = choice else {
            return None;
        };
        let info = &prog.ops[*op];
        let comp = self
            .vm
            .model
            .components
            .iter()
            .find(|c| c.name == prog.components[info.comp].name)?;
        match b {
            Blocked::Guard(i) => {
                let o = comp.operations.iter().find(|o| o.name == info.name)?;
                let g = o.guards.get(*i).filter(|_| o.guards.len() == info.guards.len())?;
                Some(format!("{}: {}", prog.op_label(*op), print_expr(g)))
            }
            Blocked::TransitionGuard(m, t, i) => {
                let mi = &prog.machines[*m];
                let name = &mi.transitions[*t].name;
                let sm = comp.machines.iter().find(|x| x.name == mi.name)?;
                let tr = sm.transitions.iter().find(|x| x.name.as_deref() == Some(name.as_str()))?;
                Some(format!("{}: {}", prog.trans_label(*m, *t), print_expr(tr.guards.get(*i)?)))
            }
            _ => None,
        }
    }
}
