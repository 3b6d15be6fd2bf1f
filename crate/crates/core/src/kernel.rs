//! Discrete-time execution: enabling, firing and clock advancement.
//!
//! All functions are pure: they take a state and return a new one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{eval, eval_guard, Env, EvalError};
use crate::model::OperationKind;
use crate::program::*;
use crate::validate::DEFAULT_INT_BOUND;

pub const DEFAULT_ENV_BOUND: u32 = 4;
pub const MAX_METHOD_DEPTH: u8 = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelConfig {
    /// Environment operations allowed per clock cycle.
    pub env_bound: u32,
    pub int_bound: i64,
    /// Two sends with the same delivery time are an error instead of a warning.
    pub strict_collisions: bool,
    /// Drop channel entries that can no longer be received on each tick.
    pub prune: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            env_bound: DEFAULT_ENV_BOUND,
            int_bound: DEFAULT_INT_BOUND,
            strict_collisions: false,
            prune: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuntimeState {
    pub time: u64,
    /// Per connector: delivery time to value.
    pub channels: Vec<BTreeMap<u64, Value>>,
    /// Per component: times at which a self-wake is due.
    pub wakes: Vec<BTreeSet<u64>>,
    pub vars: Vec<Value>,
    /// Per machine: active leaf state, `None` when inactive.
    pub config: Vec<Option<StateId>>,
    pub flags: Vec<bool>,
    /// Called methods not yet executed, with their nesting depth. Sorted.
    pub pending: Vec<(OpId, u8)>,
    pub env_count: u32,
}

/// One event instance: an operation with parameter values and the
/// transition it takes in each linked machine, or a clock tick.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Choice {
    Op {
        op: OpId,
        params: Vec<Value>,
        transitions: Vec<(MachineId, TransId)>,
    },
    Tick,
}

impl Choice {
    pub fn op(op: OpId) -> Choice {
        Choice::Op {
            op,
            params: vec![],
            transitions: vec![],
        }
    }

    pub fn op_id(&self) -> Option<OpId> {
        match self {
            Choice::Op { op, .. } => Some(*op),
            Choice::Tick => None,
        }
    }

    /// `tick`, `C.op` or `C.op(p=v, ...) [machine.t]`.
    pub fn label(&self, prog: &Program) -> String {
        match self {
            Choice::Tick => "tick".into(),
            Choice::Op { op, params, transitions } => {
                let mut s = prog.op_label(*op);
                if !params.is_empty() {
                    let ps: Vec<String> = prog.ops[*op]
                        .params
                        .iter()
                        .zip(params)
                        .map(|(p, v)| format!("{}={}", p.name, prog.show(*v)))
                        .collect();
                    s.push_str(&format!("({})", ps.join(", ")));
                }
                let linked = &prog.ops[*op].links;
                let ambiguous = linked.iter().any(|(_, ts)| ts.len() > 1);
                if ambiguous {
                    let ts: Vec<String> = transitions.iter().map(|(m, t)| prog.trans_label(*m, *t)).collect();
                    s.push_str(&format!(" [{}]", ts.join(", ")));
                }
                s
            }
        }
    }

    /// Name-based form, stable across recompilation.
    pub fn to_named(&self, prog: &Program) -> NamedChoice {
        match self {
            Choice::Tick => NamedChoice {
                event: "tick".into(),
                params: BTreeMap::new(),
                transitions: vec![],
            },
            Choice::Op { op, params, transitions } => NamedChoice {
                event: prog.op_label(*op),
                params: prog.ops[*op]
                    .params
                    .iter()
                    .zip(params)
                    .map(|(p, v)| (p.name.clone(), prog.show(*v)))
                    .collect(),
                transitions: transitions.iter().map(|(m, t)| prog.trans_label(*m, *t)).collect(),
            },
        }
    }
}

/// Serialisable event choice that refers to operations and transitions by name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct NamedChoice {
    pub event: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<String>,
}

impl NamedChoice {
    /// Resolves against a program. Transitions may be omitted when the
    /// operation's linked transitions are unambiguous; `state` is then used
    /// to pick the enabled one.
    pub fn resolve(&self, prog: &Program, state: Option<&RuntimeState>, cfg: &KernelConfig) -> Result<Choice, String> {
        if self.event == "tick" {
            return Ok(Choice::Tick);
        }
        let q = crate::model::QualName::parse(&self.event).ok_or_else(|| format!("malformed event name `{}`", self.event))?;
        let op = prog
            .op_by_name(&q.component, &q.name)
            .ok_or_else(|| format!("unknown operation `{}`", self.event))?;
        let info = &prog.ops[op];
        let mut params = Vec::new();
        for p in &info.params {
            let text = self
                .params
                .get(&p.name)
                .ok_or_else(|| format!("missing value for parameter `{}` of `{}`", p.name, self.event))?;
            let v = prog
                .parse_value(text, p.ty)
                .ok_or_else(|| format!("`{text}` is not a {} value for `{}`", prog.ty_name(p.ty), p.name))?;
            if !p.domain.contains(&v) {
                return Err(format!("`{text}` is outside the domain of parameter `{}`", p.name));
            }
            params.push(v);
        }
        if let Some(extra) = self.params.keys().find(|k| !info.params.iter().any(|p| &p.name == *k)) {
            return Err(format!("`{}` has no parameter `{extra}`", self.event));
        }
        let mut transitions = Vec::new();
        if !self.transitions.is_empty() {
            for t in &self.transitions {
                let (m, tn) = t.split_once('.').ok_or_else(|| format!("malformed transition `{t}`"))?;
                let mid = prog
                    .machines
                    .iter()
                    .position(|x| x.name == m && x.comp == info.comp)
                    .ok_or_else(|| format!("unknown machine `{m}`"))?;
                let tid = prog.machines[mid]
                    .transitions
                    .iter()
                    .position(|x| x.name == tn)
                    .ok_or_else(|| format!("unknown transition `{t}`"))?;
                transitions.push((mid, tid));
            }
            transitions.sort();
            return Ok(Choice::Op { op, params, transitions });
        }
        if info.links.iter().all(|(_, ts)| ts.len() == 1) {
            transitions = info.links.iter().map(|(m, ts)| (*m, ts[0])).collect();
            return Ok(Choice::Op { op, params, transitions });
        }
        let state = state.ok_or_else(|| format!("`{}` links several transitions; name one", self.event))?;
        let options = transition_options(prog, state, op, &params, cfg);
        match options.into_iter().next() {
            Some(ts) => Ok(Choice::Op {
                op,
                params,
                transitions: ts,
            }),
            None => Ok(Choice::Op {
                op,
                params,
                transitions: info.links.iter().map(|(m, ts)| (*m, ts[0])).collect(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendRecord {
    pub connector: String,
    pub value: String,
    pub delivery: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub var: String,
    pub old: String,
    pub new: String,
}

/// What happened when an event fired.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: u64,
    #[serde(flatten)]
    pub choice: NamedChoice,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sends: Vec<SendRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wakes: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub calls: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<Delta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Why an event cannot fire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Blocked {
    FlagSet(FlagId),
    NoDelivery(ConnId),
    NoWake,
    EnvBound,
    NotPending,
    Guard(usize),
    TransitionGuard(MachineId, TransId, usize),
    NotInSource(MachineId, TransId),
    WrongTransitions,
    BadParams,
    MachineFired(MachineId),
    Eval(EvalError),
    PendingMethods,
    Undelivered(ConnId),
    UnansweredWake(CompId),
    MachineNotFired(MachineId),
}

impl Blocked {
    pub fn describe(&self, prog: &Program) -> String {
        match self {
            Blocked::FlagSet(f) => format!("synchronisation flag `{}` already set this cycle", prog.flags[*f].name),
            Blocked::NoDelivery(c) => format!("no delivery on `{}` at the current time", prog.connectors[*c].name),
            Blocked::NoWake => "no self-wake due at the current time".into(),
            Blocked::EnvBound => "environment operation bound for this cycle reached".into(),
            Blocked::NotPending => "method has not been called".into(),
            Blocked::Guard(i) => format!("guard {} is false", i + 1),
            Blocked::TransitionGuard(m, t, i) => {
                format!("guard {} of transition `{}` is false", i + 1, prog.trans_label(*m, *t))
            }
            Blocked::NotInSource(m, t) => {
                let tr = &prog.machines[*m].transitions[*t];
                match tr.source {
                    Some(s) => format!(
                        "machine `{}` is not in `{}` (transition `{}`)",
                        prog.machines[*m].name, prog.machines[*m].states[s].name, tr.name
                    ),
                    None => format!("machine `{}` is already active", prog.machines[*m].name),
                }
            }
            Blocked::WrongTransitions => "transitions do not match the operation's links".into(),
            Blocked::BadParams => "parameter values do not match the operation".into(),
            Blocked::MachineFired(m) => format!("synchronous machine `{}` already fired this cycle", prog.machines[*m].name),
            Blocked::Eval(e) => format!("guard evaluation failed: {e}"),
            Blocked::PendingMethods => "called methods are still pending".into(),
            Blocked::Undelivered(c) => format!("delivery on `{}` has not been answered", prog.connectors[*c].name),
            Blocked::UnansweredWake(c) => format!("self-wake of {} has not been answered", prog.components[*c].name),
            Blocked::MachineNotFired(m) => format!("synchronous machine `{}` has not fired this cycle", prog.machines[*m].name),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("{event} is not enabled: {reason}")]
    NotEnabled { event: String, reason: String },
    #[error("{event}: {error}")]
    Eval { event: String, error: EvalError },
    #[error("{event}: natural variable {var} would become {value}")]
    NatRange { event: String, var: String, value: i64 },
    #[error("{event}: negative delay {delay}")]
    NegativeDelay { event: String, delay: i64 },
    #[error("{event}: variant of {component} did not decrease ({before} -> {after})")]
    VariantNotDecreased {
        event: String,
        component: String,
        before: i64,
        after: i64,
    },
    #[error("{event}: second send on {connector} for delivery at {time}")]
    SendCollision { event: String, connector: String, time: u64 },
    #[error("{event}: method nesting deeper than {MAX_METHOD_DEPTH}")]
    MethodDepth { event: String },
    #[error("initial value of {var} cannot be evaluated: {error}")]
    InitExprUnevaluable { var: String, error: EvalError },
}

struct StateEnv<'a> {
    prog: &'a Program,
    state: &'a RuntimeState,
    params: &'a [Value],
}

impl Env for StateEnv<'_> {
    fn var(&self, _: Side, v: VarId) -> Value {
        self.state.vars[v]
    }
    fn param(&self, i: usize) -> Value {
        self.params[i]
    }
    fn recv(&self, _: Side, c: ConnId) -> Option<Value> {
        recv_value(self.state, c)
    }
    fn in_state(&self, _: Side, m: MachineId, s: StateId) -> bool {
        in_state(self.prog, self.state, m, s)
    }
}

pub fn in_state(prog: &Program, state: &RuntimeState, m: MachineId, s: StateId) -> bool {
    state.config[m].is_some_and(|leaf| prog.machines[m].contains(s, leaf))
}

/// Evaluates an expression against a state.
pub fn eval_in(prog: &Program, state: &RuntimeState, params: &[Value], e: &CExpr, bound: i64) -> Result<Value, EvalError> {
    eval(e, &StateEnv { prog, state, params }, bound)
}

/// Most recent value on a connector that is not in the future.
pub fn recv_value(state: &RuntimeState, c: ConnId) -> Option<Value> {
    state.channels[c].range(..=state.time).next_back().map(|(_, v)| *v)
}

/// Schedules a delivery; returns whether an entry was overwritten.
pub fn apply_send(state: &mut RuntimeState, c: ConnId, value: Value, delay: u64) -> bool {
    state.channels[c].insert(state.time + delay, value).is_some()
}

pub fn apply_self_wake(state: &mut RuntimeState, comp: CompId, delay: u64) {
    state.wakes[comp].insert(state.time + delay);
}

/// Leaf reached by entering `s`, following nested initial transitions.
pub fn enter(machine: &MachineInfo, mut s: StateId) -> StateId {
    while let Some(t) = machine.states[s].initial {
        match machine.transitions[t].target {
            Some(next) => s = next,
            None => break,
        }
    }
    s
}

pub fn init(prog: &Program, cfg: &KernelConfig) -> Result<RuntimeState, KernelError> {
    let mut vars = Vec::with_capacity(prog.vars.len());
    for (i, v) in prog.vars.iter().enumerate() {
        let value = eval(&v.init, &crate::eval::NoEnv, cfg.int_bound).map_err(|error| KernelError::InitExprUnevaluable {
            var: prog.var_label(i),
            error,
        })?;
        vars.push(value);
    }
    let config = prog
        .machines
        .iter()
        .map(|m| {
            if m.starts_inactive {
                return None;
            }
            let t = m.initial?;
            m.transitions[t].target.map(|s| enter(m, s))
        })
        .collect();
    Ok(RuntimeState {
        time: 0,
        channels: vec![BTreeMap::new(); prog.connectors.len()],
        wakes: vec![BTreeSet::new(); prog.components.len()],
        vars,
        config,
        flags: vec![false; prog.flags.len()],
        pending: vec![],
        env_count: 0,
    })
}

/// Operation-level enabling conditions, excluding linked transitions.
fn op_ready(prog: &Program, state: &RuntimeState, op: OpId, params: &[Value], cfg: &KernelConfig) -> Result<(), Blocked> {
    let info = &prog.ops[op];
    if params.len() != info.params.len() || params.iter().zip(&info.params).any(|(v, p)| !p.domain.contains(v)) {
        return Err(Blocked::BadParams);
    }
    match info.kind {
        OperationKind::P => {
            let f = info.flag.expect("port-wake operations have a group flag");
            if state.flags[f] {
                return Err(Blocked::FlagSet(f));
            }
            if let Some(c) = info.wakes.iter().find(|c| !state.channels[**c].contains_key(&state.time)) {
                return Err(Blocked::NoDelivery(*c));
            }
        }
        OperationKind::S => {
            let f = info.flag.expect("self-wake operations have a group flag");
            if state.flags[f] {
                return Err(Blocked::FlagSet(f));
            }
            if !state.wakes[info.comp].contains(&state.time) {
                return Err(Blocked::NoWake);
            }
        }
        OperationKind::E => {
            if state.env_count >= cfg.env_bound {
                return Err(Blocked::EnvBound);
            }
        }
        OperationKind::M => {
            if !state.pending.iter().any(|(o, _)| *o == op) {
                return Err(Blocked::NotPending);
            }
        }
        OperationKind::T => {}
    }
    let env = StateEnv { prog, state, params };
    for (i, g) in info.guards.iter().enumerate() {
        match eval_guard(g, &env, cfg.int_bound) {
            Ok(true) => {}
            Ok(false) => return Err(Blocked::Guard(i)),
            Err(e) => return Err(Blocked::Eval(e)),
        }
    }
    Ok(())
}

fn transition_ready(
    prog: &Program,
    state: &RuntimeState,
    m: MachineId,
    t: TransId,
    params: &[Value],
    cfg: &KernelConfig,
) -> Result<(), Blocked> {
    let machine = &prog.machines[m];
    let tr = &machine.transitions[t];
    let active = match (tr.source, state.config[m]) {
        (None, None) => tr.region.is_none(),
        (Some(src), Some(leaf)) => machine.contains(src, leaf),
        _ => false,
    };
    if !active {
        return Err(Blocked::NotInSource(m, t));
    }
    if let Some(f) = machine.flag {
        if state.flags[f] {
            return Err(Blocked::MachineFired(m));
        }
    }
    let env = StateEnv { prog, state, params };
    for (i, g) in tr.guards.iter().enumerate() {
        match eval_guard(g, &env, cfg.int_bound) {
            Ok(true) => {}
            Ok(false) => return Err(Blocked::TransitionGuard(m, t, i)),
            Err(e) => return Err(Blocked::Eval(e)),
        }
    }
    Ok(())
}

/// Every combination of enabled linked transitions, one per linked machine.
fn transition_options(
    prog: &Program,
    state: &RuntimeState,
    op: OpId,
    params: &[Value],
    cfg: &KernelConfig,
) -> Vec<Vec<(MachineId, TransId)>> {
    let mut combos: Vec<Vec<(MachineId, TransId)>> = vec![vec![]];
    for (m, ts) in &prog.ops[op].links {
        let ok: Vec<TransId> = ts
            .iter()
            .copied()
            .filter(|t| transition_ready(prog, state, *m, *t, params, cfg).is_ok())
            .collect();
        if ok.is_empty() {
            return vec![];
        }
        combos = combos
            .into_iter()
            .flat_map(|c| {
                ok.iter().map(move |t| {
                    let mut c = c.clone();
                    c.push((*m, *t));
                    c
                })
            })
            .collect();
    }
    combos
}

/// Checks whether a specific event instance may fire.
pub fn check(prog: &Program, state: &RuntimeState, choice: &Choice, cfg: &KernelConfig) -> Result<(), Blocked> {
    match choice {
        Choice::Tick => tick_ready(prog, state),
        Choice::Op { op, params, transitions } => {
            op_ready(prog, state, *op, params, cfg)?;
            let links = &prog.ops[*op].links;
            if transitions.len() != links.len() || !transitions.iter().zip(links).all(|((m, t), (lm, lts))| m == lm && lts.contains(t)) {
                return Err(Blocked::WrongTransitions);
            }
            for (m, t) in transitions {
                transition_ready(prog, state, *m, *t, params, cfg)?;
            }
            Ok(())
        }
    }
}

pub fn tick_ready(prog: &Program, state: &RuntimeState) -> Result<(), Blocked> {
    if !state.pending.is_empty() {
        return Err(Blocked::PendingMethods);
    }
    for (c, ch) in state.channels.iter().enumerate() {
        if ch.contains_key(&state.time) && !prog.connectors[c].groups.iter().any(|f| state.flags[*f]) {
            return Err(Blocked::Undelivered(c));
        }
    }
    for (ci, w) in state.wakes.iter().enumerate() {
        if w.contains(&state.time) && !prog.components[ci].s_flag.is_some_and(|f| state.flags[f]) {
            return Err(Blocked::UnansweredWake(ci));
        }
    }
    for (m, machine) in prog.machines.iter().enumerate() {
        if let Some(f) = machine.flag {
            if state.config[m].is_some() && !state.flags[f] {
                return Err(Blocked::MachineNotFired(m));
            }
        }
    }
    Ok(())
}

fn param_product(params: &[ParamInfo]) -> Vec<Vec<Value>> {
    let mut out: Vec<Vec<Value>> = vec![vec![]];
    for p in params {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                p.domain.iter().map(move |v| {
                    let mut x = prefix.clone();
                    x.push(*v);
                    x
                })
            })
            .collect();
    }
    out
}

/// Enabled event instances of one operation.
pub fn enabled_instances(prog: &Program, state: &RuntimeState, op: OpId, cfg: &KernelConfig) -> Vec<Choice> {
    let mut out = Vec::new();
    for params in param_product(&prog.ops[op].params) {
        if op_ready(prog, state, op, &params, cfg).is_err() {
            continue;
        }
        for transitions in transition_options(prog, state, op, &params, cfg) {
            out.push(Choice::Op {
                op,
                params: params.clone(),
                transitions,
            });
        }
    }
    out
}

/// All enabled event instances; `Tick` last when enabled.
pub fn enabled(prog: &Program, state: &RuntimeState, cfg: &KernelConfig) -> Vec<Choice> {
    let mut out = Vec::new();
    for op in 0..prog.ops.len() {
        out.extend(enabled_instances(prog, state, op, cfg));
    }
    if tick_ready(prog, state).is_ok() {
        out.push(Choice::Tick);
    }
    out
}

/// Human-readable reason an enabled event may fire.
pub fn witness(prog: &Program, state: &RuntimeState, choice: &Choice) -> String {
    match choice {
        Choice::Tick => "every delivery, wake, method call and synchronous machine of this cycle is settled".into(),
        Choice::Op { op, transitions, .. } => {
            let info = &prog.ops[*op];
            let mut parts = Vec::new();
            match info.kind {
                OperationKind::P => {
                    for c in &info.wakes {
                        let v = state.channels[*c].get(&state.time).map(|v| prog.show(*v)).unwrap_or_default();
                        parts.push(format!("{}={} delivered at {}", prog.connectors[*c].name, v, state.time));
                    }
                }
                OperationKind::S => parts.push(format!("self-wake due at {}", state.time)),
                OperationKind::E => parts.push(format!("environment ({} of this cycle used)", state.env_count)),
                OperationKind::M => parts.push("called".into()),
                OperationKind::T => {}
            }
            if !info.guards.is_empty() {
                parts.push("guards hold".into());
            }
            for (m, t) in transitions {
                parts.push(format!("transition {}", prog.trans_label(*m, *t)));
            }
            parts.join("; ")
        }
    }
}

fn nat_checked(prog: &Program, event: &str, var: VarId, v: Value) -> Result<Value, KernelError> {
    if prog.vars[var].ty == Ty::Nat {
        if let Value::Int(i) = v {
            if i < 0 {
                return Err(KernelError::NatRange {
                    event: event.into(),
                    var: prog.var_label(var),
                    value: i,
                });
            }
        }
    }
    Ok(v)
}

fn delay_of(
    prog: &Program,
    state: &RuntimeState,
    params: &[Value],
    e: &CExpr,
    event: &str,
    cfg: &KernelConfig,
) -> Result<u64, KernelError> {
    let d = eval_in(prog, state, params, e, cfg.int_bound)
        .map_err(|error| KernelError::Eval {
            event: event.into(),
            error,
        })?
        .as_int()
        .unwrap_or(0);
    u64::try_from(d).map_err(|_| KernelError::NegativeDelay {
        event: event.into(),
        delay: d,
    })
}

fn variant_of(prog: &Program, state: &RuntimeState, comp: CompId, event: &str, cfg: &KernelConfig) -> Result<Option<i64>, KernelError> {
    match &prog.components[comp].variant {
        None => Ok(None),
        Some(v) => eval_in(prog, state, &[], v, cfg.int_bound)
            .map(|x| x.as_int())
            .map_err(|error| KernelError::Eval {
                event: event.into(),
                error,
            }),
    }
}

/// Fires an event instance. Guards are re-checked.
pub fn fire(prog: &Program, state: &RuntimeState, choice: &Choice, cfg: &KernelConfig) -> Result<(RuntimeState, EventRecord), KernelError> {
    let event = choice.label(prog);
    if let Err(b) = check(prog, state, choice, cfg) {
        return Err(KernelError::NotEnabled {
            event,
            reason: b.describe(prog),
        });
    }
    let named = choice.to_named(prog);
    let Choice::Op { op, params, transitions } = choice else {
        let next = tick(prog, state, cfg)?;
        return Ok((
            next,
            EventRecord {
                time: state.time,
                choice: named,
                sends: vec![],
                wakes: vec![],
                calls: vec![],
                deltas: vec![],
                states: vec![],
                warnings: vec![],
            },
        ));
    };
    let info = &prog.ops[*op];
    let env = StateEnv { prog, state, params };
    let ev = |error| KernelError::Eval {
        event: event.clone(),
        error,
    };

    // Evaluate every right-hand side in the pre-state.
    let mut assigns = Vec::new();
    let mut sends = Vec::new();
    let mut wakes = Vec::new();
    let mut calls = Vec::new();
    let actions = info.actions.iter().chain(
        transitions
            .iter()
            .flat_map(|(m, t)| prog.machines[*m].transitions[*t].actions.iter()),
    );
    for a in actions {
        match a {
            CAction::Assign { var, value } => {
                let v = eval(value, &env, cfg.int_bound).map_err(ev)?;
                assigns.push((*var, nat_checked(prog, &event, *var, v)?));
            }
            CAction::Send { conn, value, delay } => {
                let v = eval(value, &env, cfg.int_bound).map_err(ev)?;
                let d = delay_of(prog, state, params, delay, &event, cfg)?;
                sends.push((*conn, v, d));
            }
            CAction::Wake { delay } => wakes.push(delay_of(prog, state, params, delay, &event, cfg)?),
            CAction::Call { op } => calls.push(*op),
        }
    }
    let variant_before = if info.convergent {
        variant_of(prog, state, info.comp, &event, cfg)?
    } else {
        None
    };

    let mut next = state.clone();
    let mut rec = EventRecord {
        time: state.time,
        choice: named,
        sends: vec![],
        wakes: vec![],
        calls: vec![],
        deltas: vec![],
        states: vec![],
        warnings: vec![],
    };
    for (var, v) in assigns {
        if next.vars[var] != v {
            rec.deltas.push(Delta {
                var: prog.var_label(var),
                old: prog.show(next.vars[var]),
                new: prog.show(v),
            });
        }
        next.vars[var] = v;
    }
    for (c, v, d) in sends {
        let at = state.time + d;
        if apply_send(&mut next, c, v, d) {
            if cfg.strict_collisions {
                return Err(KernelError::SendCollision {
                    event,
                    connector: prog.connectors[c].name.clone(),
                    time: at,
                });
            }
            rec.warnings
                .push(format!("SendCollision: {} at {at} overwritten", prog.connectors[c].name));
        }
        rec.sends.push(SendRecord {
            connector: prog.connectors[c].name.clone(),
            value: prog.show(v),
            delivery: at,
        });
    }
    for d in wakes {
        apply_self_wake(&mut next, info.comp, d);
        rec.wakes.push(state.time + d);
    }
    let depth = match info.kind {
        OperationKind::M => {
            let pos = next.pending.iter().position(|(o, _)| o == op).expect("checked pending");
            next.pending.remove(pos).1
        }
        _ => 0,
    };
    for m in calls {
        if depth >= MAX_METHOD_DEPTH {
            return Err(KernelError::MethodDepth { event });
        }
        next.pending.push((m, depth + 1));
        rec.calls.push(prog.op_label(m));
    }
    next.pending.sort();
    for (m, t) in transitions {
        let machine = &prog.machines[*m];
        let tr = &machine.transitions[*t];
        next.config[*m] = tr.target.map(|s| enter(machine, s));
        if let Some(f) = machine.flag {
            next.flags[f] = true;
        }
        rec.states.push(match next.config[*m] {
            Some(s) => format!("{}={}", machine.name, machine.states[s].name),
            None => format!("{}=inactive", machine.name),
        });
    }
    match info.kind {
        OperationKind::P | OperationKind::S => next.flags[info.flag.expect("group flag")] = true,
        OperationKind::E => next.env_count += 1,
        _ => {}
    }
    if let Some(before) = variant_before {
        let after = variant_of(prog, &next, info.comp, &event, cfg)?.unwrap_or(before);
        if after >= before || before < 0 {
            return Err(KernelError::VariantNotDecreased {
                event,
                component: prog.components[info.comp].name.clone(),
                before,
                after,
            });
        }
    }
    Ok((next, rec))
}

/// Advances the clock by one tick.
pub fn tick(prog: &Program, state: &RuntimeState, cfg: &KernelConfig) -> Result<RuntimeState, KernelError> {
    if let Err(b) = tick_ready(prog, state) {
        return Err(KernelError::NotEnabled {
            event: "tick".into(),
            reason: b.describe(prog),
        });
    }
    let mut next = state.clone();
    next.time += 1;
    next.flags.iter_mut().for_each(|f| *f = false);
    next.env_count = 0;
    if cfg.prune {
        prune(&mut next);
    }
    Ok(next)
}

/// Drops channel entries older than the newest one not in the future, and
/// past wake entries.
pub fn prune(state: &mut RuntimeState) {
    let now = state.time;
    for ch in &mut state.channels {
        if let Some(&keep) = ch.range(..=now).next_back().map(|(t, _)| t) {
            *ch = ch.split_off(&keep);
        }
    }
    for w in &mut state.wakes {
        *w = w.split_off(&now);
    }
}

/// Violated state invariants as (machine, state, invariant index).
pub fn violated_invariants(prog: &Program, state: &RuntimeState, bound: i64) -> Vec<(MachineId, StateId, usize)> {
    let mut out = Vec::new();
    for (m, machine) in prog.machines.iter().enumerate() {
        let Some(leaf) = state.config[m] else { continue };
        for s in machine.path(leaf) {
            for (i, inv) in machine.states[s].invariants.iter().enumerate() {
                if eval_in(prog, state, &[], inv, bound) != Ok(Value::Bool(true)) {
                    out.push((m, s, i));
                }
            }
        }
    }
    out
}

/// Replays a sequence of choices from the initial state; returns all
/// visited states (initial first).
pub fn replay(prog: &Program, choices: &[Choice], cfg: &KernelConfig) -> Result<Vec<RuntimeState>, KernelError> {
    let mut states = vec![init(prog, cfg)?];
    for c in choices {
        let (next, _) = fire(prog, states.last().unwrap(), c, cfg)?;
        states.push(next);
    }
    Ok(states)
}

/// Structured view of a state, keyed by names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateView {
    pub time: u64,
    pub variables: BTreeMap<String, String>,
    pub machines: BTreeMap<String, String>,
    pub channels: BTreeMap<String, BTreeMap<u64, String>>,
    pub wakes: BTreeMap<String, Vec<u64>>,
    pub flags: Vec<String>,
    pub pending: Vec<String>,
    pub env_count: u32,
}

impl StateView {
    pub fn new(prog: &Program, s: &RuntimeState) -> Self {
        StateView {
            time: s.time,
            variables: (0..prog.vars.len()).map(|v| (prog.var_label(v), prog.show(s.vars[v]))).collect(),
            machines: prog
                .machines
                .iter()
                .enumerate()
                .map(|(m, mi)| {
                    let label = format!("{}.{}", prog.components[mi.comp].name, mi.name);
                    let st = match s.config[m] {
                        Some(leaf) => mi
                            .path(leaf)
                            .iter()
                            .map(|x| mi.states[*x].name.as_str())
                            .collect::<Vec<_>>()
                            .join("/"),
                        None => "inactive".into(),
                    };
                    (label, st)
                })
                .collect(),
            channels: prog
                .connectors
                .iter()
                .enumerate()
                .map(|(c, ci)| (ci.name.clone(), s.channels[c].iter().map(|(t, v)| (*t, prog.show(*v))).collect()))
                .collect(),
            wakes: prog
                .components
                .iter()
                .enumerate()
                .map(|(c, ci)| (ci.name.clone(), s.wakes[c].iter().copied().collect()))
                .collect(),
            flags: prog
                .flags
                .iter()
                .zip(&s.flags)
                .filter(|(_, b)| **b)
                .map(|(f, _)| f.name.clone())
                .collect(),
            pending: s.pending.iter().map(|(o, _)| prog.op_label(*o)).collect(),
            env_count: s.env_count,
        }
    }
}

impl fmt::Display for StateView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "time {}", self.time)?;
        for (m, s) in &self.machines {
            writeln!(f, "  {m} = {s}")?;
        }
        for (v, x) in &self.variables {
            writeln!(f, "  {v} = {x}")?;
        }
        for (c, entries) in &self.channels {
            if !entries.is_empty() {
                let es: Vec<String> = entries.iter().map(|(t, v)| format!("{t}->{v}")).collect();
                writeln!(f, "  {c}: {{{}}}", es.join(", "))?;
            }
        }
        for (c, ws) in &self.wakes {
            if !ws.is_empty() {
                writeln!(f, "  {c} wakes at {ws:?}")?;
            }
        }
        Ok(())
    }
}
