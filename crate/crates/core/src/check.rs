//! Bounded explicit-state exploration: state invariants, deadlock freedom
//! and runtime errors, with transition coverage.
//!
//! Exploration proceeds one clock cycle at a time. Within a cycle states
//! are expanded in waves; successors are generated in parallel when
//! enabled but merged in a fixed order, so results never depend on the
//! number of workers. With canonicalisation on, states are compared with
//! times taken relative to the current time, so a state first met at an
//! earlier cycle subsumes later copies.

use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::kernel::{self, Choice, EventRecord, KernelConfig, KernelError, NamedChoice, RuntimeState, StateView};
use crate::program::{MachineInfo, Program, TransId, Value};
use crate::run::{TraceHeader, SEMANTICS_VERSION};
use crate::validate::ValidModel;

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub max_time: u64,
    pub max_states: usize,
    pub kernel: KernelConfig,
    pub invariants: bool,
    pub deadlock: bool,
    /// Prune channels and compare states relative to the current time.
    pub canonical: bool,
    /// Keep collecting counterexamples after the first one per property.
    pub all_violations: bool,
    pub parallel: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            max_time: 30,
            max_states: 1_000_000,
            kernel: KernelConfig::default(),
            invariants: true,
            deadlock: true,
            canonical: true,
            all_violations: false,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub property: Property,
    pub description: String,
    pub records: Vec<EventRecord>,
    /// State reached by the last record.
    pub state: StateView,
}

impl Counterexample {
    pub fn choices(&self) -> Vec<NamedChoice> {
        self.records.iter().map(|r| r.choice.clone()).collect()
    }

    /// Trace file form: a header line, then one event record per line.
    pub fn to_jsonl(&self, vm: &ValidModel) -> String {
        let header = TraceHeader {
            format: "coda-trace/1".into(),
            semantics: SEMANTICS_VERSION.into(),
            model: vm.program.name.clone(),
            model_hash: vm.hash(),
            scenario_hash: String::new(),
        };
        let mut out = serde_json::to_string(&header).expect("header serialises");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Invariants,
    Deadlock,
    Runtime,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Holds on every state within the time bound.
    Holds,
    Violated {
        counterexamples: Vec<Counterexample>,
    },
    /// The state budget ran out before the time bound was covered.
    BoundExhausted,
    /// The property was not checked.
    Skipped,
}

impl Verdict {
    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Coverage {
    /// Firing count per transition (`machine.transition`), initial ones
    /// included.
    pub transitions: BTreeMap<String, u64>,
    /// Firing count per operation (`Component.operation`).
    pub operations: BTreeMap<String, u64>,
}

impl Coverage {
    pub fn uncovered_transitions(&self) -> Vec<&str> {
        self.transitions.iter().filter(|(_, n)| **n == 0).map(|(t, _)| t.as_str()).collect()
    }

    pub fn uncovered_operations(&self) -> Vec<&str> {
        self.operations.iter().filter(|(_, n)| **n == 0).map(|(t, _)| t.as_str()).collect()
    }

    pub fn transition_fraction(&self) -> f64 {
        if self.transitions.is_empty() {
            return 1.0;
        }
        let covered = self.transitions.values().filter(|n| **n > 0).count();
        covered as f64 / self.transitions.len() as f64
    }

    pub fn complete(&self) -> bool {
        self.transitions.values().all(|n| *n > 0)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Stats {
    pub states: usize,
    pub edges: usize,
    pub frontier_peak: usize,
    pub max_time_reached: u64,
    pub wall_ms: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub model: String,
    pub max_time: u64,
    pub verdicts: BTreeMap<Property, Verdict>,
    pub coverage: Coverage,
    pub stats: Stats,
}

impl CheckResult {
    pub fn verdict(&self, p: Property) -> &Verdict {
        &self.verdicts[&p]
    }

    pub fn any_violation(&self) -> bool {
        self.verdicts.values().any(Verdict::is_violated)
    }

    pub fn report(&self) -> String {
        let mut out = format!("model {} checked up to time {}\n", self.model, self.max_time);
        for (p, v) in &self.verdicts {
            let text = match v {
                Verdict::Holds => "holds within bounds".to_string(),
                Verdict::Violated { counterexamples } => format!(
                    "VIOLATED: {} ({} events)",
                    counterexamples[0].description,
                    counterexamples[0].records.len()
                ),
                Verdict::BoundExhausted => "bound exhausted (state budget reached)".to_string(),
                Verdict::Skipped => "not checked".to_string(),
            };
            out.push_str(&format!("  {:<10} {text}\n", format!("{p:?}").to_lowercase()));
        }
        let c = &self.coverage;
        let covered = c.transitions.values().filter(|n| **n > 0).count();
        out.push_str(&format!(
            "transition coverage: {covered}/{} ({:.1}%){}\n",
            c.transitions.len(),
            100.0 * c.transition_fraction(),
            if c.complete() { ", complete" } else { "" }
        ));
        for (t, n) in &c.transitions {
            out.push_str(&format!("  {t:<32} {n}\n"));
        }
        let idle = c.uncovered_operations();
        if !idle.is_empty() {
            out.push_str(&format!("operations never fired: {}\n", idle.join(", ")));
        }
        let s = &self.stats;
        out.push_str(&format!(
            "{} states, {} edges, frontier peak {}, reached time {}, {} ms\n",
            s.states, s.edges, s.frontier_peak, s.max_time_reached, s.wall_ms
        ));
        out
    }
}

fn varint(out: &mut Vec<u8>, mut x: u64) {
    while x >= 0x80 {
        out.push((x as u8) | 0x80);
        x >>= 7;
    }
    out.push(x as u8);
}

fn value(out: &mut Vec<u8>, v: Value) {
    match v {
        Value::Bool(b) => out.push(b as u8),
        Value::Int(i) => {
            out.push(2);
            varint(out, ((i << 1) ^ (i >> 63)) as u64);
        }
        Value::Elem(e) => {
            out.push(3);
            varint(out, e as u64);
        }
    }
}

/// Compact comparison key. With canonicalisation, times are taken relative
/// to the current time (which maps to 1), the newest past channel entry
/// maps to 0, older entries and past wakes are dropped, and the absolute
/// time is left out.
pub fn state_key(s: &RuntimeState, canonical: bool) -> Box<[u8]> {
    let base = s.time;
    let shift = |t: u64| if canonical { t + 1 - base } else { t };
    let mut out = Vec::with_capacity(64);
    if !canonical {
        varint(&mut out, base);
    }
    for ch in &s.channels {
        let past = if canonical { ch.range(..base).next_back() } else { None };
        let live = ch.range(if canonical { base } else { 0 }..);
        varint(&mut out, past.is_some() as u64 + live.clone().count() as u64);
        if let Some((_, v)) = past {
            varint(&mut out, 0);
            value(&mut out, *v);
        }
        for (t, v) in live {
            varint(&mut out, shift(*t));
            value(&mut out, *v);
        }
    }
    for w in &s.wakes {
        let live = w.range(if canonical { base } else { 0 }..);
        varint(&mut out, live.clone().count() as u64);
        for t in live {
            varint(&mut out, shift(*t));
        }
    }
    for v in &s.vars {
        value(&mut out, *v);
    }
    for c in &s.config {
        varint(&mut out, c.map_or(0, |x| x as u64 + 1));
    }
    for chunk in s.flags.chunks(8) {
        out.push(chunk.iter().enumerate().fold(0u8, |acc, (i, f)| acc | ((*f as u8) << i)));
    }
    varint(&mut out, s.pending.len() as u64);
    for (op, depth) in &s.pending {
        varint(&mut out, *op as u64);
        out.push(*depth);
    }
    varint(&mut out, s.env_count as u64);
    out.into_boxed_slice()
}

/// Nested initial transitions taken when `target` is entered.
fn entered_initials(m: &MachineInfo, target: usize) -> Vec<TransId> {
    let mut out = Vec::new();
    let mut s = target;
    while let Some(t) = m.states[s].initial {
        out.push(t);
        match m.transitions[t].target {
            Some(next) => s = next,
            None => break,
        }
    }
    out
}

type Successors = Vec<(Choice, Result<RuntimeState, KernelError>)>;

struct Explorer<'a> {
    prog: &'a Program,
    cfg: &'a CheckConfig,
    /// Parent link of every stored state; states themselves are kept only
    /// while on the frontier.
    parents: Vec<Option<(usize, Choice)>>,
    seen: HashSet<Box<[u8]>>,
    found: BTreeMap<Property, Vec<Counterexample>>,
    trans_hits: Vec<Vec<u64>>,
    op_hits: Vec<u64>,
    stats: Stats,
    exhausted: bool,
}

impl Explorer<'_> {
    fn wants(&self, p: Property) -> bool {
        let on = match p {
            Property::Invariants => self.cfg.invariants,
            Property::Deadlock => self.cfg.deadlock,
            Property::Runtime => true,
        };
        on && (self.cfg.all_violations || !self.found.contains_key(&p))
    }

    fn path(&self, mut idx: usize) -> Vec<Choice> {
        let mut out = Vec::new();
        while let Some((p, c)) = &self.parents[idx] {
            out.push(c.clone());
            idx = *p;
        }
        out.reverse();
        out
    }

    fn counterexample(&self, property: Property, description: String, idx: usize) -> Counterexample {
        let mut state = kernel::init(self.prog, &self.cfg.kernel).expect("initial state was computed before");
        let mut records = Vec::new();
        for c in self.path(idx) {
            let (next, rec) = kernel::fire(self.prog, &state, &c, &self.cfg.kernel).expect("explored path replays");
            records.push(rec);
            state = next;
        }
        Counterexample {
            property,
            description,
            records,
            state: StateView::new(self.prog, &state),
        }
    }

    fn report(&mut self, p: Property, description: String, idx: usize) {
        if self.wants(p) {
            let cx = self.counterexample(p, description, idx);
            self.found.entry(p).or_default().push(cx);
        }
    }

    fn check_state(&mut self, idx: usize, state: &RuntimeState, enabled: &[Choice]) {
        let prog = self.prog;
        if self.wants(Property::Invariants) {
            let bad = kernel::violated_invariants(prog, state, self.cfg.kernel.int_bound);
            if let Some((m, s, i)) = bad.first() {
                let mi = &prog.machines[*m];
                let desc = format!(
                    "invariant `{}` of state {} in {}.{} is false at time {}",
                    mi.states[*s].invariant_text[*i], mi.states[*s].name, prog.components[mi.comp].name, mi.name, state.time
                );
                self.report(Property::Invariants, desc, idx);
            }
        }
        if enabled.is_empty() && state.time < self.cfg.max_time && self.wants(Property::Deadlock) {
            let reason = kernel::tick_ready(prog, state).err().map(|b| b.describe(prog)).unwrap_or_default();
            let desc = format!(
                "deadlock at time {}: nothing is enabled; the tick is blocked because {reason}",
                state.time
            );
            self.report(Property::Deadlock, desc, idx);
        }
    }

    fn successors(&self, state: &RuntimeState) -> (Vec<Choice>, Successors) {
        let all = kernel::enabled(self.prog, state, &self.cfg.kernel);
        let succ = all
            .iter()
            .filter(|c| state.time < self.cfg.max_time || **c != Choice::Tick)
            .map(|c| (c.clone(), kernel::fire(self.prog, state, c, &self.cfg.kernel).map(|(s, _)| s)))
            .collect();
        (all, succ)
    }

    fn record_coverage(&mut self, c: &Choice) {
        if let Choice::Op { op, transitions, .. } = c {
            self.op_hits[*op] += 1;
            for (m, t) in transitions {
                self.trans_hits[*m][*t] += 1;
                let mi = &self.prog.machines[*m];
                if let Some(target) = mi.transitions[*t].target {
                    for init in entered_initials(mi, target) {
                        self.trans_hits[*m][init] += 1;
                    }
                }
            }
        }
    }

    /// Stores a successor; returns its index when it is new.
    fn insert(&mut self, parent: usize, choice: Choice, state: &RuntimeState) -> Option<usize> {
        if self.parents.len() >= self.cfg.max_states {
            if !self.seen.contains(&state_key(state, self.cfg.canonical)) {
                self.exhausted = true;
            }
            return None;
        }
        if !self.seen.insert(state_key(state, self.cfg.canonical)) {
            return None;
        }
        self.parents.push(Some((parent, choice)));
        Some(self.parents.len() - 1)
    }

    fn expand(&self, wave: &[(usize, RuntimeState)]) -> Vec<(Vec<Choice>, Successors)> {
        if self.cfg.parallel {
            wave.par_iter().map(|(_, s)| self.successors(s)).collect()
        } else {
            wave.iter().map(|(_, s)| self.successors(s)).collect()
        }
    }

    fn done(&self) -> bool {
        !self.wants(Property::Invariants) && !self.wants(Property::Deadlock) && !self.wants(Property::Runtime)
    }

    fn run(&mut self, init: RuntimeState) {
        let mut cycle = vec![(0usize, init)];
        while !cycle.is_empty() && !self.exhausted && !self.done() {
            let mut next_cycle = Vec::new();
            let mut wave = std::mem::take(&mut cycle);
            let mut layer_size = 0;
            while !wave.is_empty() && !self.exhausted && !self.done() {
                layer_size += wave.len();
                self.stats.frontier_peak = self.stats.frontier_peak.max(layer_size);
                let expanded = self.expand(&wave);
                let mut next_wave = Vec::new();
                for ((idx, state), (all, succ)) in wave.into_iter().zip(expanded) {
                    self.stats.max_time_reached = self.stats.max_time_reached.max(state.time);
                    self.check_state(idx, &state, &all);
                    for (choice, result) in succ {
                        self.stats.edges += 1;
                        match result {
                            Ok(next) => {
                                self.record_coverage(&choice);
                                let is_tick = choice == Choice::Tick;
                                if let Some(n) = self.insert(idx, choice, &next) {
                                    if is_tick {
                                        next_cycle.push((n, next));
                                    } else {
                                        next_wave.push((n, next));
                                    }
                                }
                            }
                            Err(e) => {
                                let desc = format!("{} then fails: {e}", choice.label(self.prog));
                                self.report(Property::Runtime, desc, idx);
                            }
                        }
                    }
                }
                wave = next_wave;
            }
            cycle = next_cycle;
        }
    }
}

pub fn explore(vm: &ValidModel, cfg: &CheckConfig) -> Result<CheckResult, KernelError> {
    let start = Instant::now();
    let prog = &*vm.program;
    let mut kcfg = cfg.clone();
    kcfg.kernel.prune = cfg.canonical;
    let init = kernel::init(prog, &kcfg.kernel)?;
    let mut ex = Explorer {
        prog,
        cfg: &kcfg,
        parents: vec![None],
        seen: HashSet::from([state_key(&init, cfg.canonical)]),
        found: BTreeMap::new(),
        trans_hits: prog.machines.iter().map(|m| vec![0; m.transitions.len()]).collect(),
        op_hits: vec![0; prog.ops.len()],
        stats: Stats::default(),
        exhausted: false,
    };
    for (m, mi) in prog.machines.iter().enumerate() {
        if let (false, Some(t)) = (mi.starts_inactive, mi.initial) {
            ex.trans_hits[m][t] += 1;
            if let Some(target) = mi.transitions[t].target {
                for init in entered_initials(mi, target) {
                    ex.trans_hits[m][init] += 1;
                }
            }
        }
    }
    ex.run(init);

    let mut verdicts = BTreeMap::new();
    for (p, on) in [
        (Property::Invariants, cfg.invariants),
        (Property::Deadlock, cfg.deadlock),
        (Property::Runtime, true),
    ] {
        let v = match ex.found.remove(&p) {
            Some(counterexamples) => Verdict::Violated { counterexamples },
            None if !on => Verdict::Skipped,
            None if ex.exhausted => Verdict::BoundExhausted,
            None => Verdict::Holds,
        };
        verdicts.insert(p, v);
    }
    let mut coverage = Coverage::default();
    for (m, mi) in prog.machines.iter().enumerate() {
        for t in 0..mi.transitions.len() {
            coverage.transitions.insert(prog.trans_label(m, t), ex.trans_hits[m][t]);
        }
    }
    for op in 0..prog.ops.len() {
        coverage.operations.insert(prog.op_label(op), ex.op_hits[op]);
    }
    let mut stats = ex.stats;
    stats.states = ex.parents.len();
    stats.wall_ms = start.elapsed().as_millis();
    Ok(CheckResult {
        model: prog.name.clone(),
        max_time: cfg.max_time,
        verdicts,
        coverage,
        stats,
    })
}
