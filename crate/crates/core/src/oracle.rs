//! Golden traces: record a scenario run as a reference file, compare later
//! runs against it, and compare a refinement's run against the golden trace
//! of its abstraction.
//!
//! A golden file is JSON Lines with LF endings. The first line is the
//! header; every following line is one fired event (ticks included) with
//! the observed values after it.
//!
//! ```text
//! {"format":"coda-golden/1","semantics":"coda-kernel/1","model":"wm1",...,"observe":["CP.display","WM.pid"],"initial":{...}}
//! {"i":0,"time":1,"event":"CP.UserStart","params":{"p":"COTTON"},"obs":{"CP.display":"WAITING","WM.pid":"COTTON"}}
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::RuntimeState;
use crate::model::{BinOp, QualName};
use crate::program::{CExpr, MachineId, Program, Side, StateId, VarId};
use crate::refine::RefinementSpec;
use crate::run::{run, RunError, RunOptions, Scenario, Trace, SEMANTICS_VERSION};
use crate::validate::ValidModel;

pub const GOLDEN_FORMAT: &str = "coda-golden/1";
const CONTEXT_WINDOW: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenHeader {
    pub format: String,
    pub semantics: String,
    pub model: String,
    pub model_hash: String,
    pub scenario_hash: String,
    pub observe: Vec<String>,
    pub initial: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenRecord {
    pub i: usize,
    pub time: u64,
    pub event: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    pub obs: BTreeMap<String, String>,
}

impl GoldenRecord {
    /// Equal up to the index, which the caller compares positionally.
    fn same_step(&self, other: &GoldenRecord, prefixed: &[String]) -> bool {
        self.time == other.time
            && self.event == other.event
            && self.params == other.params
            && self.obs.len() == other.obs.len()
            && self.obs.iter().all(|(k, v)| match other.obs.get(k) {
                Some(w) if prefixed.contains(k) => path_matches(v, w),
                Some(w) => v == w,
                None => false,
            })
    }
}

/// A coarser projected state path matches any path below it.
fn path_matches(expected: &str, projected: &str) -> bool {
    expected == projected || expected.strip_prefix(projected).is_some_and(|rest| rest.starts_with('/'))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldenFile {
    pub header: GoldenHeader,
    pub records: Vec<GoldenRecord>,
}

impl GoldenFile {
    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serialises");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<GoldenFile, OracleError> {
        let mut lines = text.split('\n').enumerate().filter(|(_, l)| !l.is_empty());
        let (_, first) = lines.next().ok_or(OracleError::Format {
            line: 1,
            message: "empty golden file".into(),
        })?;
        let header: GoldenHeader = serde_json::from_str(first).map_err(|e| OracleError::Format {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != GOLDEN_FORMAT {
            return Err(OracleError::Format {
                line: 1,
                message: format!("unsupported format `{}`, expected `{GOLDEN_FORMAT}`", header.format),
            });
        }
        let mut records = Vec::new();
        for (n, line) in lines {
            if line.ends_with('\r') {
                return Err(OracleError::Format {
                    line: n + 1,
                    message: "CR line ending".into(),
                });
            }
            let r: GoldenRecord = serde_json::from_str(line).map_err(|e| OracleError::Format {
                line: n + 1,
                message: e.to_string(),
            })?;
            if r.i != records.len() {
                return Err(OracleError::Format {
                    line: n + 1,
                    message: format!("record index {} out of sequence", r.i),
                });
            }
            records.push(r);
        }
        Ok(GoldenFile { header, records })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DivergenceReport {
    pub index: usize,
    pub time: u64,
    pub expected: Option<GoldenRecord>,
    pub actual: Option<GoldenRecord>,
    /// Up to three steps either side, as (index, expected, actual).
    pub context: Vec<(usize, Option<GoldenRecord>, Option<GoldenRecord>)>,
}

impl std::fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |r: &Option<GoldenRecord>| match r {
            Some(r) => serde_json::to_string(r).expect("record serialises"),
            None => "(end of trace)".into(),
        };
        writeln!(f, "divergence at step {} (time {})", self.index, self.time)?;
        writeln!(f, "  expected: {}", show(&self.expected))?;
        writeln!(f, "  actual:   {}", show(&self.actual))?;
        for (i, e, a) in &self.context {
            let mark = if *i == self.index { ">" } else { " " };
            writeln!(f, "{mark} {i:>4} expected {}", show(e))?;
            writeln!(f, "       actual   {}", show(a))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("golden line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("stale golden: {field} is `{golden}` in the golden file but `{current}` now")]
    StaleGolden { field: String, golden: String, current: String },
    #[error("observation `{0}` has no counterpart in the concrete model")]
    UnmappedObservation(String),
    #[error("only {matched} projected events, at least {required} required")]
    TooFewMatches { matched: usize, required: usize },
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Clone, Debug)]
pub enum Comparison {
    Pass {
        records: usize,
    },
    /// Observed values differ before any event fires.
    InitialDiffers {
        expected: BTreeMap<String, String>,
        actual: BTreeMap<String, String>,
    },
    Diverged(Box<DivergenceReport>),
}

impl Comparison {
    pub fn passed(&self) -> bool {
        matches!(self, Comparison::Pass { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Obs {
    Var(VarId),
    Machine(MachineId),
}

fn resolve_observation(prog: &Program, name: &str) -> Option<Obs> {
    let q = QualName::parse(name)?;
    if let Some(v) = prog.var_by_name(&q.component, &q.name) {
        return Some(Obs::Var(v));
    }
    prog.machine_by_name(&q.component, &q.name).map(Obs::Machine)
}

fn state_path(prog: &Program, m: MachineId, s: Option<StateId>) -> String {
    let mi = &prog.machines[m];
    match s {
        Some(leaf) => mi
            .path(leaf)
            .iter()
            .map(|x| mi.states[*x].name.as_str())
            .collect::<Vec<_>>()
            .join("/"),
        None => "inactive".into(),
    }
}

fn observe_one(prog: &Program, state: &RuntimeState, obs: Obs) -> String {
    match obs {
        Obs::Var(v) => prog.show(state.vars[v]),
        Obs::Machine(m) => state_path(prog, m, state.config[m]),
    }
}

fn resolve_all(prog: &Program, names: &[String]) -> Result<Vec<(String, Obs)>, String> {
    names
        .iter()
        .map(|n| resolve_observation(prog, n).map(|o| (n.clone(), o)).ok_or_else(|| n.clone()))
        .collect()
}

fn snapshot(prog: &Program, state: &RuntimeState, obs: &[(String, Obs)]) -> BTreeMap<String, String> {
    obs.iter().map(|(n, o)| (n.clone(), observe_one(prog, state, *o))).collect()
}

fn golden_of(vm: &ValidModel, trace: &Trace, observe: &[String], obs: &[(String, Obs)]) -> GoldenFile {
    let prog = &*vm.program;
    GoldenFile {
        header: GoldenHeader {
            format: GOLDEN_FORMAT.into(),
            semantics: SEMANTICS_VERSION.into(),
            model: prog.name.clone(),
            model_hash: trace.header.model_hash.clone(),
            scenario_hash: trace.header.scenario_hash.clone(),
            observe: observe.to_vec(),
            initial: snapshot(prog, &trace.states[0], obs),
        },
        records: trace
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| GoldenRecord {
                i,
                time: r.time,
                event: r.choice.event.clone(),
                params: r.choice.params.clone(),
                obs: snapshot(prog, &trace.states[i + 1], obs),
            })
            .collect(),
    }
}

/// Runs the scenario and records the observation set it declares.
pub fn record(vm: &ValidModel, scenario: &Scenario, opts: &RunOptions) -> Result<GoldenFile, OracleError> {
    let obs = resolve_all(&vm.program, &scenario.observe).map_err(|n| OracleError::Format {
        line: 0,
        message: format!("scenario observes unknown variable or machine `{n}`"),
    })?;
    let trace = run(vm, scenario, opts)?;
    Ok(golden_of(vm, &trace, &scenario.observe, &obs))
}

/// Records an existing trace, for example one built step by step in an
/// interactive session, against the scenario's observation set. The header
/// carries the scenario's hash.
pub fn record_trace(vm: &ValidModel, trace: &Trace, scenario: &Scenario) -> Result<GoldenFile, OracleError> {
    let obs = resolve_all(&vm.program, &scenario.observe).map_err(|n| OracleError::Format {
        line: 0,
        message: format!("unknown variable or machine `{n}` in the observation set"),
    })?;
    let mut g = golden_of(vm, trace, &scenario.observe, &obs);
    g.header.scenario_hash = scenario.hash();
    Ok(g)
}

fn stale(field: &str, golden: &str, current: &str) -> Result<(), OracleError> {
    if golden == current {
        Ok(())
    } else {
        Err(OracleError::StaleGolden {
            field: field.into(),
            golden: golden.into(),
            current: current.into(),
        })
    }
}

fn first_divergence(expected: &[GoldenRecord], actual: &[GoldenRecord], prefixed: &[String]) -> Option<DivergenceReport> {
    let n = expected.len().max(actual.len());
    let index = (0..n).find(|&i| match (expected.get(i), actual.get(i)) {
        (Some(e), Some(a)) => !e.same_step(a, prefixed),
        _ => true,
    })?;
    let lo = index.saturating_sub(CONTEXT_WINDOW);
    let hi = (index + CONTEXT_WINDOW + 1).min(n);
    let e = expected.get(index).cloned();
    let a = actual.get(index).cloned();
    Some(DivergenceReport {
        index,
        time: e.as_ref().or(a.as_ref()).map(|r| r.time).unwrap_or(0),
        expected: e,
        actual: a,
        context: (lo..hi).map(|i| (i, expected.get(i).cloned(), actual.get(i).cloned())).collect(),
    })
}

#[derive(Clone, Debug, Default)]
pub struct CompareOptions {
    pub run: RunOptions,
    /// Compare a deliberately modified model against the golden of its
    /// previous version instead of rejecting the golden as stale.
    pub allow_model_change: bool,
}

/// Re-runs the scenario and compares against the golden file over the
/// golden's observation set. Headers are verified before any comparison.
pub fn compare(vm: &ValidModel, scenario: &Scenario, golden: &GoldenFile, opts: &CompareOptions) -> Result<Comparison, OracleError> {
    let prog = &*vm.program;
    let obs = resolve_all(prog, &golden.header.observe).map_err(|n| OracleError::Format {
        line: 1,
        message: format!(
            "observation `{n}` does not name a variable or state machine of model `{}`",
            prog.name
        ),
    })?;
    stale("semantics", &golden.header.semantics, SEMANTICS_VERSION)?;
    stale("model", &golden.header.model, &prog.name)?;
    if !opts.allow_model_change {
        stale("model_hash", &golden.header.model_hash, &vm.hash())?;
    }
    stale("scenario_hash", &golden.header.scenario_hash, &scenario.hash())?;
    let trace = run(vm, scenario, &opts.run)?;
    let actual = golden_of(vm, &trace, &golden.header.observe, &obs);
    if actual.header.initial != golden.header.initial {
        return Ok(Comparison::InitialDiffers {
            expected: golden.header.initial.clone(),
            actual: actual.header.initial,
        });
    }
    Ok(match first_divergence(&golden.records, &actual.records, &[]) {
        None => Comparison::Pass {
            records: actual.records.len(),
        },
        Some(d) => Comparison::Diverged(Box::new(d)),
    })
}

/// How abstract observations are read off a concrete state.
#[derive(Clone, Copy, Debug)]
enum Projected {
    Var(VarId),
    /// Concrete machine shown as the path of its abstract home state.
    Machine {
        concrete: MachineId,
        glue: usize,
    },
}

fn glued_var(spec: &RefinementSpec, av: VarId) -> Option<VarId> {
    let cprog = &*spec.concrete.program;
    let aprog = &*spec.abstract_model.program;
    for (_, g) in &spec.gluing {
        if let CExpr::Bin(BinOp::Eq, a, b) = g {
            match (&**a, &**b) {
                (CExpr::Var(Side::Own, c), CExpr::Var(Side::Abstract, x)) | (CExpr::Var(Side::Abstract, x), CExpr::Var(Side::Own, c))
                    if *x == av =>
                {
                    return Some(*c);
                }
                _ => {}
            }
        }
    }
    let info = &aprog.vars[av];
    cprog.var_by_name(&aprog.components[info.comp].name, &info.name)
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectionOptions {
    /// Minimum number of non-tick events that must survive projection.
    pub min_matches: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions { min_matches: 1 }
    }
}

/// Runs the concrete scenario, projects its trace onto the abstract
/// vocabulary and compares it with the abstract golden. New events are
/// dropped, refined events renamed, and state machine positions reported
/// as the abstract state that contains them.
pub fn compare_refinement(
    spec: &RefinementSpec,
    scenario: &Scenario,
    golden: &GoldenFile,
    opts: &RunOptions,
    proj: &ProjectionOptions,
) -> Result<Comparison, OracleError> {
    let cprog = &*spec.concrete.program;
    let aprog = &*spec.abstract_model.program;
    let abs_obs = resolve_all(aprog, &golden.header.observe).map_err(|n| OracleError::Format {
        line: 1,
        message: format!(
            "observation `{n}` does not name a variable or state machine of model `{}`",
            aprog.name
        ),
    })?;
    stale("semantics", &golden.header.semantics, SEMANTICS_VERSION)?;
    stale("model", &golden.header.model, &aprog.name)?;
    stale("model_hash", &golden.header.model_hash, &spec.abstract_model.hash())?;

    let mut projected = Vec::new();
    let mut prefixed = Vec::new();
    for (name, o) in &abs_obs {
        let p = match *o {
            Obs::Var(av) => glued_var(spec, av).map(Projected::Var),
            Obs::Machine(am) => spec.machines.iter().position(|g| g.abstract_machine == am).map(|glue| {
                prefixed.push(name.clone());
                Projected::Machine {
                    concrete: spec.machines[glue].concrete,
                    glue,
                }
            }),
        };
        projected.push((name.clone(), p.ok_or_else(|| OracleError::UnmappedObservation(name.clone()))?));
    }
    let view = |s: &RuntimeState| -> BTreeMap<String, String> {
        projected
            .iter()
            .map(|(n, p)| {
                let v = match *p {
                    Projected::Var(v) => cprog.show(s.vars[v]),
                    Projected::Machine { concrete, glue } => {
                        let g = &spec.machines[glue];
                        state_path(aprog, g.abstract_machine, s.config[concrete].map(|leaf| g.home[leaf]))
                    }
                };
                (n.clone(), v)
            })
            .collect()
    };

    let trace = run(&spec.concrete, scenario, opts)?;
    let mut actual = Vec::new();
    let mut matched = 0;
    for (i, r) in trace.records.iter().enumerate() {
        let (event, params) = if r.choice.event == "tick" {
            ("tick".to_string(), BTreeMap::new())
        } else {
            let q = QualName::parse(&r.choice.event).expect("recorded events are qualified");
            let op = cprog.op_by_name(&q.component, &q.name).expect("recorded events exist");
            let Some(aop) = spec.events[op] else { continue };
            matched += 1;
            let keep: Vec<&str> = aprog.ops[aop].params.iter().map(|p| p.name.as_str()).collect();
            let params = r
                .choice
                .params
                .iter()
                .filter(|(k, _)| keep.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            (aprog.op_label(aop), params)
        };
        actual.push(GoldenRecord {
            i: actual.len(),
            time: r.time,
            event,
            params,
            obs: view(&trace.states[i + 1]),
        });
    }
    if matched < proj.min_matches {
        return Err(OracleError::TooFewMatches {
            matched,
            required: proj.min_matches,
        });
    }
    let initial = view(&trace.states[0]);
    let initial_ok = golden.header.initial.len() == initial.len()
        && golden.header.initial.iter().all(|(k, v)| match initial.get(k) {
            Some(w) if prefixed.contains(k) => path_matches(v, w),
            Some(w) => v == w,
            None => false,
        });
    if !initial_ok {
        return Ok(Comparison::InitialDiffers {
            expected: golden.header.initial.clone(),
            actual: initial,
        });
    }
    Ok(match first_divergence(&golden.records, &actual, &prefixed) {
        None => Comparison::Pass { records: actual.len() },
        Some(d) => Comparison::Diverged(Box::new(d)),
    })
}
