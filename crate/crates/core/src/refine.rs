//! Bounded refinement checking by forward simulation.
//!
//! The concrete state space is explored one clock cycle at a time. Each
//! concrete state is paired with the set of abstract states that could
//! correspond to it. A concrete event mapped to an abstract event must be
//! matched by some firing of that event from one of those states that
//! re-establishes the gluing; a new event must preserve the gluing with the
//! abstract state unchanged; a tick must be matched by an abstract tick.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::check::{self, state_key, CheckConfig};
use crate::diag::Diagnostic;
use crate::eval::{eval, Env};
use crate::kernel::{self, Choice, EventRecord, KernelConfig, RuntimeState, StateView};
use crate::model::{Expr, MapTarget, OperationKind, QualName, RefinementDecls};
use crate::parser::{parse_refinement_decls, print_expr};
use crate::program::{CExpr, ConnId, MachineId, OpId, Program, Side, StateId, Value, VarId};
use crate::validate::{compile_predicate, load_file, ValidModel};

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("gluing invariant is ill-typed: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    GluingIllTyped(Vec<Diagnostic>),
    #[error("concrete event `{0}` has no abstract counterpart; map it or declare it new")]
    UnmappedEvent(String),
    #[error("event map names `{0}`, which is not an abstract event")]
    UnknownAbstractEvent(String),
    #[error("event map names `{0}`, which is not a concrete event")]
    UnknownConcreteEvent(String),
    #[error("new event `{0}` is neither synchronised, environmental nor convergent, so it could fire forever")]
    UnboundedNewEvent(String),
    #[error("concrete state `{state}` of {machine} has no abstract home")]
    UnmappedState { machine: String, state: String },
    #[error("{path}: {message}")]
    Load { path: String, message: String },
}

/// Correspondence between one concrete machine and the abstract machine of
/// the same component and name.
#[derive(Clone, Debug)]
pub struct MachineGlue {
    pub concrete: MachineId,
    pub abstract_machine: MachineId,
    /// Abstract home of each concrete state.
    pub home: Vec<StateId>,
}

#[derive(Clone, Debug)]
pub struct RefinementSpec {
    pub concrete: ValidModel,
    pub abstract_model: ValidModel,
    pub gluing: Vec<(String, CExpr)>,
    /// Abstract counterpart of each concrete operation; `None` for new events.
    pub events: Vec<Option<OpId>>,
    pub machines: Vec<MachineGlue>,
    /// Concrete element id of each abstract element, by name.
    elem_map: Vec<Option<u32>>,
}

/// Maps each state of `cm` to the nearest abstract state of the same name
/// among itself and its ancestors, or to an explicitly declared one.
pub fn derive_state_homes(
    cprog: &Program,
    cm: MachineId,
    aprog: &Program,
    am: MachineId,
    explicit: &[(String, String)],
) -> Result<Vec<StateId>, RefineError> {
    let c = &cprog.machines[cm];
    let a = &aprog.machines[am];
    let mut homes = Vec::with_capacity(c.states.len());
    for s in 0..c.states.len() {
        let mut cur = Some(s);
        let mut home = None;
        while let Some(x) = cur {
            let name = &c.states[x].name;
            let target = explicit
                .iter()
                .find(|(cn, _)| cn == name)
                .map(|(_, an)| an.as_str())
                .unwrap_or(name);
            if let Some(h) = a.state_by_name(target) {
                home = Some(h);
                break;
            }
            cur = c.states[x].parent;
        }
        homes.push(home.ok_or_else(|| RefineError::UnmappedState {
            machine: format!("{}.{}", cprog.components[c.comp].name, c.name),
            state: c.states[s].name.clone(),
        })?);
    }
    Ok(homes)
}

/// The state gluing as predicate text: `in(S) => in(abs.H)` for every
/// concrete state whose abstract home has a different name. Identical
/// machines give `TRUE`.
pub fn derive_state_gluing(
    cprog: &Program,
    cm: MachineId,
    aprog: &Program,
    am: MachineId,
    explicit: &[(String, String)],
) -> Result<String, RefineError> {
    let homes = derive_state_homes(cprog, cm, aprog, am, explicit)?;
    let c = &cprog.machines[cm];
    let a = &aprog.machines[am];
    let parts: Vec<String> = homes
        .iter()
        .enumerate()
        .filter(|(s, h)| c.states[*s].name != a.states[**h].name)
        .map(|(s, h)| format!("in({}) => in(abs.{})", c.states[s].name, a.states[*h].name))
        .collect();
    Ok(if parts.is_empty() { "TRUE".into() } else { parts.join(" and ") })
}

fn resolve_abstract(aprog: &Program, q: &QualName) -> Option<OpId> {
    aprog.op_by_name(&q.component, &q.name)
}

impl RefinementSpec {
    pub fn new(concrete: ValidModel, abstract_model: ValidModel, decls: &RefinementDecls) -> Result<Self, RefineError> {
        let cprog = &*concrete.program;
        let aprog = &*abstract_model.program;

        let mut gluing = Vec::new();
        for g in &decls.gluing {
            let ce = compile_predicate(g, cprog, Some(aprog)).map_err(RefineError::GluingIllTyped)?;
            gluing.push((print_expr(g), ce));
        }

        let mut explicit: BTreeMap<OpId, Option<OpId>> = BTreeMap::new();
        for m in &decls.events {
            let c = cprog
                .op_by_name(&m.concrete.component, &m.concrete.name)
                .ok_or_else(|| RefineError::UnknownConcreteEvent(m.concrete.to_string()))?;
            let target = match &m.target {
                MapTarget::New => None,
                MapTarget::Abstract(q) => Some(resolve_abstract(aprog, q).ok_or_else(|| RefineError::UnknownAbstractEvent(q.to_string()))?),
            };
            explicit.insert(c, target);
        }
        let mut events = Vec::with_capacity(cprog.ops.len());
        for (op, info) in cprog.ops.iter().enumerate() {
            let label = cprog.op_label(op);
            let target = match explicit.get(&op) {
                Some(t) => *t,
                None => Some(
                    aprog
                        .op_by_name(&cprog.components[info.comp].name, &info.name)
                        .ok_or_else(|| RefineError::UnmappedEvent(label.clone()))?,
                ),
            };
            let bounded = info.is_synchronised(cprog) || info.convergent || info.kind == OperationKind::E;
            if target.is_none() && !bounded {
                return Err(RefineError::UnboundedNewEvent(label));
            }
            events.push(target);
        }

        let mut machines = Vec::new();
        for (cm, m) in cprog.machines.iter().enumerate() {
            if let Some(am) = aprog.machine_by_name(&cprog.components[m.comp].name, &m.name) {
                let home = derive_state_homes(cprog, cm, aprog, am, &decls.states)?;
                machines.push(MachineGlue {
                    concrete: cm,
                    abstract_machine: am,
                    home,
                });
            }
        }

        let elem_map = aprog.elements.iter().map(|e| cprog.elem_by_name(&e.name)).collect();
        Ok(RefinementSpec {
            concrete,
            abstract_model,
            gluing,
            events,
            machines,
            elem_map,
        })
    }

    /// A model against itself: every variable glued to its abstract copy,
    /// every event mapped to itself.
    pub fn identity(vm: &ValidModel) -> Result<Self, RefineError> {
        let prog = &*vm.program;
        let mut decls = RefinementDecls::default();
        for v in 0..prog.vars.len() {
            let label = prog.var_label(v);
            let text = format!("{label} = abs.{label}");
            let e: Expr = crate::parser::parse_expr(&text).map_err(|d| RefineError::GluingIllTyped(vec![d]))?;
            decls.gluing.push(e);
        }
        Self::new(vm.clone(), vm.clone(), &decls)
    }

    fn translate(&self, v: Value) -> Value {
        match v {
            Value::Elem(e) => Value::Elem(self.elem_map[e as usize].unwrap_or(u32::MAX - e)),
            other => other,
        }
    }

    /// Whether the gluing (explicit predicates and machine state homes)
    /// holds between a concrete and an abstract state.
    pub fn glued(&self, c: &RuntimeState, a: &RuntimeState, bound: i64) -> bool {
        let cprog = &*self.concrete.program;
        let aprog = &*self.abstract_model.program;
        for g in &self.machines {
            match (c.config[g.concrete], a.config[g.abstract_machine]) {
                (None, None) => {}
                (Some(cl), Some(al)) => {
                    let am = &aprog.machines[g.abstract_machine];
                    if !cprog.machines[g.concrete].path(cl).iter().all(|s| am.contains(g.home[*s], al)) {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        let env = JointEnv { spec: self, c, a };
        self.gluing.iter().all(|(_, e)| eval(e, &env, bound) == Ok(Value::Bool(true)))
    }

    /// Index of the first explicit gluing predicate that fails, for reports.
    fn failing_gluing(&self, c: &RuntimeState, a: &RuntimeState, bound: i64) -> String {
        let env = JointEnv { spec: self, c, a };
        for (text, e) in &self.gluing {
            if eval(e, &env, bound) != Ok(Value::Bool(true)) {
                return format!("`{text}`");
            }
        }
        "the state correspondence".into()
    }
}

struct JointEnv<'a> {
    spec: &'a RefinementSpec,
    c: &'a RuntimeState,
    a: &'a RuntimeState,
}

impl Env for JointEnv<'_> {
    fn var(&self, side: Side, v: VarId) -> Value {
        match side {
            Side::Own => self.c.vars[v],
            Side::Abstract => self.spec.translate(self.a.vars[v]),
        }
    }
    fn param(&self, _: usize) -> Value {
        Value::Int(0)
    }
    fn recv(&self, _: Side, _: ConnId) -> Option<Value> {
        None
    }
    fn in_state(&self, side: Side, m: MachineId, s: StateId) -> bool {
        match side {
            Side::Own => kernel::in_state(&self.spec.concrete.program, self.c, m, s),
            Side::Abstract => kernel::in_state(&self.spec.abstract_model.program, self.a, m, s),
        }
    }
}

/// Reads the refinement declarations for a concrete model file: the inline
/// `refines` block, or a `.refines` file next to it. Returns the abstract
/// model path and the declarations.
pub fn load_spec(concrete_path: &Path, concrete: &ValidModel) -> Result<(Option<PathBuf>, RefinementDecls), RefineError> {
    let dir = concrete_path.parent().unwrap_or(Path::new("."));
    if let Some(r) = &concrete.model.refines {
        return Ok((Some(dir.join(&r.path)), r.decls.clone()));
    }
    let companion = concrete_path.with_extension("refines");
    if companion.exists() {
        let text = std::fs::read_to_string(&companion).map_err(|e| RefineError::Load {
            path: companion.display().to_string(),
            message: e.to_string(),
        })?;
        let decls = parse_refinement_decls(&text).map_err(|d| RefineError::Load {
            path: companion.display().to_string(),
            message: d.to_string(),
        })?;
        return Ok((None, decls));
    }
    Ok((None, RefinementDecls::default()))
}

/// Loads a concrete model and the abstract model its `refines` clause names.
pub fn load_pair(concrete_path: &Path, abstract_path: Option<&Path>) -> Result<RefinementSpec, RefineError> {
    let load = |p: &Path| {
        load_file(p).map_err(|diags| RefineError::Load {
            path: p.display().to_string(),
            message: diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "),
        })
    };
    let concrete = load(concrete_path)?;
    let (named, decls) = load_spec(concrete_path, &concrete)?;
    let apath = abstract_path.map(Path::to_path_buf).or(named).ok_or_else(|| RefineError::Load {
        path: concrete_path.display().to_string(),
        message: "no abstract model given and the model has no `refines` clause".into(),
    })?;
    let abstract_model = load(&apath)?;
    RefinementSpec::new(concrete, abstract_model, &decls)
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementCounterexample {
    pub description: String,
    /// Concrete events up to and including the one that cannot be matched.
    pub records: Vec<EventRecord>,
    pub concrete_state: Option<StateView>,
    /// Abstract states that corresponded to the concrete state before the
    /// failing step.
    pub abstract_states: Vec<StateView>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RefinementVerdict {
    Holds,
    Violated(Box<RefinementCounterexample>),
    BoundExhausted,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementResult {
    pub concrete: String,
    pub abstract_model: String,
    pub max_time: u64,
    pub verdict: RefinementVerdict,
    /// Times each abstract event was matched.
    pub matched: BTreeMap<String, u64>,
    /// Abstract events that fire when the abstract model is explored on its
    /// own but were never matched by the concrete model: a sign of guard
    /// strengthening.
    pub strengthened: Vec<String>,
    pub states: usize,
    pub wall_ms: u128,
}

impl RefinementResult {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, RefinementVerdict::Holds)
    }

    pub fn report(&self) -> String {
        let mut out = format!(
            "{} refines {}: checked by bounded forward simulation up to time {} ({} product states, {} ms); this is not a proof\n",
            self.concrete, self.abstract_model, self.max_time, self.states, self.wall_ms
        );
        match &self.verdict {
            RefinementVerdict::Holds => out.push_str("  holds within bounds\n"),
            RefinementVerdict::BoundExhausted => out.push_str("  bound exhausted before the time bound was covered\n"),
            RefinementVerdict::Violated(cx) => {
                out.push_str(&format!("  VIOLATED: {}\n", cx.description));
                for r in &cx.records {
                    if r.choice.event != "tick" {
                        out.push_str(&format!("    {:>4}  {}\n", r.time, r.choice.event));
                    }
                }
            }
        }
        if !self.strengthened.is_empty() {
            out.push_str(&format!(
                "  abstract events never matched although reachable on their own: {}\n",
                self.strengthened.join(", ")
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct RefineConfig {
    pub max_time: u64,
    pub max_states: usize,
    pub kernel: KernelConfig,
    /// Also explore the abstract model alone to report strengthened guards.
    pub coverage_diff: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            max_time: 20,
            max_states: 500_000,
            kernel: KernelConfig::default(),
            coverage_diff: true,
        }
    }
}

struct Node {
    parent: Option<(usize, Choice)>,
}

struct Product {
    c: RuntimeState,
    a: Vec<RuntimeState>,
}

fn product_key(p: &Product) -> Vec<u8> {
    let mut keys: Vec<Box<[u8]>> = p.a.iter().map(|a| state_key(a, true)).collect();
    keys.sort();
    keys.dedup();
    let mut out = state_key(&p.c, true).into_vec();
    for k in keys {
        out.extend_from_slice(&(k.len() as u32).to_le_bytes());
        out.extend_from_slice(&k);
    }
    out
}

/// Abstract instances that may match a concrete event instance: parameters
/// shared by name must carry the same value.
fn matching_instances(spec: &RefinementSpec, aop: OpId, cchoice: &Choice, a: &RuntimeState, acfg: &KernelConfig) -> Vec<Choice> {
    let cprog = &*spec.concrete.program;
    let aprog = &*spec.abstract_model.program;
    let Choice::Op { op, params, .. } = cchoice else {
        return vec![];
    };
    kernel::enabled_instances(aprog, a, aop, acfg)
        .into_iter()
        .filter(|ac| {
            let Choice::Op { params: aparams, .. } = ac else { return false };
            aprog.ops[aop]
                .params
                .iter()
                .zip(aparams)
                .all(|(ap, av)| match cprog.ops[*op].params.iter().position(|cp| cp.name == ap.name) {
                    Some(i) => spec.translate(*av) == params[i],
                    None => true,
                })
        })
        .collect()
}

pub fn check_refinement(spec: &RefinementSpec, cfg: &RefineConfig) -> RefinementResult {
    let start = Instant::now();
    let cprog = &*spec.concrete.program;
    let aprog = &*spec.abstract_model.program;
    let mut ccfg = cfg.kernel.clone();
    ccfg.prune = true;
    let mut acfg = ccfg.clone();
    acfg.env_bound = u32::MAX;
    let bound = cfg.kernel.int_bound;

    let mut result = RefinementResult {
        concrete: cprog.name.clone(),
        abstract_model: aprog.name.clone(),
        max_time: cfg.max_time,
        verdict: RefinementVerdict::Holds,
        matched: aprog.ops.iter().enumerate().map(|(i, _)| (aprog.op_label(i), 0)).collect(),
        strengthened: Vec::new(),
        states: 0,
        wall_ms: 0,
    };

    let violation = |nodes: &[Node], idx: usize, failing: Option<&Choice>, description: String, abs: &[RuntimeState]| {
        let mut path = Vec::new();
        let mut cur = idx;
        while let Some((p, c)) = &nodes[cur].parent {
            path.push(c.clone());
            cur = *p;
        }
        path.reverse();
        path.extend(failing.cloned());
        let mut state = kernel::init(cprog, &ccfg).expect("initial state computed before");
        let mut records = Vec::new();
        for c in &path {
            let (next, rec) = kernel::fire(cprog, &state, c, &ccfg).expect("explored path replays");
            records.push(rec);
            state = next;
        }
        RefinementVerdict::Violated(Box::new(RefinementCounterexample {
            description,
            records,
            concrete_state: Some(StateView::new(cprog, &state)),
            abstract_states: abs.iter().map(|a| StateView::new(aprog, a)).collect(),
        }))
    };

    let (c0, a0) = match (kernel::init(cprog, &ccfg), kernel::init(aprog, &acfg)) {
        (Ok(c), Ok(a)) => (c, a),
        (Err(e), _) | (_, Err(e)) => {
            result.verdict = RefinementVerdict::Violated(Box::new(RefinementCounterexample {
                description: format!("initial state cannot be computed: {e}"),
                records: vec![],
                concrete_state: None,
                abstract_states: vec![],
            }));
            return result;
        }
    };
    let mut nodes = vec![Node { parent: None }];
    if !spec.glued(&c0, &a0, bound) {
        let what = spec.failing_gluing(&c0, &a0, bound);
        result.verdict = violation(&nodes, 0, None, format!("the initial states violate {what}"), &[a0]);
        return result;
    }
    let first = Product { c: c0, a: vec![a0] };
    let mut seen: HashSet<Vec<u8>> = HashSet::from([product_key(&first)]);
    let mut cycle = vec![(0usize, first)];
    let mut exhausted = false;

    'outer: while !cycle.is_empty() {
        let mut next_cycle = Vec::new();
        let mut wave = std::mem::take(&mut cycle);
        while !wave.is_empty() {
            let mut next_wave = Vec::new();
            for (idx, p) in wave {
                for choice in kernel::enabled(cprog, &p.c, &ccfg) {
                    if choice == Choice::Tick && p.c.time >= cfg.max_time {
                        continue;
                    }
                    let c2 = match kernel::fire(cprog, &p.c, &choice, &ccfg) {
                        Ok((s, _)) => s,
                        Err(e) => {
                            let d = format!("concrete event {} fails: {e}", choice.label(cprog));
                            result.verdict = violation(&nodes, idx, None, d, &p.a);
                            break 'outer;
                        }
                    };
                    let mut any_step = false;
                    let mut a2: Vec<RuntimeState> = Vec::new();
                    let mut matched_ops = BTreeSet::new();
                    match &choice {
                        Choice::Tick => {
                            for a in &p.a {
                                if let Ok(n) = kernel::tick(aprog, a, &acfg) {
                                    any_step = true;
                                    if spec.glued(&c2, &n, bound) {
                                        a2.push(n);
                                    }
                                }
                            }
                        }
                        Choice::Op { op, .. } => match spec.events[*op] {
                            None => {
                                any_step = true;
                                a2.extend(p.a.iter().filter(|a| spec.glued(&c2, a, bound)).cloned());
                            }
                            Some(aop) => {
                                for a in &p.a {
                                    for ac in matching_instances(spec, aop, &choice, a, &acfg) {
                                        if let Ok((n, _)) = kernel::fire(aprog, a, &ac, &acfg) {
                                            any_step = true;
                                            if spec.glued(&c2, &n, bound) {
                                                matched_ops.insert(aop);
                                                a2.push(n);
                                            }
                                        }
                                    }
                                }
                            }
                        },
                    }
                    if a2.is_empty() {
                        let label = choice.label(cprog);
                        let d = if !any_step {
                            let what = match &choice {
                                Choice::Tick => "tick".to_string(),
                                Choice::Op { op, .. } => spec.events[*op].map(|a| aprog.op_label(a)).unwrap_or_default(),
                            };
                            format!("concrete {label} at time {} has no matching abstract {what}", p.c.time)
                        } else {
                            let what = p.a.first().map(|a| spec.failing_gluing(&c2, a, bound)).unwrap_or_default();
                            format!("after concrete {label} at time {} no abstract state satisfies {what}", p.c.time)
                        };
                        result.verdict = violation(&nodes, idx, Some(&choice), d, &p.a);
                        break 'outer;
                    }
                    for aop in matched_ops {
                        *result.matched.get_mut(&aprog.op_label(aop)).unwrap() += 1;
                    }
                    let mut keyed: Vec<(Box<[u8]>, RuntimeState)> = a2.into_iter().map(|a| (state_key(&a, true), a)).collect();
                    keyed.sort_by(|x, y| x.0.cmp(&y.0));
                    keyed.dedup_by(|x, y| x.0 == y.0);
                    let next = Product {
                        c: c2,
                        a: keyed.into_iter().map(|(_, a)| a).collect(),
                    };
                    if !seen.insert(product_key(&next)) {
                        continue;
                    }
                    if nodes.len() >= cfg.max_states {
                        exhausted = true;
                        break 'outer;
                    }
                    nodes.push(Node {
                        parent: Some((idx, choice.clone())),
                    });
                    let n = nodes.len() - 1;
                    if choice == Choice::Tick {
                        next_cycle.push((n, next));
                    } else {
                        next_wave.push((n, next));
                    }
                }
            }
            wave = next_wave;
        }
        cycle = next_cycle;
    }
    if exhausted && matches!(result.verdict, RefinementVerdict::Holds) {
        result.verdict = RefinementVerdict::BoundExhausted;
    }
    result.states = nodes.len();

    if cfg.coverage_diff && matches!(result.verdict, RefinementVerdict::Holds) {
        let alone = check::explore(
            &spec.abstract_model,
            &CheckConfig {
                max_time: cfg.max_time,
                max_states: cfg.max_states,
                kernel: cfg.kernel.clone(),
                invariants: false,
                deadlock: false,
                ..CheckConfig::default()
            },
        );
        if let Ok(alone) = alone {
            result.strengthened = alone
                .coverage
                .operations
                .iter()
                .filter(|(op, n)| **n > 0 && result.matched.get(*op) == Some(&0))
                .map(|(op, _)| op.clone())
                .collect();
        }
    }
    result.wall_ms = start.elapsed().as_millis();
    result
}
