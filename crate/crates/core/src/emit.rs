//! Event-B text for a model: a context holding the carrier sets,
//! constants and state enumerations, and a machine whose variables are the
//! clock, one timed map per connector and per component wake queue, the
//! component variables, one enumerated variable per state machine and one
//! boolean per synchronisation flag.
//!
//! Received values become local event parameters bound to the newest
//! delivery not in the future. Conditional expressions are written as
//! application of a two-point function to `bool(c)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::model::{BinOp, Expr, ExprKind, Extremum, OperationKind, UnOp};
use crate::program::{CAction, CExpr, FlagKind, MachineId, OpId, Program, Side, StateId, Ty, Value, VarId};
use crate::refine::RefinementSpec;
use crate::validate::ValidModel;

pub const WAKE_KIND_SET: &str = "WakeKind";
pub const WAKE_DEFAULT: &str = "WAKE_DEFAULT";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Emitted {
    pub context_name: String,
    pub context: String,
    pub machine_name: String,
    pub machine: String,
}

impl Emitted {
    pub fn context_file(&self) -> String {
        format!("{}.ctx.eventb", self.machine_name)
    }

    pub fn machine_file(&self) -> String {
        format!("{}.mch.eventb", self.machine_name)
    }
}

/// Identifier choices for one program.
struct Names {
    vars: Vec<String>,
    machines: Vec<String>,
    events: Vec<String>,
    flags: Vec<String>,
    wakeups: Vec<String>,
}

impl Names {
    fn new(prog: &Program) -> Names {
        let mut taken: BTreeSet<String> = BTreeSet::new();
        taken.insert("current_time".into());
        taken.extend(prog.connectors.iter().map(|c| c.name.clone()));
        taken.extend(prog.constants.iter().map(|c| c.name.clone()));
        taken.extend(prog.elements.iter().map(|e| e.name.clone()));
        taken.extend(prog.sets.iter().map(|s| s.name.clone()));
        taken.extend(prog.machines.iter().flat_map(|m| m.states.iter().map(|s| s.name.clone())));
        let wakeups: Vec<String> = prog.components.iter().map(|c| format!("{}_wakeup", c.name)).collect();
        taken.extend(wakeups.iter().cloned());
        let flags: Vec<String> = prog
            .flags
            .iter()
            .map(|f| match f.kind {
                FlagKind::Method => f.name.trim_end_matches("_fired").to_string() + "_called",
                _ => f.name.clone(),
            })
            .collect();
        taken.extend(flags.iter().cloned());

        let count = |names: Vec<&str>| {
            let mut n: BTreeMap<String, usize> = BTreeMap::new();
            for x in names {
                *n.entry(x.to_string()).or_default() += 1;
            }
            n
        };
        let var_counts = count(prog.vars.iter().map(|v| v.name.as_str()).collect());
        let vars = prog
            .vars
            .iter()
            .map(|v| {
                if var_counts[&v.name] > 1 || taken.contains(&v.name) {
                    format!("{}_{}", prog.components[v.comp].name, v.name)
                } else {
                    v.name.clone()
                }
            })
            .collect::<Vec<_>>();
        taken.extend(vars.iter().cloned());
        let m_counts = count(prog.machines.iter().map(|m| m.name.as_str()).collect());
        let machines = prog
            .machines
            .iter()
            .map(|m| {
                if m_counts[&m.name] > 1 || taken.contains(&m.name) {
                    format!("{}_{}", prog.components[m.comp].name, m.name)
                } else {
                    m.name.clone()
                }
            })
            .collect::<Vec<_>>();
        taken.extend(machines.iter().cloned());
        let op_counts = count(prog.ops.iter().map(|o| o.name.as_str()).collect());
        let events = prog
            .ops
            .iter()
            .map(|o| {
                if op_counts[&o.name] > 1 || taken.contains(&o.name) || o.name == "tick" || o.name == "INITIALISATION" {
                    format!("{}_{}", prog.components[o.comp].name, o.name)
                } else {
                    o.name.clone()
                }
            })
            .collect();
        Names {
            vars,
            machines,
            events,
            flags,
            wakeups,
        }
    }
}

fn state_set(names: &Names, m: MachineId) -> String {
    format!("{}_STATE", names.machines[m])
}

fn inactive(names: &Names, m: MachineId) -> String {
    format!("{}_INACTIVE", names.machines[m])
}

fn can_be_inactive(prog: &Program, m: MachineId) -> bool {
    let mi = &prog.machines[m];
    mi.starts_inactive || mi.transitions.iter().any(|t| t.target.is_none() && !t.is_initial())
}

fn leaves_under(prog: &Program, m: MachineId, s: StateId) -> Vec<String> {
    let mi = &prog.machines[m];
    mi.leaves()
        .into_iter()
        .filter(|l| mi.contains(s, *l))
        .map(|l| mi.states[l].name.clone())
        .collect()
}

fn ty_text(prog: &Program, t: Ty) -> String {
    match t {
        Ty::Bool => "BOOL".into(),
        Ty::Nat => "ℕ".into(),
        Ty::Int => "ℤ".into(),
        Ty::Set(s) => prog.sets[s].name.clone(),
    }
}

fn value_text(prog: &Program, v: Value) -> String {
    match v {
        Value::Bool(true) => "TRUE".into(),
        Value::Bool(false) => "FALSE".into(),
        Value::Int(i) if i < 0 => format!("−{}", -(i as i128)),
        Value::Int(i) => i.to_string(),
        Value::Elem(e) => prog.elements[e as usize].name.clone(),
    }
}

/// Rendering context for compiled expressions.
struct Render<'a> {
    prog: &'a Program,
    names: &'a Names,
    /// Abstract side, for gluing invariants.
    abs: Option<(&'a Program, &'a Names)>,
    params: Vec<String>,
}

fn bin_sym(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "−",
        BinOp::Mul => "∗",
        BinOp::Eq => "=",
        BinOp::Ne => "≠",
        BinOp::Lt => "<",
        BinOp::Le => "≤",
        BinOp::Gt => ">",
        BinOp::Ge => "≥",
        BinOp::And => "∧",
        BinOp::Or => "∨",
        BinOp::Implies => "⇒",
    }
}

impl Render<'_> {
    fn side(&self, side: Side) -> (&Program, &Names) {
        match (side, self.abs) {
            (Side::Abstract, Some(a)) => a,
            _ => (self.prog, self.names),
        }
    }

    fn var_name(&self, side: Side, v: VarId) -> String {
        self.side(side).1.vars[v].clone()
    }

    fn machine_name(&self, side: Side, m: MachineId) -> String {
        let n = self.side(side).1.machines[m].clone();
        if side == Side::Abstract {
            n + "_abs"
        } else {
            n
        }
    }

    fn recv_param(&self, side: Side, c: usize) -> String {
        format!("{}_value", self.side(side).0.connectors[c].name)
    }

    fn atom(&self, e: &CExpr) -> String {
        let s = self.expr(e);
        match e {
            CExpr::Bin(..) | CExpr::Neg(_) => format!("({s})"),
            _ => s,
        }
    }

    /// Expression (value) form.
    fn expr(&self, e: &CExpr) -> String {
        match e {
            CExpr::Lit(v) => value_text(self.prog, *v),
            CExpr::Var(side, v) => self.var_name(*side, *v),
            CExpr::Param(i) => self.params[*i].clone(),
            CExpr::Recv(side, c) => self.recv_param(*side, *c),
            CExpr::Neg(a) => format!("−{}", self.atom(a)),
            CExpr::Bin(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul), a, b) => {
                format!("{} {} {}", self.atom(a), bin_sym(*op), self.atom(b))
            }
            CExpr::Ext(which, args) => {
                let f = match which {
                    Extremum::Min => "min",
                    Extremum::Max => "max",
                };
                let xs: Vec<String> = args.iter().map(|a| self.expr(a)).collect();
                format!("{f}({{{}}})", xs.join(", "))
            }
            CExpr::Ite(c, t, f) => format!("{{TRUE ↦ {}, FALSE ↦ {}}}(bool({}))", self.expr(t), self.expr(f), self.pred(c)),
            CExpr::In(..) | CExpr::Not(_) | CExpr::Bin(..) => format!("bool({})", self.pred(e)),
        }
    }

    fn pred_atom(&self, e: &CExpr) -> String {
        let s = self.pred(e);
        match e {
            CExpr::Bin(BinOp::And | BinOp::Or | BinOp::Implies, ..) | CExpr::Ite(..) => format!("({s})"),
            _ => s,
        }
    }

    /// Predicate form.
    fn pred(&self, e: &CExpr) -> String {
        match e {
            CExpr::Lit(Value::Bool(true)) => "⊤".into(),
            CExpr::Lit(Value::Bool(false)) => "⊥".into(),
            CExpr::In(side, m, s) => {
                let prog = self.side(*side).0;
                let leaves = leaves_under(prog, *m, *s);
                let var = self.machine_name(*side, *m);
                if leaves.len() == 1 {
                    format!("{var} = {}", leaves[0])
                } else {
                    format!("{var} ∈ {{{}}}", leaves.join(", "))
                }
            }
            CExpr::Not(a) => format!("¬({})", self.pred(a)),
            CExpr::Bin(op @ (BinOp::And | BinOp::Or | BinOp::Implies), a, b) => {
                format!("{} {} {}", self.pred_atom(a), bin_sym(*op), self.pred_atom(b))
            }
            CExpr::Bin(op, a, b) => format!("{} {} {}", self.expr(a), bin_sym(*op), self.expr(b)),
            CExpr::Ite(c, t, f) => {
                let c = self.pred_atom(c);
                format!("({c} ⇒ {}) ∧ (¬{c} ⇒ {})", self.pred_atom(t), self.pred_atom(f))
            }
            other => format!("{} = TRUE", self.expr(other)),
        }
    }
}

fn collect_recvs(e: &CExpr, out: &mut BTreeSet<usize>) {
    match e {
        CExpr::Recv(Side::Own, c) => {
            out.insert(*c);
        }
        CExpr::Not(a) | CExpr::Neg(a) => collect_recvs(a, out),
        CExpr::Bin(_, a, b) => {
            collect_recvs(a, out);
            collect_recvs(b, out);
        }
        CExpr::Ext(_, xs) => xs.iter().for_each(|x| collect_recvs(x, out)),
        CExpr::Ite(c, t, f) => {
            collect_recvs(c, out);
            collect_recvs(t, out);
            collect_recvs(f, out);
        }
        _ => {}
    }
}

fn action_exprs(a: &CAction) -> Vec<&CExpr> {
    match a {
        CAction::Assign { value, .. } => vec![value],
        CAction::Send { value, delay, .. } => vec![value, delay],
        CAction::Wake { delay } => vec![delay],
        CAction::Call { .. } => vec![],
    }
}

/// Axioms are rendered from source, where constants keep their names.
fn axiom_text(e: &Expr) -> String {
    fn atom(e: &Expr) -> String {
        match &e.kind {
            ExprKind::Binary(..) | ExprKind::Ite(..) => format!("({})", go(e)),
            _ => go(e),
        }
    }
    fn go(e: &Expr) -> String {
        match &e.kind {
            ExprKind::Bool(true) => "⊤".into(),
            ExprKind::Bool(false) => "⊥".into(),
            ExprKind::Int(i) if *i < 0 => format!("−{}", -(*i as i128)),
            ExprKind::Int(i) => i.to_string(),
            ExprKind::Name(p) => p.join("_"),
            ExprKind::Recv(c) => c.clone(),
            ExprKind::InState(p) => p.join("_"),
            ExprKind::Unary(UnOp::Not, a) => format!("¬{}", atom(a)),
            ExprKind::Unary(UnOp::Neg, a) => format!("−{}", atom(a)),
            ExprKind::Binary(op, a, b) => format!("{} {} {}", atom(a), bin_sym(*op), atom(b)),
            ExprKind::Extremum(w, xs) => {
                let f = if *w == Extremum::Min { "min" } else { "max" };
                format!("{f}({{{}}})", xs.iter().map(go).collect::<Vec<_>>().join(", "))
            }
            ExprKind::Ite(c, t, f) => format!("{{TRUE ↦ {}, FALSE ↦ {}}}(bool({}))", go(t), go(f), go(c)),
        }
    }
    go(e)
}

fn emit_context(vm: &ValidModel, names: &Names, ctx_name: &str) -> String {
    let prog = &*vm.program;
    let mut out = String::new();
    writeln!(out, "context {ctx_name}").unwrap();
    writeln!(out, "sets").unwrap();
    for s in &prog.sets {
        writeln!(out, "  {}", s.name).unwrap();
    }
    writeln!(out, "  {WAKE_KIND_SET}").unwrap();
    for m in 0..prog.machines.len() {
        writeln!(out, "  {}", state_set(names, m)).unwrap();
    }
    writeln!(out, "constants").unwrap();
    for e in &prog.elements {
        writeln!(out, "  {}", e.name).unwrap();
    }
    writeln!(out, "  {WAKE_DEFAULT}").unwrap();
    for m in 0..prog.machines.len() {
        for l in prog.machines[m].leaves() {
            writeln!(out, "  {}", prog.machines[m].states[l].name).unwrap();
        }
        if can_be_inactive(prog, m) {
            writeln!(out, "  {}", inactive(names, m)).unwrap();
        }
    }
    for c in &prog.constants {
        writeln!(out, "  {}", c.name).unwrap();
    }
    writeln!(out, "axioms").unwrap();
    let mut n = 0;
    let mut axm = |out: &mut String, text: String| {
        n += 1;
        writeln!(out, "  @axm{n} {text}").unwrap();
    };
    for s in &prog.sets {
        let parts: Vec<String> = s.elems.iter().map(|e| format!("{{{}}}", prog.elements[*e as usize].name)).collect();
        axm(&mut out, format!("partition({}, {})", s.name, parts.join(", ")));
    }
    axm(&mut out, format!("partition({WAKE_KIND_SET}, {{{WAKE_DEFAULT}}})"));
    for m in 0..prog.machines.len() {
        let mut parts: Vec<String> = prog.machines[m]
            .leaves()
            .into_iter()
            .map(|l| format!("{{{}}}", prog.machines[m].states[l].name))
            .collect();
        if can_be_inactive(prog, m) {
            parts.push(format!("{{{}}}", inactive(names, m)));
        }
        axm(&mut out, format!("partition({}, {})", state_set(names, m), parts.join(", ")));
    }
    for c in &prog.constants {
        axm(&mut out, format!("{} ∈ {}", c.name, ty_text(prog, c.ty)));
        axm(&mut out, format!("{} = {}", c.name, value_text(prog, c.value)));
    }
    for ctx in &vm.model.contexts {
        for a in &ctx.axioms {
            axm(&mut out, axiom_text(a));
        }
    }
    writeln!(out, "end").unwrap();
    out
}

/// How a machine refines its abstraction.
struct RefinementView<'a> {
    spec: &'a RefinementSpec,
    anames: Names,
}

fn initial_leaf(prog: &Program, names: &Names, m: MachineId) -> String {
    let mi = &prog.machines[m];
    match (mi.starts_inactive, mi.initial.and_then(|t| mi.transitions[t].target)) {
        (false, Some(s)) => mi.states[crate::kernel::enter(mi, s)].name.clone(),
        _ => inactive(names, m),
    }
}

fn emit_machine(vm: &ValidModel, names: &Names, ctx_name: &str, refinement: Option<&RefinementView>) -> String {
    let prog = &*vm.program;
    let mut out = String::new();
    writeln!(out, "machine {}", prog.name).unwrap();
    if let Some(r) = refinement {
        writeln!(out, "refines {}", r.spec.abstract_model.program.name).unwrap();
    }
    writeln!(out, "sees {ctx_name}").unwrap();

    writeln!(out, "variables").unwrap();
    writeln!(out, "  current_time").unwrap();
    for c in &prog.connectors {
        writeln!(out, "  {}", c.name).unwrap();
    }
    for w in &names.wakeups {
        writeln!(out, "  {w}").unwrap();
    }
    for v in &names.vars {
        writeln!(out, "  {v}").unwrap();
    }
    for m in &names.machines {
        writeln!(out, "  {m}").unwrap();
    }
    for f in &names.flags {
        writeln!(out, "  {f}").unwrap();
    }

    let r = Render {
        prog,
        names,
        abs: refinement.map(|rv| (&*rv.spec.abstract_model.program, &rv.anames)),
        params: vec![],
    };
    writeln!(out, "invariants").unwrap();
    let mut n = 0;
    let mut inv = |out: &mut String, text: String| {
        n += 1;
        writeln!(out, "  @inv{n} {text}").unwrap();
    };
    inv(&mut out, "current_time ∈ ℕ".into());
    for c in &prog.connectors {
        inv(&mut out, format!("{} ∈ ℕ ⇸ {}", c.name, ty_text(prog, c.ty)));
    }
    for w in &names.wakeups {
        inv(&mut out, format!("{w} ∈ ℕ ⇸ {WAKE_KIND_SET}"));
    }
    for (v, info) in prog.vars.iter().enumerate() {
        inv(&mut out, format!("{} ∈ {}", names.vars[v], ty_text(prog, info.ty)));
    }
    for m in 0..prog.machines.len() {
        inv(&mut out, format!("{} ∈ {}", names.machines[m], state_set(names, m)));
    }
    for f in &names.flags {
        inv(&mut out, format!("{f} ∈ BOOL"));
    }
    for (m, mi) in prog.machines.iter().enumerate() {
        for (s, st) in mi.states.iter().enumerate() {
            for e in &st.invariants {
                let inside = r.pred(&CExpr::In(Side::Own, m, s));
                inv(&mut out, format!("{inside} ⇒ {}", r.pred_atom(e)));
            }
        }
    }
    if let Some(rv) = refinement {
        for (_, g) in &rv.spec.gluing {
            if let CExpr::Bin(BinOp::Eq, a, b) = g {
                if r.expr(a) == r.expr(b) {
                    continue;
                }
            }
            inv(&mut out, r.pred(g));
        }
        let aprog = &*rv.spec.abstract_model.program;
        for glue in &rv.spec.machines {
            let cm = &prog.machines[glue.concrete];
            let am = &aprog.machines[glue.abstract_machine];
            let cl: Vec<&str> = cm.leaves().into_iter().map(|l| cm.states[l].name.as_str()).collect();
            let al: Vec<&str> = am.leaves().into_iter().map(|l| am.states[l].name.as_str()).collect();
            if cl == al {
                continue;
            }
            for l in cm.leaves() {
                let home = r.pred(&CExpr::In(Side::Abstract, glue.abstract_machine, glue.home[l]));
                inv(
                    &mut out,
                    format!("{} = {} ⇒ {home}", names.machines[glue.concrete], cm.states[l].name),
                );
            }
        }
    }

    let variants: Vec<String> = prog
        .components
        .iter()
        .filter_map(|c| c.variant.as_ref())
        .map(|v| r.expr(v))
        .collect();
    if !variants.is_empty() {
        writeln!(out, "variant").unwrap();
        writeln!(out, "  {}", variants.join(" + ")).unwrap();
    }

    writeln!(out, "events").unwrap();
    writeln!(out, "  event INITIALISATION").unwrap();
    writeln!(out, "    then").unwrap();
    let mut acts = vec!["current_time ≔ 0".to_string()];
    acts.extend(prog.connectors.iter().map(|c| format!("{} ≔ ∅", c.name)));
    acts.extend(names.wakeups.iter().map(|w| format!("{w} ≔ ∅")));
    for (v, info) in prog.vars.iter().enumerate() {
        acts.push(format!("{} ≔ {}", names.vars[v], r.expr(&info.init)));
    }
    for m in 0..prog.machines.len() {
        acts.push(format!("{} ≔ {}", names.machines[m], initial_leaf(prog, names, m)));
    }
    acts.extend(names.flags.iter().map(|f| format!("{f} ≔ FALSE")));
    for (i, a) in acts.iter().enumerate() {
        writeln!(out, "      @act{} {a}", i + 1).unwrap();
    }
    writeln!(out, "  end").unwrap();

    for op in 0..prog.ops.len() {
        emit_events(&mut out, prog, names, op, refinement);
    }
    emit_tick(&mut out, prog, names);
    writeln!(out, "end").unwrap();
    out
}

/// Every combination of one linked transition per machine.
fn transition_choices(prog: &Program, op: OpId) -> Vec<Vec<(MachineId, usize)>> {
    let mut combos: Vec<Vec<(MachineId, usize)>> = vec![vec![]];
    for (m, ts) in &prog.ops[op].links {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                ts.iter().map(move |t| {
                    let mut c = c.clone();
                    c.push((*m, *t));
                    c
                })
            })
            .collect();
    }
    combos
}

fn emit_events(out: &mut String, prog: &Program, names: &Names, op: OpId, refinement: Option<&RefinementView>) {
    let info = &prog.ops[op];
    let r = Render {
        prog,
        names,
        abs: None,
        params: info.params.iter().map(|p| p.name.clone()).collect(),
    };
    let combos = transition_choices(prog, op);
    for combo in &combos {
        let mut name = names.events[op].clone();
        if combos.len() > 1 {
            for (m, t) in combo {
                name.push('_');
                name.push_str(&prog.machines[*m].transitions[*t].name);
            }
        }
        let mut guards: Vec<String> = Vec::new();
        let mut actions: Vec<(String, String)> = Vec::new();

        let mut recvs = BTreeSet::new();
        let trans_guards: Vec<&CExpr> = combo.iter().flat_map(|(m, t)| &prog.machines[*m].transitions[*t].guards).collect();
        let trans_actions: Vec<&CAction> = combo.iter().flat_map(|(m, t)| &prog.machines[*m].transitions[*t].actions).collect();
        for g in info.guards.iter().chain(trans_guards.iter().copied()) {
            collect_recvs(g, &mut recvs);
        }
        for a in info.actions.iter().chain(trans_actions.iter().copied()) {
            for e in action_exprs(a) {
                collect_recvs(e, &mut recvs);
            }
        }

        match info.kind {
            OperationKind::P => {
                for c in &info.wakes {
                    guards.push(format!("current_time ∈ dom({})", prog.connectors[*c].name));
                }
            }
            OperationKind::S => guards.push(format!("current_time ∈ dom({})", names.wakeups[info.comp])),
            _ => {}
        }
        for c in &recvs {
            let cn = &prog.connectors[*c].name;
            guards.push(format!("{cn}_value = {cn}(max({{t ∣ t ∈ dom({cn}) ∧ t ≤ current_time}}))"));
        }
        if let Some(f) = info.flag {
            match info.kind {
                OperationKind::M => {
                    guards.push(format!("{} = TRUE", names.flags[f]));
                    actions.push((names.flags[f].clone(), "FALSE".into()));
                }
                _ => {
                    guards.push(format!("{} = FALSE", names.flags[f]));
                    actions.push((names.flags[f].clone(), "TRUE".into()));
                }
            }
        }
        for (m, t) in combo {
            let mi = &prog.machines[*m];
            let tr = &mi.transitions[*t];
            match tr.source {
                Some(s) => guards.push(r.pred(&CExpr::In(Side::Own, *m, s))),
                None => guards.push(format!("{} = {}", names.machines[*m], inactive(names, *m))),
            }
            if let Some(f) = mi.flag {
                guards.push(format!("{} = FALSE", names.flags[f]));
                actions.push((names.flags[f].clone(), "TRUE".into()));
            }
            let target = match tr.target {
                Some(s) => mi.states[crate::kernel::enter(mi, s)].name.clone(),
                None => inactive(names, *m),
            };
            actions.push((names.machines[*m].clone(), target));
        }
        for g in info.guards.iter().chain(trans_guards.iter().copied()) {
            guards.push(r.pred(g));
        }

        let mut maps: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for a in info.actions.iter().chain(trans_actions.iter().copied()) {
            match a {
                CAction::Assign { var, value } => actions.push((names.vars[*var].clone(), r.expr(value))),
                CAction::Send { conn, value, delay } => maps.entry(prog.connectors[*conn].name.clone()).or_default().push(format!(
                    "current_time + {} ↦ {}",
                    r.atom(delay),
                    r.expr(value)
                )),
                CAction::Wake { delay } => maps
                    .entry(names.wakeups[info.comp].clone())
                    .or_default()
                    .push(format!("current_time + {} ↦ {WAKE_DEFAULT}", r.atom(delay))),
                CAction::Call { op: m } => {
                    if let Some(f) = prog.ops[*m].flag {
                        actions.push((names.flags[f].clone(), "TRUE".into()));
                    }
                }
            }
        }
        for (target, pairs) in maps {
            actions.push((target.clone(), format!("{target} \u{E103} {{{}}}", pairs.join(", "))));
        }

        let mut locals: Vec<String> = info.params.iter().map(|p| p.name.clone()).collect();
        locals.extend(recvs.iter().map(|c| format!("{}_value", prog.connectors[*c].name)));
        for (i, p) in info.params.iter().enumerate() {
            let dom = match p.ty {
                Ty::Set(s) => prog.sets[s].name.clone(),
                _ => {
                    let lo = p.domain.first().map(|v| value_text(prog, *v)).unwrap_or_default();
                    let hi = p.domain.last().map(|v| value_text(prog, *v)).unwrap_or_default();
                    if p.ty == Ty::Bool {
                        "BOOL".into()
                    } else {
                        format!("{lo} ‥ {hi}")
                    }
                }
            };
            guards.insert(i, format!("{} ∈ {dom}", p.name));
        }

        writeln!(out, "  event {name}").unwrap();
        let status = if info.convergent { "convergent" } else { "ordinary" };
        writeln!(out, "    status {status}").unwrap();
        if let Some(rv) = refinement {
            if let Some(aop) = rv.spec.events[op] {
                writeln!(out, "    refines {}", rv.anames.events[aop]).unwrap();
            }
        }
        writeln!(out, "    // {} {}", info.kind, prog.op_label(op)).unwrap();
        if !locals.is_empty() {
            writeln!(out, "    any {}", locals.join(" ")).unwrap();
        }
        if !guards.is_empty() {
            writeln!(out, "    where").unwrap();
            for (i, g) in guards.iter().enumerate() {
                writeln!(out, "      @grd{} {g}", i + 1).unwrap();
            }
        }
        if !actions.is_empty() {
            writeln!(out, "    then").unwrap();
            for (i, (t, v)) in actions.iter().enumerate() {
                writeln!(out, "      @act{} {t} ≔ {v}", i + 1).unwrap();
            }
        }
        writeln!(out, "  end").unwrap();
    }
}

fn emit_tick(out: &mut String, prog: &Program, names: &Names) {
    writeln!(out, "  event tick").unwrap();
    writeln!(out, "    where").unwrap();
    let mut guards = Vec::new();
    for c in &prog.connectors {
        let mut g = format!("current_time ∉ dom({})", c.name);
        for f in &c.groups {
            g.push_str(&format!(" ∨ {} = TRUE", names.flags[*f]));
        }
        guards.push(g);
    }
    for (ci, comp) in prog.components.iter().enumerate() {
        let mut g = format!("current_time ∉ dom({})", names.wakeups[ci]);
        if let Some(f) = comp.s_flag {
            g.push_str(&format!(" ∨ {} = TRUE", names.flags[f]));
        }
        guards.push(g);
    }
    for (m, mi) in prog.machines.iter().enumerate() {
        if let Some(f) = mi.flag {
            let mut g = format!("{} = TRUE", names.flags[f]);
            if can_be_inactive(prog, m) {
                g.push_str(&format!(" ∨ {} = {}", names.machines[m], inactive(names, m)));
            }
            guards.push(g);
        }
    }
    for (f, info) in prog.flags.iter().enumerate() {
        if info.kind == FlagKind::Method {
            guards.push(format!("{} = FALSE", names.flags[f]));
        }
    }
    for (i, g) in guards.iter().enumerate() {
        writeln!(out, "      @grd{} {g}", i + 1).unwrap();
    }
    writeln!(out, "    then").unwrap();
    writeln!(out, "      @act1 current_time ≔ current_time + 1").unwrap();
    let mut i = 1;
    for (f, info) in prog.flags.iter().enumerate() {
        if info.kind != FlagKind::Method {
            i += 1;
            writeln!(out, "      @act{i} {} ≔ FALSE", names.flags[f]).unwrap();
        }
    }
    writeln!(out, "  end").unwrap();
}

pub fn emit(vm: &ValidModel) -> Emitted {
    let prog = &*vm.program;
    let names = Names::new(prog);
    let ctx_name = format!("{}_ctx", prog.name);
    Emitted {
        context: emit_context(vm, &names, &ctx_name),
        machine: emit_machine(vm, &names, &ctx_name, None),
        context_name: ctx_name,
        machine_name: prog.name.clone(),
    }
}

/// Emits the concrete model of a refinement with its `refines` clause,
/// gluing invariants and per-event `refines` annotations. Abstract state
/// machine variables are referred to with an `_abs` suffix.
pub fn emit_refinement(spec: &RefinementSpec) -> Emitted {
    let vm = &spec.concrete;
    let prog = &*vm.program;
    let names = Names::new(prog);
    let ctx_name = format!("{}_ctx", prog.name);
    let view = RefinementView {
        spec,
        anames: Names::new(&spec.abstract_model.program),
    };
    Emitted {
        context: emit_context(vm, &names, &ctx_name),
        machine: emit_machine(vm, &names, &ctx_name, Some(&view)),
        context_name: ctx_name,
        machine_name: prog.name.clone(),
    }
}
