//! Name resolution, type checking and compilation of parsed models.

mod expr;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::diag::{DiagCode, Diagnostic, Span};
use crate::eval::{eval, NoEnv};
use crate::model::*;
use crate::parser;
use crate::program::*;

pub(crate) use expr::{ExprCx, RecvRule};

/// Default magnitude bound for integer arithmetic.
pub const DEFAULT_INT_BOUND: i64 = i32::MAX as i64;

/// Largest parameter domain that is enumerated.
const MAX_DOMAIN: i64 = 4096;

#[derive(Clone, Debug)]
pub struct ValidateOptions {
    pub int_bound: i64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            int_bound: DEFAULT_INT_BOUND,
        }
    }
}

/// A model whose names resolve and whose expressions type-check, together
/// with its compiled program.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidModel {
    pub model: Model,
    pub program: Arc<Program>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidModel {
    pub fn canonical_text(&self) -> String {
        parser::print(&self.model)
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

pub fn validate(model: &Model) -> Result<ValidModel, Vec<Diagnostic>> {
    validate_with(model, &ValidateOptions::default())
}

pub fn validate_with(model: &Model, opts: &ValidateOptions) -> Result<ValidModel, Vec<Diagnostic>> {
    let mut v = Validator {
        prog: Program {
            name: model.name.clone(),
            ..Program::default()
        },
        diags: Vec::new(),
        bound: opts.int_bound,
    };
    v.contexts(model);
    v.structure(model);
    v.flags(model);
    v.bodies(model);
    v.kind_checks(model);
    v.literal_bounds(model);
    if v.diags.iter().any(|d| d.is_error()) {
        let mut diags = v.diags;
        diags.sort_by_key(|d| (!d.is_error(), d.span.start_line, d.span.start_col));
        return Err(diags);
    }
    Ok(ValidModel {
        model: model.clone(),
        program: Arc::new(v.prog),
        warnings: v.diags,
    })
}

/// Parses and validates a source text.
pub fn load_str(src: &str) -> Result<ValidModel, Vec<Diagnostic>> {
    validate(&parser::parse(src)?)
}

/// Reads, parses and validates a model file. Diagnostics carry the file name.
pub fn load_file(path: &Path) -> Result<ValidModel, Vec<Diagnostic>> {
    let name = path.display().to_string();
    let src = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::error(DiagCode::SyntaxError, Span::default(), format!("cannot read file: {e}")).in_file(&name)])?;
    load_str(&src).map_err(|ds| ds.into_iter().map(|d| d.in_file(&name)).collect())
}

/// Type of an expression in the scope of a component (or the whole model
/// when `component` is `None`).
pub fn type_of(expr: &Expr, vm: &ValidModel, component: Option<&str>) -> Result<ValueType, Diagnostic> {
    let prog = &vm.program;
    let comp = match component {
        Some(c) => Some(
            prog.comp_by_name(c)
                .ok_or_else(|| Diagnostic::error(DiagCode::UnresolvedName, expr.span, format!("unresolved component `{c}`")))?,
        ),
        None => None,
    };
    let cx = ExprCx {
        comp,
        recv: RecvRule::Owner,
        foreign: true,
        ..ExprCx::new(prog)
    };
    let mut diags = Vec::new();
    match cx.compile(expr, &mut diags) {
        Some((_, t)) => Ok(match t {
            Ty::Bool => ValueType::Bool,
            Ty::Nat => ValueType::Nat,
            Ty::Int => ValueType::Int,
            Ty::Set(s) => ValueType::Set(prog.sets[s].name.clone()),
        }),
        None => Err(diags.into_iter().next().expect("failed compilation reports a diagnostic")),
    }
}

/// Compiles a model-wide boolean expression, such as a gluing invariant,
/// optionally against an abstract program reachable through `abs.` names.
pub fn compile_predicate(expr: &Expr, prog: &Program, abs: Option<&Program>) -> Result<CExpr, Vec<Diagnostic>> {
    let cx = ExprCx {
        abs,
        foreign: true,
        recv: RecvRule::Forbidden("model-wide predicates"),
        ..ExprCx::new(prog)
    };
    let mut diags = Vec::new();
    cx.compile_bool(expr, "predicate", &mut diags).ok_or(diags)
}

struct Validator {
    prog: Program,
    diags: Vec<Diagnostic>,
    bound: i64,
}

/// A model-level transition and where it lives.
struct TransRef<'m> {
    machine: MachineId,
    trans: TransId,
    ast: &'m Transition,
}

impl Validator {
    fn err(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn warn(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::warning(code, span, msg));
    }

    fn resolve_ty(&mut self, t: &ValueType, span: Span) -> Ty {
        match t {
            ValueType::Bool => Ty::Bool,
            ValueType::Nat => Ty::Nat,
            ValueType::Int => Ty::Int,
            ValueType::Set(s) => match self.prog.set_by_name(s) {
                Some(i) => Ty::Set(i),
                None => {
                    self.err(DiagCode::UnresolvedName, span, format!("unresolved carrier set `{s}`"));
                    Ty::Bool
                }
            },
        }
    }

    fn contexts(&mut self, m: &Model) {
        let names: HashSet<&str> = m.contexts.iter().map(|c| c.name.as_str()).collect();
        for ctx in &m.contexts {
            if let Some(e) = &ctx.extends {
                if !names.contains(e.as_str()) || e == &ctx.name {
                    self.err(
                        DiagCode::UnresolvedName,
                        ctx.span,
                        format!("context `{}` extends unknown context `{e}`", ctx.name),
                    );
                }
            }
            for set in &ctx.sets {
                if self.prog.set_by_name(&set.name).is_some() {
                    self.err(
                        DiagCode::DuplicateDeclaration,
                        set.span,
                        format!("carrier set `{}` declared twice", set.name),
                    );
                    continue;
                }
                let id = self.prog.sets.len();
                let mut elems = Vec::new();
                for e in &set.elements {
                    if self.prog.elem_by_name(e).is_some() {
                        self.err(DiagCode::DuplicateDeclaration, set.span, format!("element `{e}` declared twice"));
                        continue;
                    }
                    elems.push(self.prog.elements.len() as u32);
                    self.prog.elements.push(ElemInfo { name: e.clone(), set: id });
                }
                if elems.is_empty() {
                    self.err(
                        DiagCode::KindConstraintViolation,
                        set.span,
                        format!("carrier set `{}` is empty", set.name),
                    );
                }
                self.prog.sets.push(SetInfo {
                    name: set.name.clone(),
                    elems,
                });
            }
            for k in &ctx.constants {
                let ty = self.resolve_ty(&k.ty, k.span);
                if self.prog.constants.iter().any(|c| c.name == k.name) || self.prog.elem_by_name(&k.name).is_some() {
                    self.err(
                        DiagCode::DuplicateDeclaration,
                        k.span,
                        format!("constant `{}` declared twice", k.name),
                    );
                    continue;
                }
                let mut diags = Vec::new();
                let compiled = ExprCx::new(&self.prog).compile(&k.value, &mut diags);
                self.diags.extend(diags);
                let Some((c, t)) = compiled else { continue };
                if !ty_accepts(ty, t) {
                    self.err(
                        DiagCode::TypeMismatch,
                        k.value.span,
                        format!(
                            "constant `{}` is {} but its value is {}",
                            k.name,
                            self.prog.ty_name(ty),
                            self.prog.ty_name(t)
                        ),
                    );
                    continue;
                }
                match eval(&c, &NoEnv, self.bound) {
                    Ok(v) if self.prog.value_has_type(v, ty) => self.prog.constants.push(ConstInfo {
                        name: k.name.clone(),
                        ty,
                        value: v,
                    }),
                    Ok(_) => self.err(
                        DiagCode::TypeMismatch,
                        k.value.span,
                        format!("value of `{}` is outside its type", k.name),
                    ),
                    Err(e) => self.err(DiagCode::ArithmeticBound, k.value.span, format!("constant `{}`: {e}", k.name)),
                }
            }
            for ax in &ctx.axioms {
                let mut diags = Vec::new();
                let c = ExprCx::new(&self.prog).compile_bool(ax, "axiom", &mut diags);
                self.diags.extend(diags);
                if let Some(c) = c {
                    if eval(&c, &NoEnv, self.bound) != Ok(Value::Bool(true)) {
                        self.err(
                            DiagCode::KindConstraintViolation,
                            ax.span,
                            "axiom does not hold for the declared constants",
                        );
                    }
                }
            }
        }
    }

    /// Builds the name tables: components, variables, connectors,
    /// operation headers and state machines.
    fn structure(&mut self, m: &Model) {
        for comp in &m.components {
            self.prog.components.push(CompInfo {
                name: comp.name.clone(),
                vars: vec![],
                ops: vec![],
                machines: vec![],
                variant: None,
                s_flag: None,
            });
        }
        for (ci, comp) in m.components.iter().enumerate() {
            for var in &comp.variables {
                let ty = self.resolve_ty(&var.ty, var.span);
                let id = self.prog.vars.len();
                self.prog.vars.push(VarInfo {
                    name: var.name.clone(),
                    comp: ci,
                    ty,
                    init: CExpr::Lit(Value::Bool(false)),
                });
                self.prog.components[ci].vars.push(id);
            }
        }
        for conn in &m.connectors {
            let ty = self.resolve_ty(&conn.ty, conn.span);
            let source = self.prog.comp_by_name(&conn.source);
            let target = self.prog.comp_by_name(&conn.target);
            for (end, id) in [(&conn.source, source), (&conn.target, target)] {
                if id.is_none() {
                    self.err(
                        DiagCode::UnresolvedName,
                        conn.span,
                        format!("connector `{}` names unknown component `{end}`", conn.name),
                    );
                }
            }
            if source.is_some() && source == target {
                self.err(
                    DiagCode::KindConstraintViolation,
                    conn.span,
                    format!("connector `{}` connects `{}` to itself", conn.name, conn.source),
                );
            }
            self.prog.connectors.push(ConnInfo {
                name: conn.name.clone(),
                ty,
                source: source.unwrap_or(0),
                target: target.unwrap_or(0),
                groups: vec![],
            });
        }
        for (ci, comp) in m.components.iter().enumerate() {
            for op in &comp.operations {
                self.op_header(ci, op);
            }
        }
        let mut state_owner: HashMap<String, String> = HashMap::new();
        for (ci, comp) in m.components.iter().enumerate() {
            for sm in &comp.machines {
                for s in sm.walk_states() {
                    if let Some(prev) = state_owner.insert(s.name.clone(), sm.name.clone()) {
                        self.err(
                            DiagCode::DuplicateDeclaration,
                            s.span,
                            format!(
                                "state `{}` is already declared in machine `{prev}`; state names are model-wide",
                                s.name
                            ),
                        );
                    }
                    if self.prog.elem_by_name(&s.name).is_some() || self.prog.constants.iter().any(|k| k.name == s.name) {
                        self.err(
                            DiagCode::DuplicateDeclaration,
                            s.span,
                            format!("state `{}` clashes with a constant or set element", s.name),
                        );
                    }
                }
                self.machine(ci, sm);
            }
        }
    }

    fn op_header(&mut self, ci: CompId, op: &Operation) {
        let mut params = Vec::new();
        for p in &op.params {
            let ty = self.resolve_ty(&p.ty, p.span);
            let domain: Vec<Value> = match (ty, p.range) {
                (Ty::Bool, None) => vec![Value::Bool(false), Value::Bool(true)],
                (Ty::Set(s), None) => self.prog.sets[s].elems.iter().map(|e| Value::Elem(*e)).collect(),
                (t, Some((lo, hi))) if t.is_numeric() => {
                    if lo > hi || (t == Ty::Nat && lo < 0) {
                        self.err(
                            DiagCode::UnboundedDomain,
                            p.span,
                            format!("parameter `{}` has an empty or ill-typed range {lo}..{hi}", p.name),
                        );
                        vec![]
                    } else if hi - lo >= MAX_DOMAIN {
                        self.err(
                            DiagCode::UnboundedDomain,
                            p.span,
                            format!("range of parameter `{}` has more than {MAX_DOMAIN} values", p.name),
                        );
                        vec![]
                    } else {
                        (lo..=hi).map(Value::Int).collect()
                    }
                }
                (t, None) if t.is_numeric() => {
                    self.err(
                        DiagCode::UnboundedDomain,
                        p.span,
                        format!("numeric parameter `{}` needs a finite range (`in lo..hi`)", p.name),
                    );
                    vec![]
                }
                (_, Some(_)) => {
                    self.err(
                        DiagCode::TypeMismatch,
                        p.span,
                        format!("only numeric parameters take a range (`{}`)", p.name),
                    );
                    vec![]
                }
                _ => unreachable!(),
            };
            params.push(ParamInfo {
                name: p.name.clone(),
                ty,
                domain,
            });
        }
        let mut wakes = Vec::new();
        for w in &op.wakes {
            match self.prog.conn_by_name(w) {
                Some(c) => wakes.push(c),
                None => self.err(
                    DiagCode::UnresolvedName,
                    op.span,
                    format!("operation `{}` wakes on unknown connector `{w}`", op.name),
                ),
            }
        }
        let id = self.prog.ops.len();
        self.prog.ops.push(OpInfo {
            name: op.name.clone(),
            comp: ci,
            kind: op.kind,
            params,
            wakes,
            guards: vec![],
            actions: vec![],
            flag: None,
            links: vec![],
            convergent: op.convergent,
            synthesized: false,
        });
        self.prog.components[ci].ops.push(id);
    }

    fn machine(&mut self, ci: CompId, sm: &StateMachine) {
        let mid = self.prog.machines.len();
        let mut info = MachineInfo {
            name: sm.name.clone(),
            comp: ci,
            mode: sm.mode,
            states: vec![],
            transitions: vec![],
            initial: None,
            starts_inactive: false,
            flag: None,
        };
        fn flatten(s: &State, parent: Option<StateId>, out: &mut Vec<StateInfo>) {
            let id = out.len();
            out.push(StateInfo {
                name: s.name.clone(),
                parent,
                children: vec![],
                initial: None,
                invariants: vec![],
                invariant_text: s.invariants.iter().map(parser::print_expr).collect(),
            });
            for c in &s.children {
                let cid = out.len();
                out[id].children.push(cid);
                flatten(c, Some(id), out);
            }
        }
        for s in &sm.states {
            flatten(s, None, &mut info.states);
        }
        if info.states.is_empty() {
            self.err(
                DiagCode::KindConstraintViolation,
                sm.span,
                format!("state machine `{}` has no states", sm.name),
            );
        }
        self.prog.components[ci].machines.push(mid);
        self.prog.machines.push(info);

        // Initial transitions: the top level first, then nested regions.
        match &sm.initial {
            Some(t) => {
                let tid = self.transition(ci, mid, t, None, "initial".into());
                self.prog.machines[mid].initial = tid;
            }
            None => self.err(
                DiagCode::KindConstraintViolation,
                sm.span,
                format!("state machine `{}` has no initial transition", sm.name),
            ),
        }
        for s in sm.walk_states() {
            let sid = self.prog.machines[mid].state_by_name(&s.name).unwrap();
            match (&s.initial, s.children.is_empty()) {
                (Some(t), false) => {
                    let tid = self.transition(ci, mid, t, Some(sid), format!("initial_{}", s.name));
                    self.prog.machines[mid].states[sid].initial = tid;
                }
                (None, false) => self.err(
                    DiagCode::KindConstraintViolation,
                    s.span,
                    format!("superstate `{}` has no initial transition for its nested states", s.name),
                ),
                (Some(_), true) => self.err(
                    DiagCode::KindConstraintViolation,
                    s.span,
                    format!("state `{}` has an initial transition but no nested states", s.name),
                ),
                (None, true) => {}
            }
        }
        for t in &sm.transitions {
            let name = t.name.clone().unwrap_or_else(|| "_".into());
            self.transition(ci, mid, t, None, name);
        }
    }

    fn transition(&mut self, ci: CompId, mid: MachineId, t: &Transition, region: Option<StateId>, name: String) -> Option<TransId> {
        let m = &self.prog.machines[mid];
        let source = match &t.source {
            Source::Initial => None,
            Source::State(s) => match m.state_by_name(s) {
                Some(id) => Some(id),
                None => {
                    let msg = format!("transition `{name}` leaves unknown state `{s}` of machine `{}`", m.name);
                    self.err(DiagCode::UnresolvedName, t.span, msg);
                    return None;
                }
            },
        };
        let target = match &t.target {
            Target::Final => None,
            Target::State(s) => match m.state_by_name(s) {
                Some(id) => Some(id),
                None => {
                    let msg = format!("transition `{name}` enters unknown state `{s}` of machine `{}`", m.name);
                    self.err(DiagCode::UnresolvedName, t.span, msg);
                    return None;
                }
            },
        };
        if let (Some(r), Some(tg)) = (region, target) {
            if m.states[tg].parent != Some(r) {
                let msg = format!("initial transition of `{}` must enter one of its direct children", m.states[r].name);
                self.diags.push(Diagnostic::error(DiagCode::KindConstraintViolation, t.span, msg));
            }
        }
        if source.is_none() && region.is_none() {
            if let Some(tg) = target {
                if m.states[tg].parent.is_some() {
                    self.diags.push(Diagnostic::error(
                        DiagCode::KindConstraintViolation,
                        t.span,
                        "the initial transition must enter a top-level state",
                    ));
                }
            }
        }
        let tid = m.transitions.len();
        let op = match &t.links {
            Some(l) => match self.prog.components[ci].ops.iter().copied().find(|o| &self.prog.ops[*o].name == l) {
                Some(o) => Some(o),
                None => {
                    let msg = format!(
                        "transition `{name}` links unknown operation `{l}` of component `{}`",
                        self.prog.components[ci].name
                    );
                    self.err(DiagCode::UnresolvedName, t.span, msg);
                    None
                }
            },
            None if source.is_some() => {
                // An unlinked transition is an event in its own right.
                if self.prog.op_by_name(&self.prog.components[ci].name, &name).is_some() {
                    self.err(
                        DiagCode::DuplicateDeclaration,
                        t.span,
                        format!("unlinked transition `{name}` clashes with an operation of the same name"),
                    );
                    None
                } else {
                    let id = self.prog.ops.len();
                    self.prog.ops.push(OpInfo {
                        name: name.clone(),
                        comp: ci,
                        kind: OperationKind::T,
                        params: vec![],
                        wakes: vec![],
                        guards: vec![],
                        actions: vec![],
                        flag: None,
                        links: vec![],
                        convergent: false,
                        synthesized: true,
                    });
                    self.prog.components[ci].ops.push(id);
                    Some(id)
                }
            }
            None => None,
        };
        if let Some(o) = op {
            let links = &mut self.prog.ops[o].links;
            match links.iter_mut().find(|(m, _)| *m == mid) {
                Some((_, ts)) => ts.push(tid),
                None => links.push((mid, vec![tid])),
            }
        }
        self.prog.machines[mid].transitions.push(TransInfo {
            name,
            source,
            region,
            target,
            op,
            guards: vec![],
            actions: vec![],
        });
        Some(tid)
    }

    fn flags(&mut self, _m: &Model) {
        let p = &mut self.prog;
        for ci in 0..p.components.len() {
            let mut groups: Vec<(BTreeSet<ConnId>, FlagId)> = Vec::new();
            for oi in p.components[ci].ops.clone() {
                let op = &p.ops[oi];
                let flag = match op.kind {
                    OperationKind::P => {
                        let set: BTreeSet<ConnId> = op.wakes.iter().copied().collect();
                        if set.is_empty() {
                            continue;
                        }
                        match groups.iter().find(|(s, _)| *s == set) {
                            Some((_, f)) => *f,
                            None => {
                                let names: Vec<&str> = set.iter().map(|c| p.connectors[*c].name.as_str()).collect();
                                let f = p.flags.len();
                                p.flags.push(FlagInfo {
                                    name: format!("{}_{}_fired", p.components[ci].name, names.join("_")),
                                    kind: FlagKind::PortGroup,
                                    comp: ci,
                                });
                                for c in &set {
                                    p.connectors[*c].groups.push(f);
                                }
                                groups.push((set, f));
                                f
                            }
                        }
                    }
                    OperationKind::S => match p.components[ci].s_flag {
                        Some(f) => f,
                        None => {
                            let f = p.flags.len();
                            p.flags.push(FlagInfo {
                                name: format!("{}_wake_fired", p.components[ci].name),
                                kind: FlagKind::SelfWake,
                                comp: ci,
                            });
                            p.components[ci].s_flag = Some(f);
                            f
                        }
                    },
                    OperationKind::M => {
                        let f = p.flags.len();
                        p.flags.push(FlagInfo {
                            name: format!("{}_{}_fired", p.components[ci].name, op.name),
                            kind: FlagKind::Method,
                            comp: ci,
                        });
                        f
                    }
                    _ => continue,
                };
                p.ops[oi].flag = Some(flag);
            }
        }
        for mi in 0..p.machines.len() {
            if p.machines[mi].mode == MachineMode::Synchronous {
                let f = p.flags.len();
                p.flags.push(FlagInfo {
                    name: format!("{}_fired", p.machines[mi].name),
                    kind: FlagKind::Machine,
                    comp: p.machines[mi].comp,
                });
                p.machines[mi].flag = Some(f);
            }
        }
    }

    fn trans_refs<'m>(&self, m: &'m Model) -> Vec<TransRef<'m>> {
        let mut out = Vec::new();
        let mut mid = 0;
        for comp in &m.components {
            for sm in &comp.machines {
                let mi = &self.prog.machines[mid];
                let lookup = |name: &str| mi.transitions.iter().position(|t| t.name == name);
                if let Some(t) = &sm.initial {
                    if let Some(tid) = lookup("initial") {
                        out.push(TransRef {
                            machine: mid,
                            trans: tid,
                            ast: t,
                        });
                    }
                }
                for s in sm.walk_states() {
                    if let Some(t) = &s.initial {
                        if let Some(tid) = lookup(&format!("initial_{}", s.name)) {
                            out.push(TransRef {
                                machine: mid,
                                trans: tid,
                                ast: t,
                            });
                        }
                    }
                }
                for t in &sm.transitions {
                    if let Some(tid) = lookup(t.name.as_deref().unwrap_or("_")) {
                        out.push(TransRef {
                            machine: mid,
                            trans: tid,
                            ast: t,
                        });
                    }
                }
                mid += 1;
            }
        }
        out
    }

    /// Compiles every expression and action.
    fn bodies(&mut self, m: &Model) {
        let mut diags = Vec::new();
        // Variable initial values: constants and literals only.
        for vi in 0..self.prog.vars.len() {
            let comp = &m.components[self.prog.vars[vi].comp];
            let ast = comp.variables.iter().find(|v| v.name == self.prog.vars[vi].name).unwrap();
            let cx = ExprCx::new(&self.prog);
            if let Some((c, t)) = cx.compile(&ast.init, &mut diags) {
                let vt = self.prog.vars[vi].ty;
                if !ty_accepts(vt, t) {
                    diags.push(Diagnostic::error(
                        DiagCode::TypeMismatch,
                        ast.init.span,
                        format!(
                            "variable `{}` is {} but is initialised with {}",
                            ast.name,
                            self.prog.ty_name(vt),
                            self.prog.ty_name(t)
                        ),
                    ));
                }
                self.prog.vars[vi].init = c;
            }
        }
        for (ci, comp) in m.components.iter().enumerate() {
            if let Some(variant) = &comp.variant {
                let cx = ExprCx {
                    comp: Some(ci),
                    recv: RecvRule::Forbidden("a variant"),
                    ..ExprCx::new(&self.prog)
                };
                let c = cx.compile_numeric(variant, "variant", &mut diags);
                self.prog.components[ci].variant = c;
            }
            for op in &comp.operations {
                let oi = self.prog.op_by_name(&comp.name, &op.name).unwrap();
                let cx = ExprCx {
                    comp: Some(ci),
                    params: &self.prog.ops[oi].params,
                    recv: RecvRule::Owner,
                    ..ExprCx::new(&self.prog)
                };
                let guards: Vec<CExpr> = op.guards.iter().filter_map(|g| cx.compile_bool(g, "guard", &mut diags)).collect();
                let actions = compile_actions(&cx, &op.actions, &mut diags);
                self.prog.ops[oi].guards = guards;
                self.prog.ops[oi].actions = actions;
            }
        }
        for tr in self.trans_refs(m) {
            let mi = &self.prog.machines[tr.machine];
            let ci = mi.comp;
            let op = mi.transitions[tr.trans].op;
            let no_params: &[ParamInfo] = &[];
            let cx = ExprCx {
                comp: Some(ci),
                params: op.map(|o| self.prog.ops[o].params.as_slice()).unwrap_or(no_params),
                recv: RecvRule::Owner,
                ..ExprCx::new(&self.prog)
            };
            let guards: Vec<CExpr> = tr
                .ast
                .guards
                .iter()
                .filter_map(|g| cx.compile_bool(g, "guard", &mut diags))
                .collect();
            let actions = compile_actions(&cx, &tr.ast.actions, &mut diags);
            let t = &mut self.prog.machines[tr.machine].transitions[tr.trans];
            t.guards = guards;
            t.actions = actions;
        }
        let mut mid = 0;
        for (ci, comp) in m.components.iter().enumerate() {
            for sm in &comp.machines {
                for s in sm.walk_states() {
                    let cx = ExprCx {
                        comp: Some(ci),
                        foreign: true,
                        recv: RecvRule::Forbidden("state invariants"),
                        ..ExprCx::new(&self.prog)
                    };
                    let invs: Vec<CExpr> = s
                        .invariants
                        .iter()
                        .filter_map(|i| cx.compile_bool(i, "invariant", &mut diags))
                        .collect();
                    let sid = self.prog.machines[mid].state_by_name(&s.name).unwrap();
                    self.prog.machines[mid].states[sid].invariants = invs;
                }
                mid += 1;
            }
        }
        self.diags.extend(diags);
    }

    fn kind_checks(&mut self, m: &Model) {
        let prog = &self.prog;
        let mut errs: Vec<(DiagCode, Span, String)> = Vec::new();
        let mut warns: Vec<(DiagCode, Span, String)> = Vec::new();
        let mut called: HashSet<OpId> = HashSet::new();
        for op in &prog.ops {
            for a in &op.actions {
                if let CAction::Call { op } = a {
                    called.insert(*op);
                }
            }
        }
        for m in &prog.machines {
            for t in &m.transitions {
                for a in &t.actions {
                    if let CAction::Call { op } = a {
                        called.insert(*op);
                    }
                }
            }
        }
        for (ci, comp) in m.components.iter().enumerate() {
            for op in &comp.operations {
                let oi = prog.op_by_name(&comp.name, &op.name).unwrap();
                let info = &prog.ops[oi];
                let label = prog.op_label(oi);
                match op.kind {
                    OperationKind::P => {
                        if op.wakes.is_empty() {
                            errs.push((
                                DiagCode::KindConstraintViolation,
                                op.span,
                                format!("port-wake operation `{label}` must name the connectors it wakes on"),
                            ));
                        }
                        for c in &info.wakes {
                            let conn = &prog.connectors[*c];
                            if conn.target != ci {
                                errs.push((
                                    DiagCode::IllegalActionPlacement,
                                    op.span,
                                    format!(
                                        "`{label}` wakes on `{}`, which delivers to {} rather than {}",
                                        conn.name, prog.components[conn.target].name, comp.name
                                    ),
                                ));
                            }
                        }
                    }
                    _ if !op.wakes.is_empty() => {
                        errs.push((
                            DiagCode::KindConstraintViolation,
                            op.span,
                            format!("only port-wake (P) operations take `wakes`; `{label}` is kind {}", op.kind),
                        ));
                    }
                    _ => {}
                }
                if !op.params.is_empty() && op.kind != OperationKind::E {
                    errs.push((
                        DiagCode::KindConstraintViolation,
                        op.span,
                        format!("only environment (E) operations take parameters; `{label}` is kind {}", op.kind),
                    ));
                }
                if op.convergent && comp.variant.is_none() {
                    errs.push((
                        DiagCode::KindConstraintViolation,
                        op.span,
                        format!("`{label}` is convergent but {} declares no variant", comp.name),
                    ));
                }
                if op.kind == OperationKind::M && !called.contains(&oi) {
                    warns.push((
                        DiagCode::KindConstraintViolation,
                        op.span,
                        format!("method `{label}` is never called"),
                    ));
                }
                for (mid, ts) in &info.links {
                    let machine = &prog.machines[*mid];
                    if op.kind == OperationKind::E && machine.mode == MachineMode::Synchronous {
                        errs.push((
                            DiagCode::KindConstraintViolation,
                            op.span,
                            format!(
                                "environment operation `{label}` is linked to synchronous machine `{}`",
                                machine.name
                            ),
                        ));
                    }
                    for t in ts {
                        let tr = &machine.transitions[*t];
                        if tr.is_initial() && (tr.region.is_some() || op.kind != OperationKind::M) {
                            errs.push((
                                DiagCode::KindConstraintViolation,
                                op.span,
                                format!(
                                    "initial transitions may only link method operations, at the top level; `{label}` is kind {}",
                                    op.kind
                                ),
                            ));
                        }
                        if tr.is_initial() && ts.len() > 1 {
                            errs.push((
                                DiagCode::KindConstraintViolation,
                                op.span,
                                format!("`{label}` links an initial transition and other transitions"),
                            ));
                        }
                        let mut seen = HashSet::new();
                        for a in info.actions.iter().chain(&tr.actions) {
                            if let CAction::Assign { var, .. } = a {
                                if !seen.insert(*var) {
                                    errs.push((
                                        DiagCode::IllegalActionPlacement,
                                        op.span,
                                        format!("`{}` is assigned twice when `{label}` fires", prog.var_label(*var)),
                                    ));
                                }
                            }
                        }
                    }
                }
                let mut seen = HashSet::new();
                for a in &info.actions {
                    if let CAction::Assign { var, .. } = a {
                        if !seen.insert(*var) {
                            errs.push((
                                DiagCode::IllegalActionPlacement,
                                op.span,
                                format!("`{}` is assigned twice by `{label}`", prog.var_label(*var)),
                            ));
                        }
                    }
                }
            }
            let has_s = prog.components[ci].s_flag.is_some();
            let wakes_self = prog.components[ci].ops.iter().any(|o| {
                prog.ops[*o].actions.iter().any(|a| matches!(a, CAction::Wake { .. }))
                    || prog.ops[*o].links.iter().any(|(mid, ts)| {
                        ts.iter().any(|t| {
                            prog.machines[*mid].transitions[*t]
                                .actions
                                .iter()
                                .any(|a| matches!(a, CAction::Wake { .. }))
                        })
                    })
            });
            if wakes_self && !has_s {
                warns.push((
                    DiagCode::KindConstraintViolation,
                    comp.span,
                    format!("{} self-wakes but has no self-wake (S) operation to respond", comp.name),
                ));
            }
        }
        for conn in &self.prog.connectors {
            if conn.groups.is_empty() {
                let span = m.connector(&conn.name).map(|c| c.span).unwrap_or_default();
                warns.push((
                    DiagCode::KindConstraintViolation,
                    span,
                    format!(
                        "no port-wake operation responds to connector `{}`; deliveries on it block time",
                        conn.name
                    ),
                ));
            }
        }
        for (c, s, msg) in errs {
            self.err(c, s, msg);
        }
        for (c, s, msg) in warns {
            self.warn(c, s, msg);
        }
        for mi in 0..self.prog.machines.len() {
            let machine = &self.prog.machines[mi];
            let linked = machine.initial.and_then(|t| machine.transitions[t].op);
            if linked.is_some_and(|o| self.prog.ops[o].kind == OperationKind::M) {
                self.prog.machines[mi].starts_inactive = true;
            }
        }
    }

    fn literal_bounds(&mut self, m: &Model) {
        let mut hits = Vec::new();
        fn walk(e: &Expr, bound: i64, hits: &mut Vec<(Span, i64)>) {
            match &e.kind {
                ExprKind::Int(i) if i.unsigned_abs() > bound as u64 => hits.push((e.span, *i)),
                ExprKind::Unary(_, a) => walk(a, bound, hits),
                ExprKind::Binary(_, a, b) => {
                    walk(a, bound, hits);
                    walk(b, bound, hits);
                }
                ExprKind::Extremum(_, args) => args.iter().for_each(|a| walk(a, bound, hits)),
                ExprKind::Ite(a, b, c) => {
                    walk(a, bound, hits);
                    walk(b, bound, hits);
                    walk(c, bound, hits);
                }
                _ => {}
            }
        }
        for_each_expr(m, &mut |e| walk(e, self.bound, &mut hits));
        for (span, i) in hits {
            self.warn(
                DiagCode::ArithmeticBound,
                span,
                format!("literal {i} exceeds the arithmetic bound {}", self.bound),
            );
        }
    }
}

fn ty_accepts(expected: Ty, found: Ty) -> bool {
    expected == found || (expected.is_numeric() && found.is_numeric())
}

fn compile_actions(cx: &ExprCx<'_>, actions: &[Action], diags: &mut Vec<Diagnostic>) -> Vec<CAction> {
    let prog = cx.prog;
    let ci = cx.comp.expect("actions belong to a component");
    let mut out = Vec::new();
    for a in actions {
        match &a.kind {
            ActionKind::Assign { var, value } => {
                let target = prog.components[ci].vars.iter().copied().find(|v| &prog.vars[*v].name == var);
                let Some(target) = target else {
                    let code = if prog.vars.iter().any(|v| &v.name == var) {
                        DiagCode::IllegalActionPlacement
                    } else {
                        DiagCode::UnresolvedName
                    };
                    diags.push(Diagnostic::error(
                        code,
                        a.span,
                        format!("`{var}` is not a variable of {}", prog.components[ci].name),
                    ));
                    cx.compile(value, diags);
                    continue;
                };
                if let Some((c, t)) = cx.compile(value, diags) {
                    let vt = prog.vars[target].ty;
                    if ty_accepts(vt, t) {
                        out.push(CAction::Assign { var: target, value: c });
                    } else {
                        diags.push(Diagnostic::error(
                            DiagCode::TypeMismatch,
                            value.span,
                            format!("cannot assign {} to `{var}` of type {}", prog.ty_name(t), prog.ty_name(vt)),
                        ));
                    }
                }
            }
            ActionKind::PortSend { connector, value, delay } => {
                let val = cx.compile(value, diags);
                let d = cx.compile_numeric(delay, "delay", diags);
                let Some(conn) = prog.conn_by_name(connector) else {
                    diags.push(Diagnostic::error(
                        DiagCode::UnresolvedName,
                        a.span,
                        format!("unresolved connector `{connector}`"),
                    ));
                    continue;
                };
                let info = &prog.connectors[conn];
                if info.source != ci {
                    diags.push(Diagnostic::error(
                        DiagCode::IllegalActionPlacement,
                        a.span,
                        format!(
                            "{} sends on `{connector}`, whose source is {}",
                            prog.components[ci].name, prog.components[info.source].name
                        ),
                    ));
                    continue;
                }
                let (Some((v, t)), Some(d)) = (val, d) else { continue };
                if !ty_accepts(info.ty, t) {
                    diags.push(Diagnostic::error(
                        DiagCode::TypeMismatch,
                        value.span,
                        format!(
                            "`{connector}` carries {} but the sent value is {}",
                            prog.ty_name(info.ty),
                            prog.ty_name(t)
                        ),
                    ));
                    continue;
                }
                if let ExprKind::Int(i) = delay.kind {
                    if i < 0 {
                        diags.push(Diagnostic::error(
                            DiagCode::TypeMismatch,
                            delay.span,
                            "delays must be natural numbers",
                        ));
                        continue;
                    }
                }
                out.push(CAction::Send { conn, value: v, delay: d });
            }
            ActionKind::SelfWake { delay, .. } => {
                if let Some(d) = cx.compile_numeric(delay, "delay", diags) {
                    if matches!(delay.kind, ExprKind::Int(i) if i < 0) {
                        diags.push(Diagnostic::error(
                            DiagCode::TypeMismatch,
                            delay.span,
                            "delays must be natural numbers",
                        ));
                        continue;
                    }
                    out.push(CAction::Wake { delay: d });
                }
            }
            ActionKind::Call { method } => {
                let Some(op) = prog.op_by_name(&prog.components[ci].name, method) else {
                    diags.push(Diagnostic::error(
                        DiagCode::UnresolvedName,
                        a.span,
                        format!("unresolved method `{method}` in {}", prog.components[ci].name),
                    ));
                    continue;
                };
                if prog.ops[op].kind != OperationKind::M {
                    diags.push(Diagnostic::error(
                        DiagCode::KindConstraintViolation,
                        a.span,
                        format!("`call {method}` names an operation of kind {}, not a method (M)", prog.ops[op].kind),
                    ));
                    continue;
                }
                out.push(CAction::Call { op });
            }
        }
    }
    out
}

/// Visits every expression stored in a model.
pub fn for_each_expr(m: &Model, f: &mut dyn FnMut(&Expr)) {
    fn actions(acts: &[Action], f: &mut dyn FnMut(&Expr)) {
        for a in acts {
            match &a.kind {
                ActionKind::Assign { value, .. } => f(value),
                ActionKind::PortSend { value, delay, .. } => {
                    f(value);
                    f(delay);
                }
                ActionKind::SelfWake { delay, .. } => f(delay),
                ActionKind::Call { .. } => {}
            }
        }
    }
    fn transition(t: &Transition, f: &mut dyn FnMut(&Expr)) {
        t.guards.iter().for_each(&mut *f);
        actions(&t.actions, f);
    }
    for c in &m.contexts {
        c.constants.iter().for_each(|k| f(&k.value));
        c.axioms.iter().for_each(&mut *f);
    }
    for comp in &m.components {
        comp.variables.iter().for_each(|v| f(&v.init));
        if let Some(v) = &comp.variant {
            f(v);
        }
        for op in &comp.operations {
            op.guards.iter().for_each(&mut *f);
            actions(&op.actions, f);
        }
        for sm in &comp.machines {
            if let Some(t) = &sm.initial {
                transition(t, f);
            }
            for s in sm.walk_states() {
                s.invariants.iter().for_each(&mut *f);
                if let Some(t) = &s.initial {
                    transition(t, f);
                }
            }
            sm.transitions.iter().for_each(|t| transition(t, f));
        }
    }
    if let Some(r) = &m.refines {
        r.decls.gluing.iter().for_each(&mut *f);
    }
}
