//! Index-based form of a validated model, used by the kernel and checkers.

use std::fmt;

use serde::Serialize;

use crate::model::{BinOp, Extremum, MachineMode, OperationKind};

pub type CompId = usize;
pub type VarId = usize;
pub type ConnId = usize;
pub type OpId = usize;
pub type MachineId = usize;
pub type StateId = usize;
pub type TransId = usize;
pub type FlagId = usize;

/// A runtime value. Carrier-set elements are interned per program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Elem(u32),
}

impl Value {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }
}

/// Resolved value type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Bool,
    Nat,
    Int,
    Set(usize),
}

impl Ty {
    pub fn is_numeric(self) -> bool {
        matches!(self, Ty::Nat | Ty::Int)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    /// The model the expression belongs to.
    Own,
    /// The abstract model of a refinement (gluing expressions only).
    Abstract,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CExpr {
    Lit(Value),
    Var(Side, VarId),
    Param(usize),
    Recv(Side, ConnId),
    In(Side, MachineId, StateId),
    Not(Box<CExpr>),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Ext(Extremum, Vec<CExpr>),
    Ite(Box<CExpr>, Box<CExpr>, Box<CExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CAction {
    Assign { var: VarId, value: CExpr },
    Send { conn: ConnId, value: CExpr, delay: CExpr },
    Wake { delay: CExpr },
    Call { op: OpId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetInfo {
    pub name: String,
    pub elems: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElemInfo {
    pub name: String,
    pub set: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstInfo {
    pub name: String,
    pub ty: Ty,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompInfo {
    pub name: String,
    pub vars: Vec<VarId>,
    pub ops: Vec<OpId>,
    pub machines: Vec<MachineId>,
    pub variant: Option<CExpr>,
    /// Synchronisation flag shared by all self-wake operations.
    pub s_flag: Option<FlagId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub comp: CompId,
    pub ty: Ty,
    pub init: CExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnInfo {
    pub name: String,
    pub ty: Ty,
    pub source: CompId,
    pub target: CompId,
    /// Port-wake group flags that respond to this connector.
    pub groups: Vec<FlagId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub ty: Ty,
    pub domain: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpInfo {
    pub name: String,
    pub comp: CompId,
    pub kind: OperationKind,
    pub params: Vec<ParamInfo>,
    pub wakes: Vec<ConnId>,
    pub guards: Vec<CExpr>,
    pub actions: Vec<CAction>,
    /// Kind flag: port-wake group, self-wake group or method flag.
    pub flag: Option<FlagId>,
    /// Linked transitions, grouped per machine (machine order).
    pub links: Vec<(MachineId, Vec<TransId>)>,
    pub convergent: bool,
    /// Generated for a transition that links no operation.
    pub synthesized: bool,
}

impl OpInfo {
    /// Whether the operation can fire at most once per clock cycle.
    pub fn is_synchronised(&self, prog: &Program) -> bool {
        self.kind.is_synchronised() || self.links.iter().any(|(m, _)| prog.machines[*m].mode == MachineMode::Synchronous)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateInfo {
    pub name: String,
    pub parent: Option<StateId>,
    pub children: Vec<StateId>,
    pub initial: Option<TransId>,
    pub invariants: Vec<CExpr>,
    /// Source text of each invariant, for reports.
    pub invariant_text: Vec<String>,
}

impl StateInfo {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransInfo {
    pub name: String,
    /// `None` for an initial transition.
    pub source: Option<StateId>,
    /// Region an initial transition belongs to; `None` is the top level.
    pub region: Option<StateId>,
    /// `None` leaves the machine.
    pub target: Option<StateId>,
    pub op: Option<OpId>,
    pub guards: Vec<CExpr>,
    pub actions: Vec<CAction>,
}

impl TransInfo {
    pub fn is_initial(&self) -> bool {
        self.source.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MachineInfo {
    pub name: String,
    pub comp: CompId,
    pub mode: MachineMode,
    pub states: Vec<StateInfo>,
    pub transitions: Vec<TransInfo>,
    pub initial: Option<TransId>,
    /// Machines whose top-level initial transition is linked to a method
    /// start inactive.
    pub starts_inactive: bool,
    pub flag: Option<FlagId>,
}

impl MachineInfo {
    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s.name == name)
    }

    /// Whether `leaf` is `state` or nested inside it.
    pub fn contains(&self, state: StateId, leaf: StateId) -> bool {
        let mut cur = Some(leaf);
        while let Some(s) = cur {
            if s == state {
                return true;
            }
            cur = self.states[s].parent;
        }
        false
    }

    /// Ancestors of `s` from the top level down to `s` itself.
    pub fn path(&self, s: StateId) -> Vec<StateId> {
        let mut out = vec![s];
        let mut cur = self.states[s].parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.states[p].parent;
        }
        out.reverse();
        out
    }

    pub fn leaves(&self) -> Vec<StateId> {
        (0..self.states.len()).filter(|s| self.states[*s].is_leaf()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlagKind {
    PortGroup,
    SelfWake,
    Method,
    Machine,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlagInfo {
    pub name: String,
    pub kind: FlagKind,
    pub comp: CompId,
}

/// The compiled, index-based form of a validated model.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Program {
    pub name: String,
    pub sets: Vec<SetInfo>,
    pub elements: Vec<ElemInfo>,
    pub constants: Vec<ConstInfo>,
    pub components: Vec<CompInfo>,
    pub vars: Vec<VarInfo>,
    pub connectors: Vec<ConnInfo>,
    pub ops: Vec<OpInfo>,
    pub machines: Vec<MachineInfo>,
    pub flags: Vec<FlagInfo>,
}

impl Program {
    pub fn comp_by_name(&self, name: &str) -> Option<CompId> {
        self.components.iter().position(|c| c.name == name)
    }

    pub fn conn_by_name(&self, name: &str) -> Option<ConnId> {
        self.connectors.iter().position(|c| c.name == name)
    }

    pub fn op_by_name(&self, comp: &str, op: &str) -> Option<OpId> {
        let c = self.comp_by_name(comp)?;
        self.components[c].ops.iter().copied().find(|o| self.ops[*o].name == op)
    }

    pub fn var_by_name(&self, comp: &str, var: &str) -> Option<VarId> {
        let c = self.comp_by_name(comp)?;
        self.components[c].vars.iter().copied().find(|v| self.vars[*v].name == var)
    }

    pub fn machine_by_name(&self, comp: &str, machine: &str) -> Option<MachineId> {
        let c = self.comp_by_name(comp)?;
        self.components[c]
            .machines
            .iter()
            .copied()
            .find(|m| self.machines[*m].name == machine)
    }

    /// Finds a state anywhere in the model; state names are model-unique.
    pub fn state_by_name(&self, name: &str) -> Option<(MachineId, StateId)> {
        self.machines
            .iter()
            .enumerate()
            .find_map(|(m, mi)| mi.state_by_name(name).map(|s| (m, s)))
    }

    pub fn elem_by_name(&self, name: &str) -> Option<u32> {
        self.elements.iter().position(|e| e.name == name).map(|i| i as u32)
    }

    pub fn set_by_name(&self, name: &str) -> Option<usize> {
        self.sets.iter().position(|s| s.name == name)
    }

    /// `Component.operation`.
    pub fn op_label(&self, op: OpId) -> String {
        let o = &self.ops[op];
        format!("{}.{}", self.components[o.comp].name, o.name)
    }

    pub fn var_label(&self, var: VarId) -> String {
        let v = &self.vars[var];
        format!("{}.{}", self.components[v.comp].name, v.name)
    }

    pub fn trans_label(&self, m: MachineId, t: TransId) -> String {
        format!("{}.{}", self.machines[m].name, self.machines[m].transitions[t].name)
    }

    pub fn ty_name(&self, ty: Ty) -> String {
        match ty {
            Ty::Bool => "BOOL".into(),
            Ty::Nat => "NAT".into(),
            Ty::Int => "INT".into(),
            Ty::Set(s) => self.sets[s].name.clone(),
        }
    }

    pub fn show(&self, v: Value) -> String {
        ShowValue(self, v).to_string()
    }

    /// Parses a value literal of a given type: `TRUE`, `-3`, `COTTON`.
    pub fn parse_value(&self, text: &str, ty: Ty) -> Option<Value> {
        let text = text.trim();
        match ty {
            Ty::Bool => match text {
                "TRUE" | "true" => Some(Value::Bool(true)),
                "FALSE" | "false" => Some(Value::Bool(false)),
                _ => None,
            },
            Ty::Nat => text.parse::<i64>().ok().filter(|v| *v >= 0).map(Value::Int),
            Ty::Int => text.parse::<i64>().ok().map(Value::Int),
            Ty::Set(s) => {
                let e = self.elem_by_name(text)?;
                (self.elements[e as usize].set == s).then_some(Value::Elem(e))
            }
        }
    }

    pub fn value_has_type(&self, v: Value, ty: Ty) -> bool {
        match (v, ty) {
            (Value::Bool(_), Ty::Bool) => true,
            (Value::Int(i), Ty::Nat) => i >= 0,
            (Value::Int(_), Ty::Int) => true,
            (Value::Elem(e), Ty::Set(s)) => self.elements.get(e as usize).is_some_and(|x| x.set == s),
            _ => false,
        }
    }

    /// Operations in run-policy order: component name, then operation name.
    pub fn ops_by_name(&self) -> Vec<OpId> {
        let mut ids: Vec<OpId> = (0..self.ops.len()).collect();
        ids.sort_by(|a, b| {
            let (oa, ob) = (&self.ops[*a], &self.ops[*b]);
            self.components[oa.comp]
                .name
                .cmp(&self.components[ob.comp].name)
                .then_with(|| oa.name.cmp(&ob.name))
        });
        ids
    }

    /// Total number of transitions, including initial ones.
    pub fn transition_count(&self) -> usize {
        self.machines.iter().map(|m| m.transitions.len()).sum()
    }
}

struct ShowValue<'a>(&'a Program, Value);

impl fmt::Display for ShowValue<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.1 {
            Value::Bool(true) => f.write_str("TRUE"),
            Value::Bool(false) => f.write_str("FALSE"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Elem(e) => match self.0.elements.get(e as usize) {
                Some(info) => f.write_str(&info.name),
                None => write!(f, "#{e}"),
            },
        }
    }
}
