//! The in-memory model IR produced by the parser and consumed by the validator.
//!
//! Everything here is plain, name-based data. Name resolution and typing
//! happen in [`crate::validate`], which turns a [`Model`] into a
//! [`crate::validate::ValidModel`].

use std::fmt;

use crate::diag::Span;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ValueType {
    Bool,
    Nat,
    Int,
    /// Reference to a carrier set declared in a context.
    Set(String),
}

impl ValueType {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ValueType::Nat | ValueType::Int)
    }

    /// Whether a value of type `other` may be stored where `self` is expected.
    /// Numeric types are interchangeable at compile time; Nat stores are
    /// range-checked when executed.
    pub fn accepts(&self, other: &ValueType) -> bool {
        self == other || (self.is_numeric() && other.is_numeric())
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Bool => f.write_str("BOOL"),
            ValueType::Nat => f.write_str("NAT"),
            ValueType::Int => f.write_str("INT"),
            ValueType::Set(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Implies => "=>",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(&self) -> u8 {
        match self {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul => 7,
        }
    }

    pub fn is_comparison(&self) -> bool {
        self.precedence() == 5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Extremum {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExprKind {
    Bool(bool),
    Int(i64),
    /// A possibly qualified name: `x`, `WM.x`, `abs.WM.x`.
    Name(Vec<String>),
    /// Most recent value available on a connector.
    Recv(String),
    /// State test; the path names a state, optionally qualified.
    InState(Vec<String>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Extremum(Extremum, Vec<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn synthetic(kind: ExprKind) -> Self {
        Expr {
            kind,
            span: Span::default(),
        }
    }

    pub fn bool(b: bool) -> Self {
        Expr::synthetic(ExprKind::Bool(b))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        let span = lhs.span.to(rhs.span);
        Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span)
    }

    /// Conjunction of a list; `true` when empty.
    pub fn conjunction(parts: impl IntoIterator<Item = Expr>) -> Expr {
        let mut iter = parts.into_iter();
        match iter.next() {
            None => Expr::bool(true),
            Some(first) => iter.fold(first, |acc, e| Expr::binary(BinOp::And, acc, e)),
        }
    }
}

/// Wake kinds. Only one kind exists today.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum WakeKind {
    #[default]
    Default,
}

impl fmt::Display for WakeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DEFAULT")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Assign { var: String, value: Expr },
    PortSend { connector: String, value: Expr, delay: Expr },
    SelfWake { kind: WakeKind, delay: Expr },
    Call { method: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperationKind {
    /// Port-wake.
    P,
    /// Self-wake.
    S,
    /// Environment.
    E,
    /// Transition.
    T,
    /// Method.
    M,
}

impl OperationKind {
    pub fn letter(&self) -> char {
        match self {
            OperationKind::P => 'P',
            OperationKind::S => 'S',
            OperationKind::E => 'E',
            OperationKind::T => 'T',
            OperationKind::M => 'M',
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        Some(match s {
            "P" => OperationKind::P,
            "S" => OperationKind::S,
            "E" => OperationKind::E,
            "T" => OperationKind::T,
            "M" => OperationKind::M,
            _ => return None,
        })
    }

    /// Port wakes, self wakes and methods occur at most once per cycle.
    pub fn is_synchronised(&self) -> bool {
        matches!(self, OperationKind::P | OperationKind::S | OperationKind::M)
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: ValueType,
    /// Inclusive bounds; required for numeric parameters.
    pub range: Option<(i64, i64)>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Operation {
    pub name: String,
    pub kind: OperationKind,
    pub wakes: Vec<String>,
    pub convergent: bool,
    pub params: Vec<Param>,
    pub guards: Vec<Expr>,
    pub actions: Vec<Action>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Variable {
    pub name: String,
    pub ty: ValueType,
    pub init: Expr,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MachineMode {
    Synchronous,
    Asynchronous,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct State {
    pub name: String,
    pub invariants: Vec<Expr>,
    /// Initial transition of the nested region, if the state has children.
    pub initial: Option<Transition>,
    pub children: Vec<State>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Initial,
    State(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    State(String),
    /// Leaving the machine; it becomes inactive.
    Final,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    /// Initial transitions may be anonymous.
    pub name: Option<String>,
    pub source: Source,
    pub target: Target,
    pub links: Option<String>,
    pub guards: Vec<Expr>,
    pub actions: Vec<Action>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateMachine {
    pub name: String,
    pub mode: MachineMode,
    pub initial: Option<Transition>,
    pub states: Vec<State>,
    pub transitions: Vec<Transition>,
    pub span: Span,
}

impl StateMachine {
    /// Depth-first walk over the state tree, parents before children.
    pub fn walk_states(&self) -> Vec<&State> {
        fn go<'a>(s: &'a State, out: &mut Vec<&'a State>) {
            out.push(s);
            for c in &s.children {
                go(c, out);
            }
        }
        let mut out = Vec::new();
        for s in &self.states {
            go(s, &mut out);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Component {
    pub name: String,
    pub variables: Vec<Variable>,
    pub variant: Option<Expr>,
    pub operations: Vec<Operation>,
    pub machines: Vec<StateMachine>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Connector {
    pub name: String,
    pub ty: ValueType,
    pub source: String,
    pub target: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CarrierSet {
    pub name: String,
    pub elements: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Constant {
    pub name: String,
    pub ty: ValueType,
    pub value: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Context {
    pub name: String,
    pub extends: Option<String>,
    pub sets: Vec<CarrierSet>,
    pub constants: Vec<Constant>,
    pub axioms: Vec<Expr>,
    pub span: Span,
}

/// `Component.operation`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualName {
    pub component: String,
    pub name: String,
}

impl QualName {
    pub fn new(component: impl Into<String>, name: impl Into<String>) -> Self {
        QualName {
            component: component.into(),
            name: name.into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (c, n) = s.split_once('.')?;
        if c.is_empty() || n.is_empty() || n.contains('.') {
            return None;
        }
        Some(QualName::new(c, n))
    }
}

impl fmt::Display for QualName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MapTarget {
    Abstract(QualName),
    /// New event; refines skip.
    New,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EventMapping {
    pub concrete: QualName,
    pub target: MapTarget,
    pub span: Span,
}

/// Refinement declarations attached to a concrete model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct RefinementDecls {
    pub gluing: Vec<Expr>,
    pub events: Vec<EventMapping>,
    /// Concrete state name to abstract state name.
    pub states: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RefinesClause {
    /// Path of the abstract model, relative to the concrete file.
    pub path: String,
    pub decls: RefinementDecls,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Model {
    pub name: String,
    pub refines: Option<RefinesClause>,
    pub contexts: Vec<Context>,
    pub connectors: Vec<Connector>,
    pub components: Vec<Component>,
    pub span: Span,
}

impl Model {
    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn connector(&self, name: &str) -> Option<&Connector> {
        self.connectors.iter().find(|c| c.name == name)
    }
}
