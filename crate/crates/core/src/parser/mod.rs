//! Text format for models: parsing and canonical printing.
//!
//! ```text
//! model washer
//!
//! context types {
//!   set STATUS = { WAITING, RUNNING }
//! }
//!
//! connector state: STATUS from WM to CP
//!
//! component WM {
//!   var busy: BOOL = FALSE
//!   operation report kind S {
//!     action port_send(state, RUNNING, delay 1)
//!   }
//!   statemachine sm async {
//!     initial -> IDLE
//!     state IDLE
//!     state BUSY
//!     transition go: IDLE -> BUSY links report
//!   }
//! }
//! ```

mod lexer;
mod printer;

use std::collections::HashSet;

pub use printer::{print, print_expr, print_value_type};

use crate::diag::{DiagCode, Diagnostic, Span};
use crate::model::*;
use lexer::{lex, Tok, Token};

const KEYWORDS: &[&str] = &[
    "model",
    "refines",
    "context",
    "extends",
    "set",
    "constant",
    "axiom",
    "connector",
    "from",
    "to",
    "component",
    "var",
    "variant",
    "operation",
    "kind",
    "wakes",
    "convergent",
    "param",
    "guard",
    "action",
    "call",
    "port_send",
    "self_wake",
    "delay",
    "statemachine",
    "sync",
    "async",
    "initial",
    "state",
    "invariant",
    "transition",
    "links",
    "final",
    "gluing",
    "map",
    "new",
    "and",
    "or",
    "not",
    "if",
    "then",
    "else",
    "true",
    "false",
    "TRUE",
    "FALSE",
    "recv",
    "in",
    "min",
    "max",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parses a complete model file.
pub fn parse(src: &str) -> Result<Model, Vec<Diagnostic>> {
    let toks = lex(src).map_err(|d| vec![d])?;
    let mut p = Parser { toks, pos: 0 };
    let model = p.model().map_err(|d| vec![d])?;
    let dups = duplicate_declarations(&model);
    if dups.is_empty() {
        Ok(model)
    } else {
        Err(dups)
    }
}

/// Parses a standalone expression.
pub fn parse_expr(src: &str) -> Result<Expr, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses the body of a refinement declaration block (without braces), as
/// found in `.refines` companion files.
pub fn parse_refinement_decls(src: &str) -> Result<RefinementDecls, Diagnostic> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let mut decls = RefinementDecls::default();
    while !p.at_eof() {
        p.refinement_item(&mut decls)?;
    }
    Ok(decls)
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::error(DiagCode::SyntaxError, self.span(), msg))
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.error(format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.is_sym(sym) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.advance().span)
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn expect_sym(&mut self, sym: &str) -> PResult<Span> {
        if self.is_sym(sym) {
            Ok(self.advance().span)
        } else {
            self.unexpected(&format!("`{sym}`"))
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        if self.at_eof() {
            Ok(())
        } else {
            self.unexpected("end of input")
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let t = self.advance();
                Ok((s, t.span))
            }
            Tok::Ident(s) => self.error(format!("`{s}` is a reserved word and cannot be used as a name")),
            _ => self.unexpected("a name"),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.eat_sym("-");
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(if neg { -v } else { v })
            }
            _ => self.unexpected("an integer"),
        }
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.unexpected("a quoted path"),
        }
    }

    fn qual_name(&mut self) -> PResult<(QualName, Span)> {
        let (c, s1) = self.ident()?;
        self.expect_sym(".")?;
        let (n, s2) = self.ident()?;
        Ok((QualName::new(c, n), s1.to(s2)))
    }

    fn value_type(&mut self) -> PResult<ValueType> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let ty = match s.as_str() {
                    "BOOL" => ValueType::Bool,
                    "NAT" => ValueType::Nat,
                    "INT" => ValueType::Int,
                    _ if is_keyword(&s) => return self.unexpected("a type"),
                    _ => ValueType::Set(s),
                };
                self.advance();
                Ok(ty)
            }
            _ => self.unexpected("a type (BOOL, NAT, INT or a set name)"),
        }
    }

    fn model(&mut self) -> PResult<Model> {
        let start = self.expect_kw("model")?;
        let (name, _) = self.ident()?;
        let mut model = Model {
            name,
            refines: None,
            contexts: Vec::new(),
            connectors: Vec::new(),
            components: Vec::new(),
            span: start,
        };
        while !self.at_eof() {
            if self.is_kw("refines") {
                let sp = self.span();
                if model.refines.is_some() {
                    return Err(Diagnostic::error(
                        DiagCode::DuplicateDeclaration,
                        sp,
                        "a model may refine at most one abstract model",
                    ));
                }
                model.refines = Some(self.refines()?);
            } else if self.is_kw("context") {
                model.contexts.push(self.context()?);
            } else if self.is_kw("connector") {
                model.connectors.push(self.connector()?);
            } else if self.is_kw("component") {
                model.components.push(self.component()?);
            } else {
                return self.unexpected("`refines`, `context`, `connector` or `component`");
            }
        }
        model.span = start.to(self.prev_span());
        Ok(model)
    }

    fn refines(&mut self) -> PResult<RefinesClause> {
        let start = self.expect_kw("refines")?;
        let path = self.string()?;
        let mut decls = RefinementDecls::default();
        if self.eat_sym("{") {
            while !self.eat_sym("}") {
                self.refinement_item(&mut decls)?;
            }
        }
        Ok(RefinesClause {
            path,
            decls,
            span: start.to(self.prev_span()),
        })
    }

    fn refinement_item(&mut self, decls: &mut RefinementDecls) -> PResult<()> {
        if self.eat_kw("gluing") {
            decls.gluing.push(self.expr()?);
        } else if self.is_kw("map") {
            let start = self.advance().span;
            let (concrete, _) = self.qual_name()?;
            self.expect_sym("->")?;
            let target = if self.eat_kw("new") {
                MapTarget::New
            } else {
                MapTarget::Abstract(self.qual_name()?.0)
            };
            decls.events.push(EventMapping {
                concrete,
                target,
                span: start.to(self.prev_span()),
            });
        } else if self.eat_kw("new") {
            loop {
                let (concrete, span) = self.qual_name()?;
                decls.events.push(EventMapping {
                    concrete,
                    target: MapTarget::New,
                    span,
                });
                if !self.eat_sym(",") {
                    break;
                }
            }
        } else if self.eat_kw("state") {
            let (c, _) = self.ident()?;
            self.expect_sym("->")?;
            let (a, _) = self.ident()?;
            decls.states.push((c, a));
        } else {
            return self.unexpected("`gluing`, `map`, `new` or `state`");
        }
        Ok(())
    }

    fn context(&mut self) -> PResult<Context> {
        let start = self.expect_kw("context")?;
        let (name, _) = self.ident()?;
        let extends = if self.eat_kw("extends") { Some(self.ident()?.0) } else { None };
        let mut ctx = Context {
            name,
            extends,
            sets: Vec::new(),
            constants: Vec::new(),
            axioms: Vec::new(),
            span: start,
        };
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.is_kw("set") {
                let s = self.advance().span;
                let (name, _) = self.ident()?;
                self.expect_sym("=")?;
                self.expect_sym("{")?;
                let mut elements = vec![self.ident()?.0];
                while self.eat_sym(",") {
                    elements.push(self.ident()?.0);
                }
                self.expect_sym("}")?;
                ctx.sets.push(CarrierSet {
                    name,
                    elements,
                    span: s.to(self.prev_span()),
                });
            } else if self.is_kw("constant") {
                let s = self.advance().span;
                let (name, _) = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.value_type()?;
                self.expect_sym("=")?;
                let value = self.expr()?;
                ctx.constants.push(Constant {
                    name,
                    ty,
                    value,
                    span: s.to(self.prev_span()),
                });
            } else if self.eat_kw("axiom") {
                ctx.axioms.push(self.expr()?);
            } else {
                return self.unexpected("`set`, `constant`, `axiom` or `}`");
            }
        }
        ctx.span = start.to(self.prev_span());
        Ok(ctx)
    }

    fn connector(&mut self) -> PResult<Connector> {
        let start = self.expect_kw("connector")?;
        let (name, _) = self.ident()?;
        self.expect_sym(":")?;
        let ty = self.value_type()?;
        self.expect_kw("from")?;
        let (source, _) = self.ident()?;
        self.expect_kw("to")?;
        let (target, _) = self.ident()?;
        Ok(Connector {
            name,
            ty,
            source,
            target,
            span: start.to(self.prev_span()),
        })
    }

    fn component(&mut self) -> PResult<Component> {
        let start = self.expect_kw("component")?;
        let (name, _) = self.ident()?;
        let mut comp = Component {
            name,
            variables: Vec::new(),
            variant: None,
            operations: Vec::new(),
            machines: Vec::new(),
            span: start,
        };
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.is_kw("var") {
                let s = self.advance().span;
                let (name, _) = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.value_type()?;
                self.expect_sym("=")?;
                let init = self.expr()?;
                comp.variables.push(Variable {
                    name,
                    ty,
                    init,
                    span: s.to(self.prev_span()),
                });
            } else if self.is_kw("variant") {
                let s = self.advance().span;
                if comp.variant.is_some() {
                    return Err(Diagnostic::error(
                        DiagCode::DuplicateDeclaration,
                        s,
                        format!("component `{}` declares more than one variant", comp.name),
                    ));
                }
                comp.variant = Some(self.expr()?);
            } else if self.is_kw("operation") {
                comp.operations.push(self.operation()?);
            } else if self.is_kw("statemachine") {
                comp.machines.push(self.machine()?);
            } else {
                return self.unexpected("`var`, `variant`, `operation`, `statemachine` or `}`");
            }
        }
        comp.span = start.to(self.prev_span());
        Ok(comp)
    }

    fn operation(&mut self) -> PResult<Operation> {
        let start = self.expect_kw("operation")?;
        let (name, _) = self.ident()?;
        self.expect_kw("kind")?;
        let kind = match self.peek().clone() {
            Tok::Ident(s) => match OperationKind::from_letter(&s) {
                Some(k) => {
                    self.advance();
                    k
                }
                None => return self.error(format!("unknown operation kind `{s}`; allowed kinds are P, S, E, T, M")),
            },
            _ => return self.unexpected("an operation kind (P, S, E, T, M)"),
        };
        let mut wakes = Vec::new();
        if self.eat_kw("wakes") {
            wakes.push(self.ident()?.0);
            while self.eat_sym(",") {
                wakes.push(self.ident()?.0);
            }
        }
        let convergent = self.eat_kw("convergent");
        let mut op = Operation {
            name,
            kind,
            wakes,
            convergent,
            params: Vec::new(),
            guards: Vec::new(),
            actions: Vec::new(),
            span: start,
        };
        if self.eat_sym("{") {
            while !self.eat_sym("}") {
                if self.is_kw("param") {
                    let s = self.advance().span;
                    let (name, _) = self.ident()?;
                    self.expect_sym(":")?;
                    let ty = self.value_type()?;
                    let range = if self.eat_kw("in") {
                        let lo = self.int()?;
                        self.expect_sym("..")?;
                        let hi = self.int()?;
                        Some((lo, hi))
                    } else {
                        None
                    };
                    op.params.push(Param {
                        name,
                        ty,
                        range,
                        span: s.to(self.prev_span()),
                    });
                } else if self.eat_kw("guard") {
                    op.guards.push(self.expr()?);
                } else if self.eat_kw("action") {
                    op.actions.push(self.action()?);
                } else {
                    return self.unexpected("`param`, `guard`, `action` or `}`");
                }
            }
        }
        op.span = start.to(self.prev_span());
        Ok(op)
    }

    fn action(&mut self) -> PResult<Action> {
        let start = self.span();
        let kind = if self.eat_kw("call") {
            ActionKind::Call { method: self.ident()?.0 }
        } else if self.eat_kw("port_send") {
            self.expect_sym("(")?;
            let (connector, _) = self.ident()?;
            self.expect_sym(",")?;
            let value = self.expr()?;
            self.expect_sym(",")?;
            self.expect_kw("delay")?;
            let delay = self.expr()?;
            self.expect_sym(")")?;
            ActionKind::PortSend { connector, value, delay }
        } else if self.eat_kw("self_wake") {
            self.expect_sym("(")?;
            let mut kind = WakeKind::Default;
            if !self.is_kw("delay") {
                let (k, sp) = self.ident()?;
                if k != "DEFAULT" {
                    return Err(Diagnostic::error(
                        DiagCode::SyntaxError,
                        sp,
                        format!("unknown wake kind `{k}`; only DEFAULT is supported"),
                    ));
                }
                kind = WakeKind::Default;
                self.expect_sym(",")?;
            }
            self.expect_kw("delay")?;
            let delay = self.expr()?;
            self.expect_sym(")")?;
            ActionKind::SelfWake { kind, delay }
        } else {
            let (var, _) = self.ident()?;
            self.expect_sym(":=")?;
            let value = self.expr()?;
            ActionKind::Assign { var, value }
        };
        Ok(Action {
            kind,
            span: start.to(self.prev_span()),
        })
    }

    fn machine(&mut self) -> PResult<StateMachine> {
        let start = self.expect_kw("statemachine")?;
        let (name, _) = self.ident()?;
        let mode = if self.eat_kw("sync") {
            MachineMode::Synchronous
        } else if self.eat_kw("async") {
            MachineMode::Asynchronous
        } else {
            return self.unexpected("`sync` or `async`");
        };
        let mut sm = StateMachine {
            name,
            mode,
            initial: None,
            states: Vec::new(),
            transitions: Vec::new(),
            span: start,
        };
        self.expect_sym("{")?;
        while !self.eat_sym("}") {
            if self.is_kw("initial") {
                let sp = self.span();
                if sm.initial.is_some() {
                    return Err(Diagnostic::error(
                        DiagCode::DuplicateDeclaration,
                        sp,
                        format!("machine `{}` has more than one initial transition", sm.name),
                    ));
                }
                sm.initial = Some(self.initial()?);
            } else if self.is_kw("state") {
                sm.states.push(self.state()?);
            } else if self.is_kw("transition") {
                sm.transitions.push(self.transition()?);
            } else {
                return self.unexpected("`initial`, `state`, `transition` or `}`");
            }
        }
        sm.span = start.to(self.prev_span());
        Ok(sm)
    }

    fn initial(&mut self) -> PResult<Transition> {
        let start = self.expect_kw("initial")?;
        self.expect_sym("->")?;
        let (target, _) = self.ident()?;
        let links = if self.eat_kw("links") { Some(self.ident()?.0) } else { None };
        Ok(Transition {
            name: None,
            source: Source::Initial,
            target: Target::State(target),
            links,
            guards: Vec::new(),
            actions: Vec::new(),
            span: start.to(self.prev_span()),
        })
    }

    fn state(&mut self) -> PResult<State> {
        let start = self.expect_kw("state")?;
        let (name, _) = self.ident()?;
        let mut st = State {
            name,
            invariants: Vec::new(),
            initial: None,
            children: Vec::new(),
            span: start,
        };
        if self.eat_sym("{") {
            while !self.eat_sym("}") {
                if self.eat_kw("invariant") {
                    st.invariants.push(self.expr()?);
                } else if self.is_kw("initial") {
                    let sp = self.span();
                    if st.initial.is_some() {
                        return Err(Diagnostic::error(
                            DiagCode::DuplicateDeclaration,
                            sp,
                            format!("state `{}` has more than one initial transition", st.name),
                        ));
                    }
                    st.initial = Some(self.initial()?);
                } else if self.is_kw("state") {
                    st.children.push(self.state()?);
                } else {
                    return self.unexpected("`invariant`, `initial`, `state` or `}`");
                }
            }
        }
        st.span = start.to(self.prev_span());
        Ok(st)
    }

    fn transition(&mut self) -> PResult<Transition> {
        let start = self.expect_kw("transition")?;
        let (name, _) = self.ident()?;
        self.expect_sym(":")?;
        let (source, _) = self.ident()?;
        self.expect_sym("->")?;
        let target = if self.eat_kw("final") {
            Target::Final
        } else {
            Target::State(self.ident()?.0)
        };
        let links = if self.eat_kw("links") { Some(self.ident()?.0) } else { None };
        let mut t = Transition {
            name: Some(name),
            source: Source::State(source),
            target,
            links,
            guards: Vec::new(),
            actions: Vec::new(),
            span: start,
        };
        if self.eat_sym("{") {
            while !self.eat_sym("}") {
                if self.eat_kw("guard") {
                    t.guards.push(self.expr()?);
                } else if self.eat_kw("action") {
                    t.actions.push(self.action()?);
                } else {
                    return self.unexpected("`guard`, `action` or `}`");
                }
            }
        }
        t.span = start.to(self.prev_span());
        Ok(t)
    }

    // Expressions, loosest binding first.

    fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.or_expr()?;
        if self.eat_sym("=>") {
            let rhs = self.expr()?;
            return Ok(Expr::binary(BinOp::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") {
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.eat_kw("not") || self.eat_sym("!") {
            let inner = self.not_expr()?;
            let span = start.to(inner.span);
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(inner)), span));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Sym("=") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.add_expr()?;
        if matches!(
            self.peek(),
            Tok::Sym("=") | Tok::Sym("!=") | Tok::Sym("<") | Tok::Sym("<=") | Tok::Sym(">") | Tok::Sym(">=")
        ) {
            return self.error("comparisons do not chain; add parentheses");
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        while self.eat_sym("*") {
            let rhs = self.unary_expr()?;
            lhs = Expr::binary(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        let start = self.span();
        if self.eat_sym("-") {
            // Fold negative literals so that `-3` round-trips as a literal.
            if let Tok::Int(v) = self.peek().clone() {
                if !matches!(self.peek_at(1), Tok::Sym("*")) {
                    self.advance();
                    return Ok(Expr::new(ExprKind::Int(-v), start.to(self.prev_span())));
                }
            }
            let inner = self.unary_expr()?;
            let span = start.to(inner.span);
            return Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(inner)), span));
        }
        self.atom()
    }

    fn path(&mut self) -> PResult<(Vec<String>, Span)> {
        let (first, s1) = match self.peek().clone() {
            Tok::Ident(s) if s == "abs" || !is_keyword(&s) => {
                let t = self.advance();
                (s, t.span)
            }
            _ => return self.ident().map(|(s, sp)| (vec![s], sp)),
        };
        let mut parts = vec![first];
        let mut span = s1;
        while self.is_sym(".") {
            self.advance();
            let (n, sp) = self.ident()?;
            parts.push(n);
            span = span.to(sp);
        }
        Ok((parts, span))
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(Expr::new(ExprKind::Int(v), start))
            }
            Tok::Sym("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "TRUE" => {
                    self.advance();
                    Ok(Expr::new(ExprKind::Bool(true), start))
                }
                "false" | "FALSE" => {
                    self.advance();
                    Ok(Expr::new(ExprKind::Bool(false), start))
                }
                "recv" => {
                    self.advance();
                    self.expect_sym("(")?;
                    let (c, _) = self.ident()?;
                    self.expect_sym(")")?;
                    Ok(Expr::new(ExprKind::Recv(c), start.to(self.prev_span())))
                }
                "in" => {
                    self.advance();
                    self.expect_sym("(")?;
                    let (p, _) = self.path()?;
                    self.expect_sym(")")?;
                    Ok(Expr::new(ExprKind::InState(p), start.to(self.prev_span())))
                }
                "min" | "max" => {
                    self.advance();
                    let which = if s == "min" { Extremum::Min } else { Extremum::Max };
                    self.expect_sym("(")?;
                    let mut args = vec![self.expr()?];
                    while self.eat_sym(",") {
                        args.push(self.expr()?);
                    }
                    self.expect_sym(")")?;
                    Ok(Expr::new(ExprKind::Extremum(which, args), start.to(self.prev_span())))
                }
                "if" => {
                    self.advance();
                    let c = self.expr()?;
                    self.expect_kw("then")?;
                    let t = self.expr()?;
                    self.expect_kw("else")?;
                    let e = self.expr()?;
                    let span = start.to(e.span);
                    Ok(Expr::new(ExprKind::Ite(Box::new(c), Box::new(t), Box::new(e)), span))
                }
                _ => {
                    let (p, span) = self.path()?;
                    Ok(Expr::new(ExprKind::Name(p), span))
                }
            },
            _ => self.unexpected("an expression"),
        }
    }
}

fn dup_check<'a>(out: &mut Vec<Diagnostic>, what: &str, items: impl IntoIterator<Item = (&'a str, Span)>) {
    let mut seen = HashSet::new();
    for (name, span) in items {
        if !seen.insert(name) {
            out.push(Diagnostic::error(
                DiagCode::DuplicateDeclaration,
                span,
                format!("duplicate {what} `{name}`"),
            ));
        }
    }
}

fn duplicate_declarations(m: &Model) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    dup_check(&mut out, "context", m.contexts.iter().map(|c| (c.name.as_str(), c.span)));
    dup_check(&mut out, "connector", m.connectors.iter().map(|c| (c.name.as_str(), c.span)));
    dup_check(&mut out, "component", m.components.iter().map(|c| (c.name.as_str(), c.span)));
    for comp in &m.components {
        dup_check(&mut out, "variable", comp.variables.iter().map(|v| (v.name.as_str(), v.span)));
        dup_check(&mut out, "operation", comp.operations.iter().map(|o| (o.name.as_str(), o.span)));
        dup_check(&mut out, "state machine", comp.machines.iter().map(|s| (s.name.as_str(), s.span)));
        for op in &comp.operations {
            dup_check(&mut out, "parameter", op.params.iter().map(|p| (p.name.as_str(), p.span)));
        }
        for sm in &comp.machines {
            dup_check(
                &mut out,
                "transition",
                sm.transitions.iter().filter_map(|t| t.name.as_deref().map(|n| (n, t.span))),
            );
        }
    }
    out
}
