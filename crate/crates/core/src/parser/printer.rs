use std::fmt::Write;

use crate::model::*;

/// Canonical text for a model. The output is byte-deterministic and parses
/// back to a structurally equal model.
pub fn print(m: &Model) -> String {
    let mut p = Printer::default();
    p.line(&format!("model {}", m.name));
    if let Some(r) = &m.refines {
        p.blank();
        p.refines(r);
    }
    for c in &m.contexts {
        p.blank();
        p.context(c);
    }
    if !m.connectors.is_empty() {
        p.blank();
        for c in &m.connectors {
            p.line(&format!(
                "connector {}: {} from {} to {}",
                c.name,
                print_value_type(&c.ty),
                c.source,
                c.target
            ));
        }
    }
    for c in &m.components {
        p.blank();
        p.component(c);
    }
    p.out
}

pub fn print_value_type(t: &ValueType) -> String {
    t.to_string()
}

#[derive(Default)]
struct Printer {
    out: String,
    indent: usize,
}

impl Printer {
    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn blank(&mut self) {
        self.out.push('\n');
    }

    fn open(&mut self, s: &str) {
        self.line(&format!("{s} {{"));
        self.indent += 1;
    }

    fn close(&mut self) {
        self.indent -= 1;
        self.line("}");
    }

    fn refines(&mut self, r: &RefinesClause) {
        let d = &r.decls;
        if d.gluing.is_empty() && d.events.is_empty() && d.states.is_empty() {
            self.line(&format!("refines \"{}\"", r.path));
            return;
        }
        self.open(&format!("refines \"{}\"", r.path));
        for (c, a) in &d.states {
            self.line(&format!("state {c} -> {a}"));
        }
        for ev in &d.events {
            match &ev.target {
                MapTarget::New => self.line(&format!("new {}", ev.concrete)),
                MapTarget::Abstract(a) => self.line(&format!("map {} -> {}", ev.concrete, a)),
            }
        }
        for g in &d.gluing {
            self.line(&format!("gluing {}", print_expr(g)));
        }
        self.close();
    }

    fn context(&mut self, c: &Context) {
        let head = match &c.extends {
            Some(e) => format!("context {} extends {}", c.name, e),
            None => format!("context {}", c.name),
        };
        self.open(&head);
        for s in &c.sets {
            self.line(&format!("set {} = {{ {} }}", s.name, s.elements.join(", ")));
        }
        for k in &c.constants {
            self.line(&format!(
                "constant {}: {} = {}",
                k.name,
                print_value_type(&k.ty),
                print_expr(&k.value)
            ));
        }
        for a in &c.axioms {
            self.line(&format!("axiom {}", print_expr(a)));
        }
        self.close();
    }

    fn component(&mut self, c: &Component) {
        self.open(&format!("component {}", c.name));
        for v in &c.variables {
            self.line(&format!("var {}: {} = {}", v.name, print_value_type(&v.ty), print_expr(&v.init)));
        }
        if let Some(v) = &c.variant {
            self.line(&format!("variant {}", print_expr(v)));
        }
        for op in &c.operations {
            self.operation(op);
        }
        for sm in &c.machines {
            self.machine(sm);
        }
        self.close();
    }

    fn operation(&mut self, op: &Operation) {
        let mut head = format!("operation {} kind {}", op.name, op.kind);
        if !op.wakes.is_empty() {
            let _ = write!(head, " wakes {}", op.wakes.join(", "));
        }
        if op.convergent {
            head.push_str(" convergent");
        }
        if op.params.is_empty() && op.guards.is_empty() && op.actions.is_empty() {
            self.line(&head);
            return;
        }
        self.open(&head);
        for p in &op.params {
            let mut s = format!("param {}: {}", p.name, print_value_type(&p.ty));
            if let Some((lo, hi)) = p.range {
                let _ = write!(s, " in {lo}..{hi}");
            }
            self.line(&s);
        }
        self.guards_actions(&op.guards, &op.actions);
        self.close();
    }

    fn guards_actions(&mut self, guards: &[Expr], actions: &[Action]) {
        for g in guards {
            self.line(&format!("guard {}", print_expr(g)));
        }
        for a in actions {
            self.line(&format!("action {}", print_action(a)));
        }
    }

    fn machine(&mut self, sm: &StateMachine) {
        let mode = match sm.mode {
            MachineMode::Synchronous => "sync",
            MachineMode::Asynchronous => "async",
        };
        self.open(&format!("statemachine {} {}", sm.name, mode));
        if let Some(i) = &sm.initial {
            self.initial(i);
        }
        for s in &sm.states {
            self.state(s);
        }
        for t in &sm.transitions {
            let target = match &t.target {
                Target::State(s) => s.as_str(),
                Target::Final => "final",
            };
            let source = match &t.source {
                Source::State(s) => s.as_str(),
                Source::Initial => "initial",
            };
            let mut head = format!("transition {}: {} -> {}", t.name.as_deref().unwrap_or("_"), source, target);
            if let Some(l) = &t.links {
                let _ = write!(head, " links {l}");
            }
            if t.guards.is_empty() && t.actions.is_empty() {
                self.line(&head);
            } else {
                self.open(&head);
                self.guards_actions(&t.guards, &t.actions);
                self.close();
            }
        }
        self.close();
    }

    fn initial(&mut self, t: &Transition) {
        let target = match &t.target {
            Target::State(s) => s.as_str(),
            Target::Final => "final",
        };
        match &t.links {
            Some(l) => self.line(&format!("initial -> {target} links {l}")),
            None => self.line(&format!("initial -> {target}")),
        }
    }

    fn state(&mut self, s: &State) {
        if s.invariants.is_empty() && s.initial.is_none() && s.children.is_empty() {
            self.line(&format!("state {}", s.name));
            return;
        }
        self.open(&format!("state {}", s.name));
        for inv in &s.invariants {
            self.line(&format!("invariant {}", print_expr(inv)));
        }
        if let Some(i) = &s.initial {
            self.initial(i);
        }
        for c in &s.children {
            self.state(c);
        }
        self.close();
    }
}

pub fn print_action(a: &Action) -> String {
    match &a.kind {
        ActionKind::Assign { var, value } => format!("{var} := {}", print_expr(value)),
        ActionKind::PortSend { connector, value, delay } => {
            format!("port_send({connector}, {}, delay {})", print_expr(value), print_expr(delay))
        }
        ActionKind::SelfWake { delay, .. } => format!("self_wake(delay {})", print_expr(delay)),
        ActionKind::Call { method } => format!("call {method}"),
    }
}

/// Prints an expression with the minimum parentheses needed to parse back
/// to the same tree.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

const PREC_NOT: u8 = 4;
const PREC_UNARY: u8 = 8;
const PREC_ATOM: u8 = 9;

fn expr_prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => op.precedence(),
        ExprKind::Unary(UnOp::Not, _) => PREC_NOT,
        ExprKind::Unary(UnOp::Neg, _) => PREC_UNARY,
        // `if` extends as far right as possible, so it always needs parens
        // when embedded.
        ExprKind::Ite(..) => 0,
        _ => PREC_ATOM,
    }
}

fn write_child(out: &mut String, e: &Expr, min_prec: u8) {
    if expr_prec(e) < min_prec {
        out.push('(');
        write_expr(out, e, 0);
        out.push(')');
    } else {
        write_expr(out, e, min_prec);
    }
}

fn write_expr(out: &mut String, e: &Expr, ctx_prec: u8) {
    match &e.kind {
        ExprKind::Bool(true) => out.push_str("TRUE"),
        ExprKind::Bool(false) => out.push_str("FALSE"),
        ExprKind::Int(v) => {
            // A negative literal on the left of `*` would re-parse as a negation.
            if *v < 0 && ctx_prec >= BinOp::Mul.precedence() {
                let _ = write!(out, "({v})");
            } else {
                let _ = write!(out, "{v}");
            }
        }
        ExprKind::Name(p) => out.push_str(&p.join(".")),
        ExprKind::Recv(c) => {
            let _ = write!(out, "recv({c})");
        }
        ExprKind::InState(p) => {
            let _ = write!(out, "in({})", p.join("."));
        }
        ExprKind::Unary(UnOp::Not, inner) => {
            out.push_str("not ");
            write_child(out, inner, PREC_NOT);
        }
        ExprKind::Unary(UnOp::Neg, inner) => {
            out.push('-');
            if matches!(inner.kind, ExprKind::Int(_)) {
                out.push('(');
                write_expr(out, inner, 0);
                out.push(')');
            } else {
                write_child(out, inner, PREC_UNARY);
            }
        }
        ExprKind::Binary(op, l, r) => {
            let p = op.precedence();
            let (lp, rp) = match op {
                // Right-associative.
                BinOp::Implies => (p + 1, p),
                // Non-associative.
                _ if op.is_comparison() => (p + 1, p + 1),
                _ => (p, p + 1),
            };
            write_child(out, l, lp);
            let _ = write!(out, " {} ", op.symbol());
            write_child(out, r, rp);
        }
        ExprKind::Extremum(which, args) => {
            out.push_str(match which {
                Extremum::Min => "min(",
                Extremum::Max => "max(",
            });
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
        ExprKind::Ite(c, t, f) => {
            out.push_str("if ");
            write_expr(out, c, 0);
            out.push_str(" then ");
            write_expr(out, t, 0);
            out.push_str(" else ");
            write_expr(out, f, 0);
        }
    }
}
