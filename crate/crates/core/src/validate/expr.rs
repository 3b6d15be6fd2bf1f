//! Name resolution and typing of expressions.

use crate::diag::{DiagCode, Diagnostic};
use crate::model::{BinOp, Expr, ExprKind, UnOp};
use crate::program::{CExpr, CompId, ParamInfo, Program, Side, Ty, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RecvRule {
    /// `recv(c)` is allowed when the scope's component is `c`'s target.
    Owner,
    /// Not allowed; the string names the context for the message.
    Forbidden(&'static str),
}

pub(crate) struct ExprCx<'a> {
    pub prog: &'a Program,
    pub abs: Option<&'a Program>,
    pub comp: Option<CompId>,
    pub params: &'a [ParamInfo],
    pub recv: RecvRule,
    /// Whether variables and states of other components may be read.
    pub foreign: bool,
}

type Out = Option<(CExpr, Ty)>;

impl<'a> ExprCx<'a> {
    pub fn new(prog: &'a Program) -> Self {
        ExprCx {
            prog,
            abs: None,
            comp: None,
            params: &[],
            recv: RecvRule::Forbidden("this position"),
            foreign: false,
        }
    }

    pub fn ty_name(&self, t: Ty) -> String {
        self.prog.ty_name(t)
    }

    pub fn compile_bool(&self, e: &Expr, what: &str, diags: &mut Vec<Diagnostic>) -> Option<CExpr> {
        let (c, t) = self.compile(e, diags)?;
        if t != Ty::Bool {
            diags.push(Diagnostic::error(
                DiagCode::TypeMismatch,
                e.span,
                format!("{what} must be BOOL, found {}", self.ty_name(t)),
            ));
            return None;
        }
        Some(c)
    }

    pub fn compile_numeric(&self, e: &Expr, what: &str, diags: &mut Vec<Diagnostic>) -> Option<CExpr> {
        let (c, t) = self.compile(e, diags)?;
        if !t.is_numeric() {
            diags.push(Diagnostic::error(
                DiagCode::TypeMismatch,
                e.span,
                format!("{what} must be numeric, found {}", self.ty_name(t)),
            ));
            return None;
        }
        Some(c)
    }

    fn mismatch(&self, e: &Expr, msg: String, diags: &mut Vec<Diagnostic>) -> Out {
        diags.push(Diagnostic::error(DiagCode::TypeMismatch, e.span, msg));
        None
    }

    pub fn compile(&self, e: &Expr, diags: &mut Vec<Diagnostic>) -> Out {
        match &e.kind {
            ExprKind::Bool(b) => Some((CExpr::Lit(Value::Bool(*b)), Ty::Bool)),
            ExprKind::Int(i) => Some((CExpr::Lit(Value::Int(*i)), if *i >= 0 { Ty::Nat } else { Ty::Int })),
            ExprKind::Name(path) => self.name(e, path, diags),
            ExprKind::Recv(c) => self.recv(e, c, diags),
            ExprKind::InState(path) => self.in_state(e, path, diags),
            ExprKind::Unary(UnOp::Not, a) => {
                let a = self.compile_bool(a, "operand of `not`", diags)?;
                Some((CExpr::Not(Box::new(a)), Ty::Bool))
            }
            ExprKind::Unary(UnOp::Neg, a) => {
                let a = self.compile_numeric(a, "operand of `-`", diags)?;
                Some((CExpr::Neg(Box::new(a)), Ty::Int))
            }
            ExprKind::Binary(op, a, b) => {
                let l = self.compile(a, diags);
                let r = self.compile(b, diags);
                let ((l, lt), (r, rt)) = (l?, r?);
                let ty = match op {
                    BinOp::And | BinOp::Or | BinOp::Implies => {
                        if lt != Ty::Bool || rt != Ty::Bool {
                            return self.mismatch(
                                e,
                                format!(
                                    "`{}` needs BOOL operands, found {} and {}",
                                    op.symbol(),
                                    self.ty_name(lt),
                                    self.ty_name(rt)
                                ),
                                diags,
                            );
                        }
                        Ty::Bool
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if !(lt == rt || (lt.is_numeric() && rt.is_numeric())) {
                            return self.mismatch(e, format!("cannot compare {} with {}", self.ty_name(lt), self.ty_name(rt)), diags);
                        }
                        Ty::Bool
                    }
                    _ => {
                        if !lt.is_numeric() || !rt.is_numeric() {
                            return self.mismatch(
                                e,
                                format!(
                                    "`{}` needs numeric operands, found {} and {}",
                                    op.symbol(),
                                    self.ty_name(lt),
                                    self.ty_name(rt)
                                ),
                                diags,
                            );
                        }
                        match op {
                            BinOp::Add | BinOp::Mul if lt == Ty::Nat && rt == Ty::Nat => Ty::Nat,
                            BinOp::Add | BinOp::Sub | BinOp::Mul => Ty::Int,
                            _ => Ty::Bool,
                        }
                    }
                };
                Some((CExpr::Bin(*op, Box::new(l), Box::new(r)), ty))
            }
            ExprKind::Extremum(which, args) => {
                let mut out = Vec::new();
                let mut all_nat = true;
                let mut ok = true;
                for a in args {
                    match self.compile(a, diags) {
                        Some((c, t)) if t.is_numeric() => {
                            all_nat &= t == Ty::Nat;
                            out.push(c);
                        }
                        Some((_, t)) => {
                            ok = false;
                            diags.push(Diagnostic::error(
                                DiagCode::TypeMismatch,
                                a.span,
                                format!("min/max arguments must be numeric, found {}", self.ty_name(t)),
                            ));
                        }
                        None => ok = false,
                    }
                }
                if !ok {
                    return None;
                }
                let ty = if all_nat { Ty::Nat } else { Ty::Int };
                Some((CExpr::Ext(*which, out), ty))
            }
            ExprKind::Ite(c, t, f) => {
                let c = self.compile_bool(c, "condition of `if`", diags);
                let t = self.compile(t, diags);
                let f = self.compile(f, diags);
                let (c, (t, tt), (f, ft)) = (c?, t?, f?);
                let ty = if tt == ft {
                    tt
                } else if tt.is_numeric() && ft.is_numeric() {
                    Ty::Int
                } else {
                    return self.mismatch(
                        e,
                        format!("branches of `if` differ: {} and {}", self.ty_name(tt), self.ty_name(ft)),
                        diags,
                    );
                };
                Some((CExpr::Ite(Box::new(c), Box::new(t), Box::new(f)), ty))
            }
        }
    }

    fn unresolved(&self, e: &Expr, what: &str, name: &str, diags: &mut Vec<Diagnostic>) -> Out {
        diags.push(Diagnostic::error(
            DiagCode::UnresolvedName,
            e.span,
            format!("unresolved {what} `{name}`"),
        ));
        None
    }

    /// Translates a type of the abstract program into this program's types.
    fn lift_ty(&self, abs: &Program, t: Ty) -> Option<Ty> {
        match t {
            Ty::Set(s) => self.prog.set_by_name(&abs.sets[s].name).map(Ty::Set),
            t => Some(t),
        }
    }

    fn name(&self, e: &Expr, path: &[String], diags: &mut Vec<Diagnostic>) -> Out {
        let full = path.join(".");
        if path.len() > 1 && path[0] == "abs" {
            let Some(abs) = self.abs else {
                return self.unresolved(e, "name", &full, diags);
            };
            let rest = &path[1..];
            let var = match rest {
                [c, v] => abs.var_by_name(c, v),
                [v] => unique(abs.vars.iter().enumerate().filter(|(_, x)| &x.name == v).map(|(i, _)| i)),
                _ => None,
            };
            let Some(var) = var else {
                return self.unresolved(e, "abstract variable", &full, diags);
            };
            let Some(ty) = self.lift_ty(abs, abs.vars[var].ty) else {
                return self.mismatch(e, format!("type of `{full}` is unknown in the concrete model"), diags);
            };
            return Some((CExpr::Var(Side::Abstract, var), ty));
        }
        match path {
            [x] => {
                if let Some(i) = self.params.iter().position(|p| &p.name == x) {
                    return Some((CExpr::Param(i), self.params[i].ty));
                }
                if let Some(c) = self.comp {
                    let comp = &self.prog.components[c];
                    if let Some(v) = comp.vars.iter().copied().find(|v| &self.prog.vars[*v].name == x) {
                        return Some((CExpr::Var(Side::Own, v), self.prog.vars[v].ty));
                    }
                }
                if let Some(k) = self.prog.constants.iter().find(|k| &k.name == x) {
                    return Some((CExpr::Lit(k.value), k.ty));
                }
                if let Some(el) = self.prog.elem_by_name(x) {
                    let set = self.prog.elements[el as usize].set;
                    return Some((CExpr::Lit(Value::Elem(el)), Ty::Set(set)));
                }
                if self.foreign {
                    let hits: Vec<usize> = (0..self.prog.vars.len()).filter(|v| &self.prog.vars[*v].name == x).collect();
                    if hits.len() == 1 {
                        return Some((CExpr::Var(Side::Own, hits[0]), self.prog.vars[hits[0]].ty));
                    }
                    if hits.len() > 1 {
                        diags.push(Diagnostic::error(
                            DiagCode::UnresolvedName,
                            e.span,
                            format!("ambiguous name `{x}`; qualify it with a component"),
                        ));
                        return None;
                    }
                }
                self.unresolved(e, "name", x, diags)
            }
            [c, x] => {
                let Some(v) = self.prog.var_by_name(c, x) else {
                    return self.unresolved(e, "variable", &full, diags);
                };
                if !self.foreign && Some(self.prog.vars[v].comp) != self.comp {
                    diags.push(Diagnostic::error(
                        DiagCode::IllegalActionPlacement,
                        e.span,
                        format!("`{full}` belongs to another component; components share data only through connectors"),
                    ));
                    return None;
                }
                Some((CExpr::Var(Side::Own, v), self.prog.vars[v].ty))
            }
            _ => self.unresolved(e, "name", &full, diags),
        }
    }

    fn recv(&self, e: &Expr, c: &str, diags: &mut Vec<Diagnostic>) -> Out {
        let Some(conn) = self.prog.conn_by_name(c) else {
            return self.unresolved(e, "connector", c, diags);
        };
        match self.recv {
            RecvRule::Forbidden(ctx) => {
                diags.push(Diagnostic::error(
                    DiagCode::IllegalActionPlacement,
                    e.span,
                    format!("recv({c}) is not allowed in {ctx}"),
                ));
                None
            }
            RecvRule::Owner => {
                let info = &self.prog.connectors[conn];
                if let Some(comp) = self.comp.filter(|c| *c != info.target) {
                    diags.push(Diagnostic::error(
                        DiagCode::IllegalActionPlacement,
                        e.span,
                        format!(
                            "recv({c}) used in {}, but `{c}` delivers to {}",
                            self.prog.components[comp].name, self.prog.components[info.target].name
                        ),
                    ));
                    return None;
                }
                Some((CExpr::Recv(Side::Own, conn), info.ty))
            }
        }
    }

    fn in_state(&self, e: &Expr, path: &[String], diags: &mut Vec<Diagnostic>) -> Out {
        let full = path.join(".");
        let (prog, side, rest) = if path.len() > 1 && path[0] == "abs" {
            match self.abs {
                Some(a) => (a, Side::Abstract, &path[1..]),
                None => return self.unresolved(e, "state", &full, diags),
            }
        } else {
            (self.prog, Side::Own, path)
        };
        let Some((m, s)) = resolve_state(prog, rest) else {
            return self.unresolved(e, "state", &full, diags);
        };
        if side == Side::Own && !self.foreign && Some(prog.machines[m].comp) != self.comp {
            diags.push(Diagnostic::error(
                DiagCode::IllegalActionPlacement,
                e.span,
                format!("state `{full}` belongs to another component"),
            ));
            return None;
        }
        Some((CExpr::In(side, m, s), Ty::Bool))
    }
}

/// Resolves `S`, `M.S` or `C.S` (and `C.M.S`) to a state.
pub(crate) fn resolve_state(prog: &Program, path: &[String]) -> Option<(usize, usize)> {
    let (m, s) = prog.state_by_name(path.last()?)?;
    let machine = &prog.machines[m];
    let ok = match path.len() {
        1 => true,
        2 => machine.name == path[0] || prog.components[machine.comp].name == path[0],
        3 => prog.components[machine.comp].name == path[0] && machine.name == path[1],
        _ => false,
    };
    ok.then_some((m, s))
}

fn unique(mut it: impl Iterator<Item = usize>) -> Option<usize> {
    let first = it.next()?;
    it.next().is_none().then_some(first)
}
