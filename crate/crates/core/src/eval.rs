//! Evaluation of compiled expressions.

use thiserror::Error;

use crate::model::{BinOp, Extremum};
use crate::program::{CExpr, ConnId, MachineId, Side, StateId, Value, VarId};

/// Read access to whatever state an expression is evaluated against.
pub trait Env {
    fn var(&self, side: Side, v: VarId) -> Value;
    fn param(&self, i: usize) -> Value;
    fn recv(&self, side: Side, c: ConnId) -> Option<Value>;
    fn in_state(&self, side: Side, m: MachineId, s: StateId) -> bool;
}

/// Environment for constant expressions; validation guarantees that none of
/// these methods is reached.
pub struct NoEnv;

impl Env for NoEnv {
    fn var(&self, _: Side, _: VarId) -> Value {
        Value::Int(0)
    }
    fn param(&self, _: usize) -> Value {
        Value::Int(0)
    }
    fn recv(&self, _: Side, _: ConnId) -> Option<Value> {
        None
    }
    fn in_state(&self, _: Side, _: MachineId, _: StateId) -> bool {
        false
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("arithmetic result {0} exceeds the bound {1}")]
    Overflow(i128, i64),
    #[error("no value has been received on connector #{0}")]
    NoValue(ConnId),
    #[error("ill-typed operand")]
    IllTyped,
}

fn int(v: Value) -> Result<i64, EvalError> {
    v.as_int().ok_or(EvalError::IllTyped)
}

fn boolean(v: Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or(EvalError::IllTyped)
}

fn checked(v: i128, bound: i64) -> Result<Value, EvalError> {
    if v > bound as i128 || v < -(bound as i128) {
        Err(EvalError::Overflow(v, bound))
    } else {
        Ok(Value::Int(v as i64))
    }
}

pub fn eval(e: &CExpr, env: &dyn Env, bound: i64) -> Result<Value, EvalError> {
    Ok(match e {
        CExpr::Lit(v) => *v,
        CExpr::Var(side, v) => env.var(*side, *v),
        CExpr::Param(i) => env.param(*i),
        CExpr::Recv(side, c) => env.recv(*side, *c).ok_or(EvalError::NoValue(*c))?,
        CExpr::In(side, m, s) => Value::Bool(env.in_state(*side, *m, *s)),
        CExpr::Not(a) => Value::Bool(!boolean(eval(a, env, bound)?)?),
        CExpr::Neg(a) => checked(-(int(eval(a, env, bound)?)? as i128), bound)?,
        CExpr::Bin(op, a, b) => match op {
            BinOp::And => Value::Bool(boolean(eval(a, env, bound)?)? && boolean(eval(b, env, bound)?)?),
            BinOp::Or => Value::Bool(boolean(eval(a, env, bound)?)? || boolean(eval(b, env, bound)?)?),
            BinOp::Implies => Value::Bool(!boolean(eval(a, env, bound)?)? || boolean(eval(b, env, bound)?)?),
            BinOp::Eq => Value::Bool(eval(a, env, bound)? == eval(b, env, bound)?),
            BinOp::Ne => Value::Bool(eval(a, env, bound)? != eval(b, env, bound)?),
            _ => {
                let x = int(eval(a, env, bound)?)? as i128;
                let y = int(eval(b, env, bound)?)? as i128;
                match op {
                    BinOp::Add => checked(x + y, bound)?,
                    BinOp::Sub => checked(x - y, bound)?,
                    BinOp::Mul => checked(x * y, bound)?,
                    BinOp::Lt => Value::Bool(x < y),
                    BinOp::Le => Value::Bool(x <= y),
                    BinOp::Gt => Value::Bool(x > y),
                    BinOp::Ge => Value::Bool(x >= y),
                    _ => unreachable!(),
                }
            }
        },
        CExpr::Ext(which, args) => {
            let mut acc: Option<i64> = None;
            for a in args {
                let v = int(eval(a, env, bound)?)?;
                acc = Some(match (acc, which) {
                    (None, _) => v,
                    (Some(x), Extremum::Min) => x.min(v),
                    (Some(x), Extremum::Max) => x.max(v),
                });
            }
            Value::Int(acc.ok_or(EvalError::IllTyped)?)
        }
        CExpr::Ite(c, t, f) => {
            if boolean(eval(c, env, bound)?)? {
                eval(t, env, bound)?
            } else {
                eval(f, env, bound)?
            }
        }
    })
}

/// Guard evaluation: a guard that reads a connector with no available value
/// is false rather than an error.
pub fn eval_guard(e: &CExpr, env: &dyn Env, bound: i64) -> Result<bool, EvalError> {
    match eval(e, env, bound) {
        Ok(v) => boolean(v),
        Err(EvalError::NoValue(_)) => Ok(false),
        Err(err) => Err(err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(i: i64) -> Box<CExpr> {
        Box::new(CExpr::Lit(Value::Int(i)))
    }

    #[test]
    fn arithmetic_respects_bound() {
        let e = CExpr::Bin(BinOp::Mul, lit(70_000), lit(70_000));
        assert_eq!(
            eval(&e, &NoEnv, i32::MAX as i64),
            Err(EvalError::Overflow(4_900_000_000, i32::MAX as i64))
        );
        assert_eq!(eval(&e, &NoEnv, i64::MAX), Ok(Value::Int(4_900_000_000)));
    }

    #[test]
    fn missing_receive_makes_guard_false() {
        let e = CExpr::Bin(
            BinOp::Eq,
            Box::new(CExpr::Recv(Side::Own, 0)),
            Box::new(CExpr::Lit(Value::Bool(true))),
        );
        assert_eq!(eval_guard(&e, &NoEnv, 100), Ok(false));
        assert_eq!(eval(&e, &NoEnv, 100), Err(EvalError::NoValue(0)));
    }

    #[test]
    fn short_circuit_skips_missing_values() {
        let e = CExpr::Bin(
            BinOp::Implies,
            Box::new(CExpr::Lit(Value::Bool(false))),
            Box::new(CExpr::Recv(Side::Own, 3)),
        );
        assert_eq!(eval(&e, &NoEnv, 100), Ok(Value::Bool(true)));
    }

    #[test]
    fn extrema() {
        let e = CExpr::Ext(Extremum::Max, vec![*lit(3), *lit(-2), *lit(9)]);
        assert_eq!(eval(&e, &NoEnv, 100), Ok(Value::Int(9)));
    }
}
