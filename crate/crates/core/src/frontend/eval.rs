//! Direct evaluation of a source module, one lane at a time. Used as an
//! independent check on lowering.

use std::collections::HashMap;

use thiserror::Error;

use super::{BinOp, Expr, FunctionDef, Pos, SourceModule, Stmt};
use crate::runtime::{eval_lane, ArgInfo, KernelRegistry, LaneRef, Value};

const MAX_DEPTH: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error("recursion deeper than {MAX_DEPTH}")]
    RecursionLimit,
    #[error("{pos}: {message}")]
    Fault { pos: Pos, message: String },
}

struct Evaluator<'a> {
    module: &'a SourceModule,
    registry: &'a KernelRegistry,
    steps: u64,
    limit: u64,
    depth: usize,
}

enum Flow {
    Next,
    Return(Value),
}

fn fault(pos: Pos, message: impl Into<String>) -> EvalError {
    EvalError::Fault { pos, message: message.into() }
}

impl<'a> Evaluator<'a> {
    fn tick(&mut self) -> Result<(), EvalError> {
        self.steps += 1;
        if self.steps > self.limit {
            Err(EvalError::StepLimit(self.limit))
        } else {
            Ok(())
        }
    }

    fn kernel(&self, name: &str, args: &[(Value, &Expr)], pos: Pos) -> Result<Value, EvalError> {
        let k = self.registry.get(name).ok_or_else(|| fault(pos, format!("unknown function `{name}`")))?;
        let infos: Vec<ArgInfo> = args
            .iter()
            .map(|(v, e)| match e {
                Expr::Lit(l, _) => ArgInfo { kind: l.kind(), literal: Some(*l) },
                _ => ArgInfo::of_kind(v.kind()),
            })
            .collect();
        let lanes: Vec<LaneRef<'_>> = args.iter().map(|(v, _)| v.as_lane()).collect();
        eval_lane(k.as_ref(), &infos, &lanes).map_err(|e| fault(pos, e.to_string()))
    }

    fn truth(v: &Value, pos: Pos) -> Result<bool, EvalError> {
        match v {
            Value::Bool(b) => Ok(*b),
            other => Err(fault(pos, format!("condition has kind {}, expected bool", other.kind()))),
        }
    }

    fn expr(&mut self, e: &Expr, env: &HashMap<String, Value>) -> Result<Value, EvalError> {
        match e {
            Expr::Lit(l, _) => Ok(l.to_value()),
            Expr::Var(name, pos) => env.get(name).cloned().ok_or_else(|| fault(*pos, format!("`{name}` is unassigned"))),
            Expr::Unary { op, arg, pos } => {
                let a = self.expr(arg, env)?;
                self.kernel(op.kernel(), &[(a, &**arg)], *pos)
            }
            Expr::Binary { op: op @ (BinOp::And | BinOp::Or), lhs, rhs, pos } => {
                let a = self.expr(lhs, env)?;
                let short = Self::truth(&a, *pos)? == (*op == BinOp::Or);
                if short {
                    Ok(a)
                } else {
                    self.expr(rhs, env)
                }
            }
            Expr::Binary { op, lhs, rhs, pos } => {
                let (name, swap) = op.kernel().expect("short-circuit handled above");
                let a = (self.expr(lhs, env)?, &**lhs);
                let b = (self.expr(rhs, env)?, &**rhs);
                let args = if swap { [b, a] } else { [a, b] };
                self.kernel(name, &args, *pos)
            }
            Expr::Call { name, args, pos } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push((self.expr(a, env)?, a));
                }
                match self.module.function(name) {
                    Some((_, f)) => {
                        let plain: Vec<Value> = vals.into_iter().map(|(v, _)| v).collect();
                        self.call(f, plain)
                    }
                    None => self.kernel(name, &vals, *pos),
                }
            }
        }
    }

    fn call(&mut self, f: &FunctionDef, args: Vec<Value>) -> Result<Value, EvalError> {
        if args.len() != f.params.len() {
            return Err(fault(f.pos, format!("`{}` takes {} arguments", f.name, f.params.len())));
        }
        if self.depth >= MAX_DEPTH {
            return Err(EvalError::RecursionLimit);
        }
        self.depth += 1;
        let mut env: HashMap<String, Value> = f.params.iter().cloned().zip(args).collect();
        let flow = self.stmts(&f.body, &mut env);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Err(fault(f.pos, format!("`{}` ended without returning", f.name))),
        }
    }

    fn stmts(&mut self, body: &[Stmt], env: &mut HashMap<String, Value>) -> Result<Flow, EvalError> {
        for s in body {
            self.tick()?;
            match s {
                Stmt::Assign { target, expr, .. } => {
                    let v = self.expr(expr, env)?;
                    env.insert(target.clone(), v);
                }
                Stmt::Return { expr, .. } => return Ok(Flow::Return(self.expr(expr, env)?)),
                Stmt::If { cond, then_body, else_body, pos } => {
                    let c = self.expr(cond, env)?;
                    let flow = if Self::truth(&c, *pos)? {
                        self.stmts(then_body, env)?
                    } else if let Some(body) = else_body {
                        self.stmts(body, env)?
                    } else {
                        Flow::Next
                    };
                    if let Flow::Return(v) = flow {
                        return Ok(Flow::Return(v));
                    }
                }
                Stmt::While { cond, body, pos } => loop {
                    self.tick()?;
                    let c = self.expr(cond, env)?;
                    if !Self::truth(&c, *pos)? {
                        break;
                    }
                    if let Flow::Return(v) = self.stmts(body, env)? {
                        return Ok(Flow::Return(v));
                    }
                },
            }
        }
        Ok(Flow::Next)
    }
}

/// Evaluate function `name` of `module` on scalar arguments.
pub fn evaluate(
    module: &SourceModule,
    registry: &KernelRegistry,
    name: &str,
    args: &[Value],
    step_limit: u64,
) -> Result<Value, EvalError> {
    let (_, f) = module
        .function(name)
        .ok_or_else(|| fault(Pos::default(), format!("unknown function `{name}`")))?;
    let mut ev = Evaluator { module, registry, steps: 0, limit: step_limit, depth: 0 };
    ev.call(f, args.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    #[test]
    fn fibonacci_values() {
        let m = parse_source(
            "def fib(n) { if (n <= 1) { return 1; } else { return fib(n - 2) + fib(n - 1); } }",
        )
        .unwrap();
        let r = KernelRegistry::with_builtins();
        let got: Vec<i64> = (0..8)
            .map(|n| match evaluate(&m, &r, "fib", &[Value::I64(n)], 1_000_000).unwrap() {
                Value::I64(v) => v,
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(got, [1, 1, 2, 3, 5, 8, 13, 21]);
    }

    #[test]
    fn step_limit() {
        let m = parse_source("def spin(n) { while (true) { n = n + 1; } return n; }").unwrap();
        let e = evaluate(&m, &KernelRegistry::with_builtins(), "spin", &[Value::I64(0)], 100).unwrap_err();
        assert_eq!(e, EvalError::StepLimit(100));
    }
}
