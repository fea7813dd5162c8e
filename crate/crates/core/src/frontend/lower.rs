use std::collections::BTreeSet;

use super::{BinOp, Expr, FrontendError, FunctionDef, Pos, SourceModule, Stmt};
use crate::ir::{Block, CallGraphProgram, Function, Op, Operand, PrimitiveId, Terminator, Var};
use crate::runtime::KernelRegistry;

/// Name of every function's output variable.
pub const RETURN_VAR: &str = "$ret";

const UNPATCHED: usize = usize::MAX;

struct Builder<'a> {
    module: &'a SourceModule,
    registry: &'a KernelRegistry,
    blocks: Vec<(Vec<Op>, Option<Terminator>)>,
    cur: Option<usize>,
    temps: usize,
    assigned: BTreeSet<String>,
}

impl<'a> Builder<'a> {
    fn new_block(&mut self) -> usize {
        self.blocks.push((Vec::new(), None));
        self.blocks.len() - 1
    }

    fn temp(&mut self) -> Var {
        let v = Var(format!("$t{}", self.temps));
        self.temps += 1;
        v
    }

    fn emit(&mut self, op: Op) {
        let b = self.cur.expect("emitting into a live block");
        self.blocks[b].0.push(op);
    }

    fn terminate(&mut self, t: Terminator) -> usize {
        let b = self.cur.take().expect("terminating a live block");
        self.blocks[b].1 = Some(t);
        b
    }

    fn set_false_target(&mut self, block: usize, target: usize) {
        if let Some(Terminator::Branch { if_false, .. }) = &mut self.blocks[block].1 {
            *if_false = target;
        }
    }

    fn set_true_target(&mut self, block: usize, target: usize) {
        if let Some(Terminator::Branch { if_true, .. }) = &mut self.blocks[block].1 {
            *if_true = target;
        }
    }

    fn prim(&mut self, dest: Option<Var>, name: &str, args: Vec<Operand>) -> Operand {
        let out = dest.unwrap_or_else(|| self.temp());
        self.emit(Op::Primitive { out: out.clone(), prim: PrimitiveId::new(name), args });
        Operand::Var(out)
    }

    /// Lower `e`, writing into `dest` when given. Without a destination,
    /// variables and literals are returned as operands without emitting.
    fn expr(&mut self, e: &Expr, dest: Option<Var>) -> Result<Operand, FrontendError> {
        match e {
            Expr::Lit(l, _) => {
                let o = Operand::Lit(*l);
                Ok(match dest {
                    Some(d) => self.prim(Some(d), "id", vec![o]),
                    None => o,
                })
            }
            Expr::Var(name, pos) => {
                if !self.assigned.contains(name) {
                    return Err(FrontendError::new(*pos, format!("`{name}` may be used before assignment")));
                }
                let o = Operand::Var(Var::new(name.as_str()));
                Ok(match dest {
                    Some(d) => self.prim(Some(d), "id", vec![o]),
                    None => o,
                })
            }
            Expr::Unary { op, arg, .. } => {
                let a = self.expr(arg, None)?;
                Ok(self.prim(dest, op.kernel(), vec![a]))
            }
            Expr::Binary { op: op @ (BinOp::And | BinOp::Or), lhs, rhs, .. } => {
                let t = self.temp();
                self.expr(lhs, Some(t.clone()))?;
                let test = self.terminate(Terminator::Branch { cond: t.clone(), if_true: UNPATCHED, if_false: UNPATCHED });
                let rhs_block = self.new_block();
                if *op == BinOp::And {
                    self.set_true_target(test, rhs_block);
                } else {
                    self.set_false_target(test, rhs_block);
                }
                self.cur = Some(rhs_block);
                self.expr(rhs, Some(t.clone()))?;
                let rhs_end = self.terminate(Terminator::Jump(UNPATCHED));
                let join = self.new_block();
                self.blocks[rhs_end].1 = Some(Terminator::Jump(join));
                if *op == BinOp::And {
                    self.set_false_target(test, join);
                } else {
                    self.set_true_target(test, join);
                }
                self.cur = Some(join);
                Ok(match dest {
                    Some(d) => self.prim(Some(d), "id", vec![Operand::Var(t)]),
                    None => Operand::Var(t),
                })
            }
            Expr::Binary { op, lhs, rhs, .. } => {
                let (name, swap) = op.kernel().expect("short-circuit handled above");
                let a = self.expr(lhs, None)?;
                let b = self.expr(rhs, None)?;
                let args = if swap { vec![b, a] } else { vec![a, b] };
                Ok(self.prim(dest, name, args))
            }
            Expr::Call { name, args, pos } => {
                let mut ops = Vec::with_capacity(args.len());
                for a in args {
                    ops.push(self.expr(a, None)?);
                }
                if let Some((callee, f)) = self.module.function(name) {
                    if f.params.len() != args.len() {
                        return Err(FrontendError::new(
                            *pos,
                            format!("`{name}` takes {} arguments, given {}", f.params.len(), args.len()),
                        ));
                    }
                    let out = dest.unwrap_or_else(|| self.temp());
                    self.emit(Op::Call { out: out.clone(), callee, args: ops });
                    Ok(Operand::Var(out))
                } else if let Some(k) = self.registry.get(name) {
                    if k.arity() != args.len() {
                        return Err(FrontendError::new(
                            *pos,
                            format!("primitive `{name}` takes {} arguments, given {}", k.arity(), args.len()),
                        ));
                    }
                    Ok(self.prim(dest, name, ops))
                } else {
                    Err(FrontendError::new(*pos, format!("unknown function `{name}`")))
                }
            }
        }
    }

    fn cond(&mut self, e: &Expr) -> Result<Var, FrontendError> {
        match self.expr(e, None)? {
            Operand::Var(v) => Ok(v),
            lit @ Operand::Lit(_) => match self.prim(None, "id", vec![lit]) {
                Operand::Var(v) => Ok(v),
                Operand::Lit(_) => unreachable!(),
            },
        }
    }

    fn stmts(&mut self, body: &[Stmt]) -> Result<(), FrontendError> {
        for s in body {
            if self.cur.is_none() {
                return Err(FrontendError::new(stmt_pos(s), "unreachable statement"));
            }
            self.stmt(s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), FrontendError> {
        match s {
            Stmt::Assign { target, expr, .. } => {
                self.expr(expr, Some(Var::new(target.as_str())))?;
                self.assigned.insert(target.clone());
            }
            Stmt::Return { expr, .. } => {
                self.expr(expr, Some(Var::new(RETURN_VAR)))?;
                self.terminate(Terminator::Return);
            }
            Stmt::If { cond, then_body, else_body, .. } => {
                let c = self.cond(cond)?;
                let test = self.terminate(Terminator::Branch { cond: c, if_true: UNPATCHED, if_false: UNPATCHED });
                let before = self.assigned.clone();

                let then_block = self.new_block();
                self.set_true_target(test, then_block);
                self.cur = Some(then_block);
                self.stmts(then_body)?;
                let then_end = self.cur.map(|b| (b, self.assigned.clone()));

                self.assigned = before.clone();
                let else_end = match else_body {
                    Some(body) => {
                        let else_block = self.new_block();
                        self.set_false_target(test, else_block);
                        self.cur = Some(else_block);
                        self.stmts(body)?;
                        self.cur.map(|b| (b, self.assigned.clone()))
                    }
                    None => None,
                };

                let join = self.new_block();
                let mut incoming: Vec<BTreeSet<String>> = Vec::new();
                if else_body.is_none() {
                    self.set_false_target(test, join);
                    incoming.push(before);
                }
                for (b, set) in [then_end, else_end].into_iter().flatten() {
                    self.blocks[b].1 = Some(Terminator::Jump(join));
                    incoming.push(set);
                }
                if let Some(first) = incoming.first().cloned() {
                    self.assigned = incoming.iter().fold(first, |acc, s| acc.intersection(s).cloned().collect());
                    self.cur = Some(join);
                } else {
                    self.cur = None;
                }
            }
            Stmt::While { cond, body, .. } => {
                let header = self.new_block();
                self.terminate(Terminator::Jump(header));
                self.cur = Some(header);
                let c = self.cond(cond)?;
                let test = self.terminate(Terminator::Branch { cond: c, if_true: UNPATCHED, if_false: UNPATCHED });
                let before = self.assigned.clone();
                let body_block = self.new_block();
                self.set_true_target(test, body_block);
                self.cur = Some(body_block);
                self.stmts(body)?;
                if self.cur.is_some() {
                    self.terminate(Terminator::Jump(header));
                }
                self.assigned = before;
                let exit = self.new_block();
                self.set_false_target(test, exit);
                self.cur = Some(exit);
            }
        }
        Ok(())
    }

    fn finish(self, def: &FunctionDef) -> Result<Function, FrontendError> {
        if self.cur.is_some() {
            return Err(FrontendError::new(def.pos, format!("`{}` can reach its end without returning", def.name)));
        }
        // Keep reachable blocks in creation order, renumbered densely.
        let n = self.blocks.len();
        let mut reachable = vec![false; n];
        let mut stack = vec![0];
        while let Some(b) = stack.pop() {
            if reachable[b] {
                continue;
            }
            reachable[b] = true;
            let t = self.blocks[b].1.as_ref().expect("reachable block is terminated");
            stack.extend(t.successors());
        }
        let mut new_index = vec![UNPATCHED; n];
        let mut next = 0;
        for b in 0..n {
            if reachable[b] {
                new_index[b] = next;
                next += 1;
            }
        }
        let blocks = self
            .blocks
            .into_iter()
            .enumerate()
            .filter(|(b, _)| reachable[*b])
            .map(|(_, (ops, t))| {
                let terminator = match t.expect("reachable block is terminated") {
                    Terminator::Jump(j) => Terminator::Jump(new_index[j]),
                    Terminator::Branch { cond, if_true, if_false } => {
                        Terminator::Branch { cond, if_true: new_index[if_true], if_false: new_index[if_false] }
                    }
                    Terminator::Return => Terminator::Return,
                };
                Block { ops, terminator }
            })
            .collect();
        Ok(Function {
            name: def.name.clone(),
            params: def.params.iter().map(|p| Var::new(p.as_str())).collect(),
            blocks,
            output: Var::new(RETURN_VAR),
        })
    }
}

fn stmt_pos(s: &Stmt) -> Pos {
    match s {
        Stmt::Assign { pos, .. } | Stmt::If { pos, .. } | Stmt::While { pos, .. } | Stmt::Return { pos, .. } => *pos,
    }
}

/// Lower every function of `module`. The first function is the entry.
pub fn lower_to_cfg(module: &SourceModule, registry: &KernelRegistry) -> Result<CallGraphProgram, FrontendError> {
    if module.functions.is_empty() {
        return Err(FrontendError::new(Pos { line: 1, column: 1 }, "no functions defined"));
    }
    let mut functions = Vec::with_capacity(module.functions.len());
    for (i, def) in module.functions.iter().enumerate() {
        if module.functions[..i].iter().any(|g| g.name == def.name) {
            return Err(FrontendError::new(def.pos, format!("function `{}` defined twice", def.name)));
        }
        let mut params = BTreeSet::new();
        for p in &def.params {
            if !params.insert(p.clone()) {
                return Err(FrontendError::new(def.pos, format!("duplicate parameter `{p}`")));
            }
        }
        let mut b = Builder { module, registry, blocks: Vec::new(), cur: None, temps: 0, assigned: params };
        let entry = b.new_block();
        b.cur = Some(entry);
        b.stmts(&def.body)?;
        functions.push(b.finish(def)?);
    }
    Ok(CallGraphProgram { functions, entry: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;
    use crate::ir::validate_callgraph;

    const FIB: &str = "def fibonacci(n) {
  cond = n <= 1;
  if (cond) {
    return 1;
  } else {
    n2 = n - 2;
    left = fibonacci(n2);
    n1 = n - 1;
    right = fibonacci(n1);
    return left + right;
  }
}
";

    fn lower(src: &str) -> Result<CallGraphProgram, FrontendError> {
        lower_to_cfg(&parse_source(src)?, &KernelRegistry::with_builtins())
    }

    #[test]
    fn fibonacci_shape() {
        let p = lower(FIB).unwrap();
        let f = &p.functions[0];
        assert_eq!(f.blocks.len(), 3, "{p}");
        assert!(matches!(f.blocks[0].terminator, Terminator::Branch { if_true: 1, if_false: 2, .. }));
        assert_eq!(f.blocks[2].ops.iter().filter(|op| matches!(op, Op::Call { .. })).count(), 2);
        assert_eq!(validate_callgraph(&p, &KernelRegistry::with_builtins()), vec![]);
    }

    #[test]
    fn straight_line_is_one_block() {
        let p = lower("def f(x, y) { z = x * y + 1.0; return sin(z); }").unwrap();
        assert_eq!(p.functions[0].blocks.len(), 1);
        assert_eq!(p.functions[0].blocks[0].terminator, Terminator::Return);
    }

    #[test]
    fn while_has_header_body_exit() {
        let p = lower("def count(n) { while (0 < n) { n = n - 1; } return n; }").unwrap();
        assert_eq!(p.functions[0].blocks.len(), 4, "{p}");
        assert_eq!(validate_callgraph(&p, &KernelRegistry::with_builtins()), vec![]);
    }

    #[test]
    fn use_before_assignment() {
        let e = lower("def f(c) { if (c) { y = 1; } return y; }").unwrap_err();
        assert!(e.message.contains("before assignment"));
        assert_eq!(e.pos.line, 1);
        assert!(lower("def f(c) { if (c) { y = 1; } else { y = 2; } return y; }").is_ok());
        assert!(lower("def f(n) { while (n < 3) { y = 1; n = n + 1; } return y; }").is_err());
    }

    #[test]
    fn unknown_function_and_arity() {
        assert!(lower("def f(x) { return g(x); }").unwrap_err().message.contains("unknown function"));
        assert!(lower("def f(x) { return f(x, x); }").unwrap_err().message.contains("takes 1"));
        assert!(lower("def f(x) { return sin(x, x); }").unwrap_err().message.contains("takes 1"));
    }

    #[test]
    fn missing_return() {
        assert!(lower("def f(x) { y = x; }").is_err());
    }

    #[test]
    fn short_circuit_lowers_to_branch() {
        let p = lower("def f(a, b) { if (a and b) { return 1; } return 2; }").unwrap();
        let branches = p.functions[0].blocks.iter().filter(|b| matches!(b.terminator, Terminator::Branch { .. })).count();
        assert_eq!(branches, 2, "{p}");
        assert_eq!(validate_callgraph(&p, &KernelRegistry::with_builtins()), vec![]);
    }
}
