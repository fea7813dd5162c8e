use std::collections::BTreeSet;
use std::fmt;

use super::kinds::{infer_callgraph, infer_flat};
use super::{CallGraphProgram, FlatOp, FlatProgram, FlatTerminator, Op, Operand, Terminator, Var};
use crate::runtime::KernelRegistry;

/// Where a diagnostic points. Flat programs have no function.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub function: Option<String>,
    pub block: Option<usize>,
    pub op: Option<usize>,
}

impl Location {
    pub fn program() -> Self {
        Location::default()
    }

    pub fn function(name: &str) -> Self {
        Location { function: Some(name.to_string()), ..Default::default() }
    }

    pub fn op(name: &str, block: usize, op: usize) -> Self {
        Location { function: Some(name.to_string()), block: Some(block), op: Some(op) }
    }

    pub fn terminator(name: &str, block: usize) -> Self {
        Location { function: Some(name.to_string()), block: Some(block), op: None }
    }

    pub fn flat_op(block: usize, op: usize) -> Self {
        Location { function: None, block: Some(block), op: Some(op) }
    }

    pub fn flat_block(block: usize) -> Self {
        Location { function: None, block: Some(block), op: None }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(func) = &self.function {
            parts.push(format!("function `{func}`"));
        }
        if let Some(b) = self.block {
            parts.push(format!("block {b}"));
        }
        match (self.block, self.op) {
            (_, Some(o)) => parts.push(format!("op {o}")),
            (Some(_), None) => parts.push("terminator".to_string()),
            _ => {}
        }
        if parts.is_empty() {
            f.write_str("program")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: Location,
    pub message: String,
}

impl Diagnostic {
    pub fn new(location: Location, message: impl Into<String>) -> Self {
        Diagnostic { location, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn check_prim(registry: &KernelRegistry, prim: &str, nargs: usize, loc: &Location, out: &mut Vec<Diagnostic>) {
    match registry.get(prim) {
        None => out.push(Diagnostic::new(loc.clone(), format!("unknown primitive `{prim}`"))),
        Some(k) if k.arity() != nargs => out.push(Diagnostic::new(
            loc.clone(),
            format!("primitive `{prim}` takes {} inputs, given {nargs}", k.arity()),
        )),
        Some(_) => {}
    }
}

/// Forward must-assigned analysis. `succ` gives successor blocks; `writes`
/// gives the variables a block assigns. Returns the incoming set of each
/// reachable block; unreachable blocks get `None`.
fn must_assigned(
    nblocks: usize,
    entry: usize,
    initial: BTreeSet<Var>,
    succ: impl Fn(usize) -> Vec<usize>,
    writes: impl Fn(usize) -> Vec<Var>,
) -> Vec<Option<BTreeSet<Var>>> {
    let mut ins: Vec<Option<BTreeSet<Var>>> = vec![None; nblocks];
    if entry >= nblocks {
        return ins;
    }
    ins[entry] = Some(initial);
    let mut work = vec![entry];
    while let Some(b) = work.pop() {
        let mut set = ins[b].clone().expect("queued block has an in-set");
        set.extend(writes(b));
        for s in succ(b) {
            if s >= nblocks {
                continue;
            }
            let next = match &ins[s] {
                None => set.clone(),
                Some(old) => old.intersection(&set).cloned().collect(),
            };
            if ins[s].as_ref() != Some(&next) {
                ins[s] = Some(next);
                work.push(s);
            }
        }
    }
    ins
}

/// Check every call-graph invariant; an empty result means the program is
/// well formed against `registry`.
pub fn validate_callgraph(prog: &CallGraphProgram, registry: &KernelRegistry) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if prog.entry >= prog.functions.len() {
        diags.push(Diagnostic::new(Location::program(), format!("entry out of range: {}", prog.entry)));
    }
    let mut names = BTreeSet::new();
    for f in &prog.functions {
        if !names.insert(f.name.as_str()) {
            diags.push(Diagnostic::new(Location::function(&f.name), "duplicate function name"));
        }
    }
    for f in &prog.functions {
        let n = f.blocks.len();
        if n == 0 {
            diags.push(Diagnostic::new(Location::function(&f.name), "function has no blocks"));
            continue;
        }
        let mut params = BTreeSet::new();
        for p in &f.params {
            if !params.insert(p) {
                diags.push(Diagnostic::new(Location::function(&f.name), format!("duplicate parameter `{p}`")));
            }
        }
        for (bi, b) in f.blocks.iter().enumerate() {
            for (oi, op) in b.ops.iter().enumerate() {
                let loc = Location::op(&f.name, bi, oi);
                match op {
                    Op::Primitive { prim, args, .. } => check_prim(registry, prim.as_str(), args.len(), &loc, &mut diags),
                    Op::Call { callee, args, .. } => match prog.functions.get(*callee) {
                        None => diags.push(Diagnostic::new(loc, format!("callee out of range: {callee}"))),
                        Some(g) if g.params.len() != args.len() => diags.push(Diagnostic::new(
                            loc,
                            format!("`{}` takes {} arguments, given {}", g.name, g.params.len(), args.len()),
                        )),
                        Some(_) => {}
                    },
                }
            }
            for t in b.terminator.successors() {
                if t >= n {
                    diags.push(Diagnostic::new(Location::terminator(&f.name, bi), format!("target out of range: {t}")));
                }
            }
        }

        let ins = must_assigned(
            n,
            0,
            f.params.iter().cloned().collect(),
            |b| f.blocks[b].terminator.successors(),
            |b| f.blocks[b].ops.iter().map(|op| op.out().clone()).collect(),
        );
        for (bi, b) in f.blocks.iter().enumerate() {
            let Some(mut set) = ins[bi].clone() else { continue };
            for (oi, op) in b.ops.iter().enumerate() {
                for a in op.args() {
                    if let Operand::Var(v) = a {
                        if !set.contains(v) {
                            diags.push(Diagnostic::new(
                                Location::op(&f.name, bi, oi),
                                format!("`{v}` may be used before assignment"),
                            ));
                        }
                    }
                }
                set.insert(op.out().clone());
            }
            match &b.terminator {
                Terminator::Branch { cond, .. } if !set.contains(cond) => diags.push(Diagnostic::new(
                    Location::terminator(&f.name, bi),
                    format!("`{cond}` may be used before assignment"),
                )),
                Terminator::Return if !set.contains(&f.output) => diags.push(Diagnostic::new(
                    Location::terminator(&f.name, bi),
                    format!("output `{}` may be unassigned at return", f.output),
                )),
                _ => {}
            }
        }
    }
    if diags.is_empty() {
        diags.extend(infer_callgraph(prog, registry, None).1);
    }
    diags
}

/// Check every flat-program invariant against `registry`.
///
/// Beyond index ranges, every `Pop` must target a variable that some `Push`
/// creates frames for.
pub fn validate_flat(prog: &FlatProgram, registry: &KernelRegistry) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let n = prog.blocks.len();
    if prog.entry >= n {
        diags.push(Diagnostic::new(Location::program(), format!("entry out of range: {}", prog.entry)));
    }
    let pushed: BTreeSet<&Var> = prog
        .blocks
        .iter()
        .flat_map(|b| &b.ops)
        .filter_map(|op| match op {
            FlatOp::Push { out, .. } => Some(out),
            _ => None,
        })
        .chain(&prog.inputs)
        .collect();
    for (bi, b) in prog.blocks.iter().enumerate() {
        for (oi, op) in b.ops.iter().enumerate() {
            let loc = Location::flat_op(bi, oi);
            match op {
                FlatOp::Push { prim, args, .. } | FlatOp::Update { prim, args, .. } => {
                    check_prim(registry, prim.as_str(), args.len(), &loc, &mut diags)
                }
                FlatOp::Pop(v) => {
                    if !pushed.contains(v) {
                        diags.push(Diagnostic::new(loc, format!("pop of `{v}`, which is never pushed")));
                    }
                }
            }
        }
        let targets: Vec<usize> = match &b.terminator {
            FlatTerminator::Jump(t) => vec![*t],
            FlatTerminator::Branch { if_true, if_false, .. } => vec![*if_true, *if_false],
            FlatTerminator::PushJump { jump_to, return_to } => vec![*jump_to, *return_to],
            FlatTerminator::Return => vec![],
        };
        for t in targets {
            if t >= n {
                diags.push(Diagnostic::new(Location::flat_block(bi), format!("target out of range: {t}")));
            }
        }
    }
    if diags.is_empty() {
        diags.extend(infer_flat(prog, registry, None).1);
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::super::{parse_callgraph, parse_flat};
    use super::*;

    fn reg() -> KernelRegistry {
        KernelRegistry::with_builtins()
    }

    #[test]
    fn minimal_program_is_valid() {
        let p = parse_callgraph("program entry f\nfunction f(x) -> y\nblock 0:\n  y = prim id x\n  return\n").unwrap();
        assert_eq!(validate_callgraph(&p, &reg()), vec![]);
    }

    #[test]
    fn output_may_be_a_parameter() {
        let p = parse_callgraph("program entry f\nfunction f(x) -> x\nblock 0:\n  return\n").unwrap();
        assert_eq!(validate_callgraph(&p, &reg()), vec![]);
    }

    #[test]
    fn jump_out_of_range() {
        let p = parse_callgraph("program entry f\nfunction f(x) -> x\nblock 0:\n  jump 5\nblock 1:\n  return\n").unwrap();
        let d = validate_callgraph(&p, &reg());
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("target out of range"));
        assert_eq!(d[0].location, Location::terminator("f", 0));
    }

    #[test]
    fn use_before_assignment_on_one_path() {
        let text = "program entry f\nfunction f(c) -> y\nblock 0:\n  branch c 1 2\nblock 1:\n  y = prim id 1\n  jump 2\nblock 2:\n  return\n";
        let d = validate_callgraph(&parse_callgraph(text).unwrap(), &reg());
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("unassigned"));
    }

    #[test]
    fn non_bool_branch_condition() {
        let text = "program entry f\nfunction f(x) -> x\nblock 0:\n  c = prim add 1 2\n  branch c 0 0\n";
        let d = validate_callgraph(&parse_callgraph(text).unwrap(), &reg());
        assert!(d.iter().any(|d| d.message.contains("expected bool")), "{d:?}");
    }

    #[test]
    fn arity_and_unknown_primitive() {
        let text = "program entry f\nfunction f(x) -> y\nblock 0:\n  y = prim add x\n  z = prim frobnicate x\n  return\n";
        let d = validate_callgraph(&parse_callgraph(text).unwrap(), &reg());
        assert_eq!(d.len(), 2, "{d:?}");
    }

    #[test]
    fn empty_flat_program() {
        let p = FlatProgram { inputs: vec![], output: Var::new("y"), blocks: vec![], entry: 0 };
        let d = validate_flat(&p, &reg());
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("entry out of range"));
    }

    #[test]
    fn pop_of_unpushed_variable() {
        let p = parse_flat("flat inputs(a) output a entry 0\nblock 0:\n  pop q\n  return\n").unwrap();
        let d = validate_flat(&p, &reg());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].location, Location::flat_op(0, 0));
    }

    #[test]
    fn pushjump_target_out_of_range() {
        let p = parse_flat("flat inputs(a) output a entry 0\nblock 0:\n  pushjump 0 9\n").unwrap();
        assert!(validate_flat(&p, &reg())[0].message.contains("target out of range"));
    }
}
