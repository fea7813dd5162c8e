use std::collections::BTreeSet;

use super::{BlockOrigin, LoweringMap, VarInfo};
use crate::ir::{
    CallGraphProgram, FlatBlock, FlatOp, FlatProgram, FlatTerminator, Function, Op, Operand, PrimitiveId, SegmentLayout,
    Terminator, Var,
};

pub(crate) fn flat_name(f: &Function, v: &Var) -> Var {
    Var(format!("{}.{}", f.name, v))
}

/// Variables of `f` live immediately after each op, per block.
fn live_after_ops(f: &Function) -> Vec<Vec<BTreeSet<Var>>> {
    let n = f.blocks.len();
    let term_uses = |b: usize| -> Vec<Var> {
        match &f.blocks[b].terminator {
            Terminator::Branch { cond, .. } => vec![cond.clone()],
            Terminator::Return => vec![f.output.clone()],
            Terminator::Jump(_) => vec![],
        }
    };
    let mut live_in: Vec<BTreeSet<Var>> = vec![BTreeSet::new(); n];
    let mut changed = true;
    while changed {
        changed = false;
        for b in (0..n).rev() {
            let mut live: BTreeSet<Var> = f.blocks[b].terminator.successors().iter().flat_map(|&s| live_in[s].clone()).collect();
            live.extend(term_uses(b));
            for op in f.blocks[b].ops.iter().rev() {
                live.remove(op.out());
                live.extend(op.args().iter().filter_map(Operand::var).cloned());
            }
            if live != live_in[b] {
                live_in[b] = live;
                changed = true;
            }
        }
    }
    (0..n)
        .map(|b| {
            let mut live: BTreeSet<Var> = f.blocks[b].terminator.successors().iter().flat_map(|&s| live_in[s].clone()).collect();
            live.extend(term_uses(b));
            let mut after = vec![BTreeSet::new(); f.blocks[b].ops.len()];
            for (i, op) in f.blocks[b].ops.iter().enumerate().rev() {
                after[i] = live.clone();
                live.remove(op.out());
                live.extend(op.args().iter().filter_map(Operand::var).cloned());
            }
            after
        })
        .collect()
}

struct Emitter<'a> {
    ops: Vec<FlatOp>,
    fresh: &'a mut usize,
    func: &'a Function,
}

impl Emitter<'_> {
    /// `out = prim(args)` as a pop of the old frame and a push of the new one.
    fn assign(&mut self, out: Var, prim: &str, args: Vec<Operand>) {
        let reads_out = args.iter().any(|a| a.var() == Some(&out));
        if reads_out {
            let tmp = Var(format!("{}.$s{}", self.func.name, *self.fresh));
            *self.fresh += 1;
            self.ops.push(FlatOp::Pop(tmp.clone()));
            self.ops.push(FlatOp::Push { out: tmp.clone(), prim: PrimitiveId::new(prim), args });
            self.ops.push(FlatOp::Pop(out.clone()));
            self.ops.push(FlatOp::Push { out, prim: PrimitiveId::new("id"), args: vec![Operand::Var(tmp)] });
        } else {
            self.ops.push(FlatOp::Pop(out.clone()));
            self.ops.push(FlatOp::Push { out, prim: PrimitiveId::new(prim), args });
        }
    }
}

/// Merge all functions into one block list. Every call-graph block becomes
/// one flat block per segment; calls become `PushJump` with caller-saves
/// around them.
pub(crate) fn flatten(prog: &CallGraphProgram, caller_saves: bool) -> (FlatProgram, LoweringMap) {
    let layout = SegmentLayout::new(prog);
    let mut blocks: Vec<Option<FlatBlock>> = vec![None; layout.len()];
    let mut origins: Vec<Option<BlockOrigin>> = vec![None; layout.len()];
    let mut fresh = 0usize;

    for (fi, f) in prog.functions.iter().enumerate() {
        let name = |v: &Var| flat_name(f, v);
        let rename = |o: &Operand| match o {
            Operand::Var(v) => Operand::Var(name(v)),
            Operand::Lit(l) => Operand::Lit(*l),
        };
        let live_after = live_after_ops(f);
        let all_vars = f.variables();
        for (bi, b) in f.blocks.iter().enumerate() {
            let mut seg = 0;
            let mut em = Emitter { ops: Vec::new(), fresh: &mut fresh, func: f };
            for (oi, op) in b.ops.iter().enumerate() {
                match op {
                    Op::Primitive { out, prim, args } => {
                        em.assign(name(out), prim.as_str(), args.iter().map(rename).collect());
                    }
                    Op::Call { out, callee, args } => {
                        let g = &prog.functions[*callee];
                        let param_names: Vec<Var> = g.params.iter().map(|p| flat_name(g, p)).collect();
                        let mut args: Vec<Operand> = args.iter().map(rename).collect();
                        let conflict = args.iter().any(|a| a.var().is_some_and(|v| param_names.contains(v)));
                        if conflict {
                            for a in args.iter_mut() {
                                if a.var().is_some() {
                                    let tmp = Var(format!("{}.$a{}", f.name, *em.fresh));
                                    *em.fresh += 1;
                                    em.assign(tmp.clone(), "id", vec![a.clone()]);
                                    *a = Operand::Var(tmp);
                                }
                            }
                        }
                        let saved: Vec<Var> = if caller_saves {
                            live_after[bi][oi].iter().filter(|v| *v != out).map(&name).collect()
                        } else {
                            all_vars.iter().filter(|v| *v != out).map(&name).collect()
                        };
                        for v in &saved {
                            em.ops.push(FlatOp::Push { out: v.clone(), prim: PrimitiveId::new("id"), args: vec![Operand::Var(v.clone())] });
                        }
                        for (p, a) in param_names.iter().zip(args) {
                            em.assign(p.clone(), "id", vec![a]);
                        }
                        let here = layout.index(fi, bi, seg);
                        blocks[here] = Some(FlatBlock {
                            ops: std::mem::take(&mut em.ops),
                            terminator: FlatTerminator::PushJump { jump_to: layout.entry(*callee), return_to: here + 1 },
                        });
                        origins[here] = Some(BlockOrigin { function: f.name.clone(), block: bi, segment: seg });
                        seg += 1;
                        em.assign(name(out), "id", vec![Operand::Var(flat_name(g, &g.output))]);
                        for v in saved.iter().rev() {
                            em.ops.push(FlatOp::Pop(v.clone()));
                        }
                    }
                }
            }
            let terminator = match &b.terminator {
                Terminator::Jump(j) => FlatTerminator::Jump(layout.index(fi, *j, 0)),
                Terminator::Branch { cond, if_true, if_false } => FlatTerminator::Branch {
                    cond: name(cond),
                    if_true: layout.index(fi, *if_true, 0),
                    if_false: layout.index(fi, *if_false, 0),
                },
                Terminator::Return => FlatTerminator::Return,
            };
            let here = layout.index(fi, bi, seg);
            blocks[here] = Some(FlatBlock { ops: em.ops, terminator });
            origins[here] = Some(BlockOrigin { function: f.name.clone(), block: bi, segment: seg });
        }
    }

    let entry_fn = prog.entry_function();
    let flat = FlatProgram {
        inputs: entry_fn.params.iter().map(|p| flat_name(entry_fn, p)).collect(),
        output: flat_name(entry_fn, &entry_fn.output),
        blocks: blocks.into_iter().map(|b| b.expect("every segment emitted")).collect(),
        entry: layout.entry(prog.entry),
    };
    let mut vars = std::collections::BTreeMap::new();
    for f in &prog.functions {
        for v in f.variables() {
            vars.insert(flat_name(f, &v), VarInfo { function: f.name.clone(), source: v.0.clone() });
        }
    }
    for v in flat.variables() {
        vars.entry(v.clone()).or_insert_with(|| {
            let (func, rest) = v.0.split_once('.').unwrap_or(("", &v.0));
            VarInfo { function: func.to_string(), source: rest.to_string() }
        });
    }
    let map = LoweringMap { blocks: origins.into_iter().map(|o| o.expect("every segment has an origin")).collect(), vars };
    (flat, map)
}
