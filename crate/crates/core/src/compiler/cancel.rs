use crate::ir::{FlatOp, FlatProgram, FlatTerminator};

/// A `Pop x` whose next mention of `x` is a `Push x` that does not read `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pair {
    pop_block: usize,
    pop: usize,
    push_block: usize,
    push: usize,
}

fn predecessor_counts(prog: &FlatProgram) -> Vec<usize> {
    let mut preds = vec![0; prog.blocks.len()];
    let mut add = |t: usize| {
        if let Some(p) = preds.get_mut(t) {
            *p += 1;
        }
    };
    add(prog.entry);
    for b in &prog.blocks {
        match &b.terminator {
            FlatTerminator::Jump(j) => add(*j),
            FlatTerminator::Branch { if_true, if_false, .. } => {
                add(*if_true);
                add(*if_false);
            }
            FlatTerminator::PushJump { jump_to, return_to } => {
                add(*jump_to);
                add(*return_to);
            }
            FlatTerminator::Return => {}
        }
    }
    preds
}

/// Index of the first op from `start` mentioning `x`, and whether it is a
/// cancellable push.
fn next_mention(ops: &[FlatOp], start: usize, x: &crate::ir::Var) -> Option<(usize, bool)> {
    ops.iter().enumerate().skip(start).find_map(|(i, op)| {
        let reads = op.reads().any(|r| r == x);
        if reads || op.target() == x {
            Some((i, matches!(op, FlatOp::Push { out, .. } if out == x) && !reads))
        } else {
            None
        }
    })
}

fn find_pair(prog: &FlatProgram) -> Option<Pair> {
    let preds = predecessor_counts(prog);
    let mut return_to = vec![false; prog.blocks.len()];
    for b in &prog.blocks {
        if let FlatTerminator::PushJump { return_to: r, .. } = b.terminator {
            if r < return_to.len() {
                return_to[r] = true;
            }
        }
    }
    for (bi, b) in prog.blocks.iter().enumerate() {
        for (i, op) in b.ops.iter().enumerate() {
            let FlatOp::Pop(x) = op else { continue };
            match next_mention(&b.ops, i + 1, x) {
                Some((j, true)) => return Some(Pair { pop_block: bi, pop: i, push_block: bi, push: j }),
                Some((_, false)) => continue,
                None => {}
            }
            let FlatTerminator::Jump(c) = b.terminator else { continue };
            if c == bi || c >= prog.blocks.len() || preds[c] != 1 || return_to[c] {
                continue;
            }
            if let Some((j, true)) = next_mention(&prog.blocks[c].ops, 0, x) {
                return Some(Pair { pop_block: bi, pop: i, push_block: c, push: j });
            }
        }
    }
    None
}

/// Number of `Pop`/`Push` pairs the cancellation pass would still rewrite.
pub fn cancellable_pairs(prog: &FlatProgram) -> usize {
    let mut p = prog.clone();
    let mut n = 0;
    while let Some(pair) = find_pair(&p) {
        apply(&mut p, pair);
        n += 1;
    }
    n
}

fn apply(prog: &mut FlatProgram, pair: Pair) {
    let push = &mut prog.blocks[pair.push_block].ops[pair.push];
    if let FlatOp::Push { out, prim, args } = std::mem::replace(push, FlatOp::Pop(crate::ir::Var::new(""))) {
        *push = FlatOp::Update { out, prim, args };
    }
    prog.blocks[pair.pop_block].ops.remove(pair.pop);
}

/// Rewrite `Pop x; ...; Push x = f(..)` into `...; Update x = f(..)` when
/// nothing in between mentions `x`, within a block or across a jump into a
/// block with no other predecessor. Returns the number of rewrites.
pub fn cancel_pop_push(prog: &mut FlatProgram) -> usize {
    let mut n = 0;
    while let Some(pair) = find_pair(prog) {
        apply(prog, pair);
        n += 1;
    }
    n
}

/// Deliberately wrong variant: also drops every remaining `Pop`. Only for
/// checking that differential testing catches a broken pass.
pub(crate) fn cancel_with_fault(prog: &mut FlatProgram) -> usize {
    let mut n = cancel_pop_push(prog);
    for b in &mut prog.blocks {
        let before = b.ops.len();
        b.ops.retain(|op| !matches!(op, FlatOp::Pop(_)));
        n += before - b.ops.len();
    }
    n
}
