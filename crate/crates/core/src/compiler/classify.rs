use std::collections::{BTreeMap, BTreeSet};

use super::VarClass;
use crate::ir::{FlatOp, FlatProgram, FlatTerminator, Var};

fn successors(t: &FlatTerminator) -> Vec<usize> {
    match t {
        FlatTerminator::Jump(j) => vec![*j],
        FlatTerminator::Branch { if_true, if_false, .. } => vec![*if_true, *if_false],
        FlatTerminator::PushJump { jump_to, return_to } => vec![*jump_to, *return_to],
        FlatTerminator::Return => vec![],
    }
}

/// Live-in and live-out sets per block. `Pop` neither reads nor defines.
pub fn liveness(prog: &FlatProgram) -> (Vec<BTreeSet<Var>>, Vec<BTreeSet<Var>>) {
    let n = prog.blocks.len();
    let mut live_in = vec![BTreeSet::new(); n];
    let mut live_out = vec![BTreeSet::new(); n];
    let mut changed = true;
    while changed {
        changed = false;
        for b in (0..n).rev() {
            let blk = &prog.blocks[b];
            let out: BTreeSet<Var> =
                successors(&blk.terminator).into_iter().filter(|&s| s < n).flat_map(|s| live_in[s].clone()).collect();
            let mut live = out.clone();
            if let FlatTerminator::Branch { cond, .. } = &blk.terminator {
                live.insert(cond.clone());
            }
            for op in blk.ops.iter().rev() {
                if matches!(op, FlatOp::Pop(_)) {
                    continue;
                }
                live.remove(op.target());
                live.extend(op.reads().cloned());
            }
            if live != live_in[b] || out != live_out[b] {
                live_in[b] = live;
                live_out[b] = out;
                changed = true;
            }
        }
    }
    (live_in, live_out)
}

/// Blocks reachable from `entry` without following calls.
fn region(prog: &FlatProgram, entry: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut work = vec![entry];
    while let Some(b) = work.pop() {
        if b >= prog.blocks.len() || !seen.insert(b) {
            continue;
        }
        match &prog.blocks[b].terminator {
            FlatTerminator::Jump(j) => work.push(*j),
            FlatTerminator::Branch { if_true, if_false, .. } => work.extend([*if_true, *if_false]),
            FlatTerminator::PushJump { return_to, .. } => work.push(*return_to),
            FlatTerminator::Return => {}
        }
    }
    seen
}

/// For every function entry, whether calling it can reach a recursive cycle.
fn reaches_cycle(prog: &FlatProgram) -> BTreeMap<usize, bool> {
    let mut entries: BTreeSet<usize> = BTreeSet::from([prog.entry]);
    for b in &prog.blocks {
        if let FlatTerminator::PushJump { jump_to, .. } = b.terminator {
            entries.insert(jump_to);
        }
    }
    let calls: BTreeMap<usize, BTreeSet<usize>> = entries
        .iter()
        .map(|&e| {
            let callees = region(prog, e)
                .into_iter()
                .filter_map(|b| match prog.blocks[b].terminator {
                    FlatTerminator::PushJump { jump_to, .. } => Some(jump_to),
                    _ => None,
                })
                .collect();
            (e, callees)
        })
        .collect();
    let reach = |from: usize| {
        let mut seen = BTreeSet::new();
        let mut work: Vec<usize> = calls[&from].iter().copied().collect();
        while let Some(e) = work.pop() {
            if seen.insert(e) {
                work.extend(calls[&e].iter().copied());
            }
        }
        seen
    };
    let reachable: BTreeMap<usize, BTreeSet<usize>> = entries.iter().map(|&e| (e, reach(e))).collect();
    let cyclic: BTreeSet<usize> = entries.iter().copied().filter(|e| reachable[e].contains(e)).collect();
    entries
        .iter()
        .map(|&e| (e, cyclic.contains(&e) || reachable[&e].iter().any(|r| cyclic.contains(r))))
        .collect()
}

/// Storage class of every variable of `prog`.
pub(crate) fn classify(prog: &FlatProgram, temporaries: bool, stack_elim: bool) -> BTreeMap<Var, VarClass> {
    let (live_in, live_out) = liveness(prog);
    let cycle = reaches_cycle(prog);
    let mut across_recursion = BTreeSet::new();
    for b in &prog.blocks {
        if let FlatTerminator::PushJump { jump_to, return_to } = b.terminator {
            if cycle.get(&jump_to).copied().unwrap_or(true) && return_to < live_in.len() {
                across_recursion.extend(live_in[return_to].iter().cloned());
            }
        }
    }
    let at_boundary: BTreeSet<&Var> = live_in.iter().chain(live_out.iter()).flatten().collect();
    prog.variables()
        .into_iter()
        .map(|v| {
            let class = if temporaries && !at_boundary.contains(&v) {
                VarClass::Temporary
            } else if across_recursion.contains(&v) || !stack_elim {
                VarClass::Stacked
            } else {
                VarClass::Registerized
            };
            (v, class)
        })
        .collect()
}
