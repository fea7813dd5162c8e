//! Per-variable kind inference by fixpoint over assignments.

use std::collections::BTreeMap;

use super::{CallGraphProgram, Diagnostic, FlatOp, FlatProgram, FlatTerminator, Location, Op, Operand, Terminator, Var};
use crate::runtime::{ArgInfo, Kind, KernelRegistry};

pub type KindMap = BTreeMap<Var, Kind>;

fn arg_infos(kinds: &KindMap, args: &[Operand]) -> Option<Vec<ArgInfo>> {
    args.iter()
        .map(|a| match a {
            Operand::Var(v) => kinds.get(v).map(|&k| ArgInfo::of_kind(k)),
            Operand::Lit(l) => Some(ArgInfo { kind: l.kind(), literal: Some(*l) }),
        })
        .collect()
}

/// Record `kind` for `var`; returns whether the map changed. Conflicts keep
/// the first kind and are reported by the final checking pass.
fn set(kinds: &mut KindMap, var: &Var, kind: Kind) -> bool {
    if kinds.contains_key(var) {
        false
    } else {
        kinds.insert(var.clone(), kind);
        true
    }
}

/// Kinds of every variable in every function.
///
/// `entry_inputs` seeds the entry function's parameters; without it, only
/// kinds derivable from literals and call structure are found.
pub fn infer_callgraph(
    prog: &CallGraphProgram,
    registry: &KernelRegistry,
    entry_inputs: Option<&[Kind]>,
) -> (Vec<KindMap>, Vec<Diagnostic>) {
    let mut maps: Vec<KindMap> = vec![KindMap::new(); prog.functions.len()];
    if let (Some(inputs), Some(f)) = (entry_inputs, prog.functions.get(prog.entry)) {
        for (p, k) in f.params.iter().zip(inputs) {
            set(&mut maps[prog.entry], p, *k);
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        for (fi, f) in prog.functions.iter().enumerate() {
            for b in &f.blocks {
                for op in &b.ops {
                    match op {
                        Op::Primitive { out, prim, args } => {
                            let Some(kernel) = registry.get(prim.as_str()) else { continue };
                            let Some(infos) = arg_infos(&maps[fi], args) else { continue };
                            if let Ok(k) = kernel.output_kind(&infos) {
                                changed |= set(&mut maps[fi], out, k);
                            }
                        }
                        Op::Call { out, callee, args } => {
                            let Some(g) = prog.functions.get(*callee) else { continue };
                            for (p, a) in g.params.iter().zip(args) {
                                let k = match a {
                                    Operand::Var(v) => maps[fi].get(v).copied(),
                                    Operand::Lit(l) => Some(l.kind()),
                                };
                                if let Some(k) = k {
                                    changed |= set(&mut maps[*callee], p, k);
                                }
                            }
                            if let Some(&k) = maps[*callee].get(&g.output) {
                                changed |= set(&mut maps[fi], out, k);
                            }
                        }
                    }
                }
            }
        }
    }

    let mut diags = Vec::new();
    for (fi, f) in prog.functions.iter().enumerate() {
        let kinds = &maps[fi];
        for (bi, b) in f.blocks.iter().enumerate() {
            for (oi, op) in b.ops.iter().enumerate() {
                let loc = Location::op(&f.name, bi, oi);
                let produced = match op {
                    Op::Primitive { prim, args, .. } => {
                        let (Some(kernel), Some(infos)) = (registry.get(prim.as_str()), arg_infos(kinds, args)) else {
                            continue;
                        };
                        match kernel.output_kind(&infos) {
                            Ok(k) => Some(k),
                            Err(e) => {
                                diags.push(Diagnostic::new(loc, e.to_string()));
                                continue;
                            }
                        }
                    }
                    Op::Call { callee, args, .. } => {
                        let Some(g) = prog.functions.get(*callee) else { continue };
                        for (p, a) in g.params.iter().zip(args) {
                            let have = match a {
                                Operand::Var(v) => kinds.get(v).copied(),
                                Operand::Lit(l) => Some(l.kind()),
                            };
                            if let (Some(have), Some(&want)) = (have, maps[*callee].get(p)) {
                                if have != want {
                                    diags.push(Diagnostic::new(
                                        loc.clone(),
                                        format!("argument for `{p}` of `{}` is {have}, elsewhere {want}", g.name),
                                    ));
                                }
                            }
                        }
                        maps[*callee].get(&g.output).copied()
                    }
                };
                if let (Some(k), Some(&declared)) = (produced, kinds.get(op.out())) {
                    if k != declared {
                        diags.push(Diagnostic::new(
                            loc,
                            format!("`{}` assigned {k} here but {declared} elsewhere", op.out()),
                        ));
                    }
                }
            }
            if let Terminator::Branch { cond, .. } = &b.terminator {
                if let Some(&k) = kinds.get(cond) {
                    if k != Kind::Bool {
                        diags.push(Diagnostic::new(
                            Location::terminator(&f.name, bi),
                            format!("branch condition `{cond}` has kind {k}, expected bool"),
                        ));
                    }
                }
            }
        }
    }
    (maps, diags)
}

/// Kinds of every flat variable, seeded with the program input kinds.
pub fn infer_flat(
    prog: &FlatProgram,
    registry: &KernelRegistry,
    inputs: Option<&[Kind]>,
) -> (KindMap, Vec<Diagnostic>) {
    let mut kinds = KindMap::new();
    if let Some(inputs) = inputs {
        for (v, k) in prog.inputs.iter().zip(inputs) {
            set(&mut kinds, v, *k);
        }
    }
    let assignments = || {
        prog.blocks.iter().enumerate().flat_map(|(bi, b)| {
            b.ops.iter().enumerate().filter_map(move |(oi, op)| match op {
                FlatOp::Push { out, prim, args } | FlatOp::Update { out, prim, args } => Some((bi, oi, out, prim, args)),
                FlatOp::Pop(_) => None,
            })
        })
    };
    let mut changed = true;
    while changed {
        changed = false;
        for (_, _, out, prim, args) in assignments() {
            let Some(kernel) = registry.get(prim.as_str()) else { continue };
            let Some(infos) = arg_infos(&kinds, args) else { continue };
            if let Ok(k) = kernel.output_kind(&infos) {
                changed |= set(&mut kinds, out, k);
            }
        }
    }
    let mut diags = Vec::new();
    for (bi, oi, out, prim, args) in assignments() {
        let (Some(kernel), Some(infos)) = (registry.get(prim.as_str()), arg_infos(&kinds, args)) else {
            continue;
        };
        match kernel.output_kind(&infos) {
            Ok(k) if kinds.get(out) != Some(&k) => diags.push(Diagnostic::new(
                Location::flat_op(bi, oi),
                format!("`{out}` assigned {k} here but {} elsewhere", kinds[out]),
            )),
            Ok(_) => {}
            Err(e) => diags.push(Diagnostic::new(Location::flat_op(bi, oi), e.to_string())),
        }
    }
    for (bi, b) in prog.blocks.iter().enumerate() {
        if let FlatTerminator::Branch { cond, .. } = &b.terminator {
            if let Some(&k) = kinds.get(cond) {
                if k != Kind::Bool {
                    diags.push(Diagnostic::new(
                        Location::flat_block(bi),
                        format!("branch condition `{cond}` has kind {k}, expected bool"),
                    ));
                }
            }
        }
    }
    (kinds, diags)
}
