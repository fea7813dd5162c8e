//! The two IR languages.
//!
//! [`CallGraphProgram`] is a list of functions, each a list of basic blocks
//! whose ops are primitives or calls. [`FlatProgram`] is what the compiler
//! produces from it: one merged block list, where calls have become explicit
//! stack manipulation and `PushJump`/`Return` terminators.

use std::fmt;

use serde::{Deserialize, Serialize};

pub use crate::runtime::Literal;

pub mod kinds;
mod text;
mod validate;

pub(crate) use text::parse_literal;
pub use text::{parse_callgraph, parse_flat, parse_ir, IrProgram, ParseError};
pub use validate::{validate_callgraph, validate_flat, Diagnostic, Location};

/// A variable name. Per-function in call-graph programs; in flat programs it
/// carries a `function.` prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var(pub String);

impl Var {
    pub fn new(name: impl Into<String>) -> Self {
        Var(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var(s.to_string())
    }
}

/// Name of a kernel in the [`KernelRegistry`](crate::runtime::KernelRegistry).
/// Arity is checked against the registered kernel during validation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrimitiveId(pub String);

impl PrimitiveId {
    pub fn new(name: impl Into<String>) -> Self {
        PrimitiveId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PrimitiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Var(Var),
    Lit(Literal),
}

impl Operand {
    pub fn var(&self) -> Option<&Var> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Lit(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => v.fmt(f),
            Operand::Lit(l) => l.fmt(f),
        }
    }
}

impl From<Var> for Operand {
    fn from(v: Var) -> Self {
        Operand::Var(v)
    }
}

impl From<Literal> for Operand {
    fn from(l: Literal) -> Self {
        Operand::Lit(l)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Primitive { out: Var, prim: PrimitiveId, args: Vec<Operand> },
    Call { out: Var, callee: usize, args: Vec<Operand> },
}

impl Op {
    pub fn out(&self) -> &Var {
        match self {
            Op::Primitive { out, .. } | Op::Call { out, .. } => out,
        }
    }

    pub fn args(&self) -> &[Operand] {
        match self {
            Op::Primitive { args, .. } | Op::Call { args, .. } => args,
        }
    }
}

/// `Branch` goes to `if_true` when the condition holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    Jump(usize),
    Branch { cond: Var, if_true: usize, if_false: usize },
    Return,
}

impl Terminator {
    pub fn successors(&self) -> Vec<usize> {
        match self {
            Terminator::Jump(t) => vec![*t],
            Terminator::Branch { if_true, if_false, .. } => vec![*if_true, *if_false],
            Terminator::Return => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub ops: Vec<Op>,
    pub terminator: Terminator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Var>,
    pub blocks: Vec<Block>,
    pub output: Var,
}

impl Function {
    /// Every variable mentioned in the function, params first, in first-seen order.
    pub fn variables(&self) -> Vec<Var> {
        let mut seen: Vec<Var> = Vec::new();
        let mut add = |v: &Var| {
            if !seen.contains(v) {
                seen.push(v.clone());
            }
        };
        for p in &self.params {
            add(p);
        }
        for b in &self.blocks {
            for op in &b.ops {
                for a in op.args() {
                    if let Operand::Var(v) = a {
                        add(v);
                    }
                }
                add(op.out());
            }
            if let Terminator::Branch { cond, .. } = &b.terminator {
                add(cond);
            }
        }
        add(&self.output);
        seen
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraphProgram {
    pub functions: Vec<Function>,
    pub entry: usize,
}

impl CallGraphProgram {
    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn entry_function(&self) -> &Function {
        &self.functions[self.entry]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlatOp {
    Push { out: Var, prim: PrimitiveId, args: Vec<Operand> },
    Pop(Var),
    Update { out: Var, prim: PrimitiveId, args: Vec<Operand> },
}

impl FlatOp {
    /// Variables read by the op. A `Pop` reads nothing.
    pub fn reads(&self) -> impl Iterator<Item = &Var> {
        let args: &[Operand] = match self {
            FlatOp::Push { args, .. } | FlatOp::Update { args, .. } => args,
            FlatOp::Pop(_) => &[],
        };
        args.iter().filter_map(Operand::var)
    }

    /// The variable whose storage the op changes.
    pub fn target(&self) -> &Var {
        match self {
            FlatOp::Push { out, .. } | FlatOp::Update { out, .. } => out,
            FlatOp::Pop(v) => v,
        }
    }
}

/// `PushJump` jumps to `jump_to` after arranging for the matching `Return`
/// to resume at `return_to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlatTerminator {
    Jump(usize),
    Branch { cond: Var, if_true: usize, if_false: usize },
    PushJump { jump_to: usize, return_to: usize },
    Return,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatBlock {
    pub ops: Vec<FlatOp>,
    pub terminator: FlatTerminator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatProgram {
    pub inputs: Vec<Var>,
    pub output: Var,
    pub blocks: Vec<FlatBlock>,
    pub entry: usize,
}

impl FlatProgram {
    /// The halt program counter: one past the last block.
    pub fn halt(&self) -> usize {
        self.blocks.len()
    }

    /// Every variable mentioned, inputs first, in first-seen order.
    pub fn variables(&self) -> Vec<Var> {
        let mut seen: Vec<Var> = Vec::new();
        let mut add = |v: &Var| {
            if !seen.contains(v) {
                seen.push(v.clone());
            }
        };
        for v in &self.inputs {
            add(v);
        }
        for b in &self.blocks {
            for op in &b.ops {
                for r in op.reads() {
                    add(r);
                }
                add(op.target());
            }
            if let FlatTerminator::Branch { cond, .. } = &b.terminator {
                add(cond);
            }
        }
        add(&self.output);
        seen
    }
}

/// Numbering of block segments shared by the flattener and the local
/// engine's traces. Each call-graph block is cut after every `Call`; the
/// pieces of all functions are numbered consecutively in program order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLayout {
    starts: Vec<Vec<usize>>,
    total: usize,
}

impl SegmentLayout {
    pub fn new(prog: &CallGraphProgram) -> Self {
        let mut next = 0;
        let starts = prog
            .functions
            .iter()
            .map(|f| {
                f.blocks
                    .iter()
                    .map(|b| {
                        let start = next;
                        next += 1 + b.ops.iter().filter(|op| matches!(op, Op::Call { .. })).count();
                        start
                    })
                    .collect()
            })
            .collect();
        SegmentLayout { starts, total: next }
    }

    /// Flat index of segment `segment` of block `block` in function `func`.
    pub fn index(&self, func: usize, block: usize, segment: usize) -> usize {
        self.starts[func][block] + segment
    }

    pub fn entry(&self, func: usize) -> usize {
        self.starts[func][0]
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}
