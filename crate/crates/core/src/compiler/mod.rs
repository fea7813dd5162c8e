//! Lowering of call-graph programs to flat stack programs.
//!
//! The pipeline is: flatten (calls become caller-saves plus `PushJump`),
//! classify every variable's storage, then cancel adjacent `Pop`/`Push`
//! pairs into `Update`. Each stage can be dumped as text.
//!
//! Four passes can be switched off independently:
//!
//! | pass | effect when on |
//! |---|---|
//! | `caller-saves` | save only variables live after a call, not all of them |
//! | `temporaries` | variables never live across a block boundary get no stack |
//! | `stack-elim` | variables never live across a recursive call get no stack |
//! | `pop-push` | `Pop x ... Push x = e` becomes `Update x = e` |

use std::collections::BTreeMap;
use std::fmt;

use crate::ir::{validate_callgraph, CallGraphProgram, Diagnostic, FlatProgram, Var};
use crate::runtime::KernelRegistry;

mod cancel;
mod classify;
mod flatten;

pub use cancel::{cancel_pop_push, cancellable_pairs};
pub use classify::liveness;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub caller_saves: bool,
    pub temporaries: bool,
    pub stack_elim: bool,
    pub pop_push: bool,
    #[doc(hidden)]
    pub inject_cancel_fault: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { caller_saves: true, temporaries: true, stack_elim: true, pop_push: true, inject_cancel_fault: false }
    }
}

impl CompileOptions {
    pub const PASSES: [&'static str; 4] = ["caller-saves", "temporaries", "stack-elim", "pop-push"];

    pub fn all_off() -> Self {
        CompileOptions::from_mask(0)
    }

    /// Bit `i` enables pass `PASSES[i]`; `0..16` covers every subset.
    pub fn from_mask(mask: u8) -> Self {
        CompileOptions {
            caller_saves: mask & 1 != 0,
            temporaries: mask & 2 != 0,
            stack_elim: mask & 4 != 0,
            pop_push: mask & 8 != 0,
            inject_cancel_fault: false,
        }
    }

    pub fn mask(&self) -> u8 {
        self.caller_saves as u8 | (self.temporaries as u8) << 1 | (self.stack_elim as u8) << 2 | (self.pop_push as u8) << 3
    }

    /// Switch a pass off by name.
    pub fn disable(&mut self, pass: &str) -> Result<(), String> {
        match pass {
            "caller-saves" => self.caller_saves = false,
            "temporaries" => self.temporaries = false,
            "stack-elim" => self.stack_elim = false,
            "pop-push" => self.pop_push = false,
            _ => return Err(format!("unknown pass `{pass}` (expected one of {})", Self::PASSES.join(", "))),
        }
        Ok(())
    }
}

/// Where a variable lives at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VarClass {
    /// A per-lane stack of depth `D`.
    Stacked,
    /// One masked register; `Pop` is a no-op.
    Registerized,
    /// Never live across a block boundary.
    Temporary,
}

impl fmt::Display for VarClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarClass::Stacked => "stacked",
            VarClass::Registerized => "registerized",
            VarClass::Temporary => "temporary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOrigin {
    pub function: String,
    pub block: usize,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub function: String,
    pub source: String,
}

/// Source location of every flat block and variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoweringMap {
    pub blocks: Vec<BlockOrigin>,
    pub vars: BTreeMap<Var, VarInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub name: &'static str,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub flat: FlatProgram,
    pub classes: BTreeMap<Var, VarClass>,
    pub map: LoweringMap,
    pub stages: Vec<Stage>,
    pub options: CompileOptions,
    /// Pairs rewritten by the cancellation pass.
    pub cancelled: usize,
}

impl Compiled {
    pub fn class_of(&self, v: &str) -> Option<VarClass> {
        self.classes.get(&Var::new(v)).copied()
    }

    pub fn vars_in(&self, class: VarClass) -> Vec<&Var> {
        self.classes.iter().filter(|(_, c)| **c == class).map(|(v, _)| v).collect()
    }

    /// `var class` lines.
    pub fn class_table(&self) -> String {
        self.classes.iter().map(|(v, c)| format!("{v} {c}\n")).collect()
    }
}

/// Storage classes for a flat program that did not come from [`compile`].
pub fn classify_flat(flat: &FlatProgram, options: &CompileOptions) -> BTreeMap<Var, VarClass> {
    classify::classify(flat, options.temporaries, options.stack_elim)
}

pub fn compile(
    prog: &CallGraphProgram,
    registry: &KernelRegistry,
    options: CompileOptions,
) -> Result<Compiled, Vec<Diagnostic>> {
    let diags = validate_callgraph(prog, registry);
    if !diags.is_empty() {
        return Err(diags);
    }
    let (mut flat, map) = flatten::flatten(prog, options.caller_saves);
    let mut stages = vec![Stage { name: "flatten", text: flat.to_string() }];
    let cancelled = if options.inject_cancel_fault {
        cancel::cancel_with_fault(&mut flat)
    } else if options.pop_push {
        cancel_pop_push(&mut flat)
    } else {
        0
    };
    if options.pop_push || options.inject_cancel_fault {
        stages.push(Stage { name: "pop-push", text: flat.to_string() });
    }
    let classes = classify::classify(&flat, options.temporaries, options.stack_elim);
    let mut compiled = Compiled { flat, classes, map, stages, options, cancelled };
    let table = compiled.class_table();
    compiled.stages.push(Stage { name: "classify", text: table });
    Ok(compiled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{lower_to_cfg, parse_source};
    use crate::ir::{FlatOp, FlatTerminator};

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
}";

    fn fib(options: CompileOptions) -> Compiled {
        let reg = KernelRegistry::with_builtins();
        let cfg = lower_to_cfg(&parse_source(FIB).unwrap(), &reg).unwrap();
        compile(&cfg, &reg, options).unwrap()
    }

    #[test]
    fn fibonacci_classes() {
        let c = fib(CompileOptions::default());
        assert_eq!(c.class_of("fibonacci.n"), Some(VarClass::Stacked));
        assert_eq!(c.class_of("fibonacci.left"), Some(VarClass::Stacked));
        assert_eq!(c.class_of("fibonacci.cond"), Some(VarClass::Temporary));
        assert_eq!(c.class_of("fibonacci.n2"), Some(VarClass::Temporary));
        let pushjumps =
            c.flat.blocks.iter().filter(|b| matches!(b.terminator, FlatTerminator::PushJump { .. })).count();
        assert_eq!(pushjumps, 2);
        assert!(c.flat.blocks.iter().flat_map(|b| &b.ops).any(|op| matches!(op, FlatOp::Update { .. })));
    }

    #[test]
    fn all_off_stacks_everything() {
        let c = fib(CompileOptions::all_off());
        assert!(c.classes.values().all(|k| *k == VarClass::Stacked));
        assert!(c.flat.blocks.iter().flat_map(|b| &b.ops).all(|op| !matches!(op, FlatOp::Update { .. })));
    }

    #[test]
    fn cancel_is_idempotent() {
        let mut c = fib(CompileOptions::default());
        assert_eq!(cancellable_pairs(&c.flat), 0);
        let before = c.flat.clone();
        assert_eq!(cancel_pop_push(&mut c.flat), 0);
        assert_eq!(before, c.flat);
    }

    #[test]
    fn mask_round_trip() {
        for m in 0..16 {
            assert_eq!(CompileOptions::from_mask(m).mask(), m);
        }
        let mut o = CompileOptions::default();
        o.disable("stack-elim").unwrap();
        assert!(!o.stack_elim);
        assert!(o.disable("inline").is_err());
    }

    #[test]
    fn lowering_map_covers_blocks() {
        let c = fib(CompileOptions::default());
        assert_eq!(c.map.blocks.len(), c.flat.blocks.len());
        assert_eq!(c.map.vars[&Var::new("fibonacci.n")].source, "n");
    }
}
