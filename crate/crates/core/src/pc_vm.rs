//! Program-counter autobatching.
//!
//! Every lane carries a stacked program counter. Each step runs the block
//! with the lowest top-of-stack pc for exactly the lanes sitting there, so
//! lanes at different recursion depths execute a block together. A lane
//! halts when its last frame is popped; it then reads as the halt index.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::compiler::{Compiled, VarClass};
use crate::ir::kinds::infer_flat;
use crate::ir::{validate_flat, FlatOp, FlatProgram, FlatTerminator, Operand, Var};
use crate::local_exec::DEFAULT_MAX_STEPS;
use crate::metrics::{DepthRange, ScheduleTrace, StackCounts};
use crate::runtime::{
    compute, Arg, BatchArray, ExecMode, Kernel, KernelError, KernelRegistry, Kind, LaneMask, Literal, StackFault,
    StackedVar, Value,
};
use crate::ExecError;

pub const DEFAULT_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmOptions {
    /// Stack depth limit `D` for the pc and every stacked variable.
    pub depth: usize,
    pub max_steps: u64,
    pub mode: ExecMode,
    /// Check cache coherence and halt monotonicity after every step.
    pub debug: bool,
}

impl Default for VmOptions {
    fn default() -> Self {
        VmOptions { depth: DEFAULT_DEPTH, max_steps: DEFAULT_MAX_STEPS, mode: ExecMode::Mask, debug: false }
    }
}

#[derive(Debug, Clone)]
enum Src {
    Slot(usize),
    Lit(Literal),
}

#[derive(Clone)]
enum Action {
    Compute { target: usize, kernel: Arc<dyn Kernel>, args: Vec<Src>, push: bool },
    Pop(usize),
}

#[derive(Debug, Clone, Copy)]
enum Term {
    Jump(usize),
    Branch { cond: usize, if_true: usize, if_false: usize },
    PushJump { jump_to: usize, return_to: usize },
    Return,
}

/// A flat block with variables resolved to storage slots.
#[derive(Clone)]
pub struct BlockExecutor {
    actions: Vec<Action>,
    term: Term,
    prims: Vec<String>,
}

impl BlockExecutor {
    /// Primitives launched by one execution, in order.
    pub fn prims(&self) -> &[String] {
        &self.prims
    }
}

/// A flat program prepared for execution with fixed input kinds.
#[derive(Clone)]
pub struct PcProgram {
    names: Vec<Var>,
    classes: Vec<VarClass>,
    kinds: Vec<Kind>,
    executors: Vec<BlockExecutor>,
    inputs: Vec<usize>,
    output: usize,
    entry: usize,
}

impl PcProgram {
    /// Variables missing from `classes` are stacked.
    pub fn new(
        flat: &FlatProgram,
        classes: &BTreeMap<Var, VarClass>,
        registry: &KernelRegistry,
        input_kinds: &[Kind],
    ) -> Result<Self, ExecError> {
        let diags = validate_flat(flat, registry);
        if !diags.is_empty() {
            return Err(ExecError::Malformed(diags));
        }
        if input_kinds.len() != flat.inputs.len() {
            return Err(ExecError::Input(format!(
                "program takes {} inputs, given {}",
                flat.inputs.len(),
                input_kinds.len()
            )));
        }
        let (kind_map, diags) = infer_flat(flat, registry, Some(input_kinds));
        if !diags.is_empty() {
            return Err(ExecError::Malformed(diags));
        }
        let names = flat.variables();
        let slot_of: BTreeMap<&Var, usize> = names.iter().enumerate().map(|(i, v)| (v, i)).collect();
        let slot = |v: &Var| slot_of[v];
        let src = |o: &Operand| match o {
            Operand::Var(v) => Src::Slot(slot(v)),
            Operand::Lit(l) => Src::Lit(*l),
        };
        let executors = flat
            .blocks
            .iter()
            .map(|b| {
                let mut prims = Vec::new();
                let actions = b
                    .ops
                    .iter()
                    .map(|op| match op {
                        FlatOp::Pop(v) => Action::Pop(slot(v)),
                        FlatOp::Push { out, prim, args } | FlatOp::Update { out, prim, args } => {
                            prims.push(prim.0.clone());
                            Action::Compute {
                                target: slot(out),
                                kernel: registry.get(prim.as_str()).expect("validated primitive").clone(),
                                args: args.iter().map(src).collect(),
                                push: matches!(op, FlatOp::Push { .. }),
                            }
                        }
                    })
                    .collect();
                let term = match &b.terminator {
                    FlatTerminator::Jump(j) => Term::Jump(*j),
                    FlatTerminator::Branch { cond, if_true, if_false } => {
                        Term::Branch { cond: slot(cond), if_true: *if_true, if_false: *if_false }
                    }
                    FlatTerminator::PushJump { jump_to, return_to } => {
                        Term::PushJump { jump_to: *jump_to, return_to: *return_to }
                    }
                    FlatTerminator::Return => Term::Return,
                };
                BlockExecutor { actions, term, prims }
            })
            .collect();
        Ok(PcProgram {
            classes: names.iter().map(|v| classes.get(v).copied().unwrap_or(VarClass::Stacked)).collect(),
            kinds: names.iter().map(|v| kind_map.get(v).copied().unwrap_or(Kind::F64)).collect(),
            inputs: flat.inputs.iter().map(slot).collect(),
            output: slot(&flat.output),
            entry: flat.entry,
            executors,
            names,
        })
    }

    pub fn from_compiled(c: &Compiled, registry: &KernelRegistry, input_kinds: &[Kind]) -> Result<Self, ExecError> {
        PcProgram::new(&c.flat, &c.classes, registry, input_kinds)
    }

    pub fn halt(&self) -> usize {
        self.executors.len()
    }

    pub fn executor(&self, block: usize) -> Option<&BlockExecutor> {
        self.executors.get(block)
    }

    pub fn variables(&self) -> &[Var] {
        &self.names
    }

    pub fn class_of(&self, v: &str) -> Option<VarClass> {
        self.names.iter().position(|n| n.as_str() == v).map(|i| self.classes[i])
    }
}

#[derive(Debug, Clone)]
enum Storage {
    Stacked(StackedVar),
    Register(BatchArray),
}

impl Storage {
    fn top(&self) -> &BatchArray {
        match self {
            Storage::Stacked(s) => s.read_top(),
            Storage::Register(a) => a,
        }
    }
}

/// Batched machine state: the stacked pc and storage for every variable.
#[derive(Debug, Clone)]
pub struct MachineState {
    z: usize,
    halt: usize,
    options: VmOptions,
    pc: StackedVar,
    vars: Vec<Storage>,
    names: Vec<Var>,
    counts: Vec<StackCounts>,
    pc_counts: StackCounts,
    steps: u64,
    trace: ScheduleTrace,
}

/// Set up `Z` lanes at the entry block. Every stacked variable starts with
/// one frame: the input value for inputs, zero otherwise.
pub fn init_machine(prog: &PcProgram, inputs: &[BatchArray], options: VmOptions) -> Result<MachineState, ExecError> {
    if inputs.len() != prog.inputs.len() {
        return Err(ExecError::Input(format!("program takes {} inputs, given {}", prog.inputs.len(), inputs.len())));
    }
    if options.depth == 0 {
        return Err(ExecError::Input("stack depth must be at least 1".into()));
    }
    let z = inputs.first().map_or(1, BatchArray::lanes);
    if z == 0 {
        return Err(ExecError::Input("batch must have at least one lane".into()));
    }
    for (i, (a, &s)) in inputs.iter().zip(&prog.inputs).enumerate() {
        if a.lanes() != z {
            return Err(ExecError::Input(format!("input {i} has {} lanes, expected {z}", a.lanes())));
        }
        if a.kind() != prog.kinds[s] {
            return Err(ExecError::Input(format!("input {i} is {}, expected {}", a.kind(), prog.kinds[s])));
        }
    }
    let full = LaneMask::full(z);
    let mut vars = Vec::with_capacity(prog.names.len());
    for (s, kind) in prog.kinds.iter().enumerate() {
        let init = match prog.inputs.iter().position(|&i| i == s) {
            Some(k) => inputs[k].clone(),
            None => BatchArray::zeros(*kind, z),
        };
        vars.push(match prog.classes[s] {
            VarClass::Stacked => {
                let mut sv = StackedVar::new(*kind, options.depth, z);
                sv.push(&init, &full).expect("depth is at least 1");
                Storage::Stacked(sv)
            }
            VarClass::Registerized | VarClass::Temporary => Storage::Register(init),
        });
    }
    let mut pc = StackedVar::new(Kind::I64, options.depth, z);
    pc.push(&BatchArray::from_i64(vec![prog.entry as i64; z]), &full).expect("depth is at least 1");
    let mut trace = ScheduleTrace::new("pc", z);
    for (b, ex) in prog.executors.iter().enumerate() {
        trace.set_block_prims(b, ex.prims.iter().map(String::as_str));
    }
    Ok(MachineState {
        z,
        halt: prog.halt(),
        options,
        pc,
        vars,
        names: prog.names.clone(),
        counts: vec![StackCounts::default(); prog.names.len()],
        pc_counts: StackCounts::default(),
        steps: 0,
        trace,
    })
}

impl MachineState {
    pub fn lanes(&self) -> usize {
        self.z
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Top-of-stack pc of every lane; halted lanes read as the halt index.
    pub fn pc_tops(&self) -> Vec<usize> {
        let top = self.pc.read_top().as_i64().expect("pc is i64");
        self.pc.pointers().iter().zip(top).map(|(&p, &t)| if p == 0 { self.halt } else { t as usize }).collect()
    }

    /// Number of pc frames per lane, i.e. the call depth; 0 once halted.
    pub fn pc_depths(&self) -> Vec<usize> {
        self.pc.pointers().to_vec()
    }

    /// Return addresses of `lane`, innermost first.
    pub fn return_addresses(&self, lane: usize) -> Vec<usize> {
        let depth = self.pc.pointers()[lane];
        (0..depth.saturating_sub(1)).rev().filter_map(|d| self.pc.frame(d, lane)).map(|v| v.as_lane().i64() as usize).collect()
    }

    pub fn is_halted(&self) -> bool {
        self.pc.pointers().iter().all(|&p| p == 0)
    }

    fn slot(&self, var: &str) -> Option<usize> {
        self.names.iter().position(|n| n.as_str() == var)
    }

    /// Current value of `var` in every lane.
    pub fn var_top(&self, var: &str) -> Option<BatchArray> {
        self.slot(var).map(|s| self.vars[s].top().clone())
    }

    /// Stack pointer of `var` per lane; `None` for unstacked variables.
    pub fn var_pointers(&self, var: &str) -> Option<Vec<usize>> {
        match &self.vars[self.slot(var)?] {
            Storage::Stacked(s) => Some(s.pointers().to_vec()),
            Storage::Register(_) => None,
        }
    }

    pub fn output(&self, prog: &PcProgram) -> BatchArray {
        self.vars[prog.output].top().clone()
    }

    /// The trace so far, with stack counters for the pc and every stacked
    /// variable.
    pub fn trace(&self) -> ScheduleTrace {
        let mut t = self.trace.clone();
        let ran: std::collections::BTreeSet<usize> = t.steps.iter().map(|s| s.block).collect();
        t.block_prims.retain(|b, _| ran.contains(b));
        t.stacks.insert("pc".into(), self.pc_counts);
        for (s, v) in self.vars.iter().enumerate() {
            if matches!(v, Storage::Stacked(_)) {
                t.stacks.insert(self.names[s].0.clone(), self.counts[s]);
            }
        }
        t
    }

    fn fault(&self, f: StackFault, slot: Option<usize>, block: usize) -> ExecError {
        let var = slot.map_or_else(|| "pc".to_string(), |s| self.names[s].0.clone());
        match f {
            StackFault::Overflow { lane } => ExecError::StackOverflow { lane, var, block },
            StackFault::Underflow { lane } => ExecError::StackUnderflow { lane, var, block },
        }
    }

    /// Run one block for the lanes at the lowest pc. Returns the block, or
    /// `None` if every lane has halted.
    pub fn step(&mut self, prog: &PcProgram) -> Result<Option<usize>, ExecError> {
        let tops = self.pc_tops();
        let Some(&block) = tops.iter().min().filter(|&&i| i < self.halt) else {
            return Ok(None);
        };
        self.steps += 1;
        if self.steps > self.options.max_steps {
            return Err(ExecError::StepLimitExceeded { limit: self.options.max_steps });
        }
        let mask = LaneMask::from_bits(tops.iter().map(|&t| t == block).collect());
        let depths = mask.iter().map(|b| self.pc.pointers()[b] as u32);
        let (lo, hi) = depths.fold((u32::MAX, 0), |(lo, hi), d| (lo.min(d), hi.max(d)));
        self.trace.record(block, mask.count(), Some(DepthRange(lo, hi)));

        let ex = &prog.executors[block];
        for action in &ex.actions {
            match action {
                Action::Pop(s) => {
                    if let Storage::Stacked(sv) = &mut self.vars[*s] {
                        if let Err(f) = sv.pop(&mask) {
                            return Err(self.fault(f, Some(*s), block));
                        }
                        self.counts[*s].pop += 1;
                    }
                }
                Action::Compute { target, kernel, args, push } => {
                    let out = {
                        let args: Vec<Arg<'_>> = args
                            .iter()
                            .map(|a| match a {
                                Src::Slot(s) => Arg::Array(self.vars[*s].top()),
                                Src::Lit(l) => Arg::Lit(*l),
                            })
                            .collect();
                        compute(self.options.mode, kernel.as_ref(), &args, &mask)?
                    };
                    let expected = prog.kinds[*target];
                    if out.kind() != expected {
                        return Err(ExecError::Kernel(KernelError {
                            kernel: kernel.name().to_string(),
                            message: format!("produces {} but `{}` is {expected}", out.kind(), self.names[*target]),
                        }));
                    }
                    let res = match &mut self.vars[*target] {
                        Storage::Stacked(sv) => {
                            if *push {
                                self.counts[*target].push += 1;
                                sv.push(&out, &mask)
                            } else {
                                self.counts[*target].update += 1;
                                sv.update_top(&out, &mask)
                            }
                        }
                        Storage::Register(r) => {
                            r.assign_masked(&out, &mask);
                            Ok(())
                        }
                    };
                    if let Err(f) = res {
                        return Err(self.fault(f, Some(*target), block));
                    }
                }
            }
        }

        let z = self.z;
        let res = match ex.term {
            Term::Jump(j) => {
                self.pc_counts.update += 1;
                self.pc.update_top(&BatchArray::from_i64(vec![j as i64; z]), &mask)
            }
            Term::Branch { cond, if_true, if_false } => {
                let c = self.vars[cond].top().as_bool().expect("branch condition is bool");
                let next = c.iter().map(|&c| if c { if_true } else { if_false } as i64).collect();
                self.pc_counts.update += 1;
                self.pc.update_top(&BatchArray::from_i64(next), &mask)
            }
            Term::PushJump { jump_to, return_to } => {
                self.pc_counts.update += 1;
                self.pc_counts.push += 1;
                self.pc
                    .update_top(&BatchArray::from_i64(vec![return_to as i64; z]), &mask)
                    .and_then(|()| self.pc.push(&BatchArray::from_i64(vec![jump_to as i64; z]), &mask))
            }
            Term::Return => {
                self.pc_counts.pop += 1;
                self.pc.pop(&mask)
            }
        };
        if let Err(f) = res {
            return Err(self.fault(f, None, block));
        }

        if self.options.debug {
            self.check(block, &tops)?;
        }
        Ok(Some(block))
    }

    fn check(&self, block: usize, before: &[usize]) -> Result<(), ExecError> {
        let bad = |message: String| Err(ExecError::DebugCheck { block, message });
        if let Some(lane) = self.pc.incoherent_lane() {
            return bad(format!("pc cache incoherent in lane {lane}"));
        }
        for (s, v) in self.vars.iter().enumerate() {
            if let Storage::Stacked(sv) = v {
                if let Some(lane) = sv.incoherent_lane() {
                    return bad(format!("`{}` cache incoherent in lane {lane}", self.names[s]));
                }
            }
        }
        let after = self.pc_tops();
        for (lane, (&b, &a)) in before.iter().zip(&after).enumerate() {
            if b == self.halt && a != self.halt {
                return bad(format!("lane {lane} resumed after halting"));
            }
        }
        Ok(())
    }

    /// Step until every lane halts.
    pub fn run(&mut self, prog: &PcProgram) -> Result<(), ExecError> {
        while self.step(prog)?.is_some() {}
        Ok(())
    }
}

/// Outputs and trace of a complete run.
#[derive(Debug, Clone)]
pub struct PcRun {
    pub output: BatchArray,
    pub trace: ScheduleTrace,
}

pub fn run_program(prog: &PcProgram, inputs: &[BatchArray], options: VmOptions) -> Result<PcRun, ExecError> {
    let mut m = init_machine(prog, inputs, options)?;
    m.run(prog)?;
    Ok(PcRun { output: m.output(prog), trace: m.trace() })
}

/// Prepare and run a compiled program.
pub fn run_pc(
    compiled: &Compiled,
    registry: &KernelRegistry,
    inputs: &[BatchArray],
    options: VmOptions,
) -> Result<PcRun, ExecError> {
    let kinds: Vec<Kind> = inputs.iter().map(BatchArray::kind).collect();
    let prog = PcProgram::from_compiled(compiled, registry, &kinds)?;
    run_program(&prog, inputs, options)
}

/// Run one lane on its own.
pub fn run_pc_scalar(
    compiled: &Compiled,
    registry: &KernelRegistry,
    inputs: &[Value],
    options: VmOptions,
) -> Result<Value, ExecError> {
    let arrays: Vec<BatchArray> = inputs.iter().map(|v| BatchArray::splat(v, 1)).collect();
    Ok(run_pc(compiled, registry, &arrays, options)?.output.value(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileOptions};
    use crate::frontend::{lower_to_cfg, parse_source};

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

    fn fib(options: CompileOptions) -> (Compiled, KernelRegistry) {
        let reg = KernelRegistry::with_builtins();
        let cfg = lower_to_cfg(&parse_source(FIB).unwrap(), &reg).unwrap();
        (compile(&cfg, &reg, options).unwrap(), reg)
    }

    fn run_fib(options: CompileOptions, vm: VmOptions, n: Vec<i64>) -> Result<PcRun, ExecError> {
        let (c, reg) = fib(options);
        run_pc(&c, &reg, &[BatchArray::from_i64(n)], vm)
    }

    #[test]
    fn fibonacci_batch() {
        let vm = VmOptions { debug: true, ..Default::default() };
        for m in 0..16 {
            let r = run_fib(CompileOptions::from_mask(m), vm, vec![3, 7, 4, 5]).unwrap();
            assert_eq!(r.output.as_i64().unwrap(), &[3, 21, 5, 8], "mask {m}");
        }
    }

    #[test]
    fn mixed_depth_steps_occur() {
        let r = run_fib(CompileOptions::default(), VmOptions::default(), vec![4, 6, 8]).unwrap();
        assert!(r.trace.steps.iter().any(|s| s.depth.unwrap().is_mixed()));
    }

    #[test]
    fn depth_one_overflows_on_first_call() {
        let vm = VmOptions { depth: 1, ..Default::default() };
        let e = run_fib(CompileOptions::default(), vm, vec![2]).unwrap_err();
        assert!(matches!(e, ExecError::StackOverflow { lane: 0, .. }), "{e}");
        assert_eq!(run_fib(CompileOptions::default(), vm, vec![1]).unwrap().output.as_i64().unwrap(), &[1]);
    }

    #[test]
    fn overflow_names_variable() {
        let vm = VmOptions { depth: 3, ..Default::default() };
        let e = run_fib(CompileOptions::default(), vm, vec![1, 10]).unwrap_err();
        match e {
            ExecError::StackOverflow { lane, var, .. } => {
                assert_eq!(lane, 1);
                assert_eq!(var, "fibonacci.n");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn introspection() {
        let (c, reg) = fib(CompileOptions::default());
        let prog = PcProgram::from_compiled(&c, &reg, &[Kind::I64]).unwrap();
        let mut m = init_machine(&prog, &[BatchArray::from_i64(vec![5, 0])], VmOptions::default()).unwrap();
        assert_eq!(m.pc_tops(), vec![c.flat.entry; 2]);
        while m.pc_depths()[0] < 2 {
            m.step(&prog).unwrap();
        }
        assert_eq!(m.return_addresses(0).len(), 1);
        m.run(&prog).unwrap();
        assert!(m.is_halted());
        assert_eq!(m.pc_tops(), vec![prog.halt(); 2]);
        assert_eq!(m.output(&prog).as_i64().unwrap(), &[8, 1]);
    }

    #[test]
    fn gather_matches_mask() {
        let a = run_fib(CompileOptions::default(), VmOptions::default(), vec![3, 9, 1, 6]).unwrap();
        let vm = VmOptions { mode: ExecMode::Gather, ..Default::default() };
        let b = run_fib(CompileOptions::default(), vm, vec![3, 9, 1, 6]).unwrap();
        assert!(a.output.bit_eq(&b.output));
        assert_eq!(a.trace.steps, b.trace.steps);
    }

    #[test]
    fn step_limit() {
        let vm = VmOptions { max_steps: 10, ..Default::default() };
        assert_eq!(run_fib(CompileOptions::default(), vm, vec![10]).unwrap_err(), ExecError::StepLimitExceeded { limit: 10 });
    }
}
