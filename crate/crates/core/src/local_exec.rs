//! Local static batching: each activation runs its own control-flow graph
//! over a set of lanes, always executing the earliest block any lane is
//! waiting at. Calls recurse on the host stack with the lanes that reached
//! the call, so lanes in different activations never share a step.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ExecError;
use crate::ir::kinds::infer_callgraph;
use crate::ir::{validate_callgraph, CallGraphProgram, Op, Operand, SegmentLayout, Terminator, Var};
use crate::metrics::{DepthRange, ScheduleTrace};
use crate::runtime::{compute, eval_lane, Arg, ArgInfo, BatchArray, ExecMode, Kernel, KernelRegistry, Kind, LaneMask, LaneRef, Literal, Value};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;
pub const HOST_RECURSION_LIMIT: usize = 10_000;
const HOST_STACK_BYTES: usize = 1 << 30;

/// Which waiting block runs next. Only `MinPc` is used outside tests; any
/// choice gives the same results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Selector {
    #[default]
    MinPc,
    MaxPc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalOptions {
    pub mode: ExecMode,
    pub max_steps: u64,
    pub selector: Selector,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions { mode: ExecMode::Mask, max_steps: DEFAULT_MAX_STEPS, selector: Selector::MinPc }
    }
}

#[derive(Debug, Clone)]
enum Src {
    Slot(usize),
    Lit(Literal),
}

#[derive(Debug, Clone)]
struct PrimOp {
    out: usize,
    kernel: Arc<dyn Kernel>,
    args: Vec<Src>,
}

#[derive(Debug, Clone)]
struct CallOp {
    out: usize,
    callee: usize,
    args: Vec<Src>,
}

#[derive(Debug, Clone)]
struct Segment {
    id: usize,
    prims: Vec<PrimOp>,
    call: Option<CallOp>,
}

#[derive(Debug, Clone)]
enum Term {
    Jump(usize),
    Branch(usize, usize, usize),
    Return,
}

#[derive(Debug, Clone)]
struct CompiledBlock {
    segments: Vec<Segment>,
    term: Term,
}

#[derive(Debug, Clone)]
struct CompiledFn {
    kinds: Vec<Kind>,
    params: Vec<usize>,
    output: usize,
    blocks: Vec<CompiledBlock>,
}

/// A call-graph program prepared for batched execution.
#[derive(Debug, Clone)]
pub struct LocalEngine {
    funcs: Vec<CompiledFn>,
    entry: usize,
    segments: usize,
    options: LocalOptions,
}

struct Run<'e> {
    engine: &'e LocalEngine,
    z: usize,
    steps: u64,
    trace: Option<ScheduleTrace>,
}

fn src_of(slots: &HashMap<&Var, usize>, o: &Operand) -> Src {
    match o {
        Operand::Var(v) => Src::Slot(slots[v]),
        Operand::Lit(l) => Src::Lit(*l),
    }
}

impl LocalEngine {
    /// Validate and precompile `prog`. `input_kinds` are the kinds of the
    /// entry function's parameters.
    pub fn new(
        prog: &CallGraphProgram,
        registry: &KernelRegistry,
        input_kinds: &[Kind],
        options: LocalOptions,
    ) -> Result<Self, ExecError> {
        let diags = validate_callgraph(prog, registry);
        if !diags.is_empty() {
            return Err(ExecError::Malformed(diags));
        }
        let entry = prog.entry_function();
        if input_kinds.len() != entry.params.len() {
            return Err(ExecError::Input(format!(
                "`{}` takes {} inputs, given {}",
                entry.name,
                entry.params.len(),
                input_kinds.len()
            )));
        }
        let (kind_maps, diags) = infer_callgraph(prog, registry, Some(input_kinds));
        if !diags.is_empty() {
            return Err(ExecError::Malformed(diags));
        }
        let layout = SegmentLayout::new(prog);
        let mut funcs = Vec::with_capacity(prog.functions.len());
        for (fi, f) in prog.functions.iter().enumerate() {
            let vars = f.variables();
            let slots: HashMap<&Var, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
            let kinds = vars.iter().map(|v| kind_maps[fi].get(v).copied().unwrap_or(Kind::F64)).collect();
            let mut blocks = Vec::with_capacity(f.blocks.len());
            for (bi, b) in f.blocks.iter().enumerate() {
                let mut segments = vec![Segment { id: layout.index(fi, bi, 0), prims: Vec::new(), call: None }];
                for op in &b.ops {
                    let seg = segments.last_mut().expect("at least one segment");
                    match op {
                        Op::Primitive { out, prim, args } => seg.prims.push(PrimOp {
                            out: slots[out],
                            kernel: registry.get(prim.as_str()).expect("validated primitive").clone(),
                            args: args.iter().map(|a| src_of(&slots, a)).collect(),
                        }),
                        Op::Call { out, callee, args } => {
                            seg.call = Some(CallOp {
                                out: slots[out],
                                callee: *callee,
                                args: args.iter().map(|a| src_of(&slots, a)).collect(),
                            });
                            let next = segments.len();
                            segments.push(Segment { id: layout.index(fi, bi, next), prims: Vec::new(), call: None });
                        }
                    }
                }
                let term = match &b.terminator {
                    Terminator::Jump(j) => Term::Jump(*j),
                    Terminator::Branch { cond, if_true, if_false } => Term::Branch(slots[cond], *if_true, *if_false),
                    Terminator::Return => Term::Return,
                };
                blocks.push(CompiledBlock { segments, term });
            }
            funcs.push(CompiledFn {
                kinds,
                params: f.params.iter().map(|p| slots[p]).collect(),
                output: slots[&f.output],
                blocks,
            });
        }
        Ok(LocalEngine { funcs, entry: prog.entry, segments: layout.len(), options })
    }

    pub fn options(&self) -> &LocalOptions {
        &self.options
    }

    /// Number of distinct block ids a trace can mention.
    pub fn segment_count(&self) -> usize {
        self.segments
    }

    fn check_inputs(&self, func: usize, inputs: &[BatchArray], active: &LaneMask) -> Result<(), ExecError> {
        let f = self.funcs.get(func).ok_or_else(|| ExecError::Input(format!("no function {func}")))?;
        if inputs.len() != f.params.len() {
            return Err(ExecError::Input(format!("expected {} inputs, given {}", f.params.len(), inputs.len())));
        }
        let z = active.lanes();
        if z == 0 {
            return Err(ExecError::Input("batch must have at least one lane".into()));
        }
        for (i, (a, &slot)) in inputs.iter().zip(&f.params).enumerate() {
            if a.lanes() != z {
                return Err(ExecError::Input(format!("input {i} has {} lanes, expected {z}", a.lanes())));
            }
            if a.kind() != f.kinds[slot] {
                return Err(ExecError::Input(format!("input {i} has kind {}, expected {}", a.kind(), f.kinds[slot])));
            }
        }
        Ok(())
    }

    fn go(&self, func: usize, inputs: &[BatchArray], active: &LaneMask, traced: bool) -> Result<(BatchArray, Option<ScheduleTrace>), ExecError> {
        self.check_inputs(func, inputs, active)?;
        let z = active.lanes();
        std::thread::scope(|s| {
            std::thread::Builder::new()
                .stack_size(HOST_STACK_BYTES)
                .spawn_scoped(s, || {
                    let mut run = Run { engine: self, z, steps: 0, trace: traced.then(|| ScheduleTrace::new("local", z)) };
                    let out = run.call(func, inputs.to_vec(), active, 1)?;
                    Ok((out, run.trace))
                })
                .expect("spawn interpreter thread")
                .join()
                .unwrap_or_else(|p| std::panic::resume_unwind(p))
        })
    }

    /// Run function `func` on the lanes in `active`. Lanes outside `active`
    /// come back as zeros.
    pub fn run(&self, func: usize, inputs: &[BatchArray], active: &LaneMask) -> Result<BatchArray, ExecError> {
        self.go(func, inputs, active, false).map(|(out, _)| out)
    }

    /// As [`run`](Self::run), also recording every segment execution.
    pub fn trace(&self, func: usize, inputs: &[BatchArray], active: &LaneMask) -> Result<(BatchArray, ScheduleTrace), ExecError> {
        self.go(func, inputs, active, true).map(|(out, t)| (out, t.expect("tracing requested")))
    }

    pub fn entry(&self) -> usize {
        self.entry
    }
}

impl<'e> Run<'e> {
    fn call(&mut self, func: usize, args: Vec<BatchArray>, active: &LaneMask, depth: usize) -> Result<BatchArray, ExecError> {
        if depth > HOST_RECURSION_LIMIT {
            return Err(ExecError::HostRecursionLimit { limit: HOST_RECURSION_LIMIT });
        }
        let f = &self.engine.funcs[func];
        let z = self.z;
        if active.is_empty() {
            return Ok(BatchArray::zeros(f.kinds[f.output], z));
        }
        let mut env: Vec<BatchArray> = f.kinds.iter().map(|&k| BatchArray::zeros(k, z)).collect();
        for (&slot, a) in f.params.iter().zip(args) {
            env[slot] = a;
        }
        let halt = f.blocks.len();
        let mut pc = vec![halt; z];
        for b in active.iter() {
            pc[b] = 0;
        }
        let mode = self.engine.options.mode;
        loop {
            let waiting = active.iter().map(|b| pc[b]).filter(|&p| p < halt);
            let next = match self.engine.options.selector {
                Selector::MinPc => waiting.min(),
                Selector::MaxPc => waiting.max(),
            };
            let Some(i) = next else { break };
            let here = LaneMask::from_bits((0..z).map(|b| active.get(b) && pc[b] == i).collect());
            let block = &f.blocks[i];
            for seg in &block.segments {
                self.steps += 1;
                if self.steps > self.engine.options.max_steps {
                    return Err(ExecError::StepLimitExceeded { limit: self.engine.options.max_steps });
                }
                if let Some(t) = &mut self.trace {
                    t.set_block_prims(seg.id, seg.prims.iter().map(|p| p.kernel.name()));
                    let d = depth as u32;
                    t.record(seg.id, here.count(), Some(DepthRange(d, d)));
                }
                for p in &seg.prims {
                    let args: Vec<Arg<'_>> = p
                        .args
                        .iter()
                        .map(|s| match s {
                            Src::Slot(v) => Arg::Array(&env[*v]),
                            Src::Lit(l) => Arg::Lit(*l),
                        })
                        .collect();
                    let out = compute(mode, p.kernel.as_ref(), &args, &here)?;
                    env[p.out].assign_masked(&out, &here);
                }
                if let Some(c) = &seg.call {
                    let args = c
                        .args
                        .iter()
                        .map(|s| match s {
                            Src::Slot(v) => env[*v].clone(),
                            Src::Lit(l) => BatchArray::splat(&l.to_value(), z),
                        })
                        .collect::<Vec<_>>();
                    let o = self.call(c.callee, args, &here, depth + 1)?;
                    env[c.out].assign_masked(&o, &here);
                }
            }
            match block.term {
                Term::Jump(j) => here.iter().for_each(|b| pc[b] = j),
                Term::Branch(c, t, e) => {
                    let cond = env[c].as_bool().expect("branch condition is bool");
                    for b in here.iter() {
                        pc[b] = if cond[b] { t } else { e };
                    }
                }
                Term::Return => here.iter().for_each(|b| pc[b] = halt),
            }
        }
        let mut out = BatchArray::zeros(f.kinds[f.output], z);
        out.assign_masked(&env[f.output], active);
        Ok(out)
    }
}

fn kinds_of(inputs: &[BatchArray]) -> Vec<Kind> {
    inputs.iter().map(BatchArray::kind).collect()
}

/// Run the entry function of `prog` on every lane of `inputs`.
pub fn run_local(
    prog: &CallGraphProgram,
    registry: &KernelRegistry,
    inputs: &[BatchArray],
    options: LocalOptions,
) -> Result<BatchArray, ExecError> {
    let engine = LocalEngine::new(prog, registry, &kinds_of(inputs), options)?;
    let z = inputs.first().map_or(1, BatchArray::lanes);
    engine.run(prog.entry, inputs, &LaneMask::full(z))
}

/// As [`run_local`], also returning the schedule trace.
pub fn trace_local(
    prog: &CallGraphProgram,
    registry: &KernelRegistry,
    inputs: &[BatchArray],
    options: LocalOptions,
) -> Result<(BatchArray, ScheduleTrace), ExecError> {
    let engine = LocalEngine::new(prog, registry, &kinds_of(inputs), options)?;
    let z = inputs.first().map_or(1, BatchArray::lanes);
    engine.trace(prog.entry, inputs, &LaneMask::full(z))
}

struct Frame<'p> {
    func: usize,
    block: usize,
    op: usize,
    env: HashMap<&'p Var, Value>,
}

/// Single-lane interpreter with an explicit frame stack. Shares nothing with
/// the batched engines beyond the kernels.
pub fn run_scalar_reference(
    prog: &CallGraphProgram,
    registry: &KernelRegistry,
    func: usize,
    args: &[Value],
    max_steps: u64,
) -> Result<Value, ExecError> {
    let malformed = |m: String| ExecError::Malformed(vec![crate::ir::Diagnostic::new(crate::ir::Location::program(), m)]);
    let f = prog.functions.get(func).ok_or_else(|| malformed(format!("no function {func}")))?;
    if f.params.len() != args.len() {
        return Err(ExecError::Input(format!("`{}` takes {} inputs, given {}", f.name, f.params.len(), args.len())));
    }
    let mut stack = vec![Frame { func, block: 0, op: 0, env: f.params.iter().zip(args.iter().cloned()).collect() }];
    let mut steps = 0u64;
    let read = |env: &HashMap<&Var, Value>, o: &Operand| -> Result<(Value, ArgInfo), ExecError> {
        match o {
            Operand::Var(v) => {
                let val = env.get(v).cloned().ok_or_else(|| malformed(format!("`{v}` read before assignment")))?;
                let info = ArgInfo::of_kind(val.kind());
                Ok((val, info))
            }
            Operand::Lit(l) => Ok((l.to_value(), ArgInfo { kind: l.kind(), literal: Some(*l) })),
        }
    };
    loop {
        steps += 1;
        if steps > max_steps {
            return Err(ExecError::StepLimitExceeded { limit: max_steps });
        }
        let top = stack.last_mut().expect("frame stack is non-empty");
        let func = &prog.functions[top.func];
        let block = func.blocks.get(top.block).ok_or_else(|| malformed(format!("block {} out of range", top.block)))?;
        if let Some(op) = block.ops.get(top.op) {
            match op {
                Op::Primitive { out, prim, args } => {
                    let kernel = registry.get(prim.as_str()).ok_or_else(|| malformed(format!("unknown primitive `{prim}`")))?;
                    let mut vals = Vec::with_capacity(args.len());
                    let mut infos = Vec::with_capacity(args.len());
                    for a in args {
                        let (v, i) = read(&top.env, a)?;
                        vals.push(v);
                        infos.push(i);
                    }
                    let lanes: Vec<LaneRef<'_>> = vals.iter().map(Value::as_lane).collect();
                    let v = eval_lane(kernel.as_ref(), &infos, &lanes)?;
                    top.env.insert(out, v);
                    top.op += 1;
                }
                Op::Call { callee, args, .. } => {
                    let g = prog.functions.get(*callee).ok_or_else(|| malformed(format!("callee {callee} out of range")))?;
                    let mut env = HashMap::new();
                    for (p, a) in g.params.iter().zip(args) {
                        env.insert(p, read(&top.env, a)?.0);
                    }
                    if stack.len() >= HOST_RECURSION_LIMIT {
                        return Err(ExecError::HostRecursionLimit { limit: HOST_RECURSION_LIMIT });
                    }
                    stack.push(Frame { func: *callee, block: 0, op: 0, env });
                }
            }
            continue;
        }
        match &block.terminator {
            Terminator::Jump(j) => {
                top.block = *j;
                top.op = 0;
            }
            Terminator::Branch { cond, if_true, if_false } => {
                let c = match top.env.get(cond) {
                    Some(Value::Bool(c)) => *c,
                    _ => return Err(malformed(format!("branch condition `{cond}` is not a bool"))),
                };
                top.block = if c { *if_true } else { *if_false };
                top.op = 0;
            }
            Terminator::Return => {
                let frame = stack.pop().expect("frame stack is non-empty");
                let result = frame
                    .env
                    .get(&func.output)
                    .cloned()
                    .ok_or_else(|| malformed(format!("output `{}` unassigned at return", func.output)))?;
                match stack.last_mut() {
                    None => return Ok(result),
                    Some(caller) => {
                        let op = &prog.functions[caller.func].blocks[caller.block].ops[caller.op];
                        caller.env.insert(op.out(), result);
                        caller.op += 1;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn fib() -> CallGraphProgram {
        lower_to_cfg(&parse_source(FIB).unwrap(), &KernelRegistry::with_builtins()).unwrap()
    }

    fn ints(a: &BatchArray) -> Vec<i64> {
        a.as_i64().unwrap().to_vec()
    }

    #[test]
    fn fibonacci_batch() {
        let r = KernelRegistry::with_builtins();
        let out = run_local(&fib(), &r, &[BatchArray::from_i64(vec![3, 7, 4, 5])], LocalOptions::default()).unwrap();
        assert_eq!(ints(&out), [3, 21, 5, 8]);
        let out = run_local(&fib(), &r, &[BatchArray::from_i64(vec![0])], LocalOptions::default()).unwrap();
        assert_eq!(ints(&out), [1]);
    }

    #[test]
    fn scalar_reference() {
        let r = KernelRegistry::with_builtins();
        let v = run_scalar_reference(&fib(), &r, 0, &[Value::I64(6)], 1_000_000).unwrap();
        assert!(v.bit_eq(&Value::I64(13)));
    }

    #[test]
    fn empty_active_set_runs_nothing() {
        let r = KernelRegistry::with_builtins();
        let e = LocalEngine::new(&fib(), &r, &[Kind::I64], LocalOptions::default()).unwrap();
        let (out, t) = e.trace(0, &[BatchArray::from_i64(vec![4, 5])], &LaneMask::empty(2)).unwrap();
        assert_eq!(ints(&out), [0, 0]);
        assert!(t.is_empty());
    }

    #[test]
    fn inactive_lanes_return_zero() {
        let r = KernelRegistry::with_builtins();
        let e = LocalEngine::new(&fib(), &r, &[Kind::I64], LocalOptions::default()).unwrap();
        let out = e.run(0, &[BatchArray::from_i64(vec![4, 5])], &LaneMask::from_indices(2, &[1])).unwrap();
        assert_eq!(ints(&out), [0, 8]);
    }

    #[test]
    fn identical_lanes_never_diverge() {
        let r = KernelRegistry::with_builtins();
        let (_, t) = trace_local(&fib(), &r, &[BatchArray::from_i64(vec![5, 5])], LocalOptions::default()).unwrap();
        assert!(t.steps.iter().all(|s| s.active == 2));
    }

    #[test]
    fn max_pc_gives_same_outputs() {
        let r = KernelRegistry::with_builtins();
        let inputs = [BatchArray::from_i64(vec![3, 7, 4, 5, 0])];
        let opts = LocalOptions { selector: Selector::MaxPc, ..Default::default() };
        let (a, ta) = trace_local(&fib(), &r, &inputs, LocalOptions::default()).unwrap();
        let (b, tb) = trace_local(&fib(), &r, &inputs, opts).unwrap();
        assert!(a.bit_eq(&b));
        assert_ne!(ta.block_sequence(), tb.block_sequence());
    }

    #[test]
    fn step_limit() {
        let r = KernelRegistry::with_builtins();
        let p = lower_to_cfg(&parse_source("def spin(n) { while (true) { n = n + 1; } return n; }").unwrap(), &r).unwrap();
        let opts = LocalOptions { max_steps: 50, ..Default::default() };
        let e = run_local(&p, &r, &[BatchArray::from_i64(vec![0, 1])], opts).unwrap_err();
        assert_eq!(e, ExecError::StepLimitExceeded { limit: 50 });
    }

    #[test]
    fn deep_recursion_hits_host_limit_cleanly() {
        let r = KernelRegistry::with_builtins();
        let p = lower_to_cfg(&parse_source("def down(n) { if (n <= 0) { return 0; } return down(n - 1); }").unwrap(), &r).unwrap();
        let out = run_local(&p, &r, &[BatchArray::from_i64(vec![2000])], LocalOptions::default()).unwrap();
        assert_eq!(ints(&out), [0]);
        let e = run_local(&p, &r, &[BatchArray::from_i64(vec![20_000])], LocalOptions::default()).unwrap_err();
        assert_eq!(e, ExecError::HostRecursionLimit { limit: HOST_RECURSION_LIMIT });
    }
}
