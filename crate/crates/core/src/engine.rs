//! One entry point for running a call-graph program on either engine.

use std::fmt;
use std::str::FromStr;

use crate::compiler::{compile, CompileOptions};
use crate::ir::CallGraphProgram;
use crate::local_exec::{trace_local, LocalOptions, Selector, DEFAULT_MAX_STEPS};
use crate::metrics::ScheduleTrace;
use crate::pc_vm::{run_pc, VmOptions, DEFAULT_DEPTH};
use crate::runtime::{BatchArray, ExecMode, KernelRegistry};
use crate::ExecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    /// Local static autobatching on the call-graph IR.
    Local,
    /// Program-counter autobatching on the compiled flat IR.
    Pc,
}

impl Engine {
    pub const ALL: [Engine; 2] = [Engine::Local, Engine::Pc];
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Local => "local",
            Engine::Pc => "pc",
        })
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "local" => Ok(Engine::Local),
            "pc" => Ok(Engine::Pc),
            _ => Err(format!("unknown engine `{s}` (expected local or pc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub engine: Engine,
    pub mode: ExecMode,
    /// Stack depth limit; ignored by the local engine.
    pub depth: usize,
    pub max_steps: u64,
    /// Compiler passes; ignored by the local engine.
    pub passes: CompileOptions,
    pub debug: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            engine: Engine::Pc,
            mode: ExecMode::Mask,
            depth: DEFAULT_DEPTH,
            max_steps: DEFAULT_MAX_STEPS,
            passes: CompileOptions::default(),
            debug: false,
        }
    }
}

impl RunConfig {
    pub fn with_engine(engine: Engine) -> Self {
        RunConfig { engine, ..Default::default() }
    }
}

/// Run the entry function on every lane, returning outputs and the trace.
pub fn execute(
    prog: &CallGraphProgram,
    registry: &KernelRegistry,
    inputs: &[BatchArray],
    cfg: &RunConfig,
) -> Result<(BatchArray, ScheduleTrace), ExecError> {
    match cfg.engine {
        Engine::Local => {
            let opts = LocalOptions { mode: cfg.mode, max_steps: cfg.max_steps, selector: Selector::MinPc };
            trace_local(prog, registry, inputs, opts)
        }
        Engine::Pc => {
            let compiled = compile(prog, registry, cfg.passes).map_err(ExecError::Malformed)?;
            let opts = VmOptions { depth: cfg.depth, max_steps: cfg.max_steps, mode: cfg.mode, debug: cfg.debug };
            let run = run_pc(&compiled, registry, inputs, opts)?;
            Ok((run.output, run.trace))
        }
    }
}
