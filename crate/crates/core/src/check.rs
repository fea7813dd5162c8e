//! Differential testing of both engines against the scalar reference.

use std::fmt;

use crate::compiler::CompileOptions;
use crate::engine::{execute, Engine, RunConfig};
use crate::ir::CallGraphProgram;
use crate::local_exec::{run_scalar_reference, DEFAULT_MAX_STEPS};
use crate::pc_vm::DEFAULT_DEPTH;
use crate::runtime::{BatchArray, ExecMode, KernelRegistry, Value};

/// Relative tolerance for floats; ints and bools compare exactly.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub pass_sets: Vec<CompileOptions>,
    pub modes: Vec<ExecMode>,
    pub depth: usize,
    pub max_steps: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            pass_sets: vec![CompileOptions::default()],
            modes: vec![ExecMode::Mask],
            depth: DEFAULT_DEPTH,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl CheckOptions {
    /// Every subset of compiler passes, both execution modes.
    pub fn exhaustive() -> Self {
        CheckOptions {
            pass_sets: (0..16).map(CompileOptions::from_mask).collect(),
            modes: vec![ExecMode::Mask, ExecMode::Gather],
            ..Default::default()
        }
    }
}

/// One disagreement with the reference.
#[derive(Debug, Clone)]
pub struct Mismatch {
    pub run: String,
    pub lane: usize,
    pub variable: String,
    pub expected: Value,
    pub actual: Value,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: lane {}, `{}`: expected {}, got {}", self.run, self.lane, self.variable, self.expected, self.actual)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub runs: usize,
    pub lanes: usize,
    pub mismatches: Vec<Mismatch>,
    /// Runs that failed outright, with the failure.
    pub errors: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.errors.is_empty()
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.runs += other.runs;
        self.lanes += other.lanes;
        self.mismatches.extend(other.mismatches);
        self.errors.extend(other.errors);
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} runs, {} lanes, {} mismatches, {} errors",
            self.runs,
            self.lanes,
            self.mismatches.len(),
            self.errors.len()
        )?;
        for m in &self.mismatches {
            writeln!(f, "mismatch: {m}")?;
        }
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        Ok(())
    }
}

fn label(cfg: &RunConfig) -> String {
    let mode = match cfg.mode {
        ExecMode::Mask => "mask",
        ExecMode::Gather => "gather",
    };
    match cfg.engine {
        Engine::Local => format!("local/{mode}"),
        Engine::Pc => format!("pc/{mode}/passes={:04b}", cfg.passes.mask()),
    }
}

/// Run the reference on each lane, then the local engine and the pc engine
/// under every configured pass set and mode, comparing every lane.
pub fn check_batch(
    prog: &CallGraphProgram,
    registry: &KernelRegistry,
    inputs: &[BatchArray],
    opts: &CheckOptions,
) -> CheckReport {
    let mut report = CheckReport::default();
    let z = inputs.first().map_or(1, BatchArray::lanes);
    let output = prog.entry_function().output.0.clone();
    let mut expected = Vec::with_capacity(z);
    for b in 0..z {
        let args: Vec<Value> = inputs.iter().map(|a| a.value(b)).collect();
        match run_scalar_reference(prog, registry, prog.entry, &args, u64::MAX) {
            Ok(v) => expected.push(v),
            Err(e) => {
                report.errors.push(format!("reference, lane {b}: {e}"));
                return report;
            }
        }
    }
    let mut configs = Vec::new();
    for &mode in &opts.modes {
        configs.push(RunConfig { engine: Engine::Local, mode, max_steps: opts.max_steps, ..Default::default() });
        for &passes in &opts.pass_sets {
            configs.push(RunConfig {
                engine: Engine::Pc,
                mode,
                passes,
                depth: opts.depth,
                max_steps: opts.max_steps,
                debug: false,
            });
        }
    }
    for cfg in configs {
        report.runs += 1;
        let run = label(&cfg);
        match execute(prog, registry, inputs, &cfg) {
            Ok((out, _)) => {
                report.lanes += z;
                for (b, exp) in expected.iter().enumerate() {
                    let actual = out.value(b);
                    if !exp.approx_eq(&actual, FLOAT_TOLERANCE) {
                        report.mismatches.push(Mismatch {
                            run: run.clone(),
                            lane: b,
                            variable: output.clone(),
                            expected: exp.clone(),
                            actual,
                        });
                    }
                }
            }
            Err(e) => report.errors.push(format!("{run}: {e}")),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::corpus_program;

    #[test]
    fn fibonacci_passes_exhaustively() {
        let p = corpus_program("fibonacci").unwrap();
        let r = check_batch(&p.program(), &p.registry, &p.sample_inputs, &CheckOptions::exhaustive());
        assert!(r.passed(), "{r}");
        assert_eq!(r.runs, 2 * 17);
    }

    #[test]
    fn injected_cancel_fault_is_caught() {
        let p = corpus_program("fibonacci").unwrap();
        let faulty = CompileOptions { inject_cancel_fault: true, ..Default::default() };
        let opts = CheckOptions { pass_sets: vec![faulty], ..Default::default() };
        let r = check_batch(&p.program(), &p.registry, &p.sample_inputs, &opts);
        assert!(!r.passed());
    }
}
