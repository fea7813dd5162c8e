//! The `autobatch` command line.
//!
//! ```text
//! autobatch compile <source> [--no-pass NAME]... [--out-dir DIR]
//! autobatch run <source> --inputs 6,7,8,9 [--engine local|pc] [--mode mask|gather]
//!               [--depth D] [--max-steps N] [--trace PATH] [--csv PATH]
//! autobatch check [<source>...] [--exhaustive] [--seed S] [--batches N]
//! autobatch nuts [--lanes Z] [--iterations N] [--step-size E] [--leapfrog L] [--max-depth M]
//! ```
//!
//! `<source>` is a file in the source language or the textual IR, or the
//! name of a corpus program (`fib` is short for `fibonacci`). Lanes in
//! `--inputs` are separated by commas and a lane's arguments by spaces;
//! vectors are written `[1.0;2.5]`.
//!
//! Exit codes: 0 success, 1 usage or program error, 2 stack fault, 3 step
//! limit, 4 any other runtime fault or a differential-check mismatch.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::check::{check_batch, CheckOptions, CheckReport};
use crate::compiler::{classify_flat, compile, CompileOptions};
use crate::engine::{execute, Engine, RunConfig};
use crate::frontend::{lower_to_cfg, parse_source};
use crate::ir::{parse_ir, parse_literal, CallGraphProgram, FlatProgram, IrProgram};
use crate::local_exec::DEFAULT_MAX_STEPS;
use crate::metrics::{compare, utilization, ScheduleTrace};
use crate::pc_vm::{run_program, PcProgram, VmOptions, DEFAULT_DEPTH};
use crate::runtime::{BatchArray, ExecMode, KernelRegistry, Kind, Value};
use crate::workloads::{corpus, correlated_gaussian, logistic_regression, ChainStats, NutsConfig, NutsLite};
use crate::ExecError;

#[derive(Debug, Parser)]
#[command(name = "autobatch", version, about = "Batch recursive programs across independent inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print every compilation stage.
    Compile(CompileArgs),
    /// Run a batch and print one output per lane.
    Run(RunArgs),
    /// Compare both engines with the scalar reference.
    Check(CheckArgs),
    /// Sample with NUTS-lite on both engines and report utilization.
    Nuts(NutsArgs),
}

#[derive(Debug, Args)]
struct PassArgs {
    /// Disable a compiler pass: caller-saves, temporaries, stack-elim, pop-push.
    #[arg(long = "no-pass", value_name = "NAME")]
    no_pass: Vec<String>,
}

impl PassArgs {
    fn options(&self) -> Result<CompileOptions, CliError> {
        let mut o = CompileOptions::default();
        for p in &self.no_pass {
            o.disable(p).map_err(CliError::Usage)?;
        }
        Ok(o)
    }
}

#[derive(Debug, Args)]
struct CompileArgs {
    source: String,
    /// Entry function; defaults to the first one.
    #[arg(long)]
    entry: Option<String>,
    #[command(flatten)]
    passes: PassArgs,
    /// Write each stage to its own file instead of stdout.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    source: String,
    #[arg(long)]
    entry: Option<String>,
    #[arg(long, default_value = "pc")]
    engine: Engine,
    #[arg(long, default_value = "mask", value_parser = parse_mode)]
    mode: ExecMode,
    /// Lanes separated by commas, arguments by spaces.
    #[arg(long, allow_hyphen_values = true)]
    inputs: Option<String>,
    /// One lane per line.
    #[arg(long, value_name = "PATH")]
    inputs_file: Option<PathBuf>,
    /// Stack depth limit (pc engine).
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    /// Accepted for a uniform run description; programs draw randomness
    /// from their inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    passes: PassArgs,
    /// Write the schedule trace as JSON.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Write the `step,block,active` projection of the trace.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Check cache coherence after every pc step.
    #[arg(long)]
    debug: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Programs to check; the whole corpus when empty.
    sources: Vec<String>,
    /// All sixteen pass subsets and both execution modes.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random batches per corpus program, besides its sample inputs.
    #[arg(long, default_value_t = 5)]
    batches: usize,
    /// Lanes per random batch.
    #[arg(long, default_value_t = 7)]
    lanes: usize,
    #[arg(long, allow_hyphen_values = true)]
    inputs: Option<String>,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    #[command(flatten)]
    passes: PassArgs,
    #[arg(long, hide = true)]
    inject_cancel_fault: bool,
}

#[derive(Debug, Args)]
struct NutsArgs {
    /// gaussian or logistic.
    #[arg(long, default_value = "gaussian")]
    target: String,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 64)]
    lanes: usize,
    #[arg(long, default_value_t = 400)]
    iterations: usize,
    #[arg(long, default_value_t = 0.25)]
    step_size: f64,
    #[arg(long, default_value_t = 4)]
    leapfrog: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "mask", value_parser = parse_mode)]
    mode: ExecMode,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    #[command(flatten)]
    passes: PassArgs,
    /// Write `engine,steps,launches,lane_evaluations,utilization` rows.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Write the pc engine's trace as JSON.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<ExecMode, String> {
    match s {
        "mask" => Ok(ExecMode::Mask),
        "gather" => Ok(ExecMode::Gather),
        _ => Err(format!("unknown mode `{s}` (expected mask or gather)")),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Program(String),
    Exec(ExecError),
    Mismatch(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Program(_) => 1,
            CliError::Exec(ExecError::StackOverflow { .. } | ExecError::StackUnderflow { .. }) => 2,
            CliError::Exec(ExecError::StepLimitExceeded { .. }) => 3,
            CliError::Exec(ExecError::Malformed(_) | ExecError::Input(_)) => 1,
            CliError::Exec(_) | CliError::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("usage error: {m}"),
            CliError::Program(m) => m.clone(),
            CliError::Exec(e) => format!("error: {e}"),
            CliError::Mismatch(m) => m.clone(),
        }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        CliError::Exec(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Program(format!("{}: {e}", path.display()))
}

enum Loaded {
    CallGraph(CallGraphProgram),
    Flat(FlatProgram),
}

/// Builtins plus the 2-d correlated Gaussian kernels, so source files can
/// use `gauss2_logpdf` and `gauss2_grad_logpdf`.
fn default_registry() -> KernelRegistry {
    correlated_gaussian(2, 0.5).registry()
}

fn load(source: &str, entry: Option<&str>) -> Result<(Loaded, KernelRegistry), CliError> {
    let path = Path::new(source);
    let (text, registry) = if path.exists() {
        (fs::read_to_string(path).map_err(|e| io_err(path, e))?, default_registry())
    } else {
        let name = if source == "fib" { "fibonacci" } else { source };
        let p = corpus()
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CliError::Usage(format!("`{source}` is neither a file nor a corpus program")))?;
        (p.source, p.registry)
    };
    let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#')).unwrap_or("");
    let loaded = if first.starts_with("program") || first.starts_with("flat") {
        match parse_ir(&text).map_err(|e| CliError::Program(format!("{source}:{e}")))? {
            IrProgram::CallGraph(p) => Loaded::CallGraph(p),
            IrProgram::Flat(p) => Loaded::Flat(p),
        }
    } else {
        let module = parse_source(&text).map_err(|e| CliError::Program(format!("{source}:{e}")))?;
        Loaded::CallGraph(lower_to_cfg(&module, &registry).map_err(|e| CliError::Program(format!("{source}:{e}")))?)
    };
    let loaded = match (loaded, entry) {
        (Loaded::CallGraph(mut p), Some(name)) => {
            p.entry = p.function_index(name).ok_or_else(|| CliError::Usage(format!("no function `{name}`")))?;
            Loaded::CallGraph(p)
        }
        (Loaded::Flat(_), Some(_)) => return Err(CliError::Usage("--entry does not apply to flat programs".into())),
        (l, None) => l,
    };
    Ok((loaded, registry))
}

fn parse_value(tok: &str) -> Result<Value, String> {
    if let Some(inner) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        let xs: Result<Vec<f64>, _> =
            inner.split(';').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse::<f64>()).collect();
        return xs.map(Value::Vec).map_err(|_| format!("bad vector `{tok}`"));
    }
    parse_literal(tok).map(|l| l.to_value()).ok_or_else(|| format!("bad value `{tok}`"))
}

/// Lanes of argument tuples into one batch array per argument. Integers in
/// a column that also holds floats are read as floats.
fn parse_batch<'a>(lanes: impl Iterator<Item = &'a str>, arity: usize) -> Result<Vec<BatchArray>, CliError> {
    let mut columns: Vec<Vec<Value>> = vec![Vec::new(); arity];
    let mut z = 0;
    for lane in lanes.map(str::trim).filter(|l| !l.is_empty()) {
        let vals: Vec<Value> = lane.split_whitespace().map(parse_value).collect::<Result<_, _>>().map_err(CliError::Usage)?;
        if vals.len() != arity {
            return Err(CliError::Usage(format!("lane `{lane}` has {} arguments, expected {arity}", vals.len())));
        }
        for (c, v) in columns.iter_mut().zip(vals) {
            c.push(v);
        }
        z += 1;
    }
    if z == 0 {
        return Err(CliError::Usage("empty batch".into()));
    }
    for c in &mut columns {
        if c.iter().any(|v| matches!(v, Value::F64(_))) {
            for v in c.iter_mut() {
                if let Value::I64(i) = *v {
                    *v = Value::F64(i as f64);
                }
            }
        }
    }
    columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            BatchArray::from_values(c).ok_or_else(|| CliError::Usage(format!("argument {i} has mixed kinds across lanes")))
        })
        .collect()
}

fn read_inputs(inline: Option<&str>, file: Option<&Path>, arity: usize) -> Result<Vec<BatchArray>, CliError> {
    match (inline, file) {
        (Some(_), Some(_)) => Err(CliError::Usage("give --inputs or --inputs-file, not both".into())),
        (Some(s), None) => parse_batch(s.split(','), arity),
        (None, Some(p)) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            parse_batch(text.lines().filter(|l| !l.trim_start().starts_with('#')), arity)
        }
        (None, None) => Err(CliError::Usage("no inputs (use --inputs or --inputs-file)".into())),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_trace(trace: &ScheduleTrace, json: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    if let Some(p) = json {
        write_file(p, &trace.to_json())?;
    }
    if let Some(p) = csv {
        write_file(p, &trace.to_csv())?;
    }
    Ok(())
}

fn cmd_compile(args: &CompileArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (loaded, registry) = load(&args.source, args.entry.as_deref())?;
    let Loaded::CallGraph(prog) = loaded else {
        return Err(CliError::Usage("compile takes a call-graph program".into()));
    };
    let compiled = compile(&prog, &registry, args.passes.options()?).map_err(|d| CliError::Exec(ExecError::Malformed(d)))?;
    let mut stages = vec![("callgraph".to_string(), prog.to_string())];
    stages.extend(compiled.stages.iter().map(|s| (s.name.to_string(), s.text.clone())));
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            for (name, text) in &stages {
                write_file(&dir.join(format!("{name}.ir")), text)?;
            }
        }
        None => {
            for (name, text) in &stages {
                let _ = writeln!(out, "# stage: {name}\n{text}");
            }
        }
    }
    Ok(())
}

fn format_outputs(out: &BatchArray) -> String {
    out.to_values().iter().map(Value::to_string).collect::<Vec<_>>().join(" ")
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (loaded, registry) = load(&args.source, args.entry.as_deref())?;
    let passes = args.passes.options()?;
    let (output, trace) = match loaded {
        Loaded::CallGraph(prog) => {
            let arity = prog.entry_function().params.len();
            let inputs = read_inputs(args.inputs.as_deref(), args.inputs_file.as_deref(), arity)?;
            let cfg = RunConfig {
                engine: args.engine,
                mode: args.mode,
                depth: args.depth,
                max_steps: args.max_steps,
                passes,
                debug: args.debug,
            };
            execute(&prog, &registry, &inputs, &cfg)?
        }
        Loaded::Flat(flat) => {
            if args.engine != Engine::Pc {
                return Err(CliError::Usage("flat programs run only on the pc engine".into()));
            }
            let inputs = read_inputs(args.inputs.as_deref(), args.inputs_file.as_deref(), flat.inputs.len())?;
            let kinds: Vec<Kind> = inputs.iter().map(BatchArray::kind).collect();
            let prog = PcProgram::new(&flat, &classify_flat(&flat, &passes), &registry, &kinds)?;
            let vm = VmOptions { depth: args.depth, max_steps: args.max_steps, mode: args.mode, debug: args.debug };
            let run = run_program(&prog, &inputs, vm)?;
            (run.output, run.trace)
        }
    };
    let _ = writeln!(out, "{}", format_outputs(&output));
    write_trace(&trace, args.trace.as_deref(), args.csv.as_deref())
}

/// Mismatches and errors listed per program; the counts cover the rest.
const MAX_SHOWN: usize = 10;

fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut opts = if args.exhaustive { CheckOptions::exhaustive() } else { CheckOptions::default() };
    opts.depth = args.depth;
    opts.max_steps = args.max_steps;
    if !args.exhaustive || !args.passes.no_pass.is_empty() {
        opts.pass_sets = vec![args.passes.options()?];
    }
    if args.inject_cancel_fault {
        for p in &mut opts.pass_sets {
            p.inject_cancel_fault = true;
        }
    }
    let programs = if args.sources.is_empty() { corpus().iter().map(|p| p.name.to_string()).collect() } else { args.sources.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut total = CheckReport::default();
    for name in &programs {
        let (loaded, registry) = load(name, None)?;
        let Loaded::CallGraph(prog) = loaded else {
            return Err(CliError::Usage(format!("{name}: check takes a call-graph program")));
        };
        let arity = prog.entry_function().params.len();
        let corpus_entry = corpus().into_iter().find(|p| p.name == name.as_str() || (name == "fib" && p.name == "fibonacci"));
        let mut batches = Vec::new();
        if let Some(s) = &args.inputs {
            batches.push(parse_batch(s.split(','), arity)?);
        } else if let Some(p) = &corpus_entry {
            batches.push(p.sample_inputs.clone());
            for _ in 0..args.batches {
                batches.push(p.random_inputs(&mut rng, args.lanes.max(1)));
            }
        } else {
            return Err(CliError::Usage(format!("{name}: give --inputs for programs outside the corpus")));
        }
        let mut report = CheckReport::default();
        for b in &batches {
            report.merge(check_batch(&prog, &registry, b, &opts));
        }
        let status = if report.passed() { "ok" } else { "FAILED" };
        let _ = writeln!(
            out,
            "{name}: {status} {} runs, {} lanes, {} mismatches, {} errors",
            report.runs,
            report.lanes,
            report.mismatches.len(),
            report.errors.len()
        );
        for m in report.mismatches.iter().take(MAX_SHOWN) {
            let _ = writeln!(out, "  mismatch: {m}");
        }
        for e in report.errors.iter().take(MAX_SHOWN) {
            let _ = writeln!(out, "  error: {e}");
        }
        total.merge(report);
    }
    if total.passed() {
        let _ = writeln!(out, "all {} runs agree", total.runs);
        Ok(())
    } else {
        Err(CliError::Mismatch(format!(
            "check failed: {} mismatches, {} errors",
            total.mismatches.len(),
            total.errors.len()
        )))
    }
}

fn cmd_nuts(args: &NutsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let target = match args.target.as_str() {
        "gaussian" => {
            if args.dim == 0 || args.rho.abs() >= 1.0 || 1.0 + (args.dim as f64 - 1.0) * args.rho <= 0.0 {
                return Err(CliError::Usage("need dim >= 1 and a positive definite correlation".into()));
            }
            correlated_gaussian(args.dim, args.rho)
        }
        "logistic" => logistic_regression(200, 5, args.seed),
        other => return Err(CliError::Usage(format!("unknown target `{other}` (expected gaussian or logistic)"))),
    };
    if args.lanes == 0 {
        return Err(CliError::Usage("need at least one lane".into()));
    }
    let config = NutsConfig {
        step_size: args.step_size,
        leapfrog_steps: args.leapfrog,
        max_depth: args.max_depth,
        iterations: args.iterations,
        seed: args.seed,
    };
    let sampler = NutsLite::new(&target, config).map_err(CliError::Usage)?;
    let passes = args.passes.options()?;
    let counted = [target.grad_kernel.as_str()];
    let mut runs = Vec::new();
    for engine in Engine::ALL {
        let cfg = RunConfig { engine, mode: args.mode, depth: args.depth, passes, ..Default::default() };
        let run = sampler.run(args.lanes, &cfg)?;
        let stats = ChainStats::of(&run.chains, &target);
        let u = utilization(&run.trace, &counted).map_err(|e| CliError::Program(e.to_string()))?;
        let _ = writeln!(out, "{engine}: steps {} utilization {u:.16e}", run.trace.len());
        let fmt_vec = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{engine}: mean {} (max error {:.16e})", fmt_vec(&stats.mean), stats.mean_error);
        for row in &stats.cov {
            let _ = writeln!(out, "{engine}: cov {}", fmt_vec(row));
        }
        let _ = writeln!(out, "{engine}: max covariance error {:.16e}", stats.cov_error);
        runs.push(run);
    }
    let identical = runs[0].chains.bit_eq(&runs[1].chains);
    let _ = writeln!(out, "chains identical across engines: {identical}");
    let report = compare(&runs[0].trace, &runs[1].trace, &counted).map_err(|e| CliError::Program(e.to_string()))?;
    let _ = writeln!(out, "utilization ratio pc/local: {:.16e}", report.utilization_ratio);
    if let Some(p) = &args.csv {
        write_file(p, &format!("{report}\n"))?;
    }
    if let Some(p) = &args.trace {
        write_file(p, &runs[1].trace.to_json())?;
    }
    if identical {
        Ok(())
    } else {
        Err(CliError::Mismatch("chains differ across engines".into()))
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Compile(a) => cmd_compile(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Nuts(a) => cmd_nuts(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.message());
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(std::iter::once("autobatch").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn run_fib_both_engines() {
        for engine in ["pc", "local"] {
            let (code, out, _) = run(&["run", "fib", "--engine", engine, "--inputs", "6,7,8,9"]);
            assert_eq!(code, 0);
            assert_eq!(out, "13 21 34 55\n");
        }
    }

    #[test]
    fn empty_batch_is_usage_error() {
        let (code, _, err) = run(&["run", "fib", "--inputs", ""]);
        assert_eq!(code, 1);
        assert!(err.contains("empty batch"), "{err}");
    }

    #[test]
    fn stack_fault_exit_code() {
        let (code, _, err) = run(&["run", "fib", "--depth", "3", "--inputs", "10"]);
        assert_eq!(code, 2);
        assert!(err.contains("fibonacci.n"), "{err}");
    }

    #[test]
    fn compile_dump_has_pushjump() {
        let (code, out, _) = run(&["compile", "fib"]);
        assert_eq!(code, 0);
        assert!(out.contains("pushjump"));
        assert!(out.contains("# stage: classify"));
    }

    #[test]
    fn vector_and_multi_argument_lanes() {
        let vals = parse_batch("1 [0.5;2]".split(','), 2).unwrap();
        assert_eq!(vals[1].kind(), Kind::Vec(2));
        assert!(parse_batch("1 2, 3".split(','), 2).is_err());
    }
}
