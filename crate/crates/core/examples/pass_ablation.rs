//! Stack traffic and step counts for every subset of the optimization passes.

use autobatch::compiler::{compile, CompileOptions};
use autobatch::pc_vm::{run_pc, VmOptions};
use autobatch::runtime::{BatchArray, KernelRegistry};
use autobatch::workloads::corpus_program;

fn main() {
    let prog = corpus_program("fibonacci").unwrap().program();
    let registry = KernelRegistry::with_builtins();
    let inputs = [BatchArray::from_i64(vec![6, 7, 8, 9])];
    println!("passes  stacked  steps  stack-ops  output");
    for mask in 0..16u8 {
        let opts = CompileOptions::from_mask(mask);
        let compiled = compile(&prog, &registry, opts).expect("compiles");
        let run = run_pc(&compiled, &registry, &inputs, VmOptions::default()).expect("runs");
        let ops: u64 = run.trace.stacks.values().map(|c| c.total()).sum();
        println!(
            "{mask:04b}    {:>7}  {:>5}  {:>9}  {:?}",
            compiled.vars_in(autobatch::compiler::VarClass::Stacked).len(),
            run.trace.len(),
            ops,
            run.output.as_i64().unwrap()
        );
    }
}
