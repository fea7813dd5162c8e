//! Batched Fibonacci on both engines.

use autobatch::engine::{execute, Engine, RunConfig};
use autobatch::runtime::{BatchArray, KernelRegistry};
use autobatch::workloads::corpus_program;

fn main() {
    let fib = corpus_program("fibonacci").expect("fibonacci is in the corpus");
    let prog = fib.program();
    let registry = KernelRegistry::with_builtins();
    for batch in [vec![3, 7, 4, 5], vec![6, 7, 8, 9]] {
        let inputs = [BatchArray::from_i64(batch.clone())];
        for engine in Engine::ALL {
            let (out, trace) = execute(&prog, &registry, &inputs, &RunConfig::with_engine(engine)).expect("runs");
            println!("{engine:>5} {batch:?} -> {:?} in {} steps", out.as_i64().unwrap(), trace.len());
        }
    }
}
