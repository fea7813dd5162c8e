//! Resource limits: a bounded stack and a step budget.

use autobatch::engine::{execute, RunConfig};
use autobatch::frontend::{lower_to_cfg, parse_source};
use autobatch::runtime::{BatchArray, KernelRegistry};
use autobatch::workloads::corpus_program;

fn main() {
    let registry = KernelRegistry::with_builtins();
    let fib = corpus_program("fibonacci").unwrap().program();
    let cfg = RunConfig { depth: 3, ..Default::default() };
    match execute(&fib, &registry, &[BatchArray::from_i64(vec![1, 10])], &cfg) {
        Err(e) => println!("depth 3: {e}"),
        Ok(_) => unreachable!(),
    }
    let spin = parse_source("def spin(n) { while (n >= 0) { n = n + 1; } return n; }").unwrap();
    let spin = lower_to_cfg(&spin, &registry).unwrap();
    let cfg = RunConfig { max_steps: 500, ..Default::default() };
    match execute(&spin, &registry, &[BatchArray::from_i64(vec![0])], &cfg) {
        Err(e) => println!("spin: {e}"),
        Ok(_) => unreachable!(),
    }
}
